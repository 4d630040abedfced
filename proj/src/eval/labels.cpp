#include "iodiag/labels.hpp"

#include <algorithm>
#include <cctype>

namespace iodiag {

namespace {

struct LabelInfo {
    IssueLabel label;
    std::string_view id;
    std::string_view display;
    std::string_view table_title;
    std::string_view description;
};

constexpr std::string_view kMetadataDesc =
    "Opens, stats, seeks and similar calls take a large share of I/O time.";
constexpr std::string_view kMisalignedDesc =
    "Request offsets do not fall on memory or file (stripe) alignment boundaries.";
constexpr std::string_view kRandomDesc =
    "Consecutive requests to a file jump to non-increasing offsets instead of streaming.";
constexpr std::string_view kSharedDesc =
    "Several ranks open and operate on one common file.";
constexpr std::string_view kSmallDesc =
    "Most requests move under about 1 MiB each, so per-call overhead dominates.";
constexpr std::string_view kRepetitiveDesc =
    "The same byte ranges are read more than once.";
constexpr std::string_view kServerDesc =
    "Traffic lands unevenly on storage targets, or only a few of the available targets are used.";
constexpr std::string_view kRankDesc =
    "A few ranks move far more bytes or spend far more I/O time than the rest.";
constexpr std::string_view kNoMpiDesc =
    "More than one process does I/O but MPI is not used to coordinate it.";
constexpr std::string_view kCollectiveDesc =
    "MPI-IO is used only through independent calls; collective operations are absent.";
constexpr std::string_view kLowLevelDesc =
    "Bulk data goes through STDIO rather than POSIX or MPI-IO, beyond small config or log files.";

constexpr LabelInfo kLabels[] = {
    {IssueLabel::HighMetadataLoad, "HighMetadataLoad", "High Metadata Load", "High Metadata Load",
     kMetadataDesc},
    {IssueLabel::MisalignedRead, "MisalignedRead", "Misaligned Read Requests",
     "Misaligned Read requests", kMisalignedDesc},
    {IssueLabel::MisalignedWrite, "MisalignedWrite", "Misaligned Write Requests",
     "Misaligned Write requests", kMisalignedDesc},
    {IssueLabel::RandomRead, "RandomRead", "Random Access Patterns on Read",
     "Random Access Patterns on Read", kRandomDesc},
    {IssueLabel::RandomWrite, "RandomWrite", "Random Access Patterns on Write",
     "Random Access Patterns on Write", kRandomDesc},
    {IssueLabel::SharedFileAccess, "SharedFileAccess", "Shared File Access", "Shared File Access",
     kSharedDesc},
    {IssueLabel::SmallRead, "SmallRead", "Small Read I/O Requests", "Small Read I/O Requests",
     kSmallDesc},
    {IssueLabel::SmallWrite, "SmallWrite", "Small Write I/O Requests", "Small Write I/O Requests",
     kSmallDesc},
    {IssueLabel::RepetitiveRead, "RepetitiveRead", "Repetitive Data Access on Read",
     "Repetitive Data Access on Read", kRepetitiveDesc},
    {IssueLabel::ServerLoadImbalance, "ServerLoadImbalance", "Server Load Imbalance",
     "Server Load Imbalance", kServerDesc},
    {IssueLabel::RankLoadImbalance, "RankLoadImbalance", "Rank Load Imbalance",
     "Rank Load Imbalance", kRankDesc},
    {IssueLabel::MultiProcessWithoutMPI, "MultiProcessWithoutMPI", "Multi-Process Without MPI",
     "Multi-Process W/O MPI", kNoMpiDesc},
    {IssueLabel::NoCollectiveRead, "NoCollectiveRead", "No Collective I/O on Read",
     "No Collective I/O on Read", kCollectiveDesc},
    {IssueLabel::NoCollectiveWrite, "NoCollectiveWrite", "No Collective I/O on Write",
     "No Collective I/O on Write", kCollectiveDesc},
    {IssueLabel::LowLevelLibraryRead, "LowLevelLibraryRead", "Low-Level Library on Read",
     "Low-Level Library on Read", kLowLevelDesc},
    {IssueLabel::LowLevelLibraryWrite, "LowLevelLibraryWrite", "Low-Level Library on Write",
     "Low-Level Library on Write", kLowLevelDesc},
};

static_assert(std::size(kLabels) == kIssueLabelCount);

const LabelInfo& info(IssueLabel l) { return kLabels[static_cast<std::size_t>(l)]; }

std::string fold(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    std::string out;
    bool space = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            space = true;
            continue;
        }
        if (space && !out.empty()) out += ' ';
        space = false;
        out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

}  // namespace

const std::array<IssueLabel, kIssueLabelCount>& all_issue_labels() {
    static const auto labels = [] {
        std::array<IssueLabel, kIssueLabelCount> a{};
        for (std::size_t i = 0; i < kIssueLabelCount; ++i) a[i] = kLabels[i].label;
        return a;
    }();
    return labels;
}

std::string_view label_id(IssueLabel l) { return info(l).id; }
std::string_view label_display_name(IssueLabel l) { return info(l).display; }
std::string_view label_description(IssueLabel l) { return info(l).description; }

std::optional<IssueLabel> parse_issue_label(std::string_view text) {
    const auto key = fold(text);
    if (key.empty()) return std::nullopt;
    for (const auto& l : kLabels) {
        if (key == fold(l.id) || key == fold(l.display) || key == fold(l.table_title)) return l.label;
    }
    return std::nullopt;
}

UnknownLabel::UnknownLabel(std::string name)
    : std::runtime_error("unknown issue label '" + name + "'"), name_(std::move(name)) {}

}  // namespace iodiag
