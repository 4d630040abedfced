#pragma once

#include <array>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>

namespace iodiag {

enum class IssueLabel {
    HighMetadataLoad,
    MisalignedRead,
    MisalignedWrite,
    RandomRead,
    RandomWrite,
    SharedFileAccess,
    SmallRead,
    SmallWrite,
    RepetitiveRead,
    ServerLoadImbalance,
    RankLoadImbalance,
    MultiProcessWithoutMPI,
    NoCollectiveRead,
    NoCollectiveWrite,
    LowLevelLibraryRead,
    LowLevelLibraryWrite,
};

inline constexpr std::size_t kIssueLabelCount = 16;

/// Every label in declaration order.
const std::array<IssueLabel, kIssueLabelCount>& all_issue_labels();

/// Identifier form, e.g. "SmallWrite".
std::string_view label_id(IssueLabel l);
/// Display form, e.g. "Small Write I/O Requests".
std::string_view label_display_name(IssueLabel l);
/// Taxonomy description of the issue.
std::string_view label_description(IssueLabel l);

/// Accepts the identifier, the display name, or the short row titles used in
/// dataset tables ("Misaligned Read requests", "Multi-Process W/O MPI").
/// Case and surrounding whitespace are ignored.
std::optional<IssueLabel> parse_issue_label(std::string_view text);

class UnknownLabel : public std::runtime_error {
public:
    explicit UnknownLabel(std::string name);
    const std::string& name() const { return name_; }

private:
    std::string name_;
};

using LabelSet = std::set<IssueLabel>;

}  // namespace iodiag
