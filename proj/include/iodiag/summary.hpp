#pragma once

#include "iodiag/parallel.hpp"
#include "iodiag/trace.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace iodiag::summary {

using trace::ModuleId;

enum class Category {
    io_size,
    io_request_count,
    file,
    metadata,
    rank,
    alignment,
    order,
    mount,
    stripe_setting,
    server_usage,
};

inline constexpr Category kAllCategories[] = {
    Category::io_size,   Category::io_request_count, Category::file,
    Category::metadata,  Category::rank,             Category::alignment,
    Category::order,     Category::mount,            Category::stripe_setting,
    Category::server_usage,
};

/// Identifier form, e.g. "IoSize".
std::string_view category_name(Category c);
/// Display form, e.g. "I/O Size".
std::string_view category_title(Category c);
std::optional<Category> category_from_name(std::string_view name);

/// Categories summarized for a module, in emission order.
std::span<const Category> valid_categories(ModuleId module);
bool is_valid(ModuleId module, Category category);

using Payload = nlohmann::ordered_json;

struct SummaryFragment {
    ModuleId module;
    Category category;
    Payload payload;
    std::string extraction_descriptor;

    /// "POSIX.IoSize"
    std::string key() const;
};

struct ApplicationContext {
    double runtime_seconds = 0.0;
    std::int64_t nprocs = 1;
    /// Fraction of bytes moved (read + written) per byte-moving module.
    std::map<ModuleId, double> io_proportions;

    nlohmann::ordered_json to_json() const;
    /// Plain-text rendering used in prompts.
    std::string render() const;
};

struct ExtractOptions {
    /// (module, category) pairs to skip; empty means every valid pair.
    std::set<std::pair<ModuleId, Category>> disabled;
    Execution execution = Execution::serial;
    int max_threads = 4;
};

std::vector<SummaryFragment> extract_fragments(const trace::TraceProfile& profile,
                                               const ExtractOptions& options = {});

// Individual extractors. Each takes one module's records.
using Records = std::span<const trace::CounterRecord>;

SummaryFragment summarize_io_size(Records records, ModuleId module);
SummaryFragment summarize_alignment(Records posix_records);
SummaryFragment summarize_order(Records posix_records);
SummaryFragment summarize_rank_balance(Records records, ModuleId module,
                                       const trace::TraceHeader& header);
/// Mount, StripeSetting, ServerUsage.
std::vector<SummaryFragment> summarize_lustre(Records lustre_records);
/// IoRequestCount, File, and Metadata where the module has it.
std::vector<SummaryFragment> summarize_counts_files_metadata(Records records, ModuleId module,
                                                             const trace::TraceHeader& header);

ApplicationContext compute_app_context(const trace::TraceProfile& profile);

/// Total of a counter with shared (rank -1) records taking precedence over
/// per-rank records of the same record id.
double module_total(Records records, std::string_view counter_name);

/// Canonical serialized form (stable key order, 2-space indent).
std::string serialize(const SummaryFragment& fragment);
nlohmann::ordered_json to_json(const SummaryFragment& fragment);
SummaryFragment fragment_from_json(const nlohmann::ordered_json& j);

/// Writes `<stem>.<module>.<category>.json` for each fragment.
std::vector<std::filesystem::path> dump_fragments(std::span<const SummaryFragment> fragments,
                                                  const std::filesystem::path& dir,
                                                  std::string_view stem);

/// Histogram bin labels, smallest first: "0-100" ... "1G+".
std::span<const std::string_view> size_bin_labels();

}  // namespace iodiag::summary
