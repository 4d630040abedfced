#include "iodiag/summary.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace iodiag::summary {

using trace::CounterRecord;
using nlohmann::ordered_json;

std::string_view category_name(Category c) {
    switch (c) {
    case Category::io_size: return "IoSize";
    case Category::io_request_count: return "IoRequestCount";
    case Category::file: return "File";
    case Category::metadata: return "Metadata";
    case Category::rank: return "Rank";
    case Category::alignment: return "Alignment";
    case Category::order: return "Order";
    case Category::mount: return "Mount";
    case Category::stripe_setting: return "StripeSetting";
    case Category::server_usage: return "ServerUsage";
    }
    return "Unknown";
}

std::string_view category_title(Category c) {
    switch (c) {
    case Category::io_size: return "I/O Size";
    case Category::io_request_count: return "I/O Request Count";
    case Category::file: return "File";
    case Category::metadata: return "Metadata";
    case Category::rank: return "Rank";
    case Category::alignment: return "Alignment";
    case Category::order: return "Order";
    case Category::mount: return "Mount";
    case Category::stripe_setting: return "Stripe Setting";
    case Category::server_usage: return "Server Usage";
    }
    return "Unknown";
}

std::optional<Category> category_from_name(std::string_view name) {
    for (auto c : kAllCategories)
        if (category_name(c) == name || category_title(c) == name) return c;
    return std::nullopt;
}

namespace {

constexpr Category kPosixCategories[] = {Category::io_size,  Category::io_request_count,
                                         Category::file,     Category::metadata,
                                         Category::rank,     Category::alignment,
                                         Category::order};
constexpr Category kMpiioCategories[] = {Category::io_size, Category::io_request_count,
                                         Category::file, Category::metadata, Category::rank};
constexpr Category kStdioCategories[] = {Category::io_size, Category::io_request_count,
                                         Category::file};
constexpr Category kLustreCategories[] = {Category::mount, Category::stripe_setting,
                                          Category::server_usage};

constexpr std::string_view kBinSuffixes[] = {"0_100",    "100_1K",   "1K_10K",   "10K_100K",
                                             "100K_1M",  "1M_4M",    "4M_10M",   "10M_100M",
                                             "100M_1G",  "1G_PLUS"};
constexpr std::string_view kBinLabels[] = {"0-100",    "100-1K", "1K-10K",   "10K-100K",
                                           "100K-1M",  "1M-4M",  "4M-10M",   "10M-100M",
                                           "100M-1G",  "1G+"};

constexpr std::size_t kTopFiles = 10;
constexpr std::size_t kMaxRankEntries = 32;
constexpr std::size_t kMaxOstEntries = 64;

std::string prefix(ModuleId m) { return std::string(trace::module_name(m)) + "_"; }

/// One (record id, rank) row of counters.
struct Instance {
    std::string record_id;
    std::int64_t rank = -1;
    std::string path;
    std::string mount;
    std::string fs;
    std::map<std::string, double, std::less<>> counters;

    double get(std::string_view name) const {
        auto it = counters.find(name);
        return it == counters.end() ? 0.0 : it->second;
    }
    bool has(std::string_view name) const { return counters.find(name) != counters.end(); }
};

/// Groups records into instances in first-appearance order. Per-rank
/// instances of a record id that also has a shared instance are dropped.
std::vector<Instance> collect(Records records) {
    std::vector<Instance> all;
    std::map<std::pair<std::string, std::int64_t>, std::size_t> index;
    std::set<std::string> shared_ids;
    for (const auto& r : records) {
        auto key = std::make_pair(r.record_id, r.rank);
        auto it = index.find(key);
        if (it == index.end()) {
            it = index.emplace(key, all.size()).first;
            all.push_back(Instance{r.record_id, r.rank, r.file_path, r.mount_point, r.fs_type, {}});
        }
        all[it->second].counters[r.counter_name] += r.value;
        if (r.shared()) shared_ids.insert(r.record_id);
    }
    std::vector<Instance> out;
    out.reserve(all.size());
    for (auto& inst : all)
        if (inst.rank == -1 || !shared_ids.contains(inst.record_id)) out.push_back(std::move(inst));
    return out;
}

bool present(Records records, std::string_view name) {
    return std::any_of(records.begin(), records.end(),
                       [&](const CounterRecord& r) { return r.counter_name == name; });
}

double total(const std::vector<Instance>& instances, std::string_view name) {
    double sum = 0.0;
    for (const auto& i : instances) sum += i.get(name);
    return sum;
}

ordered_json num(double v) {
    if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 9007199254740992.0)
        return static_cast<std::int64_t>(v);
    return v;
}

ordered_json ratio(double numerator, double denominator) {
    if (denominator <= 0.0) return 0.0;
    return numerator / denominator;
}

const char* kUnavailable = "unavailable";

ordered_json total_or_unavailable(Records records, const std::vector<Instance>& inst,
                                  const std::string& name) {
    if (!present(records, name)) return kUnavailable;
    return num(total(inst, name));
}

/// Most frequent value, smallest value on ties.
double mode_of(const std::vector<double>& values) {
    std::map<double, std::size_t> counts;
    for (double v : values) ++counts[v];
    double best = 0.0;
    std::size_t best_count = 0;
    for (const auto& [v, c] : counts) {
        if (c > best_count) {
            best = v;
            best_count = c;
        }
    }
    return best;
}

SummaryFragment make(ModuleId m, Category c, ordered_json payload, std::string descriptor) {
    return SummaryFragment{m, c, std::move(payload), std::move(descriptor)};
}

// -- extraction descriptors --------------------------------------------------

std::string describe_io_size(ModuleId m) {
    const auto p = prefix(m);
    std::string d = "Sums " + p + "BYTES_READ and " + p +
                    "BYTES_WRITTEN over every file record of the " +
                    std::string(trace::module_name(m)) +
                    " module (a shared record with rank -1 replaces the per-rank records of the "
                    "same file so nothing is counted twice). ";
    if (m == ModuleId::stdio) return d + "STDIO records no request-size histogram.";
    const auto bins = m == ModuleId::mpiio ? p + "SIZE_READ_AGG_* / " + p + "SIZE_WRITE_AGG_*"
                                           : p + "SIZE_READ_* / " + p + "SIZE_WRITE_*";
    return d + "read_histogram and write_histogram come from the " + bins +
           " counters: each bin holds the number of operations whose request size falls in that "
           "range, divided by the total operation count, so the values are proportions that sum "
           "to 1. Bin labels are request sizes in BYTES (0-100 means 0 to 100 bytes, 100K-1M "
           "means 100 KiB to 1 MiB). Bins with zero operations are omitted. When a direction "
           "has no operations its histogram is omitted and reads_absent / writes_absent is set. "
           "common_access_sizes lists the most frequent exact request sizes from the "
           "ACCESS*_ACCESS / ACCESS*_COUNT counters.";
}

std::string describe_request_count(ModuleId m) {
    const auto p = prefix(m);
    switch (m) {
    case ModuleId::posix:
        return "Totals of POSIX_READS, POSIX_WRITES, POSIX_OPENS, POSIX_SEEKS, POSIX_STATS, "
               "POSIX_FSYNCS, POSIX_FDSYNCS and POSIX_RW_SWITCHES over all file records "
               "(shared records replace per-rank records of the same file).";
    case ModuleId::mpiio:
        return "Totals of the MPI-IO operation counters. reads = MPIIO_INDEP_READS + "
               "MPIIO_COLL_READS + MPIIO_SPLIT_READS + MPIIO_NB_READS, writes likewise. "
               "collective_fraction = (COLL_READS + COLL_WRITES) / (reads + writes); "
               "collective_read_fraction and collective_write_fraction use one direction. A "
               "fraction of 0 means the application never used collective MPI-IO calls.";
    case ModuleId::stdio:
        return "Totals of STDIO_READS, STDIO_WRITES, STDIO_OPENS + STDIO_FDOPENS, STDIO_SEEKS "
               "and STDIO_FLUSHES over all file records.";
    default: break;
    }
    return "Totals of " + p + "* operation counters.";
}

std::string describe_file(ModuleId m) {
    const auto p = prefix(m);
    return "Counts distinct files (record ids) seen by the " + std::string(trace::module_name(m)) +
           " module. A file is shared when it has a rank -1 record or records from more than one "
           "rank. top_files_by_volume lists at most 10 files ordered by " + p + "BYTES_READ + " +
           p + "BYTES_WRITTEN; files_omitted counts the rest.";
}

std::string describe_metadata(ModuleId m) {
    const auto p = prefix(m);
    std::string ops = m == ModuleId::posix
                          ? "POSIX_OPENS + POSIX_STATS + POSIX_SEEKS + POSIX_FSYNCS + "
                            "POSIX_FDSYNCS + POSIX_RENAME_SOURCES"
                          : "MPIIO_INDEP_OPENS + MPIIO_COLL_OPENS + MPIIO_SYNCS + MPIIO_HINTS + "
                            "MPIIO_VIEWS";
    return "metadata_op_count = " + ops + ". metadata_time_seconds sums " + p +
           "F_META_TIME, which Darshan accumulates across all ranks of a shared file. "
           "metadata_time_fraction divides it by the job run time; "
           "metadata_time_fraction_per_process further divides by the process count. "
           "read_time_seconds and write_time_seconds sum " + p + "F_READ_TIME and " + p +
           "F_WRITE_TIME for comparison.";
}

std::string describe_rank(ModuleId m) {
    const auto p = prefix(m);
    return "For shared files (rank -1) Darshan reports " + p + "FASTEST_RANK, " + p +
           "SLOWEST_RANK with their bytes (" + p + "*_RANK_BYTES) and times (" + p +
           "F_*_RANK_TIME), plus the variance of I/O time and bytes across ranks (" + p +
           "F_VARIANCE_RANK_TIME, " + p +
           "F_VARIANCE_RANK_BYTES); shared_files lists up to 10 such files by volume. For "
           "files opened by a single rank, per_rank_bytes sums BYTES_READ + BYTES_WRITTEN per "
           "rank and per-rank I/O time is F_READ_TIME + F_WRITE_TIME + F_META_TIME. "
           "fastest_rank/slowest_rank are the ranks with the least/most I/O time, "
           "max_min_byte_ratio is the largest per-rank byte total over the smallest, and the "
           "variance fields are population variances across ranks.";
}

std::string describe_alignment() {
    return "file_alignment_bytes and mem_alignment_bytes are the most common values of "
           "POSIX_FILE_ALIGNMENT and POSIX_MEM_ALIGNMENT across files (the file system block "
           "or stripe boundary Darshan checks against). file_not_aligned and mem_not_aligned "
           "sum POSIX_FILE_NOT_ALIGNED and POSIX_MEM_NOT_ALIGNED. misaligned_fraction = "
           "file_not_aligned / (POSIX_READS + POSIX_WRITES); mem_misaligned_fraction uses "
           "mem_not_aligned.";
}

std::string describe_order() {
    return "sequential_*_fraction = POSIX_SEQ_READS / POSIX_READS (or writes): operations at "
           "a higher offset than the previous one. consecutive_*_fraction uses "
           "POSIX_CONSEC_*: operations starting exactly where the previous ended. A direction "
           "is labelled random-dominant when fewer than half of its operations are "
           "sequential. common_strides aggregates POSIX_STRIDE1..4_STRIDE/COUNT over files and "
           "lists the four most frequent stride distances in bytes.";
}

std::string describe_mount() {
    return "Distinct (mount point, file system type) pairs among LUSTRE records, with the "
           "number of files on each.";
}

std::string describe_stripe() {
    return "Per-file LUSTRE_STRIPE_SIZE (bytes per stripe) and LUSTRE_STRIPE_WIDTH (number of "
           "OSTs a file is striped over), with min/max/mode over files. A width of 1 places "
           "the whole file on one storage target. files lists at most 10 files ordered by "
           "path.";
}

std::string describe_server() {
    return "OST ids come from the LUSTRE_OST_ID_<n> counters of each file. "
           "distinct_ost_count counts the different OSTs used; files_per_ost maps OST id to "
           "the number of files with a stripe on it; available_ost_count is LUSTRE_OSTS, the "
           "number of OSTs in the file system, and ost_utilization_fraction = "
           "distinct_ost_count / available_ost_count.";
}

ordered_json histogram(const std::vector<Instance>& inst, const std::string& counter_base,
                       double& op_total) {
    std::vector<double> counts;
    op_total = 0.0;
    for (auto suffix : kBinSuffixes) {
        counts.push_back(total(inst, counter_base + std::string(suffix)));
        op_total += counts.back();
    }
    ordered_json h = ordered_json::object();
    if (op_total <= 0.0) return h;
    for (std::size_t i = 0; i < counts.size(); ++i)
        if (counts[i] > 0.0) h[std::string(kBinLabels[i])] = counts[i] / op_total;
    return h;
}

ordered_json common_access_sizes(const std::vector<Instance>& inst, const std::string& p) {
    std::map<double, double> by_size;
    for (const auto& i : inst) {
        for (int k = 1; k <= 4; ++k) {
            const auto size = i.get(p + "ACCESS" + std::to_string(k) + "_ACCESS");
            const auto count = i.get(p + "ACCESS" + std::to_string(k) + "_COUNT");
            if (count > 0.0) by_size[size] += count;
        }
    }
    std::vector<std::pair<double, double>> v(by_size.begin(), by_size.end());
    std::stable_sort(v.begin(), v.end(), [](auto& a, auto& b) { return a.second > b.second; });
    ordered_json out = ordered_json::array();
    for (std::size_t i = 0; i < v.size() && i < 4; ++i)
        out.push_back({{"size_bytes", num(v[i].first)}, {"count", num(v[i].second)}});
    return out;
}

}  // namespace

std::span<const Category> valid_categories(ModuleId module) {
    switch (module) {
    case ModuleId::posix: return kPosixCategories;
    case ModuleId::mpiio: return kMpiioCategories;
    case ModuleId::stdio: return kStdioCategories;
    case ModuleId::lustre: return kLustreCategories;
    }
    return {};
}

bool is_valid(ModuleId module, Category category) {
    auto cats = valid_categories(module);
    return std::find(cats.begin(), cats.end(), category) != cats.end();
}

std::span<const std::string_view> size_bin_labels() { return kBinLabels; }

std::string SummaryFragment::key() const {
    return std::string(trace::module_name(module)) + "." + std::string(category_name(category));
}

double module_total(Records records, std::string_view counter_name) {
    return total(collect(records), counter_name);
}

// -- extractors -------------------------------------------------------------

SummaryFragment summarize_io_size(Records records, ModuleId module) {
    const auto p = prefix(module);
    const auto inst = collect(records);
    ordered_json j;
    j["total_bytes_read"] = total_or_unavailable(records, inst, p + "BYTES_READ");
    j["total_bytes_written"] = total_or_unavailable(records, inst, p + "BYTES_WRITTEN");
    if (module == ModuleId::posix || module == ModuleId::mpiio) {
        const auto agg = module == ModuleId::mpiio ? std::string("AGG_") : std::string();
        const auto read_base = p + "SIZE_READ_" + agg;
        const auto write_base = p + "SIZE_WRITE_" + agg;
        j["size_unit"] = "bytes";
        if (!present(records, read_base + std::string(kBinSuffixes[0]))) {
            j["read_histogram"] = kUnavailable;
        } else {
            double ops = 0.0;
            auto h = histogram(inst, read_base, ops);
            j["read_ops_binned"] = num(ops);
            if (ops > 0.0) j["read_histogram"] = std::move(h);
            else j["reads_absent"] = true;
        }
        if (!present(records, write_base + std::string(kBinSuffixes[0]))) {
            j["write_histogram"] = kUnavailable;
        } else {
            double ops = 0.0;
            auto h = histogram(inst, write_base, ops);
            j["write_ops_binned"] = num(ops);
            if (ops > 0.0) j["write_histogram"] = std::move(h);
            else j["writes_absent"] = true;
        }
        auto sizes = common_access_sizes(inst, p);
        if (!sizes.empty()) j["common_access_sizes"] = std::move(sizes);
    }
    return make(module, Category::io_size, std::move(j), describe_io_size(module));
}

SummaryFragment summarize_alignment(Records records) {
    const auto inst = collect(records);
    std::vector<double> file_align, mem_align;
    for (const auto& i : inst) {
        if (i.has("POSIX_FILE_ALIGNMENT")) file_align.push_back(i.get("POSIX_FILE_ALIGNMENT"));
        if (i.has("POSIX_MEM_ALIGNMENT")) mem_align.push_back(i.get("POSIX_MEM_ALIGNMENT"));
    }
    const double ops = total(inst, "POSIX_READS") + total(inst, "POSIX_WRITES");
    const double file_na = total(inst, "POSIX_FILE_NOT_ALIGNED");
    const double mem_na = total(inst, "POSIX_MEM_NOT_ALIGNED");

    ordered_json j;
    j["file_alignment_bytes"] = file_align.empty() ? ordered_json(kUnavailable) : num(mode_of(file_align));
    {
        std::set<double> distinct(file_align.begin(), file_align.end());
        if (distinct.size() > 1) {
            ordered_json values = ordered_json::array();
            for (double v : distinct) values.push_back(num(v));
            j["file_alignment_values"] = std::move(values);
        }
    }
    j["mem_alignment_bytes"] = mem_align.empty() ? ordered_json(kUnavailable) : num(mode_of(mem_align));
    j["total_ops"] = num(ops);
    j["file_not_aligned"] = present(records, "POSIX_FILE_NOT_ALIGNED") ? num(file_na) : ordered_json(kUnavailable);
    j["mem_not_aligned"] = present(records, "POSIX_MEM_NOT_ALIGNED") ? num(mem_na) : ordered_json(kUnavailable);
    j["misaligned_fraction"] = ratio(file_na, ops);
    j["mem_misaligned_fraction"] = ratio(mem_na, ops);
    return make(ModuleId::posix, Category::alignment, std::move(j), describe_alignment());
}

SummaryFragment summarize_order(Records records) {
    const auto inst = collect(records);
    ordered_json j;
    for (std::string dir : {"READ", "WRITE"}) {
        const std::string lower = dir == "READ" ? "read" : "write";
        const double ops = total(inst, "POSIX_" + dir + "S");
        const double seq = total(inst, "POSIX_SEQ_" + dir + "S");
        const double consec = total(inst, "POSIX_CONSEC_" + dir + "S");
        j[lower + "s"] = num(ops);
        if (ops <= 0.0) {
            j[lower + "s_absent"] = true;
            continue;
        }
        if (!present(records, "POSIX_SEQ_" + dir + "S")) {
            j["sequential_" + lower + "_fraction"] = kUnavailable;
            continue;
        }
        const double seq_frac = seq / ops;
        j["sequential_" + lower + "_fraction"] = seq_frac;
        j["consecutive_" + lower + "_fraction"] = consec / ops;
        j[lower + "_pattern"] = seq_frac < 0.5 ? "random-dominant" : "sequential-dominant";
    }
    if (present(records, "POSIX_RW_SWITCHES")) j["rw_switches"] = num(total(inst, "POSIX_RW_SWITCHES"));

    std::map<double, double> strides;
    for (const auto& i : inst) {
        for (int k = 1; k <= 4; ++k) {
            const auto stride = i.get("POSIX_STRIDE" + std::to_string(k) + "_STRIDE");
            const auto count = i.get("POSIX_STRIDE" + std::to_string(k) + "_COUNT");
            if (count > 0.0) strides[stride] += count;
        }
    }
    if (!strides.empty()) {
        std::vector<std::pair<double, double>> v(strides.begin(), strides.end());
        std::stable_sort(v.begin(), v.end(), [](auto& a, auto& b) { return a.second > b.second; });
        ordered_json arr = ordered_json::array();
        for (std::size_t i = 0; i < v.size() && i < 4; ++i)
            arr.push_back({{"stride_bytes", num(v[i].first)}, {"count", num(v[i].second)}});
        j["common_strides"] = std::move(arr);
    }
    return make(ModuleId::posix, Category::order, std::move(j), describe_order());
}

SummaryFragment summarize_rank_balance(Records records, ModuleId module,
                                       const trace::TraceHeader& header) {
    const auto p = prefix(module);
    const auto inst = collect(records);
    ordered_json j;
    j["nprocs"] = header.nprocs;

    // Shared files carry Darshan's own cross-rank statistics.
    std::vector<const Instance*> shared;
    for (const auto& i : inst)
        if (i.rank == -1) shared.push_back(&i);
    auto bytes_of = [&](const Instance& i) {
        return i.get(p + "BYTES_READ") + i.get(p + "BYTES_WRITTEN");
    };
    std::stable_sort(shared.begin(), shared.end(), [&](const Instance* a, const Instance* b) {
        return bytes_of(*a) > bytes_of(*b);
    });
    double max_var_time = 0.0, max_var_bytes = 0.0;
    if (!shared.empty()) {
        ordered_json arr = ordered_json::array();
        for (std::size_t k = 0; k < shared.size(); ++k) {
            const auto& i = *shared[k];
            max_var_time = std::max(max_var_time, i.get(p + "F_VARIANCE_RANK_TIME"));
            max_var_bytes = std::max(max_var_bytes, i.get(p + "F_VARIANCE_RANK_BYTES"));
            if (k >= kTopFiles) continue;
            ordered_json e;
            e["path"] = i.path;
            e["total_bytes"] = num(bytes_of(i));
            for (const char* name : {"FASTEST_RANK", "FASTEST_RANK_BYTES", "SLOWEST_RANK",
                                     "SLOWEST_RANK_BYTES"}) {
                const auto counter = p + name;
                if (i.has(counter)) {
                    std::string key = name;
                    std::transform(key.begin(), key.end(), key.begin(), ::tolower);
                    e[key] = num(i.get(counter));
                }
            }
            for (const char* name : {"FASTEST_RANK_TIME", "SLOWEST_RANK_TIME",
                                     "VARIANCE_RANK_TIME", "VARIANCE_RANK_BYTES"}) {
                const auto counter = p + "F_" + name;
                if (i.has(counter)) {
                    std::string key = name;
                    std::transform(key.begin(), key.end(), key.begin(), ::tolower);
                    e[key] = num(i.get(counter));
                }
            }
            arr.push_back(std::move(e));
        }
        j["shared_file_count"] = shared.size();
        j["shared_files"] = std::move(arr);
    }

    // Files opened by a single rank give a direct per-rank breakdown.
    std::map<std::int64_t, std::pair<double, double>> per_rank;  // bytes, time
    for (const auto& i : inst) {
        if (i.rank < 0) continue;
        auto& slot = per_rank[i.rank];
        slot.first += bytes_of(i);
        slot.second += i.get(p + "F_READ_TIME") + i.get(p + "F_WRITE_TIME") + i.get(p + "F_META_TIME");
    }

    if (!per_rank.empty()) {
        j["ranks_with_io"] = per_rank.size();
        if (per_rank.size() <= kMaxRankEntries) {
            ordered_json table = ordered_json::object();
            for (const auto& [rank, v] : per_rank) table[std::to_string(rank)] = num(v.first);
            j["per_rank_bytes"] = std::move(table);
        } else {
            j["per_rank_bytes_omitted"] = per_rank.size();
        }
        auto fastest = per_rank.begin(), slowest = per_rank.begin();
        double min_b = per_rank.begin()->second.first, max_b = min_b;
        double sum_b = 0.0, sum_t = 0.0;
        for (auto it = per_rank.begin(); it != per_rank.end(); ++it) {
            if (it->second.second < fastest->second.second) fastest = it;
            if (it->second.second > slowest->second.second) slowest = it;
            min_b = std::min(min_b, it->second.first);
            max_b = std::max(max_b, it->second.first);
            sum_b += it->second.first;
            sum_t += it->second.second;
        }
        const double n = static_cast<double>(per_rank.size());
        double var_b = 0.0, var_t = 0.0;
        for (const auto& [rank, v] : per_rank) {
            var_b += (v.first - sum_b / n) * (v.first - sum_b / n);
            var_t += (v.second - sum_t / n) * (v.second - sum_t / n);
        }
        j["fastest_rank"] = fastest->first;
        j["fastest_rank_bytes"] = num(fastest->second.first);
        j["fastest_rank_time"] = num(fastest->second.second);
        j["slowest_rank"] = slowest->first;
        j["slowest_rank_bytes"] = num(slowest->second.first);
        j["slowest_rank_time"] = num(slowest->second.second);
        if (min_b > 0.0) j["max_min_byte_ratio"] = max_b / min_b;
        else j["max_min_byte_ratio"] = max_b > 0.0 ? ordered_json("unbounded") : ordered_json(1.0);
        j["per_rank_byte_variance"] = num(var_b / n);
        j["per_rank_time_variance"] = num(var_t / n);
    }

    if (!shared.empty()) {
        j["variance_rank_time"] = num(max_var_time);
        j["variance_rank_bytes"] = num(max_var_bytes);
        if (per_rank.empty()) {
            const auto& top = *shared.front();
            if (top.has(p + "FASTEST_RANK")) j["fastest_rank"] = num(top.get(p + "FASTEST_RANK"));
            if (top.has(p + "SLOWEST_RANK")) j["slowest_rank"] = num(top.get(p + "SLOWEST_RANK"));
        }
    } else if (j.contains("per_rank_byte_variance")) {
        j["variance_rank_time"] = j["per_rank_time_variance"];
        j["variance_rank_bytes"] = j["per_rank_byte_variance"];
    }
    return make(module, Category::rank, std::move(j), describe_rank(module));
}

std::vector<SummaryFragment> summarize_lustre(Records records) {
    const auto inst = collect(records);

    // One entry per file; a file may appear under several ranks.
    struct FileInfo {
        std::string path, mount, fs;
        std::optional<double> stripe_size, stripe_width;
        std::set<std::int64_t> osts;
    };
    std::map<std::string, FileInfo> files;
    double available_osts = 0.0, mdts = 0.0;
    for (const auto& i : inst) {
        auto& f = files[i.record_id];
        f.path = i.path;
        f.mount = i.mount;
        f.fs = i.fs;
        for (const char* name : {"LUSTRE_STRIPE_SIZE", "LUSTRE_COMP1_STRIPE_SIZE"}) {
            if (i.has(name) && !f.stripe_size) f.stripe_size = i.get(name);
        }
        for (const char* name : {"LUSTRE_STRIPE_WIDTH", "LUSTRE_COMP1_STRIPE_WIDTH"}) {
            if (i.has(name) && !f.stripe_width) f.stripe_width = i.get(name);
        }
        available_osts = std::max(available_osts, i.get("LUSTRE_OSTS"));
        mdts = std::max(mdts, i.get("LUSTRE_MDTS"));
        for (const auto& [name, value] : i.counters) {
            const bool plain = name.rfind("LUSTRE_OST_ID_", 0) == 0;
            const bool comp = name.rfind("LUSTRE_COMP", 0) == 0 &&
                              name.find("_OST_ID_") != std::string::npos;
            if ((plain || comp) && value >= 0.0) f.osts.insert(static_cast<std::int64_t>(value));
        }
    }

    std::vector<SummaryFragment> out;

    {
        std::map<std::pair<std::string, std::string>, std::size_t> mounts;
        for (const auto& [id, f] : files) ++mounts[{f.mount, f.fs}];
        ordered_json arr = ordered_json::array();
        for (const auto& [key, count] : mounts)
            arr.push_back({{"mount_point", key.first}, {"fs_type", key.second}, {"file_count", count}});
        ordered_json j;
        j["mount_count"] = mounts.size();
        j["mounts"] = std::move(arr);
        out.push_back(make(ModuleId::lustre, Category::mount, std::move(j), describe_mount()));
    }

    {
        std::vector<const FileInfo*> by_path;
        std::vector<double> sizes, widths;
        for (const auto& [id, f] : files) {
            by_path.push_back(&f);
            if (f.stripe_size) sizes.push_back(*f.stripe_size);
            if (f.stripe_width) widths.push_back(*f.stripe_width);
        }
        std::stable_sort(by_path.begin(), by_path.end(),
                         [](const FileInfo* a, const FileInfo* b) { return a->path < b->path; });
        ordered_json j;
        j["file_count"] = files.size();
        j["stripe_size_unit"] = "bytes";
        auto stats = [&](const std::vector<double>& v, const std::string& name) {
            if (v.empty()) {
                j["mode_" + name] = kUnavailable;
                return;
            }
            j["min_" + name] = num(*std::min_element(v.begin(), v.end()));
            j["max_" + name] = num(*std::max_element(v.begin(), v.end()));
            j["mode_" + name] = num(mode_of(v));
        };
        stats(sizes, "stripe_size");
        stats(widths, "stripe_width");
        ordered_json arr = ordered_json::array();
        for (std::size_t k = 0; k < by_path.size() && k < kTopFiles; ++k) {
            const auto& f = *by_path[k];
            ordered_json e;
            e["path"] = f.path;
            e["stripe_size"] = f.stripe_size ? num(*f.stripe_size) : ordered_json(kUnavailable);
            e["stripe_width"] = f.stripe_width ? num(*f.stripe_width) : ordered_json(kUnavailable);
            arr.push_back(std::move(e));
        }
        j["files"] = std::move(arr);
        if (by_path.size() > kTopFiles) j["files_omitted"] = by_path.size() - kTopFiles;
        out.push_back(make(ModuleId::lustre, Category::stripe_setting, std::move(j), describe_stripe()));
    }

    {
        std::map<std::int64_t, std::size_t> per_ost;
        for (const auto& [id, f] : files)
            for (auto ost : f.osts) ++per_ost[ost];
        ordered_json j;
        j["distinct_ost_count"] = per_ost.size();
        if (available_osts > 0.0) {
            j["available_ost_count"] = num(available_osts);
            j["ost_utilization_fraction"] = static_cast<double>(per_ost.size()) / available_osts;
        } else {
            j["available_ost_count"] = kUnavailable;
        }
        if (mdts > 0.0) j["mdt_count"] = num(mdts);
        if (!per_ost.empty()) {
            std::size_t lo = per_ost.begin()->second, hi = lo;
            for (const auto& [ost, n] : per_ost) {
                lo = std::min(lo, n);
                hi = std::max(hi, n);
            }
            j["min_files_per_ost"] = lo;
            j["max_files_per_ost"] = hi;
            if (per_ost.size() <= kMaxOstEntries) {
                ordered_json m = ordered_json::object();
                for (const auto& [ost, n] : per_ost) m[std::to_string(ost)] = n;
                j["files_per_ost"] = std::move(m);
            }
        }
        out.push_back(make(ModuleId::lustre, Category::server_usage, std::move(j), describe_server()));
    }
    return out;
}

std::vector<SummaryFragment> summarize_counts_files_metadata(Records records, ModuleId module,
                                                             const trace::TraceHeader& header) {
    const auto p = prefix(module);
    const auto inst = collect(records);
    std::vector<SummaryFragment> out;

    // IoRequestCount
    {
        ordered_json j;
        auto put = [&](const std::string& key, const std::string& counter) {
            j[key] = total_or_unavailable(records, inst, p + counter);
        };
        if (module == ModuleId::posix) {
            for (auto [key, counter] : {std::pair{"reads", "READS"}, {"writes", "WRITES"},
                                        {"opens", "OPENS"}, {"seeks", "SEEKS"}, {"stats", "STATS"},
                                        {"fsyncs", "FSYNCS"}, {"fdsyncs", "FDSYNCS"},
                                        {"rw_switches", "RW_SWITCHES"}})
                put(key, counter);
        } else if (module == ModuleId::mpiio) {
            const double ir = total(inst, p + "INDEP_READS"), iw = total(inst, p + "INDEP_WRITES");
            const double cr = total(inst, p + "COLL_READS"), cw = total(inst, p + "COLL_WRITES");
            const double sr = total(inst, p + "SPLIT_READS"), sw = total(inst, p + "SPLIT_WRITES");
            const double nr = total(inst, p + "NB_READS"), nw = total(inst, p + "NB_WRITES");
            const double reads = ir + cr + sr + nr, writes = iw + cw + sw + nw;
            j["reads"] = num(reads);
            j["writes"] = num(writes);
            j["independent_reads"] = num(ir);
            j["independent_writes"] = num(iw);
            j["collective_reads"] = num(cr);
            j["collective_writes"] = num(cw);
            j["split_reads"] = num(sr);
            j["split_writes"] = num(sw);
            j["nonblocking_reads"] = num(nr);
            j["nonblocking_writes"] = num(nw);
            j["opens"] = num(total(inst, p + "INDEP_OPENS") + total(inst, p + "COLL_OPENS"));
            j["independent_opens"] = num(total(inst, p + "INDEP_OPENS"));
            j["collective_opens"] = num(total(inst, p + "COLL_OPENS"));
            put("syncs", "SYNCS");
            j["collective_fraction"] = ratio(cr + cw, reads + writes);
            j["collective_read_fraction"] = ratio(cr, reads);
            j["collective_write_fraction"] = ratio(cw, writes);
        } else {
            put("reads", "READS");
            put("writes", "WRITES");
            j["opens"] = num(total(inst, p + "OPENS") + total(inst, p + "FDOPENS"));
            put("seeks", "SEEKS");
            put("flushes", "FLUSHES");
        }
        out.push_back(make(module, Category::io_request_count, std::move(j), describe_request_count(module)));
    }

    // File
    {
        struct FileAgg {
            std::string path;
            double read = 0.0, written = 0.0;
            std::set<std::int64_t> ranks;
        };
        std::map<std::string, FileAgg> files;
        std::vector<std::string> order;
        for (const auto& r : records) {
            auto [it, inserted] = files.try_emplace(r.record_id);
            if (inserted) order.push_back(r.record_id);
            it->second.path = r.file_path;
            it->second.ranks.insert(r.rank);
        }
        for (const auto& i : inst) {
            auto& f = files[i.record_id];
            f.read += i.get(p + "BYTES_READ");
            f.written += i.get(p + "BYTES_WRITTEN");
        }
        std::size_t shared = 0;
        std::vector<const FileAgg*> ranked;
        for (const auto& id : order) {
            const auto& f = files[id];
            if (f.ranks.contains(-1) || f.ranks.size() > 1) ++shared;
            ranked.push_back(&f);
        }
        std::stable_sort(ranked.begin(), ranked.end(), [](const FileAgg* a, const FileAgg* b) {
            const double ta = a->read + a->written, tb = b->read + b->written;
            if (ta != tb) return ta > tb;
            return a->path < b->path;
        });
        ordered_json j;
        j["file_count"] = files.size();
        j["shared_file_count"] = shared;
        j["unique_file_count"] = files.size() - shared;
        ordered_json arr = ordered_json::array();
        for (std::size_t k = 0; k < ranked.size() && k < kTopFiles; ++k) {
            const auto& f = *ranked[k];
            arr.push_back({{"path", f.path},
                           {"bytes_read", num(f.read)},
                           {"bytes_written", num(f.written)},
                           {"total_bytes", num(f.read + f.written)},
                           {"shared", f.ranks.contains(-1) || f.ranks.size() > 1}});
        }
        j["top_files_by_volume"] = std::move(arr);
        if (ranked.size() > kTopFiles) j["files_omitted"] = ranked.size() - kTopFiles;
        out.push_back(make(module, Category::file, std::move(j), describe_file(module)));
    }

    // Metadata
    if (is_valid(module, Category::metadata)) {
        double ops = 0.0;
        if (module == ModuleId::posix) {
            for (const char* c : {"OPENS", "STATS", "SEEKS", "FSYNCS", "FDSYNCS", "RENAME_SOURCES"})
                ops += total(inst, p + c);
        } else {
            for (const char* c : {"INDEP_OPENS", "COLL_OPENS", "SYNCS", "HINTS", "VIEWS"})
                ops += total(inst, p + c);
        }
        ordered_json j;
        j["metadata_op_count"] = num(ops);
        if (!present(records, p + "F_META_TIME")) {
            j["metadata_time_seconds"] = kUnavailable;
        } else {
            const double t = total(inst, p + "F_META_TIME");
            j["metadata_time_seconds"] = num(t);
            if (header.runtime_seconds > 0.0) {
                j["metadata_time_fraction"] = t / header.runtime_seconds;
                j["metadata_time_fraction_per_process"] =
                    t / (header.runtime_seconds * static_cast<double>(header.nprocs));
            } else {
                j["metadata_time_fraction"] = kUnavailable;
            }
        }
        j["read_time_seconds"] = total_or_unavailable(records, inst, p + "F_READ_TIME");
        j["write_time_seconds"] = total_or_unavailable(records, inst, p + "F_WRITE_TIME");
        j["runtime_seconds"] = num(header.runtime_seconds);
        out.push_back(make(module, Category::metadata, std::move(j), describe_metadata(module)));
    }
    return out;
}

ApplicationContext compute_app_context(const trace::TraceProfile& profile) {
    ApplicationContext ctx;
    ctx.runtime_seconds = profile.header.runtime_seconds;
    ctx.nprocs = profile.header.nprocs;
    std::map<ModuleId, double> bytes;
    double sum = 0.0;
    for (auto m : {ModuleId::posix, ModuleId::mpiio, ModuleId::stdio}) {
        if (!profile.has(m)) continue;
        const auto inst = collect(profile.records(m));
        const auto p = prefix(m);
        const double b = total(inst, p + "BYTES_READ") + total(inst, p + "BYTES_WRITTEN");
        bytes[m] = b;
        sum += b;
    }
    for (const auto& [m, b] : bytes) ctx.io_proportions[m] = sum > 0.0 ? b / sum : 0.0;
    return ctx;
}

nlohmann::ordered_json ApplicationContext::to_json() const {
    ordered_json j;
    j["runtime_seconds"] = num(runtime_seconds);
    j["nprocs"] = nprocs;
    ordered_json p = ordered_json::object();
    for (const auto& [m, f] : io_proportions) p[std::string(trace::module_name(m))] = f;
    j["io_proportions"] = std::move(p);
    return j;
}

std::string ApplicationContext::render() const {
    std::ostringstream out;
    out << "Total run time: " << trace::format_value(runtime_seconds) << " seconds\n";
    out << "Number of processes: " << nprocs << "\n";
    out << "Share of bytes moved (read + written) by module:";
    if (io_proportions.empty()) out << " none recorded";
    for (const auto& [m, f] : io_proportions) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1f%%", f * 100.0);
        out << "\n  " << trace::module_name(m) << ": " << buf;
    }
    out << "\n";
    return out.str();
}

// -- extraction driver --------------------------------------------------------

std::vector<SummaryFragment> extract_fragments(const trace::TraceProfile& profile,
                                               const ExtractOptions& options) {
    struct Task {
        ModuleId module;
        Category category;
    };
    std::vector<Task> tasks;
    for (auto m : trace::kSummarizedModules) {
        if (!profile.has(m)) continue;
        for (auto c : valid_categories(m))
            if (!options.disabled.contains({m, c})) tasks.push_back({m, c});
    }

    std::vector<std::optional<SummaryFragment>> slots(tasks.size());
    for_each_index(tasks.size(), options.execution, options.max_threads, [&](std::size_t k) {
        const auto [m, c] = tasks[k];
        const auto recs = profile.records(m);
        const auto pick = [&](std::vector<SummaryFragment> v) {
            for (auto& f : v)
                if (f.category == c) return std::move(f);
            throw std::logic_error("extractor did not produce requested category");
        };
        switch (c) {
        case Category::io_size: slots[k] = summarize_io_size(recs, m); break;
        case Category::alignment: slots[k] = summarize_alignment(recs); break;
        case Category::order: slots[k] = summarize_order(recs); break;
        case Category::rank: slots[k] = summarize_rank_balance(recs, m, profile.header); break;
        case Category::mount:
        case Category::stripe_setting:
        case Category::server_usage: slots[k] = pick(summarize_lustre(recs)); break;
        case Category::io_request_count:
        case Category::file:
        case Category::metadata:
            slots[k] = pick(summarize_counts_files_metadata(recs, m, profile.header));
            break;
        }
    });

    std::vector<SummaryFragment> out;
    out.reserve(slots.size());
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

nlohmann::ordered_json to_json(const SummaryFragment& fragment) {
    ordered_json j;
    j["module"] = std::string(trace::module_name(fragment.module));
    j["category"] = std::string(category_name(fragment.category));
    j["payload"] = fragment.payload;
    j["extraction_descriptor"] = fragment.extraction_descriptor;
    return j;
}

SummaryFragment fragment_from_json(const nlohmann::ordered_json& j) {
    const auto module = trace::module_from_name(j.at("module").get<std::string>());
    const auto category = category_from_name(j.at("category").get<std::string>());
    if (!module || !category || !is_valid(*module, *category))
        throw std::invalid_argument("invalid fragment module/category");
    return SummaryFragment{*module, *category, j.at("payload"),
                           j.value("extraction_descriptor", std::string())};
}

std::string serialize(const SummaryFragment& fragment) { return to_json(fragment).dump(2); }

std::vector<std::filesystem::path> dump_fragments(std::span<const SummaryFragment> fragments,
                                                  const std::filesystem::path& dir,
                                                  std::string_view stem) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> paths;
    for (const auto& f : fragments) {
        auto path = dir / (std::string(stem) + "." + f.key() + ".json");
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw trace::IoFailure("cannot write " + path.string());
        out << serialize(f) << "\n";
        paths.push_back(std::move(path));
    }
    return paths;
}

}  // namespace iodiag::summary
