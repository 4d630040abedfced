#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace iodiag::trace {

/// The Darshan modules that have summary extractors. Anything else found in a
/// trace is kept under its opaque name.
enum class ModuleId { posix, mpiio, stdio, lustre };

inline constexpr ModuleId kSummarizedModules[] = {ModuleId::posix, ModuleId::mpiio,
                                                  ModuleId::stdio, ModuleId::lustre};

/// Canonical name: "POSIX", "MPIIO", "STDIO", "LUSTRE".
std::string_view module_name(ModuleId id);

/// Accepts canonical names and darshan-parser's spelling ("MPI-IO").
std::optional<ModuleId> module_from_name(std::string_view name);

struct TraceHeader {
    std::string exe;
    std::string jobid;
    std::int64_t nprocs = 1;
    double runtime_seconds = 0.0;
    std::int64_t start_time = 0;
    std::int64_t end_time = 0;
    std::string darshan_version;
};

struct CounterRecord {
    std::string module;  // canonical module name
    std::int64_t rank = -1;
    std::string record_id;
    std::string counter_name;
    double value = 0.0;
    std::string file_path;
    std::string mount_point;
    std::string fs_type;

    bool shared() const { return rank == -1; }
    friend bool operator==(const CounterRecord&, const CounterRecord&) = default;
};

struct ModuleTable {
    std::string name;
    std::optional<ModuleId> id;
    std::vector<CounterRecord> records;
};

/// Parsed trace. Immutable after parse_trace returns; safe to share across
/// readers.
class TraceProfile {
public:
    TraceHeader header;
    /// Tables in order of first appearance in the input.
    std::vector<ModuleTable> tables;
    /// record_id -> file path, covering every record.
    std::map<std::string, std::string> files;

    const ModuleTable* table(ModuleId id) const;
    const ModuleTable* table(std::string_view name) const;
    bool has(ModuleId id) const { return table(id) != nullptr; }

    std::span<const CounterRecord> records(ModuleId id) const;
    std::size_t record_count() const;

    /// Appends a record to the matching table, creating it on first use.
    void add_record(CounterRecord record);
};

class MalformedLine : public std::runtime_error {
public:
    MalformedLine(std::size_t line_no, const std::string& what);
    std::size_t line_no() const { return line_no_; }

private:
    std::size_t line_no_;
};

class MissingHeaderField : public std::runtime_error {
public:
    explicit MissingHeaderField(std::string field);
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

class IoFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ParseOptions {
    /// Receives one message per record line with more than 8 columns.
    std::vector<std::string>* warnings = nullptr;
};

/// Parses complete darshan-parser text output.
TraceProfile parse_trace(std::string_view text, const ParseOptions& options = {});
TraceProfile parse_trace_file(const std::filesystem::path& path, const ParseOptions& options = {});

/// Filename stem used for derived artifacts ("run.darshan.txt" -> "run.darshan").
std::string trace_stem(const std::filesystem::path& path);

/// Writes `<stem>.<module>.csv` per module table. Returns module name -> path.
std::map<std::string, std::filesystem::path> split_modules(const TraceProfile& profile,
                                                           const std::filesystem::path& out_dir,
                                                           std::string_view stem);

/// Reads a CSV written by split_modules.
std::vector<CounterRecord> read_module_csv(const std::filesystem::path& path);

/// Sum of `value` over records named `counter_name`, 0.0 if absent.
double aggregate_counter(std::span<const CounterRecord> table, std::string_view counter_name);

/// Shortest decimal text that reads back to the same double.
std::string format_value(double value);

}  // namespace iodiag::trace
