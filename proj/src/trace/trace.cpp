#include "iodiag/trace.hpp"

#include "iodiag/csv.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace iodiag::trace {

namespace fs = std::filesystem;

std::string_view module_name(ModuleId id) {
    switch (id) {
    case ModuleId::posix: return "POSIX";
    case ModuleId::mpiio: return "MPIIO";
    case ModuleId::stdio: return "STDIO";
    case ModuleId::lustre: return "LUSTRE";
    }
    return "UNKNOWN";
}

std::optional<ModuleId> module_from_name(std::string_view name) {
    if (name == "POSIX") return ModuleId::posix;
    if (name == "MPIIO" || name == "MPI-IO") return ModuleId::mpiio;
    if (name == "STDIO") return ModuleId::stdio;
    if (name == "LUSTRE") return ModuleId::lustre;
    return std::nullopt;
}

const ModuleTable* TraceProfile::table(ModuleId id) const {
    for (const auto& t : tables)
        if (t.id == id) return &t;
    return nullptr;
}

const ModuleTable* TraceProfile::table(std::string_view name) const {
    if (auto id = module_from_name(name)) return table(*id);
    for (const auto& t : tables)
        if (t.name == name) return &t;
    return nullptr;
}

std::span<const CounterRecord> TraceProfile::records(ModuleId id) const {
    const auto* t = table(id);
    if (t == nullptr) return {};
    return t->records;
}

std::size_t TraceProfile::record_count() const {
    std::size_t n = 0;
    for (const auto& t : tables) n += t.records.size();
    return n;
}

void TraceProfile::add_record(CounterRecord record) {
    auto id = module_from_name(record.module);
    if (id) record.module = std::string(module_name(*id));
    auto it = std::find_if(tables.begin(), tables.end(),
                           [&](const ModuleTable& t) { return t.name == record.module; });
    if (it == tables.end()) {
        tables.push_back(ModuleTable{record.module, id, {}});
        it = std::prev(tables.end());
    }
    files.emplace(record.record_id, record.file_path);
    it->records.push_back(std::move(record));
}

MalformedLine::MalformedLine(std::size_t line_no, const std::string& what)
    : std::runtime_error("line " + std::to_string(line_no) + ": " + what), line_no_(line_no) {}

MissingHeaderField::MissingHeaderField(std::string field)
    : std::runtime_error("missing header field: " + field), field_(std::move(field)) {}

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
    s = trim(s);
    T value{};
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return value;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find('\t', start);
        out.push_back(line.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::vector<std::string_view> split_whitespace(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        if (i >= line.size()) break;
        const auto start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
        out.push_back(line.substr(start, i - start));
    }
    return out;
}

struct HeaderScan {
    std::optional<std::int64_t> nprocs;
    std::optional<double> runtime;
    std::optional<std::int64_t> start_time;
    std::optional<std::int64_t> end_time;
    std::size_t nprocs_line = 0;
};

void scan_header_line(std::string_view body, std::size_t line_no, TraceHeader& header,
                      HeaderScan& scan) {
    const auto colon = body.find(':');
    if (colon == std::string_view::npos) return;
    const auto key = trim(body.substr(0, colon));
    const auto value = trim(body.substr(colon + 1));
    if (key == "darshan log version") {
        header.darshan_version = std::string(value);
    } else if (key == "exe") {
        header.exe = std::string(value);
    } else if (key == "jobid") {
        header.jobid = std::string(value);
    } else if (key == "nprocs") {
        scan.nprocs = parse_number<std::int64_t>(value);
        scan.nprocs_line = line_no;
        if (!scan.nprocs) throw MalformedLine(line_no, "nprocs is not an integer");
    } else if (key == "run time") {
        scan.runtime = parse_number<double>(value);
        if (!scan.runtime) throw MalformedLine(line_no, "run time is not a number");
    } else if (key == "start_time") {
        scan.start_time = parse_number<std::int64_t>(value);
    } else if (key == "end_time") {
        scan.end_time = parse_number<std::int64_t>(value);
    }
}

CounterRecord parse_record(std::string_view line, std::size_t line_no,
                           const ParseOptions& options) {
    auto cols = split_tabs(line);
    if (cols.size() < 8) cols = split_whitespace(line);
    if (cols.size() < 8) {
        throw MalformedLine(line_no, "expected 8 columns, found " + std::to_string(cols.size()));
    }
    if (cols.size() > 8 && options.warnings != nullptr) {
        options.warnings->push_back("line " + std::to_string(line_no) + ": ignoring " +
                                    std::to_string(cols.size() - 8) + " extra column(s)");
    }

    CounterRecord rec;
    rec.module = std::string(trim(cols[0]));
    const auto rank = parse_number<std::int64_t>(cols[1]);
    if (!rank || *rank < -1) throw MalformedLine(line_no, "invalid rank '" + std::string(cols[1]) + "'");
    rec.rank = *rank;
    rec.record_id = std::string(trim(cols[2]));
    rec.counter_name = std::string(trim(cols[3]));
    if (rec.module.empty() || rec.counter_name.empty() || rec.record_id.empty())
        throw MalformedLine(line_no, "empty module, record id or counter name");
    const auto value = parse_number<double>(cols[4]);
    if (!value) throw MalformedLine(line_no, "invalid counter value '" + std::string(cols[4]) + "'");
    rec.value = *value;
    rec.file_path = std::string(cols[5]);
    rec.mount_point = std::string(trim(cols[6]));
    rec.fs_type = std::string(trim(cols[7]));
    return rec;
}

}  // namespace

TraceProfile parse_trace(std::string_view text, const ParseOptions& options) {
    TraceProfile profile;
    HeaderScan scan;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        auto line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        const auto stripped = trim(line);
        if (stripped.empty()) {
            if (end == text.size()) break;
            continue;
        }
        if (stripped.front() == '#') {
            scan_header_line(stripped.substr(1), line_no, profile.header, scan);
        } else {
            profile.add_record(parse_record(line, line_no, options));
        }
        if (end == text.size()) break;
    }

    if (!scan.nprocs) throw MissingHeaderField("nprocs");
    if (*scan.nprocs < 1) throw MalformedLine(scan.nprocs_line, "nprocs must be >= 1");
    profile.header.nprocs = *scan.nprocs;
    profile.header.start_time = scan.start_time.value_or(0);
    profile.header.end_time = scan.end_time.value_or(profile.header.start_time);
    if (profile.header.end_time < profile.header.start_time)
        throw MissingHeaderField("end_time (earlier than start_time)");

    if (scan.runtime) {
        profile.header.runtime_seconds = *scan.runtime;
    } else if (scan.start_time && scan.end_time) {
        // Older parsers omit "run time"; the wall-clock span is equivalent.
        profile.header.runtime_seconds =
            static_cast<double>(*scan.end_time - *scan.start_time);
    } else {
        throw MissingHeaderField("run time");
    }
    if (profile.header.runtime_seconds < 0.0) throw MissingHeaderField("run time (negative)");
    return profile;
}

TraceProfile parse_trace_file(const fs::path& path, const ParseOptions& options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open trace file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_trace(buf.str(), options);
}

std::string trace_stem(const fs::path& path) {
    auto stem = path.filename().string();
    const auto dot = stem.rfind('.');
    if (dot != std::string::npos && dot != 0) stem.erase(dot);
    return stem;
}

std::string format_value(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

namespace {

const std::vector<std::string> kCsvColumns = {"module",    "rank",      "record_id",
                                              "counter_name", "value",  "file_path",
                                              "mount_point",  "fs_type"};

std::string file_safe(std::string name) {
    for (char& c : name)
        if (c == '/' || c == '\\' || c == ':' || c == ' ') c = '_';
    return name;
}

}  // namespace

std::map<std::string, fs::path> split_modules(const TraceProfile& profile, const fs::path& out_dir,
                                              std::string_view stem) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoFailure("cannot create " + out_dir.string() + ": " + ec.message());

    std::map<std::string, fs::path> written;
    for (const auto& table : profile.tables) {
        const auto path = out_dir / (std::string(stem) + "." + file_safe(table.name) + ".csv");
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoFailure("cannot write " + path.string());
        csv::write_row(out, kCsvColumns);
        for (const auto& r : table.records) {
            csv::write_row(out, {r.module, std::to_string(r.rank), r.record_id, r.counter_name,
                                 format_value(r.value), r.file_path, r.mount_point, r.fs_type});
        }
        out.flush();
        if (!out) throw IoFailure("write failed for " + path.string());
        written.emplace(table.name, path);
    }
    return written;
}

std::vector<CounterRecord> read_module_csv(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open " + path.string());
    auto header = csv::read_row(in);
    if (!header || *header != kCsvColumns) throw MalformedLine(1, "unexpected CSV header");

    std::vector<CounterRecord> out;
    std::size_t line_no = 1;
    while (auto row = csv::read_row(in)) {
        ++line_no;
        if (row->size() == 1 && row->front().empty()) continue;
        if (row->size() != 8) throw MalformedLine(line_no, "expected 8 CSV fields");
        CounterRecord r;
        r.module = (*row)[0];
        const auto rank = parse_number<std::int64_t>((*row)[1]);
        const auto value = parse_number<double>((*row)[4]);
        if (!rank || !value) throw MalformedLine(line_no, "bad rank or value");
        r.rank = *rank;
        r.record_id = (*row)[2];
        r.counter_name = (*row)[3];
        r.value = *value;
        r.file_path = (*row)[5];
        r.mount_point = (*row)[6];
        r.fs_type = (*row)[7];
        out.push_back(std::move(r));
    }
    return out;
}

double aggregate_counter(std::span<const CounterRecord> table, std::string_view counter_name) {
    double sum = 0.0;
    for (const auto& r : table)
        if (r.counter_name == counter_name) sum += r.value;
    return sum;
}

}  // namespace iodiag::trace
