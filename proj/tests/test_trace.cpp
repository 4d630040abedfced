#include <doctest.h>

#include "iodiag/trace.hpp"
#include "support.hpp"

#include <algorithm>
#include <tuple>

using namespace iodiag;
using namespace iodiag::trace;
using iodiag::test::TempDir;

namespace {

struct Expected {
    const char* module;
    std::int64_t rank;
    const char* record_id;
    const char* counter;
    double value;
    const char* path;
    const char* mount;
    const char* fs;
};

// Copied by hand from the fixture text.
const Expected kTranscribed[] = {
    {"POSIX", 0, "1000000000000000001", "POSIX_OPENS", 1, "/scratch/u/amrex/plt00000/Level_0/Cell_D_00000", "/scratch", "lustre"},
    {"POSIX", 0, "1000000000000000001", "POSIX_ACCESS4_ACCESS", 0, "/scratch/u/amrex/plt00000/Level_0/Cell_D_00000", "/scratch", "lustre"},
    {"POSIX", 1, "1000000000000000002", "POSIX_SIZE_READ_1M_4M", 0, "/scratch/u/amrex/plt00000/Level_0/Cell_D_00001", "/scratch", "lustre"},
    {"POSIX", 2, "1000000000000000003", "POSIX_FSYNCS", 0, "/scratch/u/amrex/plt00000/Level_0/Cell_D_00002", "/scratch", "lustre"},
    {"POSIX", 2, "1000000000000000003", "POSIX_SLOWEST_RANK_BYTES", 1610612736, "/scratch/u/amrex/plt00000/Level_0/Cell_D_00002", "/scratch", "lustre"},
    {"POSIX", 3, "1000000000000000004", "POSIX_SIZE_WRITE_10K_100K", 0, "/scratch/u/amrex/plt00000/Level_0/Cell_D_00003", "/scratch", "lustre"},
    {"POSIX", 4, "1000000000000000005", "POSIX_MAX_BYTE_READ", 0, "/scratch/u/amrex/plt00000/Level_0/Cell_D_00004", "/scratch", "lustre"},
    {"POSIX", 4, "1000000000000000005", "POSIX_F_CLOSE_END_TIMESTAMP", 644.5, "/scratch/u/amrex/plt00000/Level_0/Cell_D_00004", "/scratch", "lustre"},
    {"POSIX", 6, "1000000000000000007", "POSIX_MEM_ALIGNMENT", 8, "/scratch/u/amrex/plt00000/Level_0/Cell_D_00006", "/scratch", "lustre"},
    {"POSIX", 7, "1000000000000000008", "POSIX_ACCESS2_ACCESS", 0, "/scratch/u/amrex/plt00000/Level_0/Cell_D_00007", "/scratch", "lustre"},
    {"POSIX", -1, "7293015829341207733", "POSIX_SIZE_READ_10K_100K", 0, "/scratch/u/amrex/plt00000/Header", "/scratch", "lustre"},
    {"POSIX", -1, "5550132215849392771", "POSIX_STATS", 8, "/global/homes/u/user/amrex/Exec/inputs.3d", "/global/homes", "gpfs"},
    {"POSIX", -1, "5550132215849392771", "POSIX_FASTEST_RANK_BYTES", 576, "/global/homes/u/user/amrex/Exec/inputs.3d", "/global/homes", "gpfs"},
    {"POSIX", -1, "3141592653589793238", "POSIX_SIZE_WRITE_100_1K", 0, "/scratch/u/amrex/chk00000/Level_0/Cell_D", "/scratch", "lustre"},
    {"MPIIO", -1, "3141592653589793238", "MPIIO_COLL_OPENS", 0, "/scratch/u/amrex/chk00000/Level_0/Cell_D", "/scratch", "lustre"},
    {"MPIIO", -1, "3141592653589793238", "MPIIO_F_WRITE_START_TIMESTAMP", 650.5, "/scratch/u/amrex/chk00000/Level_0/Cell_D", "/scratch", "lustre"},
    {"MPIIO", -1, "3141592653589793238", "MPIIO_F_VARIANCE_RANK_TIME", 7.5625, "/scratch/u/amrex/chk00000/Level_0/Cell_D", "/scratch", "lustre"},
    {"STDIO", 0, "9221120237041090561", "STDIO_BYTES_WRITTEN", 98000, "<STDOUT>", "UNKNOWN", "UNKNOWN"},
    {"LUSTRE", 1, "1000000000000000002", "LUSTRE_STRIPE_OFFSET", 3, "/scratch/u/amrex/plt00000/Level_0/Cell_D_00001", "/scratch", "lustre"},
    {"HEATMAP", -1, "16592106915301738621", "HEATMAP_F_BIN_WIDTH_SECONDS", 0.2, "heatmap:POSIX", "UNKNOWN", "UNKNOWN"},
};

std::size_t count_record_lines(const std::string& text) {
    std::size_t n = 0;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty() && line[0] != '#' && line.find_first_not_of(" \t\r") != std::string::npos) ++n;
    return n;
}

auto record_key(const CounterRecord& r) {
    return std::tie(r.module, r.rank, r.record_id, r.counter_name, r.value, r.file_path, r.mount_point, r.fs_type);
}

std::vector<CounterRecord> all_records(const TraceProfile& p) {
    std::vector<CounterRecord> out;
    for (const auto& t : p.tables) out.insert(out.end(), t.records.begin(), t.records.end());
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return record_key(a) < record_key(b); });
    return out;
}

}  // namespace

TEST_CASE("fixture parses every record line") {
    const auto text = test::slurp(test::fixture_trace());
    const auto profile = parse_trace(text);
    CHECK(profile.record_count() == count_record_lines(text));
    CHECK(profile.record_count() >= 200);
    CHECK(profile.header.nprocs == 8);
    CHECK(profile.header.jobid == "27415531");
    CHECK(profile.header.runtime_seconds == 722.0);
    CHECK(profile.header.exe == "/global/homes/u/user/amrex/Exec/main3d.gnu.MPI.ex inputs.3d");
    for (auto m : kSummarizedModules) CHECK(profile.has(m));
    REQUIRE(profile.tables.size() == 5);
    CHECK(profile.tables[4].name == "HEATMAP");
    CHECK_FALSE(profile.tables[4].id.has_value());
}

TEST_CASE("hand transcribed records") {
    const auto profile = parse_trace_file(test::fixture_trace());
    for (const auto& e : kTranscribed) {
        CAPTURE(e.counter);
        const auto* table = profile.table(e.module);
        REQUIRE(table != nullptr);
        const auto it = std::find_if(table->records.begin(), table->records.end(), [&](const CounterRecord& r) {
            return r.rank == e.rank && r.record_id == e.record_id && r.counter_name == e.counter;
        });
        REQUIRE(it != table->records.end());
        CHECK(it->module == e.module);
        CHECK(it->value == e.value);
        CHECK(it->file_path == e.path);
        CHECK(it->mount_point == e.mount);
        CHECK(it->fs_type == e.fs);
        CHECK(profile.files.at(e.record_id) == e.path);
    }
}

TEST_CASE("split_modules round trip keeps the record multiset") {
    TempDir dir;
    const auto profile = parse_trace_file(test::fixture_trace());
    const auto paths = split_modules(profile, dir.path(), trace_stem(test::fixture_trace()));
    CHECK(paths.size() == profile.tables.size());
    CHECK(paths.at("POSIX").filename() == "amrex_like.darshan.POSIX.csv");
    TraceProfile back;
    for (const auto& [name, path] : paths)
        for (auto& r : read_module_csv(path)) back.add_record(std::move(r));
    CHECK(all_records(back) == all_records(profile));
}

TEST_CASE("module names") {
    CHECK(module_from_name("MPI-IO") == ModuleId::mpiio);
    CHECK(module_from_name("MPIIO") == ModuleId::mpiio);
    CHECK(module_from_name("posix") == std::nullopt);
    CHECK(module_name(ModuleId::lustre) == "LUSTRE");
}

TEST_CASE("malformed input") {
    const auto header = test::trace_header();
    SUBCASE("short record line names its line") {
        const std::string text = header + "POSIX\t0\t1\tPOSIX_OPENS\t1\t/f\t/\n";
        try {
            parse_trace(text);
            FAIL("no throw");
        } catch (const MalformedLine& e) {
            CHECK(e.line_no() == 9);
        }
    }
    SUBCASE("bad value") {
        CHECK_THROWS_AS(parse_trace(header + "POSIX\t0\t1\tPOSIX_OPENS\tabc\t/f\t/\text4\n"), MalformedLine);
    }
    SUBCASE("bad rank") {
        CHECK_THROWS_AS(parse_trace(header + "POSIX\t-2\t1\tPOSIX_OPENS\t1\t/f\t/\text4\n"), MalformedLine);
    }
    SUBCASE("missing nprocs") {
        CHECK_THROWS_AS(parse_trace("# run time: 4\nPOSIX\t0\t1\tPOSIX_OPENS\t1\t/f\t/\text4\n"),
                        MissingHeaderField);
    }
    SUBCASE("extra columns warn") {
        std::vector<std::string> warnings;
        const auto p = parse_trace(header + "POSIX\t0\t1\tPOSIX_OPENS\t1\t/f\t/\text4\textra\n", {&warnings});
        CHECK(p.record_count() == 1);
        CHECK(warnings.size() == 1);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(parse_trace_file("/nonexistent/trace.txt"), IoFailure);
    }
}

TEST_CASE("runtime falls back to end minus start") {
    const std::string text =
        "# nprocs: 2\n# start_time: 100\n# end_time: 160\nPOSIX\t0\t1\tPOSIX_OPENS\t1\t/f\t/\text4\n";
    CHECK(parse_trace(text).header.runtime_seconds == 60.0);
}

TEST_CASE("aggregate_counter and format_value") {
    const auto profile = parse_trace_file(test::fixture_trace());
    const auto stdio = profile.records(ModuleId::stdio);
    CHECK(aggregate_counter(stdio, "STDIO_BYTES_WRITTEN") == 98000.0);
    CHECK(aggregate_counter(stdio, "NOPE") == 0.0);
    CHECK(format_value(0.1) == "0.1");
    CHECK(format_value(722) == "722");
    CHECK(std::stod(format_value(1.0 / 3.0)) == 1.0 / 3.0);
}
