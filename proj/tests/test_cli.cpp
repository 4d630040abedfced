#include <doctest.h>

#include "support.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <sys/wait.h>

namespace fs = std::filesystem;
using iodiag::test::TempDir;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(const TempDir& dir, const std::string& args, const std::string& input = "") {
    const auto out = dir / "stdout.txt";
    const auto err = dir / "stderr.txt";
    std::string cmd = std::string("'") + IODIAG_CLI + "' " + args + " >'" + out.string() + "' 2>'" + err.string() + "'";
    if (!input.empty()) {
        iodiag::test::spit(dir / "stdin.txt", input);
        cmd += " <'" + (dir / "stdin.txt").string() + "'";
    } else {
        cmd += " </dev/null";
    }
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, iodiag::test::slurp(out), iodiag::test::slurp(err)};
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("cli exit codes") {
    TempDir dir;
    auto r = run(dir, "parse " + q(dir / "missing.txt"));
    CHECK(r.code == 2);
    CHECK(r.err.find("error:") != std::string::npos);

    r = run(dir, "");
    CHECK(r.code == 1);
    CHECK(r.err.find("Usage:") != std::string::npos);

    r = run(dir, "frobnicate");
    CHECK(r.code == 1);

    r = run(dir, "--help");
    CHECK(r.code == 0);
}

TEST_CASE("cli parse and summarize") {
    TempDir dir;
    auto r = run(dir, "parse " + q(iodiag::test::fixture_trace()) + " --dump-csv " + q(dir / "csv"));
    CHECK(r.code == 0);
    CHECK(r.out.find("nprocs: 8") != std::string::npos);
    CHECK(std::distance(fs::directory_iterator(dir / "csv"), {}) == 5);

    r = run(dir, "summarize " + q(iodiag::test::fixture_trace()) + " --dump-json " + q(dir / "frag"));
    CHECK(r.code == 0);
    CHECK(std::distance(fs::directory_iterator(dir / "frag"), {}) == 18);
}

TEST_CASE("cli kb build, diagnose and chat with the offline model") {
    TempDir dir;
    auto r = run(dir, "--mock kb build " + q(iodiag::test::corpus_dir()) + " --index " + q(dir / "idx.jsonl"));
    REQUIRE(r.code == 0);
    CHECK(r.out.find("chunks: 12") != std::string::npos);

    r = run(dir, "--mock diagnose " + q(iodiag::test::fixture_trace()) + " --index " + q(dir / "idx.jsonl") +
                     " --out " + q(dir / "run"));
    REQUIRE(r.code == 0);
    CHECK(r.out.starts_with("# I/O Performance Diagnosis"));
    CHECK(fs::exists(dir / "run" / "final.json"));

    r = run(dir, "--mock chat " + q(dir / "run"), "How do I raise the stripe count?\n/quit\n");
    CHECK(r.code == 0);
    const auto chat = nlohmann::json::parse(iodiag::test::slurp(dir / "run" / "chat.json"));
    CHECK(chat.at("history").size() == 3);

    r = run(dir, "--mock chat " + q(dir / "run"), "And the alignment?\n");
    CHECK(r.code == 0);
    CHECK(nlohmann::json::parse(iodiag::test::slurp(dir / "run" / "chat.json")).at("history").size() == 5);
}

TEST_CASE("cli eval with the offline judge") {
    TempDir dir;
    std::string manifest;
    for (const char* id : {"s1", "s2"}) {
        iodiag::test::spit(dir / (std::string(id) + ".txt"), iodiag::test::trace_header());
        manifest += nlohmann::json{{"sample_id", id}, {"trace", std::string(id) + ".txt"}, {"source", "SB"},
                                   {"labels", {"Small Read I/O Requests"}}}.dump() + "\n";
        // the offline judge ranks the longer text first
        iodiag::test::spit(dir / "alpha" / (std::string(id) + ".md"), "a long and detailed diagnosis text");
        iodiag::test::spit(dir / "beta" / (std::string(id) + ".md"), "short");
    }
    iodiag::test::spit(dir / "manifest.jsonl", manifest);
    auto r = run(dir, "--mock eval --manifest " + q(dir / "manifest.jsonl") + " --tool-outputs " + q(dir / "alpha") +
                          " " + q(dir / "beta") + " --judge-model judge --criteria Utility --out " + q(dir / "res"));
    REQUIRE(r.code == 0);
    const auto scores = nlohmann::json::parse(iodiag::test::slurp(dir / "res" / "scores.json"));
    // alpha: rank 1 in every repetition -> S = 3 per sample, NS = 6 / (3 * 2) = 1
    // beta:  rank 2 -> S = 2 per sample, NS = 4 / 6
    const auto& per_tool = scores.at("scores");
    for (const auto& [tool, want] : {std::pair<std::string, double>{"alpha", 1.0}, {"beta", 4.0 / 6.0}}) {
        const auto& rows = per_tool.at(tool).at("by_criterion_and_source");
        REQUIRE(rows.size() == 1);
        const double ns = rows[0].at("NS").get<double>();
        CHECK(ns >= 0.0);
        CHECK(ns <= 1.0);
        CHECK(ns == doctest::Approx(want).epsilon(1e-12));
    }
    CHECK(fs::exists(dir / "res" / "outcomes.json"));

    r = run(dir, "--mock eval --manifest " + q(dir / "manifest.jsonl") + " --tool-outputs " + q(dir / "alpha") +
                     " --judge-model j --criteria Nope");
    CHECK(r.code != 0);
}
