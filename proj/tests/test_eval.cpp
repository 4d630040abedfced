#include <doctest.h>

#include "iodiag/eval.hpp"
#include "support.hpp"

#include <algorithm>
#include <regex>

using namespace iodiag;
using namespace iodiag::eval;

namespace {

struct Row {
    const char* title;
    std::size_t sb, io500, ra;
};

// Label instances per source for the 40-trace suite.
const Row kTable3[] = {
    {"High Metadata Load", 1, 2, 2},
    {"Misaligned Read requests", 2, 10, 4},
    {"Misaligned Write requests", 2, 10, 6},
    {"Random Access Patterns on Write", 0, 5, 2},
    {"Random Access Patterns on Read", 0, 5, 2},
    {"Shared File Access", 1, 14, 4},
    {"Small Read I/O Requests", 2, 10, 5},
    {"Small Write I/O Requests", 2, 10, 6},
    {"Repetitive Data Access on Read", 1, 0, 0},
    {"Server Load Imbalance", 7, 15, 2},
    {"Rank Load Imbalance", 1, 0, 1},
    {"Multi-Process W/O MPI", 0, 13, 0},
    {"No Collective I/O on Read", 6, 8, 4},
    {"No Collective I/O on Write", 5, 8, 2},
    {"Low-Level Library on Read", 1, 0, 0},
    {"Low-Level Library on Write", 1, 0, 0},
};

// Spreads each label's instances round-robin over the source's traces.
std::filesystem::path write_table3_manifest(const std::filesystem::path& dir) {
    const std::pair<const char*, std::size_t> sources[] = {{"SB", 10}, {"IO500", 21}, {"RA", 9}};
    std::string lines;
    for (std::size_t si = 0; si < 3; ++si) {
        const auto [name, n] = sources[si];
        std::vector<std::vector<std::string>> labels(n);
        std::size_t cursor = 0;
        for (const auto& row : kTable3) {
            const std::size_t count = si == 0 ? row.sb : si == 1 ? row.io500 : row.ra;
            for (std::size_t j = 0; j < count; ++j) labels[(cursor + j) % n].push_back(row.title);
            cursor += count;
        }
        for (std::size_t i = 0; i < n; ++i) {
            const std::string id = std::string(name) + "-" + std::to_string(i + 1);
            test::spit(dir / "traces" / (id + ".txt"), test::trace_header());
            nlohmann::json j{{"sample_id", id}, {"trace", "traces/" + id + ".txt"}, {"source", name}, {"labels", labels[i]}};
            lines += j.dump() + "\n";
        }
    }
    test::spit(dir / "manifest.jsonl", lines);
    return dir / "manifest.jsonl";
}

RankingOutcome outcome(const std::string& sample, Source src, std::map<std::string, int> ranks,
                       Criterion c = Criterion::Accuracy, std::size_t rep = 0) {
    RankingOutcome o;
    o.sample_id = sample;
    o.source = src;
    o.criterion = c;
    o.repetition = rep;
    o.valid = true;
    o.ranks = std::move(ranks);
    return o;
}

TraceSample sample(const std::string& id, Source src) {
    TraceSample s;
    s.sample_id = id;
    s.source = src;
    s.labels = {IssueLabel::SmallRead};
    return s;
}

bool mentions(const std::string& text, const std::string& word) {
    const std::regex special(R"([.^$|()\[\]{}*+?\\-])");
    const std::regex re("(^|[^A-Za-z0-9_])" + std::regex_replace(word, special, R"(\$&)") + "($|[^A-Za-z0-9_])",
                        std::regex::icase);
    return std::regex_search(text, re);
}

}  // namespace

TEST_CASE("rank score") {
    CHECK(rank_score(1) == 3.0);
    CHECK(rank_score(2) == 2.0);
    CHECK(rank_score(3) == 1.0);
    CHECK(rank_score(4) == 0.0);
}

TEST_CASE("hand example: ten samples give NS = 19/30") {
    // ranks for tool "a": 1,1,1,2,2,2,3,3,3,3 -> S = 9 + 6 + 4 = 19
    const int ranks_a[] = {1, 1, 1, 2, 2, 2, 3, 3, 3, 3};
    std::vector<TraceSample> samples;
    std::vector<RankingOutcome> outs;
    for (int i = 0; i < 10; ++i) {
        const auto id = "s" + std::to_string(i);
        samples.push_back(sample(id, Source::SB));
        const int ra = ranks_a[i];
        const int rb = ra == 1 ? 2 : 1;
        const int rc = 6 - ra - rb;
        outs.push_back(outcome(id, Source::SB, {{"a", ra}, {"b", rb}, {"c", rc}}));
    }
    const auto t = compute_scores(outs, samples);
    CHECK(t.S.at({"a", Criterion::Accuracy, Source::SB}) == 19.0);
    CHECK(std::abs(t.NS.at({"a", Criterion::Accuracy, Source::SB}) - 19.0 / 30.0) <= 1e-12);
    CHECK(t.sample_count.at({Criterion::Accuracy, Source::SB}) == 10);
    for (const auto& [k, v] : t.NS) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    // duplicating every sample leaves NS unchanged
    auto samples2 = samples;
    auto outs2 = outs;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        auto s = samples[i];
        s.sample_id += "-dup";
        samples2.push_back(s);
        auto o = outs[i];
        o.sample_id += "-dup";
        outs2.push_back(o);
    }
    const auto t2 = compute_scores(outs2, samples2);
    for (const auto& [k, v] : t.NS) CHECK(std::abs(t2.NS.at(k) - v) <= 1e-12);
}

TEST_CASE("repetitions average and invalid outcomes are skipped") {
    std::vector<TraceSample> samples{sample("x", Source::RA)};
    std::vector<RankingOutcome> outs{
        outcome("x", Source::RA, {{"a", 1}, {"b", 2}}, Criterion::Utility, 0),
        outcome("x", Source::RA, {{"a", 2}, {"b", 1}}, Criterion::Utility, 1),
    };
    RankingOutcome bad = outcome("x", Source::RA, {}, Criterion::Utility, 2);
    bad.valid = false;
    outs.push_back(bad);
    const auto t = compute_scores(outs, samples);
    CHECK(t.per_sample.at({"a", Criterion::Utility, "x"}) == 2.5);
    CHECK(t.NS.at({"a", Criterion::Utility, Source::RA}) == doctest::Approx(2.5 / 3.0));
    CHECK(t.invalid_outcomes == 1);
    CHECK(t.valid_outcomes == 2);

    RankingOutcome only_bad = bad;
    CHECK_THROWS_AS(compute_scores({only_bad}, samples), EmptySource);
}

TEST_CASE("permutation schedule covers every rotation once") {
    std::set<std::size_t> content, slots;
    for (std::size_t r = 0; r < 4; ++r) {
        content.insert(permutation_for(r, 4).content_offset);
        slots.insert(permutation_for(r, 4).slot_offset);
    }
    CHECK(content == std::set<std::size_t>{0, 1, 2, 3});
    CHECK(slots == std::set<std::size_t>{0, 1, 2, 3});
}

TEST_CASE("ranking prompts never reveal tool names") {
    const std::vector<std::string> tools{"IOAgent-gpt-4o", "IOAgent", "Drishti", "ION"};
    std::vector<TraceSample> samples;
    ToolOutputs outputs;
    for (int i = 0; i < 5; ++i) {
        samples.push_back(sample("t" + std::to_string(i), Source::IO500));
        for (std::size_t k = 0; k < tools.size(); ++k)
            outputs[tools[k]]["t" + std::to_string(i)] =
                "Report by " + tools[k] + " (unlike ioagent or DRISHTI or ion-style tools): issue " + std::to_string(k);
    }
    std::vector<std::string> prompts;
    std::size_t calls = 0;
    const JudgeFn judge = [&](const std::string& p) {
        ++calls;
        return offline_judge_reply(p);
    };
    for (auto c : kAllCriteria) {
        const auto outs = run_ranking(samples, outputs, c, judge, {}, &prompts);
        CHECK(outs.size() == 20);
        for (const auto& o : outs) CHECK(o.valid);
        std::set<std::size_t> offsets;
        for (const auto& o : outs)
            if (o.sample_id == "t0") offsets.insert(o.permutation.content_offset);
        CHECK(offsets == std::set<std::size_t>{0, 1, 2, 3});
    }
    CHECK(prompts.size() == 60);
    for (const auto& p : prompts)
        for (const auto& t : tools) CHECK_FALSE(mentions(p, t));

    CHECK_THROWS_AS(build_ranking_prompt({"s", Criterion::Accuracy, {{"Criterion", "x"}, {"b", "y"}}, {}, {}}),
                    std::invalid_argument);
}

TEST_CASE("judge reply parsing is strict") {
    const auto ok = parse_judge_reply("RANKS: Tool-2=1, Tool-1=2\nEXPLANATION: fine", 2);
    CHECK(ok.ranks.at("Tool-1") == 2);
    CHECK(ok.explanation == "fine");
    CHECK_THROWS(parse_judge_reply("RANKS: Tool-1=1, Tool-2=1\nEXPLANATION: x", 2));
    CHECK_THROWS(parse_judge_reply("RANKS: Tool-1=1, Tool-2=3\nEXPLANATION: x", 2));
    CHECK_THROWS(parse_judge_reply("RANKS: Tool-1=1, Tool-2=2", 2));
    CHECK_THROWS(parse_judge_reply("RANKS: Tool-1=1, Tool-5=2\nEXPLANATION: x", 2));
    CHECK_THROWS(parse_judge_reply("nothing", 2));
}

TEST_CASE("bad judge replies are retried then marked invalid") {
    std::vector<TraceSample> samples{sample("a", Source::SB)};
    ToolOutputs outputs{{"x", {{"a", "one"}}}, {"y", {{"a", "two"}}}};
    int calls = 0;
    const JudgeFn flaky = [&](const std::string& p) {
        return ++calls == 1 ? std::string("garbage") : offline_judge_reply(p);
    };
    RankingOptions opt;
    opt.repetitions = 1;
    auto outs = run_ranking(samples, outputs, Criterion::Utility, flaky, opt);
    CHECK(outs[0].valid);
    CHECK(outs[0].attempts == 2);
    CHECK(outs[0].ranks.at("y") == 2);  // equal lengths rank by alias order

    const JudgeFn broken = [](const std::string&) { return std::string("no"); };
    outs = run_ranking(samples, outputs, Criterion::Utility, broken, opt);
    CHECK_FALSE(outs[0].valid);
    CHECK(outs[0].attempts == 3);
    CHECK_FALSE(outs[0].error.empty());
}

TEST_CASE("manifest reproducing the labelled suite") {
    test::TempDir dir;
    const auto samples = load_manifest(write_table3_manifest(dir.path()));
    CHECK(samples.size() == 40);
    const auto counts = label_counts(samples);
    std::size_t total = 0;
    std::map<Source, std::size_t> per_source;
    for (const auto& row : kTable3) {
        CAPTURE(row.title);
        const auto label = parse_issue_label(row.title);
        REQUIRE(label);
        const auto it = counts.find(*label);
        auto get = [&](Source s) -> std::size_t {
            if (it == counts.end()) return 0;
            auto j = it->second.find(s);
            return j == it->second.end() ? 0 : j->second;
        };
        CHECK(get(Source::SB) == row.sb);
        CHECK(get(Source::IO500) == row.io500);
        CHECK(get(Source::RA) == row.ra);
        total += get(Source::SB) + get(Source::IO500) + get(Source::RA);
        per_source[Source::SB] += get(Source::SB);
        per_source[Source::IO500] += get(Source::IO500);
        per_source[Source::RA] += get(Source::RA);
    }
    CHECK(total == 182);
    CHECK(per_source[Source::SB] == 32);
    CHECK(per_source[Source::IO500] == 110);
    CHECK(per_source[Source::RA] == 40);
    for (const auto& s : samples) CHECK_FALSE(s.labels.empty());
}

TEST_CASE("manifest errors") {
    test::TempDir dir;
    test::spit(dir / "t.txt", test::trace_header());
    test::spit(dir / "missing.jsonl", R"({"sample_id":"a","trace":"nope.txt","source":"SB","labels":["Shared File Access"]})" "\n");
    CHECK_THROWS_AS(load_manifest(dir / "missing.jsonl"), MissingTrace);
    test::spit(dir / "unknown.jsonl", R"({"sample_id":"a","trace":"t.txt","source":"SB","labels":["Bogus"]})" "\n");
    CHECK_THROWS(load_manifest(dir / "unknown.jsonl"));
    test::spit(dir / "dup.jsonl", R"({"sample_id":"a","trace":"t.txt","source":"SB","labels":["Shared File Access"]})" "\n"
                                  R"({"sample_id":"a","trace":"t.txt","source":"RA","labels":["Shared File Access"]})" "\n");
    CHECK_THROWS_AS(load_manifest(dir / "dup.jsonl"), ManifestError);
    test::spit(dir / "empty.jsonl", R"({"sample_id":"a","trace":"t.txt","source":"SB","labels":[]})" "\n");
    CHECK_THROWS_AS(load_manifest(dir / "empty.jsonl"), ManifestError);
}

TEST_CASE("label match") {
    const auto m = label_match_score({IssueLabel::SmallRead, IssueLabel::SharedFileAccess},
                                     {IssueLabel::SmallRead, IssueLabel::RandomRead});
    CHECK(*m.precision == 0.5);
    CHECK(m.recall == 0.5);
    CHECK_FALSE(label_match_score({}, {IssueLabel::SmallRead}).precision.has_value());
}

TEST_CASE("labels") {
    CHECK(all_issue_labels().size() == 16);
    for (auto l : all_issue_labels()) {
        CHECK(parse_issue_label(label_display_name(l)) == l);
        CHECK(parse_issue_label(label_id(l)) == l);
        CHECK_FALSE(label_description(l).empty());
    }
    CHECK(parse_issue_label("small write i/o requests") == IssueLabel::SmallWrite);
    CHECK_FALSE(parse_issue_label("nonsense").has_value());
}

TEST_CASE("scores files") {
    test::TempDir dir;
    std::vector<TraceSample> samples{sample("a", Source::SB), sample("b", Source::SB)};
    std::vector<RankingOutcome> outs{outcome("a", Source::SB, {{"x", 1}, {"y", 2}}),
                                     outcome("b", Source::SB, {{"x", 2}, {"y", 1}})};
    const auto t = compute_scores(outs, samples);
    write_scores(t, {{"judge_model", "m"}}, dir / "out");
    const auto j = nlohmann::json::parse(test::slurp(dir / "out" / "scores.json"));
    CHECK(j.contains("settings"));
    CHECK(std::filesystem::exists(dir / "out" / "scores.md"));
    CHECK(t.NS.at({"x", Criterion::Accuracy, Source::SB}) == doctest::Approx(5.0 / 6.0));
}
