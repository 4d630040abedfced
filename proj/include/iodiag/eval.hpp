#pragma once

#include "iodiag/labels.hpp"
#include "iodiag/parallel.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace iodiag::eval {

enum class Source { SB, IO500, RA };
inline constexpr Source kAllSources[] = {Source::SB, Source::IO500, Source::RA};
std::string_view source_name(Source s);
/// "SB"/"IO500"/"RA" or the long forms.
std::optional<Source> source_from_name(std::string_view name);

struct TraceSample {
    std::string sample_id;
    std::filesystem::path trace_path;
    LabelSet labels;
    Source source = Source::SB;
};

class MissingTrace : public std::runtime_error {
public:
    explicit MissingTrace(const std::filesystem::path& p)
        : std::runtime_error("trace file not found: " + p.string()), path_(p) {}
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

class ManifestError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// JSON Lines: {"sample_id", "trace", "source", "labels": [display names]}.
/// Relative trace paths resolve against the manifest's directory.
std::vector<TraceSample> load_manifest(const std::filesystem::path& path);

/// Label instances per (label, source).
std::map<IssueLabel, std::map<Source, std::size_t>> label_counts(const std::vector<TraceSample>& samples);

enum class Criterion { Accuracy, Utility, Interpretability };
inline constexpr Criterion kAllCriteria[] = {Criterion::Accuracy, Criterion::Utility,
                                             Criterion::Interpretability};
std::string_view criterion_name(Criterion c);
std::optional<Criterion> criterion_from_name(std::string_view name);
std::string_view criterion_description(Criterion c);

struct Permutation {
    std::size_t content_offset = 0;  // body order = tools rotated left by this
    std::size_t slot_offset = 0;     // order of rank slots in the reply format
};

/// Repetition r uses content and slot rotation r (mod tool count).
Permutation permutation_for(std::size_t repetition, std::size_t tool_count);

struct RankingTask {
    std::string sample_id;
    Criterion criterion = Criterion::Accuracy;
    /// (tool id, diagnosis text) in tool index order; aliases follow this order.
    std::vector<std::pair<std::string, std::string>> outputs;
    Permutation permutation;
    /// Shown to the judge when set.
    std::optional<LabelSet> ground_truth;
};

/// "Tool-1" ...
std::string tool_alias(std::size_t index);

/// Throws std::invalid_argument for fewer than 2 or more than 4 tools, or a
/// tool id that cannot be hidden (it occurs in the fixed prompt text).
std::string build_ranking_prompt(const RankingTask& task);

struct JudgeParse {
    std::map<std::string, int> ranks;  // alias -> rank
    std::string explanation;
};

/// Strict parse of `RANKS: Tool-i=r, ...` followed by `EXPLANATION: ...`.
/// Throws std::invalid_argument describing the first violation (missing
/// line, unknown alias, tie, gap).
JudgeParse parse_judge_reply(const std::string& reply, std::size_t tool_count);

struct RankingOutcome {
    std::string sample_id;
    Source source = Source::SB;
    Criterion criterion = Criterion::Accuracy;
    std::size_t repetition = 0;
    Permutation permutation;
    bool valid = false;
    std::map<std::string, int> ranks;  // tool id -> rank
    std::string explanation;
    std::size_t attempts = 0;
    std::string error;
};

using JudgeFn = std::function<std::string(const std::string& prompt)>;

struct RankingOptions {
    std::size_t repetitions = 4;
    int max_retries = 2;
    bool include_ground_truth = true;
    Execution execution = Execution::parallel;
    int max_parallel = 8;
};

/// tool id -> sample id -> diagnosis text.
using ToolOutputs = std::map<std::string, std::map<std::string, std::string>>;

/// One outcome per (sample, repetition) in sample-major order. Judge replies
/// that fail to parse are re-asked up to max_retries times; after that the
/// outcome is kept with valid = false. `prompts_out` receives every prompt
/// sent (first attempts only) in the same order.
std::vector<RankingOutcome> run_ranking(const std::vector<TraceSample>& samples,
                                        const ToolOutputs& outputs, Criterion criterion,
                                        const JudgeFn& judge, const RankingOptions& options = {},
                                        std::vector<std::string>* prompts_out = nullptr);

class EmptySource : public std::runtime_error {
public:
    explicit EmptySource(Source s);
    Source source() const { return source_; }

private:
    Source source_;
};

struct ScoreTable {
    std::vector<std::string> tools;
    /// (tool, criterion, sample) -> S averaged over valid repetitions.
    std::map<std::tuple<std::string, Criterion, std::string>, double> per_sample;
    /// (tool, criterion, source) -> summed S and normalized NS.
    std::map<std::tuple<std::string, Criterion, Source>, double> S;
    std::map<std::tuple<std::string, Criterion, Source>, double> NS;
    /// Number of samples scored per (criterion, source).
    std::map<std::pair<Criterion, Source>, std::size_t> sample_count;
    /// Means of NS over sources (per criterion) and over criteria (per source).
    std::map<std::pair<std::string, Criterion>, double> criterion_average;
    std::map<std::pair<std::string, Source>, double> source_average;
    std::map<std::string, double> overall;
    std::size_t valid_outcomes = 0;
    std::size_t invalid_outcomes = 0;

    nlohmann::ordered_json to_json() const;
    /// Metrics x sources grid per tool.
    std::string to_markdown() const;
};

/// S = 4 - Rank.
inline double rank_score(int rank) { return 4.0 - rank; }

/// Throws EmptySource when a source present in `samples` has no valid
/// outcome for some scored criterion.
ScoreTable compute_scores(const std::vector<RankingOutcome>& outcomes,
                          const std::vector<TraceSample>& samples);

struct LabelMatch {
    /// Unset when there are no tags but there are labels.
    std::optional<double> precision;
    double recall = 0.0;
};

LabelMatch label_match_score(const LabelSet& tags, const LabelSet& labels);

/// Reads one directory per tool: `<sample_id>.md`, `<sample_id>.txt`, or a
/// run directory `<sample_id>/final.md`. The tool id is the directory name.
ToolOutputs load_tool_outputs(const std::vector<std::filesystem::path>& dirs,
                              const std::vector<TraceSample>& samples);

/// Deterministic stand-in judge: ranks longer diagnosis bodies first, ties
/// by alias number. Returns an empty string when `prompt` is not a ranking
/// prompt.
std::string offline_judge_reply(const std::string& prompt);

/// Writes scores.json and scores.md into `out_dir`.
void write_scores(const ScoreTable& table, const nlohmann::ordered_json& settings,
                  const std::filesystem::path& out_dir);

}  // namespace iodiag::eval
