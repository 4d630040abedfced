#pragma once

#include "iodiag/kb.hpp"
#include "iodiag/labels.hpp"
#include "iodiag/llm.hpp"
#include "iodiag/parallel.hpp"
#include "iodiag/summary.hpp"
#include "iodiag/trace.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace iodiag::diag {

using summary::ApplicationContext;
using summary::Category;
using summary::SummaryFragment;
using trace::ModuleId;

/// Named prompt templates with `{{slot}}` placeholders.
class PromptSet {
public:
    /// Templates compiled into the binary.
    static PromptSet builtin();
    /// Builtins, overridden by any `<name>.txt` found in `dir`.
    static PromptSet load(const std::filesystem::path& dir);

    const std::string& get(const std::string& name) const;
    void set(std::string name, std::string text) { templates_[std::move(name)] = std::move(text); }
    const std::map<std::string, std::string>& all() const { return templates_; }

private:
    std::map<std::string, std::string> templates_;
};

/// Replaces every `{{name}}`. Throws std::invalid_argument on a slot with no
/// value. Values are inserted literally (never re-expanded).
std::string render_template(const std::string& tmpl, const std::map<std::string, std::string>& slots);

/// Thread-safe warning sink.
class WarningLog {
public:
    void add(std::string message);
    std::vector<std::string> items() const;

private:
    mutable std::mutex mutex_;
    std::vector<std::string> items_;
};

struct DescriptiveFragment {
    SummaryFragment fragment;
    std::string description;
    ApplicationContext app_context;
    std::string prompt;
};

enum class Relevance { retrieved, kept, ruled_out };
std::string_view relevance_name(Relevance r);

struct SourceRef {
    std::string doc_id;
    std::size_t chunk_index = 0;
    std::string citation;
    std::string text;
    double score = 0.0;
    Relevance relevance = Relevance::retrieved;

    bool same_chunk(const SourceRef& o) const {
        return doc_id == o.doc_id && chunk_index == o.chunk_index;
    }
};

using OriginPair = std::pair<ModuleId, Category>;
using Origin = std::set<OriginPair>;
/// "POSIX.IoSize"
std::string origin_key(const OriginPair& p);

struct FragmentDiagnosis {
    Origin origin;
    /// Prose. Inline citations [n] refer to position n (1-based) in `references`.
    std::string text;
    std::vector<SourceRef> references;
    LabelSet issue_tags;
};

using FinalDiagnosis = FragmentDiagnosis;

struct MergeTree {
    std::vector<FragmentDiagnosis> leaves;
    /// levels[0] are the leaves, levels.back() holds only the root.
    std::vector<std::vector<FragmentDiagnosis>> levels;
    FragmentDiagnosis root;
    std::size_t merge_count = 0;
};

/// Parsed model reply for the diagnose and merge steps.
struct ParsedReply {
    std::string prose;
    std::optional<LabelSet> tags;        // nullopt when the [TAGS] line is absent
    std::optional<std::vector<std::size_t>> refs;  // nullopt when [REFS] is absent
    std::vector<std::string> unknown_tags;
};
ParsedReply parse_reply(const std::string& reply);

/// Numbers cited inline as [n] or [n, m], in order of first appearance.
std::vector<std::size_t> inline_citations(const std::string& text);
/// Rewrites inline citations through `mapping` (old -> new). Numbers absent
/// from the mapping are left untouched.
std::string renumber_citations(const std::string& text, const std::map<std::size_t, std::size_t>& mapping);

/// Deduplicated by (doc_id, chunk_index), first occurrence wins.
std::vector<SourceRef> dedupe_references(const std::vector<SourceRef>& refs);

using MergeFn = std::function<FragmentDiagnosis(const FragmentDiagnosis&, const FragmentDiagnosis&)>;

/// Pairs (0,1), (2,3), ... per level; an odd trailing node moves up as is.
/// Issues exactly n-1 merges. Throws std::invalid_argument on an empty list.
MergeTree tree_merge(const std::vector<FragmentDiagnosis>& leaves, const MergeFn& merge,
                     Execution execution = Execution::parallel, int max_threads = 8);

struct EngineConfig {
    std::size_t top_k = kb::kDefaultTopK;
    Execution execution = Execution::parallel;
    int max_parallel = 8;
    /// Chunk text included in a merge prompt, in characters; sources past the
    /// budget are listed by citation only.
    std::size_t merge_source_char_budget = 24000;
    summary::ExtractOptions extract;
};

struct FilterOutcome {
    /// Every input source in retrieval order, marked kept or ruled_out.
    std::vector<SourceRef> judged;
    std::vector<SourceRef> kept() const;
};

struct FragmentRun {
    DescriptiveFragment described;
    std::vector<SourceRef> retrieved;
    FilterOutcome filtered;
    FragmentDiagnosis diagnosis;
    std::string diagnose_prompt;
    std::string diagnose_reply;
};

struct RunResult {
    std::vector<SummaryFragment> fragments;
    std::vector<FragmentRun> runs;          // successful fragments, in leaf order
    std::vector<std::string> dropped;       // keys of fragments that failed
    MergeTree tree;
    std::vector<std::string> warnings;
    nlohmann::ordered_json run_info;        // contents of run.json
};

class NoDiagnoses : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ChatMessage {
    llm::Role role = llm::Role::user;
    std::string text;
    std::string timestamp;  // ISO 8601 UTC
};

struct ChatSession {
    std::string session_id;
    FinalDiagnosis diagnosis;
    std::vector<ChatMessage> history;
};

/// A session whose first history entry is the rendered diagnosis.
ChatSession start_session(std::string session_id, FinalDiagnosis diagnosis);

class Engine {
public:
    Engine(llm::Gateway& gateway, const kb::VectorIndex& index, EngineConfig config = {},
           PromptSet prompts = PromptSet::builtin());

    DescriptiveFragment describe_fragment(const SummaryFragment& fragment,
                                          const ApplicationContext& context) const;
    std::vector<SourceRef> retrieve_for_fragment(const DescriptiveFragment& desc) const;
    FilterOutcome filter_sources(const DescriptiveFragment& desc,
                                 const std::vector<SourceRef>& sources) const;
    FragmentDiagnosis diagnose_fragment(const DescriptiveFragment& desc,
                                        const std::vector<SourceRef>& kept,
                                        std::string* prompt_out = nullptr,
                                        std::string* reply_out = nullptr) const;
    FragmentDiagnosis merge_pair(const FragmentDiagnosis& a, const FragmentDiagnosis& b) const;
    MergeTree tree_merge(const std::vector<FragmentDiagnosis>& leaves) const;

    /// Full pipeline. When `out_dir` is non-empty the run manifest is written
    /// there.
    RunResult diagnose_trace(const trace::TraceProfile& profile,
                             const std::filesystem::path& out_dir = {}) const;

    /// Appends the question and the answer to the session history.
    std::string answer_followup(ChatSession& session, const std::string& question) const;

    WarningLog& warnings() const { return warnings_; }
    const EngineConfig& config() const { return config_; }
    const PromptSet& prompts() const { return prompts_; }

private:
    llm::Gateway& gateway_;
    const kb::VectorIndex& index_;
    EngineConfig config_;
    PromptSet prompts_;
    mutable WarningLog warnings_;
};

/// Free-standing retrieval step: embed the description and search.
std::vector<SourceRef> retrieve_for_fragment(const kb::VectorIndex& index,
                                             const DescriptiveFragment& desc,
                                             const kb::EmbedFn& embed_fn,
                                             std::size_t k = kb::kDefaultTopK);

/// Markdown with `## References` and `## Issue Tags` sections.
std::string render_markdown(const FinalDiagnosis& d);

nlohmann::ordered_json to_json(const SourceRef& s);
SourceRef source_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const FragmentDiagnosis& d);
FragmentDiagnosis diagnosis_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const ChatSession& s);
ChatSession session_from_json(const nlohmann::json& j);

/// Loads `final.json` from a run directory.
FinalDiagnosis load_final(const std::filesystem::path& run_dir);

/// Deterministic stand-in model for offline runs. Answers every pipeline
/// prompt from its task marker: describes payloads, keeps sources sharing
/// vocabulary with the summary, flags issues by simple thresholds and merges
/// by concatenation keeping every reference.
llm::Responder offline_responder();

/// UTC timestamp, ISO 8601.
std::string utc_now();

}  // namespace iodiag::diag
