#include "iodiag/diag.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>

namespace iodiag::diag {

namespace fs = std::filesystem;
using llm::Message;
using llm::ModelRole;
using llm::Role;

std::string_view relevance_name(Relevance r) {
    switch (r) {
        case Relevance::retrieved: return "retrieved";
        case Relevance::kept: return "kept";
        case Relevance::ruled_out: return "ruled_out";
    }
    return "retrieved";
}

std::string origin_key(const OriginPair& p) {
    return std::string(trace::module_name(p.first)) + "." + std::string(summary::category_name(p.second));
}

std::vector<SourceRef> FilterOutcome::kept() const {
    std::vector<SourceRef> out;
    for (const auto& s : judged)
        if (s.relevance == Relevance::kept) out.push_back(s);
    return out;
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

namespace {

std::string label_list() {
    std::string out;
    for (auto l : all_issue_labels()) {
        out += "- ";
        out += label_display_name(l);
        out += ": ";
        out += label_description(l);
        out += '\n';
    }
    return out;
}

std::string tag_list(const LabelSet& tags) {
    if (tags.empty()) return "none";
    std::string out;
    for (auto t : tags) {
        if (!out.empty()) out += ", ";
        out += label_display_name(t);
    }
    return out;
}

std::string render_sources(const std::vector<SourceRef>& sources, std::size_t budget) {
    if (sources.empty()) return "(no sources)";
    std::string out;
    std::size_t used = 0;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        const auto& s = sources[i];
        out += "[" + std::to_string(i + 1) + "] " + s.citation + "\n";
        if (used + s.text.size() <= budget) {
            out += s.text + "\n";
            used += s.text.size();
        } else {
            out += "(text omitted, cite by number only)\n";
        }
        if (i + 1 < sources.size()) out += '\n';
    }
    return out;
}

// Picks the references a reply relied on: the [REFS] list plus any inline
// citation; everything when the reply names neither.
std::vector<std::size_t> selected_indices(const ParsedReply& reply, std::size_t available,
                                          WarningLog& warnings, const std::string& where) {
    std::set<std::size_t> chosen;
    bool named = false;
    auto take = [&](std::size_t n) {
        named = true;
        if (n >= 1 && n <= available) chosen.insert(n);
        else warnings.add(where + ": citation [" + std::to_string(n) + "] is out of range");
    };
    if (reply.refs) {
        named = true;
        for (auto n : *reply.refs) take(n);
    }
    for (auto n : inline_citations(reply.prose)) take(n);
    if (!named)
        for (std::size_t n = 1; n <= available; ++n) chosen.insert(n);
    return {chosen.begin(), chosen.end()};
}

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

}  // namespace

Engine::Engine(llm::Gateway& gateway, const kb::VectorIndex& index, EngineConfig config,
               PromptSet prompts)
    : gateway_(gateway), index_(index), config_(std::move(config)), prompts_(std::move(prompts)) {
    if (config_.top_k == 0) throw std::invalid_argument("top_k must be > 0");
    if (config_.max_parallel < 1) throw std::invalid_argument("max_parallel must be >= 1");
}

DescriptiveFragment Engine::describe_fragment(const SummaryFragment& fragment,
                                              const ApplicationContext& context) const {
    if (!summary::is_valid(fragment.module, fragment.category))
        throw std::invalid_argument("fragment " + fragment.key() + " is not a valid module/category pair");
    DescriptiveFragment d;
    d.fragment = fragment;
    d.app_context = context;
    d.prompt = render_template(prompts_.get("describe_fragment"),
                               {{"module", std::string(trace::module_name(fragment.module))},
                                {"category_title", std::string(summary::category_title(fragment.category))},
                                {"extraction_descriptor", fragment.extraction_descriptor},
                                {"payload", fragment.payload.dump(2)},
                                {"app_context", context.render()}});
    d.description = gateway_.chat(ModelRole::reasoning, {{Role::user, d.prompt}});
    if (d.description.find_first_not_of(" \t\r\n") == std::string::npos)
        throw std::runtime_error("empty description for " + fragment.key());
    return d;
}

std::vector<SourceRef> retrieve_for_fragment(const kb::VectorIndex& index,
                                             const DescriptiveFragment& desc,
                                             const kb::EmbedFn& embed_fn, std::size_t k) {
    if (index.empty()) return {};
    const auto vectors = embed_fn({desc.description});
    if (vectors.size() != 1) throw std::runtime_error("embedding call returned no vector");
    std::vector<SourceRef> out;
    for (const auto& hit : index.search(vectors.front(), k)) {
        SourceRef s;
        s.doc_id = hit.chunk.doc_id;
        s.chunk_index = hit.chunk.chunk_index;
        s.citation = hit.citation;
        s.text = hit.chunk.text;
        s.score = hit.score;
        s.relevance = Relevance::retrieved;
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<SourceRef> Engine::retrieve_for_fragment(const DescriptiveFragment& desc) const {
    return diag::retrieve_for_fragment(
        index_, desc, [this](const std::vector<std::string>& t) { return gateway_.embed(t); },
        config_.top_k);
}

namespace {

enum class Verdict { relevant, irrelevant, unclear };

Verdict parse_verdict(const std::string& reply) {
    std::string word;
    for (char c : reply) {
        if (std::isalpha(static_cast<unsigned char>(c))) {
            word += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
            continue;
        }
        if (word == "IRRELEVANT" || word == "NO") return Verdict::irrelevant;
        if (word == "RELEVANT" || word == "YES") return Verdict::relevant;
        word.clear();
    }
    if (word == "IRRELEVANT" || word == "NO") return Verdict::irrelevant;
    if (word == "RELEVANT" || word == "YES") return Verdict::relevant;
    return Verdict::unclear;
}

}  // namespace

FilterOutcome Engine::filter_sources(const DescriptiveFragment& desc,
                                     const std::vector<SourceRef>& sources) const {
    FilterOutcome out;
    out.judged = sources;
    const std::string key = desc.fragment.key();
    for_each_index(sources.size(), config_.execution, config_.max_parallel, [&](std::size_t i) {
        auto& s = out.judged[i];
        const auto prompt = render_template(prompts_.get("filter_source"),
                                            {{"description", desc.description},
                                             {"citation", s.citation},
                                             {"source_text", s.text}});
        Verdict v = Verdict::unclear;
        try {
            v = parse_verdict(gateway_.chat(ModelRole::filter, {{Role::user, prompt}}));
            if (v == Verdict::unclear)
                warnings_.add(key + ": unreadable relevance judgement for " + s.doc_id + "#" +
                              std::to_string(s.chunk_index) + ", keeping it");
        } catch (const std::exception& e) {
            warnings_.add(key + ": relevance judgement failed for " + s.doc_id + "#" +
                          std::to_string(s.chunk_index) + " (" + e.what() + "), keeping it");
        }
        s.relevance = v == Verdict::irrelevant ? Relevance::ruled_out : Relevance::kept;
    });
    return out;
}

FragmentDiagnosis Engine::diagnose_fragment(const DescriptiveFragment& desc,
                                            const std::vector<SourceRef>& kept,
                                            std::string* prompt_out, std::string* reply_out) const {
    const std::string key = desc.fragment.key();
    const auto prompt = render_template(
        prompts_.get("diagnose_fragment"),
        {{"module", std::string(trace::module_name(desc.fragment.module))},
         {"category_title", std::string(summary::category_title(desc.fragment.category))},
         {"description", desc.description},
         {"sources", render_sources(kept, static_cast<std::size_t>(-1))},
         {"label_list", label_list()}});
    const auto reply = gateway_.chat(ModelRole::reasoning, {{Role::user, prompt}});
    if (prompt_out) *prompt_out = prompt;
    if (reply_out) *reply_out = reply;

    const auto parsed = parse_reply(reply);
    FragmentDiagnosis d;
    d.origin = {{desc.fragment.module, desc.fragment.category}};
    if (parsed.tags) {
        d.issue_tags = *parsed.tags;
    } else {
        warnings_.add(key + ": reply has no [TAGS] line, issue tags left empty");
    }
    for (const auto& u : parsed.unknown_tags) warnings_.add(key + ": ignoring unknown issue tag '" + u + "'");

    const auto chosen = selected_indices(parsed, kept.size(), warnings_, key);
    std::map<std::size_t, std::size_t> renumber;
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        renumber[chosen[i]] = i + 1;
        d.references.push_back(kept[chosen[i] - 1]);
    }
    d.references = dedupe_references(d.references);
    d.text = renumber_citations(parsed.prose, renumber);
    if (d.text.empty()) d.text = "No diagnosis text was returned for " + key + ".";
    return d;
}

FragmentDiagnosis Engine::merge_pair(const FragmentDiagnosis& a, const FragmentDiagnosis& b) const {
    FragmentDiagnosis m;
    m.origin = a.origin;
    m.origin.insert(b.origin.begin(), b.origin.end());
    m.issue_tags = a.issue_tags;
    m.issue_tags.insert(b.issue_tags.begin(), b.issue_tags.end());

    // Union reference list: a's references, then b's that a lacks.
    std::vector<SourceRef> uni = dedupe_references(a.references);
    std::map<std::size_t, std::size_t> map_a, map_b;
    for (std::size_t i = 0; i < a.references.size(); ++i) {
        const auto it = std::find_if(uni.begin(), uni.end(),
                                     [&](const SourceRef& s) { return s.same_chunk(a.references[i]); });
        map_a[i + 1] = static_cast<std::size_t>(it - uni.begin()) + 1;
    }
    for (std::size_t i = 0; i < b.references.size(); ++i) {
        auto it = std::find_if(uni.begin(), uni.end(),
                               [&](const SourceRef& s) { return s.same_chunk(b.references[i]); });
        if (it == uni.end()) {
            uni.push_back(b.references[i]);
            it = uni.end() - 1;
        }
        map_b[i + 1] = static_cast<std::size_t>(it - uni.begin()) + 1;
    }
    const auto text_a = renumber_citations(a.text, map_a);
    const auto text_b = renumber_citations(b.text, map_b);

    std::string where = "merge";
    for (const auto& o : m.origin) where += " " + origin_key(o);

    try {
        const auto prompt = render_template(prompts_.get("merge_pair"),
                                            {{"text_a", text_a},
                                             {"text_b", text_b},
                                             {"sources", render_sources(uni, config_.merge_source_char_budget)},
                                             {"tags", tag_list(m.issue_tags)}});
        const auto parsed = parse_reply(gateway_.chat(ModelRole::reasoning, {{Role::user, prompt}}));
        if (parsed.prose.find_first_not_of(" \t\r\n") == std::string::npos)
            throw std::runtime_error("empty merge reply");
        const auto chosen = selected_indices(parsed, uni.size(), warnings_, where);
        std::map<std::size_t, std::size_t> renumber;
        for (std::size_t i = 0; i < chosen.size(); ++i) {
            renumber[chosen[i]] = i + 1;
            m.references.push_back(uni[chosen[i] - 1]);
        }
        m.text = renumber_citations(parsed.prose, renumber);
    } catch (const std::exception& e) {
        warnings_.add(where + ": merge failed (" + e.what() + "), concatenating both diagnoses");
        m.text = text_a + "\n\n" + text_b;
        m.references = uni;
    }
    return m;
}

MergeTree tree_merge(const std::vector<FragmentDiagnosis>& leaves, const MergeFn& merge,
                     Execution execution, int max_threads) {
    if (leaves.empty()) throw std::invalid_argument("tree_merge needs at least one diagnosis");
    MergeTree t;
    t.leaves = leaves;
    t.levels.push_back(leaves);
    while (t.levels.back().size() > 1) {
        const auto& cur = t.levels.back();
        const std::size_t pairs = cur.size() / 2;
        std::vector<FragmentDiagnosis> next((cur.size() + 1) / 2);
        for_each_index(pairs, execution, max_threads,
                       [&](std::size_t i) { next[i] = merge(cur[2 * i], cur[2 * i + 1]); });
        if (cur.size() % 2 == 1) next.back() = cur.back();
        t.merge_count += pairs;
        t.levels.push_back(std::move(next));
    }
    t.root = t.levels.back().front();
    return t;
}

MergeTree Engine::tree_merge(const std::vector<FragmentDiagnosis>& leaves) const {
    return diag::tree_merge(
        leaves, [this](const FragmentDiagnosis& a, const FragmentDiagnosis& b) { return merge_pair(a, b); },
        config_.execution, config_.max_parallel);
}

RunResult Engine::diagnose_trace(const trace::TraceProfile& profile, const fs::path& out_dir) const {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    auto ms_since = [](clock::time_point t) {
        return std::chrono::duration<double, std::milli>(clock::now() - t).count();
    };

    RunResult result;
    const auto before = gateway_.stats();
    const auto warnings_before = warnings_.items().size();
    result.fragments = summary::extract_fragments(profile, config_.extract);
    const auto context = summary::compute_app_context(profile);
    const double t_extract = ms_since(t0);

    const auto t1 = clock::now();
    std::vector<std::optional<FragmentRun>> slots(result.fragments.size());
    std::vector<std::string> errors(result.fragments.size());
    for_each_index(result.fragments.size(), config_.execution, config_.max_parallel, [&](std::size_t i) {
        try {
            FragmentRun r;
            r.described = describe_fragment(result.fragments[i], context);
            r.retrieved = retrieve_for_fragment(r.described);
            r.filtered = filter_sources(r.described, r.retrieved);
            r.diagnosis = diagnose_fragment(r.described, r.filtered.kept(), &r.diagnose_prompt,
                                            &r.diagnose_reply);
            slots[i] = std::move(r);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    const double t_fragments = ms_since(t1);

    std::vector<FragmentDiagnosis> leaves;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i]) {
            leaves.push_back(slots[i]->diagnosis);
            result.runs.push_back(std::move(*slots[i]));
        } else {
            const auto key = result.fragments[i].key();
            result.dropped.push_back(key);
            warnings_.add("WARNING: fragment " + key + " dropped from the diagnosis: " + errors[i]);
        }
    }
    if (leaves.empty()) throw NoDiagnoses("every summary fragment failed; no diagnosis produced");

    const auto t2 = clock::now();
    result.tree = tree_merge(leaves);
    const double t_merge = ms_since(t2);
    {
        auto all = warnings_.items();
        result.warnings.assign(all.begin() + static_cast<std::ptrdiff_t>(warnings_before), all.end());
    }
    std::sort(result.warnings.begin(), result.warnings.end());

    const auto after = gateway_.stats();
    const auto& cfg = gateway_.config();
    auto& info = result.run_info;
    info["models"] = {{"reasoning", cfg.reasoning_model},
                      {"filter", cfg.filter_model},
                      {"embedding", cfg.embedding_model}};
    info["provider"] = cfg.provider;
    info["temperature"] = cfg.temperature;
    info["top_k"] = config_.top_k;
    info["trace"] = {{"exe", profile.header.exe}, {"jobid", profile.header.jobid},
                     {"nprocs", profile.header.nprocs}};
    auto& frag_list = info["fragments"] = nlohmann::ordered_json::array();
    for (const auto& f : result.fragments) frag_list.push_back(f.key());
    info["dropped"] = result.dropped;
    info["leaf_count"] = leaves.size();
    info["merge_count"] = result.tree.merge_count;
    auto& level_sizes = info["level_sizes"] = nlohmann::ordered_json::array();
    for (const auto& l : result.tree.levels) level_sizes.push_back(l.size());
    info["call_counts"] = {{"chat", after.chat_calls - before.chat_calls},
                           {"chat_attempts", after.chat_attempts - before.chat_attempts},
                           {"chat_failures", after.chat_failures - before.chat_failures},
                           {"embed", after.embed_calls - before.embed_calls}};
    info["warnings"] = result.warnings;
    info["timings_ms"] = {{"extract", t_extract},
                          {"fragments", t_fragments},
                          {"merge", t_merge},
                          {"total", ms_since(t0)}};

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        for (const auto& sub : {"fragments", "descriptions", "retrievals", "diagnoses", "tree"})
            fs::remove_all(out_dir / sub);
        for (const auto& f : result.fragments)
            write_file(out_dir / "fragments" / (f.key() + ".json"), summary::serialize(f) + "\n");
        for (const auto& r : result.runs) {
            const auto key = r.described.fragment.key();
            nlohmann::ordered_json d;
            d["fragment"] = key;
            d["prompt"] = r.described.prompt;
            d["description"] = r.described.description;
            write_file(out_dir / "descriptions" / (key + ".json"), dump(d));

            nlohmann::ordered_json ret;
            ret["fragment"] = key;
            ret["query"] = r.described.description;
            auto& srcs = ret["sources"] = nlohmann::ordered_json::array();
            for (const auto& s : r.filtered.judged) {
                auto j = to_json(s);
                j.erase("text");
                srcs.push_back(std::move(j));
            }
            ret["retrieved"] = r.retrieved.size();
            ret["kept"] = r.filtered.kept().size();
            write_file(out_dir / "retrievals" / (key + ".json"), dump(ret));

            auto dj = to_json(r.diagnosis);
            dj["prompt"] = r.diagnose_prompt;
            dj["reply"] = r.diagnose_reply;
            write_file(out_dir / "diagnoses" / (key + ".json"), dump(dj));
        }
        for (std::size_t lv = 0; lv < result.tree.levels.size(); ++lv) {
            const auto& level = result.tree.levels[lv];
            for (std::size_t n = 0; n < level.size(); ++n) {
                char name[32];
                std::snprintf(name, sizeof name, "node-%03zu.json", n);
                write_file(out_dir / "tree" / ("level-" + std::to_string(lv)) / name, dump(to_json(level[n])));
            }
        }
        write_file(out_dir / "final.md", render_markdown(result.tree.root));
        write_file(out_dir / "final.json", dump(to_json(result.tree.root)));
        write_file(out_dir / "run.json", dump(info));
    }
    return result;
}

ChatSession start_session(std::string session_id, FinalDiagnosis diagnosis) {
    ChatSession s;
    s.session_id = std::move(session_id);
    s.diagnosis = std::move(diagnosis);
    s.history.push_back({Role::assistant, render_markdown(s.diagnosis), utc_now()});
    return s;
}

std::string Engine::answer_followup(ChatSession& session, const std::string& question) const {
    if (question.find_first_not_of(" \t\r\n") == std::string::npos)
        throw std::invalid_argument("question is empty");
    std::string refs;
    for (std::size_t i = 0; i < session.diagnosis.references.size(); ++i) {
        const auto& r = session.diagnosis.references[i];
        if (!refs.empty()) refs += "\n";
        refs += "[" + std::to_string(i + 1) + "] " + r.citation + "\n" + r.text + "\n";
    }
    if (refs.empty()) refs = "(no references)";
    const auto system = render_template(prompts_.get("followup_system"),
                                        {{"diagnosis", session.diagnosis.text}, {"references", refs}});
    std::vector<Message> messages{{Role::system, system}};
    for (std::size_t i = 0; i < session.history.size(); ++i) {
        const auto& h = session.history[i];
        // The opening entry is the diagnosis already given in the system block.
        if (i == 0 && h.role == Role::assistant) {
            messages.push_back({Role::assistant, "(diagnosis delivered above)"});
            continue;
        }
        messages.push_back({h.role, h.text});
    }
    messages.push_back({Role::user, question});
    const auto answer = gateway_.chat(ModelRole::reasoning, std::move(messages));
    session.history.push_back({Role::user, question, utc_now()});
    session.history.push_back({Role::assistant, answer, utc_now()});
    return answer;
}

std::string render_markdown(const FinalDiagnosis& d) {
    std::string out = "# I/O Performance Diagnosis\n\n";
    out += d.text;
    out += "\n\n## References\n\n";
    if (d.references.empty()) out += "None.\n";
    for (std::size_t i = 0; i < d.references.size(); ++i) {
        const auto& r = d.references[i];
        out += "[" + std::to_string(i + 1) + "] " + r.citation + " (" + r.doc_id + ", chunk " +
               std::to_string(r.chunk_index) + ")\n";
    }
    out += "\n## Issue Tags\n\n";
    if (d.issue_tags.empty()) out += "- none\n";
    for (auto t : d.issue_tags) {
        out += "- ";
        out += label_display_name(t);
        out += " (";
        out += label_id(t);
        out += ")\n";
    }
    out += "\n## Covered Summaries\n\n";
    for (const auto& o : d.origin) out += "- " + origin_key(o) + "\n";
    return out;
}

}  // namespace iodiag::diag
