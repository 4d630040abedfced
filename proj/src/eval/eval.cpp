#include "iodiag/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace iodiag::eval {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string_view source_name(Source s) {
    switch (s) {
        case Source::SB: return "SB";
        case Source::IO500: return "IO500";
        case Source::RA: return "RA";
    }
    return "SB";
}

std::optional<Source> source_from_name(std::string_view name) {
    if (name == "SB" || name == "SimpleBench" || name == "Simple-Bench") return Source::SB;
    if (name == "IO500") return Source::IO500;
    if (name == "RA" || name == "RealApplications" || name == "Real-Applications") return Source::RA;
    return std::nullopt;
}

std::vector<TraceSample> load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ManifestError("cannot open manifest " + path.string());
    const auto base = path.parent_path();
    std::vector<TraceSample> out;
    std::set<std::string> ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ManifestError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        TraceSample s;
        try {
            s.sample_id = j.at("sample_id").get<std::string>();
            s.trace_path = j.at("trace").get<std::string>();
            const auto src = j.at("source").get<std::string>();
            const auto parsed = source_from_name(src);
            if (!parsed) throw ManifestError("unknown source '" + src + "'");
            s.source = *parsed;
            for (const auto& l : j.at("labels")) {
                const auto name = l.get<std::string>();
                const auto label = parse_issue_label(name);
                if (!label) throw UnknownLabel(name);
                s.labels.insert(*label);
            }
        } catch (const json::exception& e) {
            throw ManifestError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (s.labels.empty()) throw ManifestError("sample " + s.sample_id + " has no labels");
        if (!ids.insert(s.sample_id).second) throw ManifestError("duplicate sample id " + s.sample_id);
        if (s.trace_path.is_relative()) s.trace_path = base / s.trace_path;
        if (!fs::is_regular_file(s.trace_path)) throw MissingTrace(s.trace_path);
        out.push_back(std::move(s));
    }
    return out;
}

std::map<IssueLabel, std::map<Source, std::size_t>> label_counts(const std::vector<TraceSample>& samples) {
    std::map<IssueLabel, std::map<Source, std::size_t>> out;
    for (const auto& s : samples)
        for (auto l : s.labels) ++out[l][s.source];
    return out;
}

std::string_view criterion_name(Criterion c) {
    switch (c) {
        case Criterion::Accuracy: return "Accuracy";
        case Criterion::Utility: return "Utility";
        case Criterion::Interpretability: return "Interpretability";
    }
    return "Accuracy";
}

std::optional<Criterion> criterion_from_name(std::string_view name) {
    std::string lower;
    for (char c : name) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lower == "accuracy") return Criterion::Accuracy;
    if (lower == "utility") return Criterion::Utility;
    if (lower == "interpretability") return Criterion::Interpretability;
    return std::nullopt;
}

std::string_view criterion_description(Criterion c) {
    switch (c) {
        case Criterion::Accuracy:
            return "How correctly the diagnosis identifies the I/O performance issues that are "
                   "actually present in the trace. Missing a real issue or claiming one that the "
                   "trace does not show both count against a diagnosis.";
        case Criterion::Utility:
            return "How much the diagnosis would help a developer improve the application's I/O "
                   "performance: concrete, applicable recommendations (settings, commands, code "
                   "changes) rank higher than generic advice.";
        case Criterion::Interpretability:
            return "How easy the diagnosis is to understand and verify: clear structure, claims tied "
                   "to the observed metrics, and explanations or sources that justify each finding.";
    }
    return {};
}

Permutation permutation_for(std::size_t repetition, std::size_t tool_count) {
    if (tool_count == 0) return {};
    return {repetition % tool_count, repetition % tool_count};
}

std::string tool_alias(std::size_t index) { return "Tool-" + std::to_string(index + 1); }

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Case-folded search that only accepts whole-word hits, so "ION" does not
// match inside "question".
std::size_t find_word(const std::string& hay, const std::string& pat, std::size_t pos) {
    for (auto hit = hay.find(pat, pos); hit != std::string::npos; hit = hay.find(pat, hit + 1)) {
        const bool left = hit == 0 || !word_char(hay[hit - 1]) || !word_char(pat.front());
        const auto end = hit + pat.size();
        const bool right = end == hay.size() || !word_char(hay[end]) || !word_char(pat.back());
        if (left && right) return hit;
    }
    return std::string::npos;
}

std::string replace_ci(const std::string& text, const std::string& needle, const std::string& with) {
    if (needle.empty()) return text;
    const auto hay = lower(text);
    const auto pat = lower(needle);
    std::string out;
    std::size_t pos = 0;
    while (true) {
        const auto hit = find_word(hay, pat, pos);
        if (hit == std::string::npos) break;
        out.append(text, pos, hit - pos);
        out += with;
        pos = hit + pat.size();
    }
    out.append(text, pos, std::string::npos);
    return out;
}

std::string trim(std::string s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    std::size_t i = 0;
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    return s.substr(i);
}

}  // namespace

std::string build_ranking_prompt(const RankingTask& task) {
    const std::size_t n = task.outputs.size();
    if (n < 2 || n > 4) throw std::invalid_argument("ranking needs 2 to 4 tools, got " + std::to_string(n));

    // Hide every tool's identity, including mentions of other tools.
    // Longest ids first so an id that contains another is replaced whole.
    std::vector<std::size_t> by_length(n);
    for (std::size_t j = 0; j < n; ++j) by_length[j] = j;
    std::stable_sort(by_length.begin(), by_length.end(), [&](std::size_t a, std::size_t b) {
        return task.outputs[a].first.size() > task.outputs[b].first.size();
    });
    std::vector<std::string> bodies;
    for (const auto& [id, text] : task.outputs) {
        std::string body = text;
        for (auto j : by_length) body = replace_ci(body, task.outputs[j].first, tool_alias(j));
        bodies.push_back(trim(body));
    }

    std::ostringstream p;
    p << "You are judging " << n << " diagnoses of the I/O performance of the same HPC application. "
      << "Each was produced by a different analysis tool from the same Darshan trace.\n\n";
    p << "Criterion: " << criterion_name(task.criterion) << "\n" << criterion_description(task.criterion) << "\n";
    if (task.ground_truth) {
        p << "\nIssues an expert identified in this trace:\n";
        if (task.ground_truth->empty()) p << "- none\n";
        for (auto l : *task.ground_truth)
            p << "- " << label_display_name(l) << ": " << label_description(l) << "\n";
    }
    p << "\n";
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = (k + task.permutation.content_offset) % n;
        p << "=== " << tool_alias(i) << " ===\n" << bodies[i] << "\n=== END " << tool_alias(i) << " ===\n\n";
    }
    p << "Rank the " << n << " diagnoses on this criterion only, from 1 (best) to " << n
      << " (worst). Every rank from 1 to " << n << " must be used exactly once; ties are not allowed.\n";
    p << "Reply in exactly this format:\nRANKS: ";
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = (k + task.permutation.slot_offset) % n;
        if (k) p << ", ";
        p << tool_alias(i) << "=<rank>";
    }
    p << "\nEXPLANATION: <why you assigned these ranks>\n";

    auto prompt = p.str();
    const auto folded = lower(prompt);
    for (const auto& [id, text] : task.outputs) {
        if (find_word(folded, lower(id), 0) != std::string::npos)
            throw std::invalid_argument("tool id '" + id + "' occurs in the ranking prompt text; rename the tool");
    }
    return prompt;
}

JudgeParse parse_judge_reply(const std::string& reply, std::size_t tool_count) {
    const auto rp = reply.find("RANKS:");
    if (rp == std::string::npos) throw std::invalid_argument("reply has no RANKS: line");
    const auto ep = reply.find("EXPLANATION:", rp);
    if (ep == std::string::npos) throw std::invalid_argument("reply has no EXPLANATION: after RANKS:");
    auto ranks_line = reply.substr(rp + 6, reply.find('\n', rp) - (rp + 6));
    if (const auto cut = ranks_line.find("EXPLANATION:"); cut != std::string::npos) ranks_line.resize(cut);

    JudgeParse out;
    std::stringstream ss(ranks_line);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        item.erase(std::remove(item.begin(), item.end(), '`'), item.end());
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("rank entry '" + item + "' lacks '='");
        const auto alias = trim(item.substr(0, eq));
        const auto value = trim(item.substr(eq + 1));
        std::size_t used = 0;
        int rank = 0;
        try {
            rank = std::stoi(value, &used);
        } catch (const std::exception&) {
            throw std::invalid_argument("rank for " + alias + " is not a number");
        }
        if (used != value.size()) throw std::invalid_argument("rank for " + alias + " is not a number");
        bool known = false;
        for (std::size_t i = 0; i < tool_count; ++i) known = known || alias == tool_alias(i);
        if (!known) throw std::invalid_argument("unknown tool alias '" + alias + "'");
        if (!out.ranks.emplace(alias, rank).second) throw std::invalid_argument(alias + " ranked twice");
    }
    if (out.ranks.size() != tool_count)
        throw std::invalid_argument("expected " + std::to_string(tool_count) + " ranks, got " +
                                    std::to_string(out.ranks.size()));
    std::set<int> seen;
    for (const auto& [alias, r] : out.ranks) {
        if (r < 1 || r > static_cast<int>(tool_count))
            throw std::invalid_argument("rank " + std::to_string(r) + " is out of range");
        if (!seen.insert(r).second) throw std::invalid_argument("tied rank " + std::to_string(r));
    }
    out.explanation = trim(reply.substr(ep + 12));
    return out;
}

std::vector<RankingOutcome> run_ranking(const std::vector<TraceSample>& samples, const ToolOutputs& outputs,
                                        Criterion criterion, const JudgeFn& judge,
                                        const RankingOptions& options,
                                        std::vector<std::string>* prompts_out) {
    if (options.repetitions == 0) throw std::invalid_argument("repetitions must be > 0");
    if (outputs.size() < 2 || outputs.size() > 4)
        throw std::invalid_argument("ranking needs 2 to 4 tools, got " + std::to_string(outputs.size()));
    std::vector<std::string> tools;
    for (const auto& [id, per_sample] : outputs) {
        tools.push_back(id);
        for (const auto& s : samples)
            if (!per_sample.count(s.sample_id))
                throw std::invalid_argument("tool " + id + " has no output for sample " + s.sample_id);
    }

    const std::size_t reps = options.repetitions;
    std::vector<RankingOutcome> results(samples.size() * reps);
    std::vector<std::string> prompts(results.size());
    for_each_index(results.size(), options.execution, options.max_parallel, [&](std::size_t idx) {
        const auto& sample = samples[idx / reps];
        const std::size_t rep = idx % reps;
        RankingTask task;
        task.sample_id = sample.sample_id;
        task.criterion = criterion;
        for (const auto& t : tools) task.outputs.emplace_back(t, outputs.at(t).at(sample.sample_id));
        task.permutation = permutation_for(rep, tools.size());
        if (options.include_ground_truth && criterion == Criterion::Accuracy) task.ground_truth = sample.labels;

        RankingOutcome o;
        o.sample_id = sample.sample_id;
        o.source = sample.source;
        o.criterion = criterion;
        o.repetition = rep;
        o.permutation = task.permutation;
        const auto prompt = build_ranking_prompt(task);
        prompts[idx] = prompt;
        std::string current = prompt;
        for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
            ++o.attempts;
            try {
                const auto parsed = parse_judge_reply(judge(current), tools.size());
                for (std::size_t i = 0; i < tools.size(); ++i) o.ranks[tools[i]] = parsed.ranks.at(tool_alias(i));
                o.explanation = parsed.explanation;
                o.valid = true;
                o.error.clear();
                break;
            } catch (const std::exception& e) {
                o.error = e.what();
                current = prompt + "\nYour previous reply was rejected (" + o.error +
                          "). Answer again using exactly the RANKS/EXPLANATION format.\n";
            }
        }
        results[idx] = std::move(o);
    });
    if (prompts_out) prompts_out->insert(prompts_out->end(), prompts.begin(), prompts.end());
    return results;
}

EmptySource::EmptySource(Source s)
    : std::runtime_error("no valid ranking outcome for source " + std::string(source_name(s))), source_(s) {}

ScoreTable compute_scores(const std::vector<RankingOutcome>& outcomes, const std::vector<TraceSample>& samples) {
    ScoreTable t;
    std::set<std::string> tools;
    std::set<Criterion> criteria;
    std::map<std::string, Source> source_of;
    for (const auto& s : samples) source_of[s.sample_id] = s.source;

    // (tool, criterion, sample) -> (sum of S, valid reps)
    std::map<std::tuple<std::string, Criterion, std::string>, std::pair<double, std::size_t>> acc;
    for (const auto& o : outcomes) {
        criteria.insert(o.criterion);
        if (!o.valid) {
            ++t.invalid_outcomes;
            continue;
        }
        ++t.valid_outcomes;
        if (!source_of.count(o.sample_id))
            throw std::invalid_argument("outcome for unknown sample " + o.sample_id);
        for (const auto& [tool, rank] : o.ranks) {
            tools.insert(tool);
            auto& a = acc[{tool, o.criterion, o.sample_id}];
            a.first += rank_score(rank);
            a.second += 1;
        }
    }
    t.tools.assign(tools.begin(), tools.end());
    for (const auto& [key, a] : acc) t.per_sample[key] = a.first / static_cast<double>(a.second);

    std::set<Source> sources;
    for (const auto& s : samples) sources.insert(s.source);
    for (auto c : criteria) {
        for (auto d : sources) {
            std::set<std::string> scored;
            for (const auto& [key, v] : t.per_sample)
                if (std::get<1>(key) == c && source_of[std::get<2>(key)] == d) scored.insert(std::get<2>(key));
            if (scored.empty()) throw EmptySource(d);
            t.sample_count[{c, d}] = scored.size();
            for (const auto& tool : t.tools) {
                double sum = 0.0;
                for (const auto& sid : scored) {
                    auto it = t.per_sample.find({tool, c, sid});
                    if (it != t.per_sample.end()) sum += it->second;
                }
                t.S[{tool, c, d}] = sum;
                t.NS[{tool, c, d}] = sum / (3.0 * static_cast<double>(scored.size()));
            }
        }
    }
    for (const auto& tool : t.tools) {
        double all = 0.0;
        std::size_t all_n = 0;
        for (auto c : criteria) {
            double s = 0.0;
            for (auto d : sources) s += t.NS[{tool, c, d}];
            t.criterion_average[{tool, c}] = s / static_cast<double>(sources.size());
            all += s;
            all_n += sources.size();
        }
        for (auto d : sources) {
            double s = 0.0;
            for (auto c : criteria) s += t.NS[{tool, c, d}];
            t.source_average[{tool, d}] = s / static_cast<double>(criteria.size());
        }
        t.overall[tool] = all_n ? all / static_cast<double>(all_n) : 0.0;
    }
    return t;
}

ojson ScoreTable::to_json() const {
    ojson j;
    j["tools"] = tools;
    j["valid_outcomes"] = valid_outcomes;
    j["invalid_outcomes"] = invalid_outcomes;
    auto& per_tool = j["scores"] = ojson::object();
    for (const auto& tool : tools) {
        ojson tj;
        auto& rows = tj["by_criterion_and_source"] = ojson::array();
        for (const auto& [key, ns] : NS) {
            if (std::get<0>(key) != tool) continue;
            const auto c = std::get<1>(key);
            const auto d = std::get<2>(key);
            rows.push_back({{"criterion", std::string(criterion_name(c))},
                            {"source", std::string(source_name(d))},
                            {"S", S.at(key)},
                            {"NS", ns},
                            {"samples", sample_count.at({c, d})}});
        }
        auto& ca = tj["criterion_average"] = ojson::object();
        for (const auto& [key, v] : criterion_average)
            if (key.first == tool) ca[std::string(criterion_name(key.second))] = v;
        auto& sa = tj["source_average"] = ojson::object();
        for (const auto& [key, v] : source_average)
            if (key.first == tool) sa[std::string(source_name(key.second))] = v;
        tj["overall"] = overall.at(tool);
        auto& ps = tj["per_sample"] = ojson::array();
        for (const auto& [key, v] : per_sample)
            if (std::get<0>(key) == tool)
                ps.push_back({{"criterion", std::string(criterion_name(std::get<1>(key)))},
                              {"sample_id", std::get<2>(key)},
                              {"S", v}});
        per_tool[tool] = std::move(tj);
    }
    return j;
}

std::string ScoreTable::to_markdown() const {
    std::set<Criterion> criteria;
    std::set<Source> sources;
    for (const auto& [key, v] : sample_count) {
        criteria.insert(key.first);
        sources.insert(key.second);
    }
    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3f", v);
        return std::string(buf);
    };
    std::ostringstream out;
    out << "# Normalized scores\n";
    for (const auto& tool : tools) {
        out << "\n## " << tool << "\n\n| Metric |";
        for (auto d : sources) out << " " << source_name(d) << " |";
        out << " Average |\n|---|";
        for (std::size_t i = 0; i <= sources.size(); ++i) out << "---|";
        out << "\n";
        for (auto c : criteria) {
            out << "| " << criterion_name(c) << " |";
            for (auto d : sources) out << " " << fmt(NS.at({tool, c, d})) << " |";
            out << " " << fmt(criterion_average.at({tool, c})) << " |\n";
        }
        out << "| Average |";
        for (auto d : sources) out << " " << fmt(source_average.at({tool, d})) << " |";
        out << " " << fmt(overall.at(tool)) << " |\n";
    }
    out << "\nValid judge outcomes: " << valid_outcomes << ", invalid: " << invalid_outcomes << "\n";
    return out.str();
}

LabelMatch label_match_score(const LabelSet& tags, const LabelSet& labels) {
    std::size_t hit = 0;
    for (auto t : tags) hit += labels.count(t);
    LabelMatch m;
    m.recall = labels.empty() ? 1.0 : static_cast<double>(hit) / static_cast<double>(labels.size());
    if (!tags.empty()) m.precision = static_cast<double>(hit) / static_cast<double>(tags.size());
    else if (labels.empty()) m.precision = 1.0;
    return m;
}

ToolOutputs load_tool_outputs(const std::vector<fs::path>& dirs, const std::vector<TraceSample>& samples) {
    ToolOutputs out;
    for (const auto& dir : dirs) {
        if (!fs::is_directory(dir)) throw std::runtime_error("tool output directory not found: " + dir.string());
        auto tool = dir.filename().string();
        if (tool.empty()) tool = dir.parent_path().filename().string();
        if (out.count(tool)) throw std::runtime_error("two tool output directories are named " + tool);
        auto& per = out[tool];
        for (const auto& s : samples) {
            fs::path found;
            for (const auto& candidate : {dir / (s.sample_id + ".md"), dir / (s.sample_id + ".txt"),
                                          dir / s.sample_id / "final.md"}) {
                if (fs::is_regular_file(candidate)) {
                    found = candidate;
                    break;
                }
            }
            if (found.empty())
                throw std::runtime_error("tool " + tool + " has no output for sample " + s.sample_id);
            std::ifstream in(found, std::ios::binary);
            std::ostringstream ss;
            ss << in.rdbuf();
            per[s.sample_id] = ss.str();
        }
    }
    return out;
}

std::string offline_judge_reply(const std::string& prompt) {
    if (prompt.find("\nRANKS: Tool-") == std::string::npos) return {};
    std::vector<std::pair<std::size_t, std::size_t>> bodies;  // (length, alias index)
    for (std::size_t i = 0; i < 4; ++i) {
        const auto open = "=== " + tool_alias(i) + " ===\n";
        const auto close = "\n=== END " + tool_alias(i) + " ===";
        const auto a = prompt.find(open);
        if (a == std::string::npos) continue;
        const auto b = prompt.find(close, a);
        bodies.emplace_back(b == std::string::npos ? 0 : b - a - open.size(), i);
    }
    std::sort(bodies.begin(), bodies.end(), [](const auto& x, const auto& y) {
        return x.first != y.first ? x.first > y.first : x.second < y.second;
    });
    std::vector<int> rank(4, 0);
    for (std::size_t r = 0; r < bodies.size(); ++r) rank[bodies[r].second] = static_cast<int>(r + 1);
    std::string out = "RANKS: ";
    bool first = true;
    for (std::size_t i = 0; i < 4; ++i) {
        if (!rank[i]) continue;
        if (!first) out += ", ";
        out += tool_alias(i) + "=" + std::to_string(rank[i]);
        first = false;
    }
    return out + "\nEXPLANATION: offline judge; longer diagnoses are ranked higher.\n";
}

void write_scores(const ScoreTable& table, const ojson& settings, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    auto j = table.to_json();
    j["settings"] = settings;
    {
        std::ofstream out(out_dir / "scores.json", std::ios::binary | std::ios::trunc);
        out << j.dump(2) << "\n";
    }
    std::ofstream out(out_dir / "scores.md", std::ios::binary | std::ios::trunc);
    out << table.to_markdown();
}

}  // namespace iodiag::eval
