#include "iodiag/diag.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>
#include <sstream>

namespace iodiag::diag {

namespace {

using ojson = nlohmann::ordered_json;

std::string block(const std::string& text, const std::string& name) {
    const std::string open = "=== " + name + " ===\n";
    const std::string close = "\n=== END " + name + " ===";
    const auto a = text.find(open);
    if (a == std::string::npos) return {};
    const auto start = a + open.size();
    const auto b = text.find(close, start);
    return text.substr(start, b == std::string::npos ? std::string::npos : b - start);
}

std::string task_of(const llm::ChatExchange& ex) {
    const std::string marker = "### task: ";
    for (const auto& m : ex.messages) {
        if (m.text.rfind(marker, 0) == 0) {
            const auto end = m.text.find('\n');
            return m.text.substr(marker.size(), end == std::string::npos ? std::string::npos : end - marker.size());
        }
    }
    return {};
}

std::string percent(double f) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", f * 100.0);
    return buf;
}

std::string scalar_text(const ojson& v) {
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

void flatten(const ojson& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (it->is_object()) {
            if (prefix.empty()) flatten(*it, key, out);
        } else if (it->is_array()) {
            out.emplace_back(key + ".count", std::to_string(it->size()));
        } else {
            out.emplace_back(key, scalar_text(*it));
        }
    }
}

std::string describe(const std::string& prompt) {
    const auto first = prompt.substr(0, prompt.find("\n\n", prompt.find('\n') + 1));
    ojson payload;
    try {
        payload = ojson::parse(block(prompt, "SUMMARY JSON"));
    } catch (const std::exception&) {
        return "The summary could not be read.";
    }
    // The intro names module and category as "the <Category> summary of the <MODULE> module".
    std::string module, category;
    if (const auto p = first.find("summary of the "); p != std::string::npos) {
        const auto s = p + 15;
        module = first.substr(s, first.find(' ', s) - s);
    }
    if (const auto p = first.find(": the "); p != std::string::npos) {
        const auto s = p + 6;
        category = first.substr(s, first.find(" summary", s) - s);
    }
    std::ostringstream out;
    out << "This is the " << category << " summary of the " << module << " module.";
    for (const char* dir : {"read", "write"}) {
        const std::string key = std::string(dir) + "_histogram";
        if (!payload.contains(key) || !payload[key].is_object()) continue;
        for (auto it = payload[key].begin(); it != payload[key].end(); ++it) {
            if (!it->is_number() || it->get<double>() <= 0) continue;
            out << " " << percent(it->get<double>()) << " of the " << dir
                << " operations fall within the " << it.key() << " bin.";
        }
    }
    std::vector<std::pair<std::string, std::string>> flat;
    flatten(payload, "", flat);
    out << "\nValues:";
    for (const auto& [k, v] : flat) {
        if (k.find("_histogram.") != std::string::npos) continue;
        out << "\n" << k << " = " << v;
    }
    return out.str();
}

std::set<std::string> words(const std::string& text) {
    std::set<std::string> out;
    std::string w;
    auto flush = [&] {
        if (w.size() >= 4) out.insert(w);
        w.clear();
    };
    for (char c : text) {
        if (std::isalpha(static_cast<unsigned char>(c)))
            w += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        else
            flush();
    }
    flush();
    return out;
}

std::string filter(const std::string& prompt) {
    const auto a = words(block(prompt, "SUMMARY"));
    const auto b = words(block(prompt, "PASSAGE"));
    std::size_t shared = 0;
    for (const auto& w : a) shared += b.count(w);
    return shared >= 3 ? "RELEVANT" : "IRRELEVANT";
}

std::size_t count_sources(const std::string& sources) {
    std::size_t n = 0;
    std::istringstream in(sources);
    std::string line;
    while (std::getline(in, line))
        if (line.size() > 3 && line[0] == '[' && std::isdigit(static_cast<unsigned char>(line[1]))) ++n;
    return n;
}

std::string refs_line(std::size_t n) {
    std::string out = "[REFS] ";
    if (n == 0) return out + "none";
    for (std::size_t i = 1; i <= n; ++i) {
        if (i > 1) out += ", ";
        out += std::to_string(i);
    }
    return out;
}

double value_of(const std::map<std::string, std::string>& values, const std::string& key, double fallback) {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        return fallback;
    }
}

std::string diagnose(const std::string& prompt) {
    const auto summary = block(prompt, "SUMMARY");
    const auto n_sources = count_sources(block(prompt, "SOURCES"));
    std::map<std::string, std::string> values;
    std::map<std::string, double> small;  // "read"/"write" -> share of ops below 1 MiB
    {
        std::istringstream in(summary);
        std::string line;
        while (std::getline(in, line)) {
            const auto eq = line.find(" = ");
            if (eq != std::string::npos) values[line.substr(0, eq)] = line.substr(eq + 3);
        }
        // "<p>% of the <dir> operations fall within the <bin> bin."
        std::size_t pos = 0;
        const std::string mid = "% of the ";
        while ((pos = summary.find(mid, pos)) != std::string::npos) {
            auto start = summary.rfind(' ', pos);
            start = start == std::string::npos ? 0 : start + 1;
            const auto dir_start = pos + mid.size();
            pos = dir_start;
            const auto within = summary.find("within the ", dir_start);
            if (within == std::string::npos) break;
            double pct = 0;
            try {
                pct = std::stod(summary.substr(start, pos - mid.size() - start));
            } catch (const std::exception&) {
                continue;
            }
            const auto dir = summary.substr(dir_start, summary.find(' ', dir_start) - dir_start);
            const auto bin_start = within + 11;
            const auto bin = summary.substr(bin_start, summary.find(" bin", bin_start) - bin_start);
            static const std::set<std::string> small_bins = {"0-100", "100-1K", "1K-10K", "10K-100K", "100K-1M"};
            if (small_bins.count(bin)) small[dir] += pct / 100.0;
        }
    }

    std::vector<std::pair<IssueLabel, std::string>> findings;
    auto flag = [&](IssueLabel l, std::string evidence) { findings.emplace_back(l, std::move(evidence)); };
    if (small["read"] > 0.5) flag(IssueLabel::SmallRead, percent(small["read"]) + " of reads are below 1 MiB");
    if (small["write"] > 0.5) flag(IssueLabel::SmallWrite, percent(small["write"]) + " of writes are below 1 MiB");
    if (value_of(values, "misaligned_fraction", 0) > 0.1) {
        const auto ev = "misaligned_fraction = " + values["misaligned_fraction"];
        flag(IssueLabel::MisalignedRead, ev);
        flag(IssueLabel::MisalignedWrite, ev);
    }
    if (values["read_pattern"] == "random-dominant") flag(IssueLabel::RandomRead, "read_pattern = random-dominant");
    if (values["write_pattern"] == "random-dominant") flag(IssueLabel::RandomWrite, "write_pattern = random-dominant");
    if (value_of(values, "reads", 0) > 0 && value_of(values, "collective_read_fraction", 1) == 0)
        flag(IssueLabel::NoCollectiveRead, "collective_read_fraction = 0");
    if (value_of(values, "writes", 0) > 0 && value_of(values, "collective_write_fraction", 1) == 0)
        flag(IssueLabel::NoCollectiveWrite, "collective_write_fraction = 0");
    if (value_of(values, "shared_file_count", 0) > 0)
        flag(IssueLabel::SharedFileAccess, "shared_file_count = " + values["shared_file_count"]);
    if (value_of(values, "metadata_time_fraction", 0) > 0.1)
        flag(IssueLabel::HighMetadataLoad, "metadata_time_fraction = " + values["metadata_time_fraction"]);
    if (value_of(values, "max_min_byte_ratio", 1) > 2)
        flag(IssueLabel::RankLoadImbalance, "max_min_byte_ratio = " + values["max_min_byte_ratio"]);
    if (value_of(values, "stripe_width.max", 0) == 1)
        flag(IssueLabel::ServerLoadImbalance, "every file has stripe_width 1");
    else if (value_of(values, "ost_utilization_fraction", 1) < 0.1)
        flag(IssueLabel::ServerLoadImbalance, "ost_utilization_fraction = " + values["ost_utilization_fraction"]);

    std::string cite = n_sources > 0 ? " [1]" : "";
    std::ostringstream out;
    const auto first_line = summary.substr(0, summary.find('\n'));
    out << "Offline diagnosis. " << first_line << "\n";
    if (findings.empty()) out << "No issue stands out in these values" << cite << ".\n";
    for (const auto& [l, ev] : findings)
        out << "- " << label_display_name(l) << ": " << ev << cite << ".\n";
    out << "\n[TAGS] ";
    if (findings.empty()) out << "none";
    std::set<IssueLabel> seen;
    bool firstTag = true;
    for (const auto& [l, ev] : findings) {
        if (!seen.insert(l).second) continue;
        if (!firstTag) out << ", ";
        out << label_display_name(l);
        firstTag = false;
    }
    out << "\n" << refs_line(n_sources) << "\n";
    return out.str();
}

std::string merge(const std::string& prompt) {
    return block(prompt, "DIAGNOSIS A") + "\n\n" + block(prompt, "DIAGNOSIS B") + "\n\n" +
           refs_line(count_sources(block(prompt, "SOURCES"))) + "\n";
}

std::string followup(const llm::ChatExchange& ex) {
    const auto& system = ex.messages.front().text;
    auto diagnosis = block(system, "DIAGNOSIS");
    if (diagnosis.size() > 600) diagnosis = diagnosis.substr(0, 600) + " ...";
    return "Offline answer to: " + ex.messages.back().text + "\n\nThe diagnosis this session is based on:\n" +
           diagnosis;
}

}  // namespace

llm::Responder offline_responder() {
    return [](const llm::ChatExchange& ex) -> std::string {
        const auto task = task_of(ex);
        const auto& last = ex.messages.back().text;
        if (task == "describe-fragment") return describe(last);
        if (task == "filter-source") return filter(last);
        if (task == "diagnose-fragment") return diagnose(last);
        if (task == "merge-pair") return merge(last);
        if (task == "followup") return followup(ex);
        return ex.joined();
    };
}

}  // namespace iodiag::diag
