#include "iodiag/diag.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <sstream>

namespace iodiag::diag {

namespace {

std::string trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i)
        if (std::toupper(static_cast<unsigned char>(s[i])) != prefix[i]) return false;
    return true;
}

std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',' || c == ';') {
            if (auto t = trim(cur); !t.empty()) out.push_back(t);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (auto t = trim(cur); !t.empty()) out.push_back(t);
    return out;
}

bool is_none(std::string_view s) {
    const auto t = trim(s);
    if (t.size() != 4) return t.empty();
    return starts_with_ci(t, "NONE");
}

// Strips markdown decoration models like to put around tag lines.
std::string undecorate(std::string_view line) {
    auto t = trim(line);
    while (!t.empty() && (t.front() == '*' || t.front() == '`' || t.front() == '-' || t.front() == '>'))
        t.erase(t.begin());
    while (!t.empty() && (t.back() == '*' || t.back() == '`')) t.pop_back();
    return trim(t);
}

}  // namespace

ParsedReply parse_reply(const std::string& reply) {
    ParsedReply r;
    std::istringstream in(reply);
    std::string line;
    std::vector<std::string> prose;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto bare = undecorate(line);
        if (starts_with_ci(bare, "[TAGS]")) {
            LabelSet tags;
            const auto rest = std::string_view(bare).substr(6);
            if (!is_none(rest)) {
                for (const auto& item : split_list(rest)) {
                    if (is_none(item)) continue;
                    if (auto l = parse_issue_label(item)) tags.insert(*l);
                    else r.unknown_tags.push_back(item);
                }
            }
            r.tags = r.tags ? *r.tags : LabelSet{};
            r.tags->insert(tags.begin(), tags.end());
            continue;
        }
        if (starts_with_ci(bare, "[REFS]")) {
            std::vector<std::size_t> refs = r.refs ? *r.refs : std::vector<std::size_t>{};
            const auto rest = std::string_view(bare).substr(6);
            if (!is_none(rest)) {
                for (auto item : split_list(rest)) {
                    item.erase(std::remove_if(item.begin(), item.end(),
                                              [](char c) { return c == '[' || c == ']'; }),
                               item.end());
                    try {
                        std::size_t used = 0;
                        const auto n = std::stoul(item, &used);
                        if (used == item.size() && n > 0 &&
                            std::find(refs.begin(), refs.end(), n) == refs.end())
                            refs.push_back(n);
                    } catch (const std::exception&) {
                    }
                }
            }
            r.refs = std::move(refs);
            continue;
        }
        prose.push_back(line);
    }
    while (!prose.empty() && trim(prose.back()).empty()) prose.pop_back();
    std::size_t first = 0;
    while (first < prose.size() && trim(prose[first]).empty()) ++first;
    for (std::size_t i = first; i < prose.size(); ++i) {
        if (i != first) r.prose += '\n';
        r.prose += prose[i];
    }
    return r;
}

namespace {
const std::regex& citation_regex() {
    static const std::regex re(R"(\[(\d+(?:\s*,\s*\d+)*)\])");
    return re;
}
}  // namespace

std::vector<std::size_t> inline_citations(const std::string& text) {
    std::vector<std::size_t> out;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), citation_regex());
         it != std::sregex_iterator(); ++it) {
        std::string inner = (*it)[1].str();
        for (const auto& item : split_list(inner)) {
            const auto n = static_cast<std::size_t>(std::stoul(item));
            if (n > 0 && std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
        }
    }
    return out;
}

std::string renumber_citations(const std::string& text, const std::map<std::size_t, std::size_t>& mapping) {
    std::string out;
    std::size_t last = 0;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), citation_regex());
         it != std::sregex_iterator(); ++it) {
        const auto& m = *it;
        out.append(text, last, static_cast<std::size_t>(m.position(0)) - last);
        std::string inner;
        for (const auto& item : split_list(m[1].str())) {
            std::size_t n = std::stoul(item);
            if (auto f = mapping.find(n); f != mapping.end()) n = f->second;
            if (!inner.empty()) inner += ", ";
            inner += std::to_string(n);
        }
        out += '[' + inner + ']';
        last = static_cast<std::size_t>(m.position(0) + m.length(0));
    }
    out.append(text, last, std::string::npos);
    return out;
}

std::vector<SourceRef> dedupe_references(const std::vector<SourceRef>& refs) {
    std::vector<SourceRef> out;
    for (const auto& r : refs) {
        if (std::none_of(out.begin(), out.end(), [&](const SourceRef& o) { return o.same_chunk(r); }))
            out.push_back(r);
    }
    return out;
}

}  // namespace iodiag::diag
