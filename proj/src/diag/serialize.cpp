#include "iodiag/diag.hpp"

#include <fstream>

namespace iodiag::diag {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

ojson to_json(const SourceRef& s) {
    ojson j;
    j["doc_id"] = s.doc_id;
    j["chunk_index"] = s.chunk_index;
    j["citation"] = s.citation;
    j["score"] = s.score;
    j["relevance"] = std::string(relevance_name(s.relevance));
    j["text"] = s.text;
    return j;
}

SourceRef source_from_json(const json& j) {
    SourceRef s;
    s.doc_id = j.at("doc_id").get<std::string>();
    s.chunk_index = j.at("chunk_index").get<std::size_t>();
    s.citation = j.value("citation", std::string());
    s.text = j.value("text", std::string());
    s.score = j.value("score", 0.0);
    const auto rel = j.value("relevance", std::string("kept"));
    s.relevance = rel == "retrieved"   ? Relevance::retrieved
                  : rel == "ruled_out" ? Relevance::ruled_out
                                       : Relevance::kept;
    return s;
}

ojson to_json(const FragmentDiagnosis& d) {
    ojson j;
    auto& origin = j["origin"] = ojson::array();
    for (const auto& o : d.origin)
        origin.push_back({{"module", std::string(trace::module_name(o.first))},
                          {"category", std::string(summary::category_name(o.second))}});
    j["text"] = d.text;
    auto& refs = j["references"] = ojson::array();
    for (const auto& r : d.references) refs.push_back(to_json(r));
    auto& tags = j["issue_tags"] = ojson::array();
    for (auto t : d.issue_tags) tags.push_back(std::string(label_id(t)));
    return j;
}

FragmentDiagnosis diagnosis_from_json(const json& j) {
    FragmentDiagnosis d;
    for (const auto& o : j.at("origin")) {
        const auto m = trace::module_from_name(o.at("module").get<std::string>());
        const auto c = summary::category_from_name(o.at("category").get<std::string>());
        if (!m || !c) throw std::runtime_error("bad origin entry " + o.dump());
        d.origin.insert({*m, *c});
    }
    d.text = j.at("text").get<std::string>();
    for (const auto& r : j.at("references")) d.references.push_back(source_from_json(r));
    for (const auto& t : j.at("issue_tags")) {
        const auto name = t.get<std::string>();
        const auto l = parse_issue_label(name);
        if (!l) throw UnknownLabel(name);
        d.issue_tags.insert(*l);
    }
    return d;
}

ojson to_json(const ChatSession& s) {
    ojson j;
    j["session_id"] = s.session_id;
    j["diagnosis"] = to_json(s.diagnosis);
    auto& h = j["history"] = ojson::array();
    for (const auto& m : s.history)
        h.push_back({{"role", std::string(llm::role_name(m.role))},
                     {"text", m.text},
                     {"timestamp", m.timestamp}});
    return j;
}

ChatSession session_from_json(const json& j) {
    ChatSession s;
    s.session_id = j.at("session_id").get<std::string>();
    s.diagnosis = diagnosis_from_json(j.at("diagnosis"));
    for (const auto& m : j.at("history")) {
        const auto role = llm::role_from_name(m.at("role").get<std::string>());
        if (!role) throw std::runtime_error("bad role in session history");
        s.history.push_back({*role, m.at("text").get<std::string>(), m.value("timestamp", std::string())});
    }
    return s;
}

FinalDiagnosis load_final(const std::filesystem::path& run_dir) {
    const auto path = run_dir / "final.json";
    std::ifstream in(path);
    if (!in) throw std::runtime_error("no final.json in " + run_dir.string());
    return diagnosis_from_json(json::parse(in));
}

}  // namespace iodiag::diag
