#include "iodiag/llm.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace iodiag::llm {

MockScript MockScript::from_json(const nlohmann::json& j) {
    MockScript s;
    if (j.contains("rules")) {
        for (const auto& r : j.at("rules")) {
            MockRule rule;
            if (r.contains("regex")) {
                rule.pattern = r.at("regex").get<std::string>();
                rule.regex = true;
                std::regex check(rule.pattern);  // throws std::regex_error early
            } else {
                rule.pattern = r.at("match").get<std::string>();
            }
            rule.response = r.value("response", std::string());
            if (r.contains("error")) rule.error_status = r.at("error").get<int>();
            rule.timeout = r.value("timeout", false);
            rule.model = r.value("model", std::string());
            s.rules.push_back(std::move(rule));
        }
    }
    if (j.contains("default")) s.default_response = j.at("default").get<std::string>();
    return s;
}

MockScript MockScript::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open mock script " + path.string());
    return from_json(nlohmann::json::parse(in));
}

const MockRule* MockScript::find(const ChatExchange& exchange) const {
    const std::string text = exchange.joined();
    for (const auto& rule : rules) {
        if (!rule.model.empty() && rule.model != exchange.model) continue;
        const bool hit = rule.regex ? std::regex_search(text, std::regex(rule.pattern))
                                    : text.find(rule.pattern) != std::string::npos;
        if (hit) return &rule;
    }
    return nullptr;
}

MockBackend::MockBackend(MockScript script, Responder responder, std::size_t embedding_dim)
    : script_(std::move(script)), responder_(std::move(responder)), embedding_dim_(embedding_dim) {
    if (embedding_dim_ == 0) throw std::invalid_argument("mock embedding dimension must be > 0");
}

std::string MockBackend::complete(const ChatExchange& exchange, const ProviderConfig&) {
    ++chat_calls_;
    {
        std::lock_guard lock(log_mutex_);
        log_.push_back(exchange);
    }
    if (const auto* rule = script_.find(exchange)) {
        if (rule->timeout) throw TimeoutError("mock timeout");
        if (rule->error_status) throw ProviderError(*rule->error_status, rule->response);
        return rule->response;
    }
    if (responder_) return responder_(exchange);
    if (script_.default_response) return *script_.default_response;
    return exchange.joined();
}

std::vector<std::vector<double>> MockBackend::embed(const std::vector<std::string>& texts,
                                                    const ProviderConfig&) {
    ++embed_calls_;
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(hash_embedding(t, embedding_dim_));
    return out;
}

std::vector<ChatExchange> MockBackend::log() const {
    std::lock_guard lock(log_mutex_);
    return log_;
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

std::vector<double> hash_embedding(std::string_view text, std::size_t dim) {
    std::vector<double> v(dim, 0.0);
    std::string word;
    auto flush = [&] {
        if (word.empty()) return;
        const auto h = fnv1a(word);
        v[h % dim] += (h >> 63) ? -1.0 : 1.0;
        word.clear();
    };
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c)))
            word += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        else
            flush();
    }
    flush();
    double n = 0.0;
    for (double x : v) n += x * x;
    if (n == 0.0) {
        // No word characters at all: hash the raw text so the vector is
        // still non-zero and deterministic.
        v[fnv1a(text) % dim] = 1.0;
        return v;
    }
    n = std::sqrt(n);
    for (double& x : v) x /= n;
    return v;
}

}  // namespace iodiag::llm
