#include <httplib.h>

#include "iodiag/llm.hpp"

#include <chrono>
#include <cstdlib>

namespace iodiag::llm {

namespace {

struct Endpoint {
    std::string origin;  // scheme://host[:port]
    std::string base;    // path prefix without trailing slash
};

Endpoint split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ProviderError(0, "endpoint_url lacks a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    Endpoint e;
    if (path_start == std::string::npos) {
        e.origin = url;
    } else {
        e.origin = url.substr(0, path_start);
        e.base = url.substr(path_start);
    }
    while (!e.base.empty() && e.base.back() == '/') e.base.pop_back();
    return e;
}

nlohmann::json post_json(const ProviderConfig& config, const std::string& route,
                         const nlohmann::json& body) {
    const auto ep = split_url(config.endpoint_url);
    httplib::Client client(ep.origin);
    const auto secs = std::chrono::duration<double>(config.timeout_seconds);
    const auto us = std::chrono::duration_cast<std::chrono::microseconds>(secs);
    client.set_connection_timeout(us);
    client.set_read_timeout(us);
    client.set_write_timeout(us);

    httplib::Headers headers;
    if (!config.api_key_env.empty()) {
        if (const char* key = std::getenv(config.api_key_env.c_str()); key && *key)
            headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    auto res = client.Post(ep.base + route, headers, body.dump(), "application/json");
    if (!res) {
        const auto err = res.error();
        if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout)
            throw TimeoutError("request to " + config.endpoint_url + route + " timed out (" +
                               httplib::to_string(err) + ")");
        throw ProviderError(0, httplib::to_string(err));
    }
    if (res->status < 200 || res->status >= 300) throw ProviderError(res->status, res->body);
    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception&) {
        throw ProviderError(res->status, "unparseable response body: " + res->body.substr(0, 256));
    }
}

}  // namespace

std::string OpenAiBackend::complete(const ChatExchange& exchange, const ProviderConfig& config) {
    nlohmann::ordered_json body;
    body["model"] = exchange.model.empty() ? config.reasoning_model : exchange.model;
    body["temperature"] = exchange.temperature;
    auto& msgs = body["messages"] = nlohmann::ordered_json::array();
    for (const auto& m : exchange.messages)
        msgs.push_back({{"role", std::string(role_name(m.role))}, {"content", m.text}});
    const auto reply = post_json(config, "/chat/completions", nlohmann::json::parse(body.dump()));
    try {
        const auto& content = reply.at("choices").at(0).at("message").at("content");
        return content.is_null() ? std::string() : content.get<std::string>();
    } catch (const nlohmann::json::exception&) {
        throw ProviderError(200, "response has no choices[0].message.content: " +
                                     reply.dump().substr(0, 256));
    }
}

std::vector<std::vector<double>> OpenAiBackend::embed(const std::vector<std::string>& texts,
                                                      const ProviderConfig& config) {
    nlohmann::json body{{"model", config.embedding_model}, {"input", texts}};
    const auto reply = post_json(config, "/embeddings", body);
    std::vector<std::vector<double>> out(texts.size());
    std::vector<bool> seen(texts.size(), false);
    try {
        const auto& data = reply.at("data");
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto& item = data.at(i);
            const std::size_t idx = item.contains("index") ? item.at("index").get<std::size_t>() : i;
            if (idx >= texts.size() || seen[idx]) throw ProviderError(200, "bad embedding index");
            out[idx] = item.at("embedding").get<std::vector<double>>();
            seen[idx] = true;
        }
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(200, std::string("malformed embeddings response: ") + e.what());
    }
    for (bool s : seen)
        if (!s) throw ProviderError(200, "embeddings response is missing entries");
    return out;
}

}  // namespace iodiag::llm
