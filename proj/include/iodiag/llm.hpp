#pragma once

#include <nlohmann/json.hpp>

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

// The single egress point for model traffic. Everything else in the project
// talks to a Gateway; only the HTTP backend opens sockets.
namespace iodiag::llm {

enum class Role { system, user, assistant };
std::string_view role_name(Role r);
std::optional<Role> role_from_name(std::string_view name);

struct Message {
    Role role = Role::user;
    std::string text;
};

struct ChatExchange {
    std::vector<Message> messages;
    std::string model;
    double temperature = 0.0;

    /// All message texts joined by newlines, used by mock matchers.
    std::string joined() const;
};

/// Which configured model serves a call.
enum class ModelRole { reasoning, filter };

struct ProviderConfig {
    std::string provider = "openai";  // "openai" or "mock"
    std::string endpoint_url = "https://api.openai.com/v1";
    std::string api_key_env = "OPENAI_API_KEY";
    std::string reasoning_model = "gpt-4o";
    std::string filter_model = "gpt-4o-mini";
    std::string embedding_model = "text-embedding-3-large";
    double timeout_seconds = 120.0;
    int max_retries = 3;
    double temperature = 0.0;
    int max_inflight = 8;
    int retry_backoff_ms = 500;
    /// Mock provider only.
    std::string mock_script;
    std::size_t mock_embedding_dim = 64;

    /// Throws std::invalid_argument when an invariant is violated.
    void validate() const;
    const std::string& model_for(ModelRole role) const;
};

class ProviderError : public std::runtime_error {
public:
    ProviderError(int status, std::string body);
    int status() const { return status_; }
    const std::string& body() const { return body_; }
    /// Connection failures (status 0), 408, 429 and 5xx are retried.
    bool transient() const;

private:
    int status_;
    std::string body_;
};

class TimeoutError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionInconsistency : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Wire-level provider. Implementations report one attempt; retry policy
/// lives in Gateway.
class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string complete(const ChatExchange& exchange, const ProviderConfig& config) = 0;
    virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts,
                                                   const ProviderConfig& config) = 0;
};

/// OpenAI-compatible `/chat/completions` and `/embeddings` over HTTP(S).
class OpenAiBackend : public Backend {
public:
    std::string complete(const ChatExchange& exchange, const ProviderConfig& config) override;
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts,
                                           const ProviderConfig& config) override;
};

struct MockRule {
    std::string pattern;
    bool regex = false;
    std::string response;
    /// When set, the rule raises ProviderError(error_status) instead.
    std::optional<int> error_status;
    /// When set, the rule raises TimeoutError.
    bool timeout = false;
    /// Restricts the rule to one model id.
    std::string model;
};

/// Ordered matcher -> canned response table. Stateless: the same request
/// always gets the same answer.
class MockScript {
public:
    std::vector<MockRule> rules;
    std::optional<std::string> default_response;

    /// {"rules": [{"match"|"regex": ..., "response": ..., "error": status,
    ///  "timeout": true, "model": ...}], "default": "..."}
    static MockScript from_json(const nlohmann::json& j);
    static MockScript load(const std::filesystem::path& path);

    /// First matching rule, if any.
    const MockRule* find(const ChatExchange& exchange) const;
};

using Responder = std::function<std::string(const ChatExchange&)>;

/// Deterministic offline backend. Rules are tried first, then the responder,
/// then the script default; with none of those the whole exchange
/// (ChatExchange::joined) is echoed back.
class MockBackend : public Backend {
public:
    explicit MockBackend(MockScript script = {}, Responder responder = {},
                         std::size_t embedding_dim = 64);

    std::string complete(const ChatExchange& exchange, const ProviderConfig& config) override;
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts,
                                           const ProviderConfig& config) override;

    std::size_t chat_calls() const { return chat_calls_.load(); }
    std::size_t embed_calls() const { return embed_calls_.load(); }
    /// Every exchange seen, in arrival order.
    std::vector<ChatExchange> log() const;

private:
    MockScript script_;
    Responder responder_;
    std::size_t embedding_dim_;
    std::atomic<std::size_t> chat_calls_{0};
    std::atomic<std::size_t> embed_calls_{0};
    mutable std::mutex log_mutex_;
    std::vector<ChatExchange> log_;
};

/// Feature-hashed bag of words, L2-normalised. Identical texts map to
/// identical vectors and texts sharing words land close together.
std::vector<double> hash_embedding(std::string_view text, std::size_t dim);

struct GatewayStats {
    std::size_t chat_calls = 0;
    std::size_t chat_attempts = 0;
    std::size_t chat_failures = 0;
    std::size_t embed_calls = 0;
    std::size_t embedded_texts = 0;
};

class Gateway {
public:
    Gateway(ProviderConfig config, std::shared_ptr<Backend> backend);

    /// Validates the exchange, then calls the backend with exponential backoff
    /// on transient failures. Throws ProviderError or TimeoutError once
    /// max_retries + 1 attempts have failed.
    std::string chat(const ChatExchange& exchange);
    std::string chat(ModelRole role, std::vector<Message> messages);

    /// One vector per text in input order. The first response fixes the
    /// dimension for the gateway's lifetime.
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts);

    const ProviderConfig& config() const { return config_; }
    GatewayStats stats() const;
    std::size_t embedding_dimension() const { return dim_.load(); }

private:
    template <typename F>
    auto with_retries(F&& attempt) -> decltype(attempt());

    ProviderConfig config_;
    std::shared_ptr<Backend> backend_;
    std::counting_semaphore<4096> inflight_;
    std::atomic<std::size_t> dim_{0};
    std::atomic<std::size_t> chat_calls_{0}, chat_attempts_{0}, chat_failures_{0};
    std::atomic<std::size_t> embed_calls_{0}, embedded_texts_{0};
};

/// Backend for config.provider ("openai" or "mock"). A mock backend loads
/// config.mock_script when set and falls back to `responder`.
std::shared_ptr<Backend> make_backend(const ProviderConfig& config, Responder responder = {});

}  // namespace iodiag::llm
