#include "iodiag/llm.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace iodiag::llm {

std::string_view role_name(Role r) {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

std::optional<Role> role_from_name(std::string_view name) {
    if (name == "system") return Role::system;
    if (name == "user") return Role::user;
    if (name == "assistant") return Role::assistant;
    return std::nullopt;
}

std::string ChatExchange::joined() const {
    std::string out;
    for (const auto& m : messages) {
        if (!out.empty()) out += '\n';
        out += m.text;
    }
    return out;
}

void ProviderConfig::validate() const {
    if (!(timeout_seconds > 0)) throw std::invalid_argument("timeout_seconds must be > 0");
    if (max_retries < 0) throw std::invalid_argument("max_retries must be >= 0");
    if (!(temperature >= 0)) throw std::invalid_argument("temperature must be >= 0");
    if (max_inflight < 1) throw std::invalid_argument("max_inflight must be >= 1");
    if (max_inflight > 4096) throw std::invalid_argument("max_inflight must be <= 4096");
    if (retry_backoff_ms < 0) throw std::invalid_argument("retry_backoff_ms must be >= 0");
    if (provider != "openai" && provider != "mock")
        throw std::invalid_argument("unknown provider '" + provider + "'");
    if (provider == "openai" && endpoint_url.empty())
        throw std::invalid_argument("endpoint_url is empty");
}

const std::string& ProviderConfig::model_for(ModelRole role) const {
    return role == ModelRole::filter ? filter_model : reasoning_model;
}

ProviderError::ProviderError(int status, std::string body)
    : std::runtime_error("provider error " + std::to_string(status) +
                         (body.empty() ? std::string() : ": " + body.substr(0, 512))),
      status_(status), body_(std::move(body)) {}

bool ProviderError::transient() const {
    return status_ == 0 || status_ == 408 || status_ == 429 || (status_ >= 500 && status_ < 600);
}

Gateway::Gateway(ProviderConfig config, std::shared_ptr<Backend> backend)
    : config_(std::move(config)), backend_(std::move(backend)),
      inflight_((config_.validate(), config_.max_inflight)) {
    if (!backend_) throw std::invalid_argument("gateway needs a backend");
}

namespace {

struct SlotGuard {
    std::counting_semaphore<4096>& sem;
    explicit SlotGuard(std::counting_semaphore<4096>& s) : sem(s) { sem.acquire(); }
    ~SlotGuard() { sem.release(); }
    SlotGuard(const SlotGuard&) = delete;
    SlotGuard& operator=(const SlotGuard&) = delete;
};

}  // namespace

template <typename F>
auto Gateway::with_retries(F&& attempt) -> decltype(attempt()) {
    for (int i = 0;; ++i) {
        try {
            SlotGuard slot(inflight_);
            return attempt();
        } catch (const ProviderError& e) {
            if (!e.transient() || i >= config_.max_retries) throw;
        } catch (const TimeoutError&) {
            if (i >= config_.max_retries) throw;
        }
        const auto delay = static_cast<long long>(config_.retry_backoff_ms) * (1LL << std::min(i, 16));
        if (delay > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    }
}

std::string Gateway::chat(const ChatExchange& exchange) {
    if (exchange.messages.empty()) throw std::invalid_argument("chat exchange has no messages");
    if (exchange.messages.back().role != Role::user)
        throw std::invalid_argument("chat exchange must end with a user message");
    if (exchange.temperature < 0) throw std::invalid_argument("temperature must be >= 0");
    ++chat_calls_;
    try {
        return with_retries([&] {
            ++chat_attempts_;
            return backend_->complete(exchange, config_);
        });
    } catch (...) {
        ++chat_failures_;
        throw;
    }
}

std::string Gateway::chat(ModelRole role, std::vector<Message> messages) {
    ChatExchange ex;
    ex.messages = std::move(messages);
    ex.model = config_.model_for(role);
    ex.temperature = config_.temperature;
    return chat(ex);
}

std::vector<std::vector<double>> Gateway::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw std::invalid_argument("embed called with no texts");
    for (const auto& t : texts)
        if (t.empty()) throw std::invalid_argument("embed called with an empty text");
    ++embed_calls_;
    auto vectors = with_retries([&] { return backend_->embed(texts, config_); });
    if (vectors.size() != texts.size())
        throw ProviderError(200, "expected " + std::to_string(texts.size()) + " embeddings, got " +
                                     std::to_string(vectors.size()));
    const std::size_t width = vectors.front().size();
    if (width == 0) throw DimensionInconsistency("provider returned an empty embedding");
    for (const auto& v : vectors)
        if (v.size() != width)
            throw DimensionInconsistency("provider returned mixed embedding dimensions (" +
                                         std::to_string(width) + " and " +
                                         std::to_string(v.size()) + ")");
    std::size_t expected = 0;
    if (!dim_.compare_exchange_strong(expected, width) && expected != width)
        throw DimensionInconsistency("embedding dimension changed from " + std::to_string(expected) +
                                     " to " + std::to_string(width));
    embedded_texts_ += texts.size();
    return vectors;
}

GatewayStats Gateway::stats() const {
    return {chat_calls_.load(), chat_attempts_.load(), chat_failures_.load(), embed_calls_.load(),
            embedded_texts_.load()};
}

std::shared_ptr<Backend> make_backend(const ProviderConfig& config, Responder responder) {
    config.validate();
    if (config.provider == "mock") {
        MockScript script;
        if (!config.mock_script.empty()) script = MockScript::load(config.mock_script);
        return std::make_shared<MockBackend>(std::move(script), std::move(responder),
                                             config.mock_embedding_dim);
    }
    return std::make_shared<OpenAiBackend>();
}

}  // namespace iodiag::llm
