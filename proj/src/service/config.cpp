#include "iodiag/service.hpp"

#include <cctype>
#include <fstream>

namespace iodiag::service {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::string unquote(const std::string& s) {
    if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\'')))
        return s.substr(1, s.size() - 2);
    return s;
}

template <typename T>
T number(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        T out;
        if constexpr (std::is_floating_point_v<T>) out = static_cast<T>(std::stod(value, &used));
        else out = static_cast<T>(std::stoll(value, &used));
        if (used != value.size()) throw std::invalid_argument(value);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' expects a number, got '" + value + "'");
    }
}

bool is_path_key(const std::string& key) {
    return key == "index" || key == "session_dir" || key == "static_dir" || key == "prompts_dir" ||
           key == "mock_script";
}

}  // namespace

void apply_config_value(AppConfig& c, const std::string& key, const std::string& value) {
    auto& p = c.provider;
    if (key == "provider") p.provider = value;
    else if (key == "endpoint" || key == "endpoint_url") p.endpoint_url = value;
    else if (key == "api_key_env") p.api_key_env = value;
    else if (key == "reasoning_model") p.reasoning_model = value;
    else if (key == "filter_model") p.filter_model = value;
    else if (key == "embedding_model") p.embedding_model = value;
    else if (key == "temperature") p.temperature = number<double>(key, value);
    else if (key == "timeout_s") p.timeout_seconds = number<double>(key, value);
    else if (key == "max_retries") p.max_retries = number<int>(key, value);
    else if (key == "max_inflight") p.max_inflight = number<int>(key, value);
    else if (key == "retry_backoff_ms") p.retry_backoff_ms = number<int>(key, value);
    else if (key == "mock_script") p.mock_script = value;
    else if (key == "mock_embedding_dim") p.mock_embedding_dim = number<std::size_t>(key, value);
    else if (key == "index") c.index_path = value;
    else if (key == "session_dir") c.session_dir = value;
    else if (key == "static_dir") c.static_dir = value;
    else if (key == "prompts_dir") c.prompts_dir = value;
    else if (key == "host") c.host = value;
    else if (key == "port") c.port = number<int>(key, value);
    else if (key == "max_upload_mb") c.max_upload_bytes = number<std::uint64_t>(key, value) << 20;
    else if (key == "max_upload_bytes") c.max_upload_bytes = number<std::uint64_t>(key, value);
    else if (key == "top_k") c.engine.top_k = number<std::size_t>(key, value);
    else if (key == "max_parallel") c.engine.max_parallel = number<int>(key, value);
    else if (key == "merge_source_char_budget") c.engine.merge_source_char_budget = number<std::size_t>(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
}

AppConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    AppConfig c;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty() || line.front() == '[') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
        const auto key = trim(line.substr(0, eq));
        auto value = unquote(trim(line.substr(eq + 1)));
        if (is_path_key(key) && !value.empty() && std::filesystem::path(value).is_relative())
            value = (path.parent_path() / value).lexically_normal().string();
        try {
            apply_config_value(c, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    try {
        c.provider.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return c;
}

}  // namespace iodiag::service
