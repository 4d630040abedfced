#pragma once

#include "iodiag/diag.hpp"
#include "iodiag/kb.hpp"
#include "iodiag/llm.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

namespace iodiag::service {

/// Everything the CLI and the server read from a config file.
struct AppConfig {
    llm::ProviderConfig provider;
    std::filesystem::path index_path;
    std::filesystem::path session_dir = "sessions";
    std::filesystem::path static_dir;
    std::filesystem::path prompts_dir;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::uint64_t max_upload_bytes = 256ULL << 20;
    diag::EngineConfig engine;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// `key = value` lines; `#` starts a comment, `[section]` headers and
/// surrounding quotes are ignored. Unknown keys are an error.
AppConfig load_config(const std::filesystem::path& path);
/// Applies one key. Throws ConfigError for an unknown key or a bad value.
void apply_config_value(AppConfig& config, const std::string& key, const std::string& value);

struct SessionRecord {
    std::string session_id;
    std::string trace_ref;
    std::string created_at;
    diag::ChatSession chat;

    nlohmann::ordered_json to_json() const;
    static SessionRecord from_json(const nlohmann::json& j);
};

class SessionNotFound : public std::runtime_error {
public:
    explicit SessionNotFound(const std::string& id) : std::runtime_error("unknown session " + id) {}
};

/// 32 lowercase hex digits from the OS entropy source.
std::string new_session_id();
bool is_session_id(const std::string& s);

/// One JSON file per session under `dir`. Writes go through a temporary
/// file and a rename, so a crash leaves either the old or the new record.
class SessionStore {
public:
    explicit SessionStore(std::filesystem::path dir);

    SessionRecord create(const std::string& trace_ref, diag::FinalDiagnosis diagnosis);
    /// Reserves an id before the record exists (uploads and run artifacts
    /// are filed under it).
    std::string reserve_id();
    SessionRecord create_with_id(const std::string& id, const std::string& trace_ref,
                                 diag::FinalDiagnosis diagnosis);
    SessionRecord get(const std::string& id) const;
    bool exists(const std::string& id) const;

    /// Loads, mutates and persists one session while holding its lock.
    void update(const std::string& id, const std::function<void(SessionRecord&)>& fn);

    const std::filesystem::path& dir() const { return dir_; }
    std::filesystem::path path_for(const std::string& id) const;

private:
    std::shared_ptr<std::mutex> lock_for(const std::string& id);
    void save(const SessionRecord& record) const;

    std::filesystem::path dir_;
    std::mutex map_mutex_;
    std::map<std::string, std::shared_ptr<std::mutex>> locks_;
};

/// HTTP front end over the diagnosis engine and a session store.
class Server {
public:
    Server(AppConfig config, std::shared_ptr<llm::Backend> backend);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds config.host:config.port (0 picks a free port) and returns the
    /// bound port.
    int bind();
    /// Serves until stop(). Call bind() first.
    void run();
    void stop();
    bool running() const;

    SessionStore& sessions();
    const llm::Gateway& gateway() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace iodiag::service
