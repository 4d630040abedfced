#include "iodiag/service.hpp"

#include <fstream>
#include <random>
#include <sstream>

namespace iodiag::service {

namespace fs = std::filesystem;

nlohmann::ordered_json SessionRecord::to_json() const {
    nlohmann::ordered_json j;
    j["session_id"] = session_id;
    j["trace"] = trace_ref;
    j["created_at"] = created_at;
    j["chat"] = diag::to_json(chat);
    return j;
}

SessionRecord SessionRecord::from_json(const nlohmann::json& j) {
    SessionRecord r;
    r.session_id = j.at("session_id").get<std::string>();
    r.trace_ref = j.value("trace", std::string());
    r.created_at = j.value("created_at", std::string());
    r.chat = diag::session_from_json(j.at("chat"));
    return r;
}

std::string new_session_id() {
    static thread_local std::random_device rd;
    static const char* hex = "0123456789abcdef";
    std::string id;
    for (int i = 0; i < 4; ++i) {
        auto v = static_cast<std::uint32_t>(rd());
        for (int k = 0; k < 8; ++k) {
            id += hex[v & 0xF];
            v >>= 4;
        }
    }
    return id;
}

bool is_session_id(const std::string& s) {
    if (s.size() != 32) return false;
    for (char c : s)
        if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
    return true;
}

SessionStore::SessionStore(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

fs::path SessionStore::path_for(const std::string& id) const { return dir_ / (id + ".json"); }

std::shared_ptr<std::mutex> SessionStore::lock_for(const std::string& id) {
    std::lock_guard g(map_mutex_);
    auto& m = locks_[id];
    if (!m) m = std::make_shared<std::mutex>();
    return m;
}

void SessionStore::save(const SessionRecord& record) const {
    const auto target = path_for(record.session_id);
    const auto tmp = dir_ / ("." + record.session_id + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write session file " + tmp.string());
        out << record.to_json().dump(2) << "\n";
        out.flush();
        if (!out) throw std::runtime_error("short write on " + tmp.string());
    }
    fs::rename(tmp, target);
}

std::string SessionStore::reserve_id() {
    while (true) {
        auto id = new_session_id();
        if (!exists(id)) return id;
    }
}

SessionRecord SessionStore::create(const std::string& trace_ref, diag::FinalDiagnosis diagnosis) {
    return create_with_id(reserve_id(), trace_ref, std::move(diagnosis));
}

SessionRecord SessionStore::create_with_id(const std::string& id, const std::string& trace_ref,
                                           diag::FinalDiagnosis diagnosis) {
    if (!is_session_id(id)) throw std::invalid_argument("malformed session id");
    auto lock = lock_for(id);
    std::lock_guard g(*lock);
    if (exists(id)) throw std::runtime_error("session " + id + " already exists");
    SessionRecord r;
    r.session_id = id;
    r.trace_ref = trace_ref;
    r.created_at = diag::utc_now();
    r.chat = diag::start_session(id, std::move(diagnosis));
    save(r);
    return r;
}

bool SessionStore::exists(const std::string& id) const {
    return is_session_id(id) && fs::is_regular_file(path_for(id));
}

SessionRecord SessionStore::get(const std::string& id) const {
    if (!exists(id)) throw SessionNotFound(id);
    std::ifstream in(path_for(id), std::ios::binary);
    return SessionRecord::from_json(nlohmann::json::parse(in));
}

void SessionStore::update(const std::string& id, const std::function<void(SessionRecord&)>& fn) {
    if (!exists(id)) throw SessionNotFound(id);
    auto lock = lock_for(id);
    std::lock_guard g(*lock);
    auto record = get(id);
    const auto diagnosis_before = diag::to_json(record.chat.diagnosis).dump();
    fn(record);
    if (diag::to_json(record.chat.diagnosis).dump() != diagnosis_before)
        throw std::logic_error("a session's diagnosis cannot change after creation");
    save(record);
}

}  // namespace iodiag::service
