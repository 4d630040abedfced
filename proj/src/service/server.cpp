#include <httplib.h>

#include "iodiag/service.hpp"
#include "iodiag/trace.hpp"

#include <fstream>
#include <sstream>

namespace iodiag::service {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

void send_json(httplib::Response& res, int status, const ojson& body) {
    res.status = status;
    res.set_content(body.dump(2), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message,
                ojson extra = ojson::object()) {
    ojson err{{"code", code}, {"message", message}};
    for (auto it = extra.begin(); it != extra.end(); ++it) err[it.key()] = it.value();
    send_json(res, status, {{"error", err}});
}

ojson message_json(const diag::ChatMessage& m) {
    return {{"role", std::string(llm::role_name(m.role))}, {"text", m.text}, {"timestamp", m.timestamp}};
}

ojson session_view(const SessionRecord& r) {
    ojson j;
    j["session_id"] = r.session_id;
    j["created_at"] = r.created_at;
    j["trace"] = r.trace_ref;
    const auto d = diag::to_json(r.chat.diagnosis);
    j["diagnosis"] = d;
    j["markdown"] = diag::render_markdown(r.chat.diagnosis);
    j["references"] = d.at("references");
    auto& tags = j["issue_tags"] = ojson::array();
    for (auto t : r.chat.diagnosis.issue_tags)
        tags.push_back({{"id", std::string(label_id(t))}, {"name", std::string(label_display_name(t))}});
    j["message_count"] = r.chat.history.size();
    return j;
}

kb::VectorIndex open_index(const fs::path& p) {
    if (p.empty()) return {};
    return kb::VectorIndex::load(p);
}

diag::PromptSet open_prompts(const fs::path& dir) {
    return dir.empty() ? diag::PromptSet::builtin() : diag::PromptSet::load(dir);
}

}  // namespace

struct Server::Impl {
    AppConfig config;
    llm::Gateway gateway;
    kb::VectorIndex index;
    diag::Engine engine;
    SessionStore store;
    httplib::Server http;

    Impl(AppConfig c, std::shared_ptr<llm::Backend> backend)
        : config(std::move(c)),
          gateway(config.provider, std::move(backend)),
          index(open_index(config.index_path)),
          engine(gateway, index, config.engine, open_prompts(config.prompts_dir)),
          store(config.session_dir) {
        routes();
    }

    void routes();
    void create_session(const httplib::Request& req, httplib::Response& res);
};

void Server::Impl::routes() {
    // Multipart framing adds a little on top of the trace text itself.
    http.set_payload_max_length(static_cast<std::size_t>(config.max_upload_bytes) + (1u << 20));
    http.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (!res.body.empty()) return;
        const std::string code = res.status == 413 ? "payload_too_large"
                                 : res.status == 404 ? "not_found"
                                                     : "http_" + std::to_string(res.status);
        send_error(res, res.status, code, httplib::status_message(res.status));
    });
    http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        send_error(res, 500, "internal", what);
    });

    http.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200,
                  {{"status", "ok"},
                   {"provider", config.provider.provider},
                   {"index_chunks", index.size()},
                   {"reasoning_model", config.provider.reasoning_model}});
    });

    http.Post("/api/sessions",
              [this](const httplib::Request& req, httplib::Response& res) { create_session(req, res); });

    http.Get("/api/sessions/:id", [this](const httplib::Request& req, httplib::Response& res) {
        const auto id = req.path_params.at("id");
        if (!store.exists(id)) return send_error(res, 404, "not_found", "unknown session " + id);
        send_json(res, 200, session_view(store.get(id)));
    });

    http.Get("/api/sessions/:id/messages", [this](const httplib::Request& req, httplib::Response& res) {
        const auto id = req.path_params.at("id");
        if (!store.exists(id)) return send_error(res, 404, "not_found", "unknown session " + id);
        const auto r = store.get(id);
        ojson msgs = ojson::array();
        for (const auto& m : r.chat.history) msgs.push_back(message_json(m));
        send_json(res, 200, {{"session_id", id}, {"messages", msgs}});
    });

    http.Post("/api/sessions/:id/messages", [this](const httplib::Request& req, httplib::Response& res) {
        const auto id = req.path_params.at("id");
        if (!store.exists(id)) return send_error(res, 404, "not_found", "unknown session " + id);
        std::string question;
        try {
            const auto body = nlohmann::json::parse(req.body);
            question = body.at("question").get<std::string>();
        } catch (const std::exception&) {
            return send_error(res, 400, "bad_request", "body must be JSON with a string field 'question'");
        }
        if (question.find_first_not_of(" \t\r\n") == std::string::npos)
            return send_error(res, 400, "bad_request", "question is empty");
        try {
            std::string answer;
            std::size_t length = 0;
            ojson last;
            store.update(id, [&](SessionRecord& r) {
                answer = engine.answer_followup(r.chat, question);
                length = r.chat.history.size();
                last = message_json(r.chat.history.back());
            });
            send_json(res, 200, {{"session_id", id}, {"answer", answer}, {"message", last},
                                 {"history_length", length}});
        } catch (const llm::ProviderError& e) {
            send_error(res, 503, "provider_unavailable", e.what(), {{"provider_status", e.status()}});
        } catch (const llm::TimeoutError& e) {
            send_error(res, 503, "provider_timeout", e.what());
        }
    });

    if (!config.static_dir.empty()) {
        if (!http.set_mount_point("/", config.static_dir.string()))
            throw std::runtime_error("static directory not found: " + config.static_dir.string());
    }
}

void Server::Impl::create_session(const httplib::Request& req, httplib::Response& res) {
    std::string text;
    std::string trace_ref;
    if (req.is_multipart_form_data()) {
        if (!req.has_file("trace"))
            return send_error(res, 400, "bad_request", "multipart upload needs a 'trace' file field");
        const auto file = req.get_file_value("trace");
        text = file.content;
        trace_ref = file.filename.empty() ? "upload" : file.filename;
    } else {
        std::string path;
        try {
            path = nlohmann::json::parse(req.body).at("trace_path").get<std::string>();
        } catch (const std::exception&) {
            return send_error(res, 400, "bad_request",
                              "send a multipart 'trace' file or JSON with a string field 'trace_path'");
        }
        std::error_code ec;
        const auto size = fs::file_size(path, ec);
        if (ec) return send_error(res, 400, "trace_not_found", "cannot read trace file " + path);
        if (size > config.max_upload_bytes)
            return send_error(res, 413, "payload_too_large", "trace exceeds the configured size limit",
                              {{"limit_bytes", config.max_upload_bytes}});
        std::ifstream in(path, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        text = ss.str();
        trace_ref = path;
    }
    if (text.size() > config.max_upload_bytes)
        return send_error(res, 413, "payload_too_large", "trace exceeds the configured size limit",
                          {{"limit_bytes", config.max_upload_bytes}});

    trace::TraceProfile profile;
    try {
        profile = trace::parse_trace(text);
    } catch (const trace::MalformedLine& e) {
        return send_error(res, 422, "malformed_trace", e.what(), {{"line", e.line_no()}});
    } catch (const trace::MissingHeaderField& e) {
        return send_error(res, 422, "malformed_trace", e.what(), {{"field", e.field()}});
    }

    const auto id = store.reserve_id();
    const auto uploads = store.dir() / "uploads";
    fs::create_directories(uploads);
    {
        std::ofstream out(uploads / (id + ".darshan.txt"), std::ios::binary);
        out << text;
    }
    diag::RunResult run;
    try {
        run = engine.diagnose_trace(profile, store.dir() / "runs" / id);
    } catch (const llm::ProviderError& e) {
        return send_error(res, 503, "provider_unavailable", e.what(), {{"provider_status", e.status()}});
    } catch (const llm::TimeoutError& e) {
        return send_error(res, 503, "provider_timeout", e.what());
    } catch (const diag::NoDiagnoses& e) {
        ojson extra{{"warnings", engine.warnings().items()}};
        return send_error(res, 503, "provider_unavailable", e.what(), extra);
    }
    const auto record = store.create_with_id(id, trace_ref, run.tree.root);
    auto body = session_view(record);
    body["warnings"] = run.warnings;
    body["dropped_fragments"] = run.dropped;
    send_json(res, 201, body);
}

Server::Server(AppConfig config, std::shared_ptr<llm::Backend> backend)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(backend))) {}

Server::~Server() { stop(); }

int Server::bind() {
    auto& c = impl_->config;
    if (c.port == 0) {
        c.port = impl_->http.bind_to_any_port(c.host);
        if (c.port < 0) throw std::runtime_error("cannot bind " + c.host);
    } else if (!impl_->http.bind_to_port(c.host, c.port)) {
        throw std::runtime_error("cannot bind " + c.host + ":" + std::to_string(c.port));
    }
    return c.port;
}

void Server::run() { impl_->http.listen_after_bind(); }
void Server::stop() {
    if (impl_ && impl_->http.is_running()) impl_->http.stop();
}
bool Server::running() const { return impl_->http.is_running(); }
SessionStore& Server::sessions() { return impl_->store; }
const llm::Gateway& Server::gateway() const { return impl_->gateway; }

}  // namespace iodiag::service
