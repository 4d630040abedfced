#include <doctest.h>
#include <httplib.h>

#include "iodiag/service.hpp"
#include "support.hpp"

#include <thread>

using namespace iodiag;
using namespace iodiag::service;
using nlohmann::json;

namespace {

AppConfig base_config(const std::filesystem::path& dir) {
    AppConfig c;
    c.provider.provider = "mock";
    c.provider.retry_backoff_ms = 0;
    c.provider.max_retries = 0;
    c.session_dir = dir / "sessions";
    c.port = 0;
    return c;
}

/// Runs a server on a free port for the lifetime of the object.
class Running {
public:
    Running(AppConfig c, llm::Responder responder = diag::offline_responder())
        : server_(c, llm::make_backend(c.provider, std::move(responder))) {
        port_ = server_.bind();
        thread_ = std::thread([this] { server_.run(); });
        while (!server_.running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
    ~Running() {
        server_.stop();
        thread_.join();
    }
    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(30);
        return c;
    }

private:
    Server server_;
    int port_ = 0;
    std::thread thread_;
};

json post_json(httplib::Client& c, const std::string& path, const json& body, int& status) {
    auto res = c.Post(path, body.dump(), "application/json");
    REQUIRE(res);
    status = res->status;
    return json::parse(res->body);
}

json get_json(httplib::Client& c, const std::string& path, int& status) {
    auto res = c.Get(path);
    REQUIRE(res);
    status = res->status;
    return json::parse(res->body);
}

}  // namespace

TEST_CASE("config file") {
    test::TempDir dir;
    test::spit(dir / "conf" / "iodiag.conf",
               "# comment\n[llm]\nprovider = \"mock\"\nreasoning_model = big\n\n[service]\nport = 9000\n"
               "index = data/idx.jsonl\nmax_upload_mb = 1\ntop_k = 5\n");
    const auto c = load_config(dir / "conf" / "iodiag.conf");
    CHECK(c.provider.provider == "mock");
    CHECK(c.provider.reasoning_model == "big");
    CHECK(c.port == 9000);
    CHECK(c.index_path == dir / "conf" / "data/idx.jsonl");
    CHECK(c.max_upload_bytes == (1u << 20));
    CHECK(c.engine.top_k == 5);
    AppConfig x;
    CHECK_THROWS_AS(apply_config_value(x, "nope", "1"), ConfigError);
    CHECK_THROWS_AS(apply_config_value(x, "port", "abc"), ConfigError);
}

TEST_CASE("session ids and store") {
    test::TempDir dir;
    const auto a = new_session_id();
    CHECK(is_session_id(a));
    CHECK(a != new_session_id());
    CHECK_FALSE(is_session_id("../etc"));

    SessionStore store(dir / "s");
    diag::FinalDiagnosis d;
    d.text = "diag";
    const auto rec = store.create("trace.txt", d);
    CHECK(store.exists(rec.session_id));
    CHECK(store.get(rec.session_id).chat.history.size() == 1);
    CHECK_THROWS_AS(store.get(new_session_id()), SessionNotFound);

    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i)
        threads.emplace_back([&, i] {
            store.update(rec.session_id, [&](SessionRecord& r) {
                r.chat.history.push_back({llm::Role::user, "q" + std::to_string(i), diag::utc_now()});
            });
        });
    for (auto& t : threads) t.join();
    CHECK(SessionStore(dir / "s").get(rec.session_id).chat.history.size() == 9);
    CHECK_THROWS_AS(store.update(rec.session_id, [](SessionRecord& r) { r.chat.diagnosis.text = "changed"; }),
                    std::logic_error);
    CHECK(store.get(rec.session_id).chat.diagnosis.text == "diag");
}

TEST_CASE("http api lifecycle survives a restart") {
    test::TempDir dir;
    const auto cfg = base_config(dir.path());
    std::string id;
    {
        Running srv(cfg);
        auto c = srv.client();
        int status = 0;
        auto health = get_json(c, "/api/health", status);
        CHECK(status == 200);
        CHECK(health.at("status") == "ok");

        auto created = post_json(c, "/api/sessions", {{"trace_path", test::fixture_trace().string()}}, status);
        REQUIRE(status == 201);
        id = created.at("session_id").get<std::string>();
        CHECK(created.at("diagnosis").at("origin").size() == 18);
        CHECK(created.at("markdown").get<std::string>().starts_with("# I/O Performance Diagnosis"));

        auto history = get_json(c, "/api/sessions/" + id + "/messages", status);
        CHECK(status == 200);
        CHECK(history.at("messages").size() == 1);

        auto reply = post_json(c, "/api/sessions/" + id + "/messages", {{"question", "How do I fix the stripe count?"}}, status);
        CHECK(status == 200);
        CHECK_FALSE(reply.at("answer").get<std::string>().empty());
        CHECK(reply.at("history_length") == 3);

        auto view = get_json(c, "/api/sessions/" + id, status);
        CHECK(status == 200);
        CHECK(view.at("message_count") == 3);
        CHECK(view.at("references").size() == view.at("diagnosis").at("references").size());
    }
    {
        Running srv(cfg);
        auto c = srv.client();
        int status = 0;
        auto history = get_json(c, "/api/sessions/" + id + "/messages", status);
        CHECK(status == 200);
        REQUIRE(history.at("messages").size() == 3);
        CHECK(history.at("messages")[1].at("text") == "How do I fix the stripe count?");
    }
}

TEST_CASE("http errors") {
    test::TempDir dir;
    auto cfg = base_config(dir.path());
    cfg.max_upload_bytes = 4096;
    Running srv(cfg);
    auto c = srv.client();
    int status = 0;

    auto body = get_json(c, "/api/sessions/0123456789abcdef0123456789abcdef", status);
    CHECK(status == 404);
    CHECK(body.at("error").at("code") == "not_found");
    post_json(c, "/api/sessions/0123456789abcdef0123456789abcdef/messages", {{"question", "x"}}, status);
    CHECK(status == 404);
    get_json(c, "/api/nothing-here", status);
    CHECK(status == 404);

    body = post_json(c, "/api/sessions", {{"trace_path", test::fixture_trace().string()}}, status);
    CHECK(status == 413);
    CHECK(body.at("error").at("code") == "payload_too_large");

    httplib::MultipartFormDataItems items{
        {"trace", test::trace_header() + "POSIX\t0\t1\tPOSIX_OPENS\n", "bad.txt", "text/plain"}};
    auto res = c.Post("/api/sessions", items);
    REQUIRE(res);
    CHECK(res->status == 422);
    body = json::parse(res->body);
    CHECK(body.at("error").at("line") == 9);

    body = post_json(c, "/api/sessions", {{"wrong", 1}}, status);
    CHECK(status == 400);

    const std::string big(8192, 'x');
    res = c.Post("/api/sessions", httplib::MultipartFormDataItems{{"trace", big, "big.txt", "text/plain"}});
    REQUIRE(res);
    CHECK(res->status == 413);
}

TEST_CASE("multipart upload and provider outage") {
    test::TempDir dir;
    {
        Running srv(base_config(dir.path()));
        auto c = srv.client();
        httplib::MultipartFormDataItems items{
            {"trace", test::slurp(test::fixture_trace()), "amrex.darshan.txt", "text/plain"}};
        auto res = c.Post("/api/sessions", items);
        REQUIRE(res);
        CHECK(res->status == 201);
        const auto body = json::parse(res->body);
        CHECK(body.at("trace") == "amrex.darshan.txt");
        const auto id = body.at("session_id").get<std::string>();
        CHECK(std::filesystem::exists(dir / "sessions" / "uploads" / (id + ".darshan.txt")));
        CHECK(std::filesystem::exists(dir / "sessions" / "runs" / id / "final.json"));
    }
    {
        auto cfg = base_config(dir.path());
        test::spit(dir / "down.json", R"({"rules":[{"match":"### task:","error":503}]})");
        cfg.provider.mock_script = dir / "down.json";
        Running srv(cfg);
        auto c = srv.client();
        int status = 0;
        const auto body = post_json(c, "/api/sessions", {{"trace_path", test::fixture_trace().string()}}, status);
        CHECK(status == 503);
        CHECK(body.contains("error"));
    }
}

TEST_CASE("static files are served") {
    test::TempDir dir;
    test::spit(dir / "www" / "index.html", "<html>ok</html>");
    auto cfg = base_config(dir.path());
    cfg.static_dir = dir / "www";
    Running srv(cfg);
    auto c = srv.client();
    auto res = c.Get("/");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->body == "<html>ok</html>");
}
