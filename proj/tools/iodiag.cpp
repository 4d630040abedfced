// Command-line front end. Each subcommand is a thin composition of library
// calls; see README.md for usage.
#include <CLI11.hpp>

#include "iodiag/diag.hpp"
#include "iodiag/eval.hpp"
#include "iodiag/kb.hpp"
#include "iodiag/llm.hpp"
#include "iodiag/service.hpp"
#include "iodiag/summary.hpp"
#include "iodiag/trace.hpp"

#include <csignal>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace iodiag;

namespace {

struct Globals {
    std::string config_file;
    bool mock = false;
    std::string mock_script;
    std::string endpoint;
    std::string reasoning_model;
    std::string filter_model;
    std::string embedding_model;
    std::string prompts_dir;
    int threads = 0;
    bool serial = false;
};

service::AppConfig resolve_config(const Globals& g) {
    service::AppConfig c = g.config_file.empty() ? service::AppConfig{} : service::load_config(g.config_file);
    if (g.mock || !g.mock_script.empty()) c.provider.provider = "mock";
    if (!g.mock_script.empty()) c.provider.mock_script = g.mock_script;
    if (!g.endpoint.empty()) c.provider.endpoint_url = g.endpoint;
    if (!g.reasoning_model.empty()) c.provider.reasoning_model = g.reasoning_model;
    if (!g.filter_model.empty()) c.provider.filter_model = g.filter_model;
    if (!g.embedding_model.empty()) c.provider.embedding_model = g.embedding_model;
    if (!g.prompts_dir.empty()) c.prompts_dir = g.prompts_dir;
    if (g.threads > 0) c.engine.max_parallel = g.threads;
    if (g.serial) c.engine.execution = Execution::serial;
    c.provider.validate();
    return c;
}

// The offline pipeline responder plus the offline judge for ranking prompts.
llm::Responder offline_everything() {
    auto pipeline = diag::offline_responder();
    return [pipeline](const llm::ChatExchange& ex) {
        if (auto judged = eval::offline_judge_reply(ex.messages.back().text); !judged.empty()) return judged;
        return pipeline(ex);
    };
}

std::shared_ptr<llm::Backend> backend_for(const service::AppConfig& c) {
    return llm::make_backend(c.provider, offline_everything());
}

diag::PromptSet prompts_for(const service::AppConfig& c) {
    return c.prompts_dir.empty() ? diag::PromptSet::builtin() : diag::PromptSet::load(c.prompts_dir);
}

void print_warnings(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

int cmd_parse(const std::string& trace_path, const std::string& dump_dir) {
    std::vector<std::string> warnings;
    const auto profile = trace::parse_trace_file(trace_path, {&warnings});
    print_warnings(warnings);
    std::cout << "exe: " << profile.header.exe << "\n"
              << "jobid: " << profile.header.jobid << "\n"
              << "nprocs: " << profile.header.nprocs << "\n"
              << "runtime: " << trace::format_value(profile.header.runtime_seconds) << " s\n"
              << "records: " << profile.record_count() << "\n";
    for (const auto& t : profile.tables) std::cout << "  " << t.name << ": " << t.records.size() << "\n";
    if (!dump_dir.empty()) {
        for (const auto& [module, path] : trace::split_modules(profile, dump_dir, trace::trace_stem(trace_path)))
            std::cout << "wrote " << path.string() << "\n";
    }
    return 0;
}

int cmd_summarize(const std::string& trace_path, const std::string& dump_dir) {
    std::vector<std::string> warnings;
    const auto profile = trace::parse_trace_file(trace_path, {&warnings});
    print_warnings(warnings);
    const auto fragments = summary::extract_fragments(profile);
    if (dump_dir.empty()) {
        nlohmann::ordered_json all = nlohmann::ordered_json::array();
        for (const auto& f : fragments) all.push_back(summary::to_json(f));
        std::cout << all.dump(2) << "\n";
    } else {
        for (const auto& p : summary::dump_fragments(fragments, dump_dir, trace::trace_stem(trace_path)))
            std::cout << "wrote " << p.string() << "\n";
    }
    std::cerr << fragments.size() << " fragments\n";
    return 0;
}

int cmd_kb_build(const service::AppConfig& c, const std::string& corpus, const std::string& index_path,
                 std::size_t chunk_size, std::size_t overlap, std::size_t batch) {
    llm::Gateway gw(c.provider, backend_for(c));
    kb::BuildOptions opt;
    opt.chunk_size = chunk_size;
    opt.overlap = overlap;
    opt.batch_size = batch;
    opt.max_inflight = c.provider.max_inflight;
    opt.execution = c.engine.execution;
    const auto result = kb::build_index(
        corpus, [&](const std::vector<std::string>& t) { return gw.embed(t); }, index_path, opt);
    std::cout << "index: " << index_path << "\nchunks: " << result.index.size()
              << "\nembedded: " << result.embedded << "\nreused: " << result.reused
              << "\ndimension: " << result.index.dimension() << "\n";
    return 0;
}

int cmd_diagnose(const service::AppConfig& c, const std::string& trace_path, const std::string& out_dir) {
    std::vector<std::string> parse_warnings;
    const auto profile = trace::parse_trace_file(trace_path, {&parse_warnings});
    print_warnings(parse_warnings);
    const auto index = c.index_path.empty() ? kb::VectorIndex{} : kb::VectorIndex::load(c.index_path);
    if (index.empty()) std::cerr << "warning: knowledge index is empty; diagnosing without references\n";
    llm::Gateway gw(c.provider, backend_for(c));
    diag::Engine engine(gw, index, c.engine, prompts_for(c));
    const auto run = engine.diagnose_trace(profile, out_dir);
    print_warnings(run.warnings);
    std::cout << diag::render_markdown(run.tree.root);
    std::cerr << "run written to " << out_dir << " (" << run.runs.size() << " fragments, "
              << run.tree.merge_count << " merges)\n";
    return 0;
}

int cmd_chat(const service::AppConfig& c, const std::string& run_dir) {
    const auto chat_file = fs::path(run_dir) / "chat.json";
    diag::ChatSession session;
    if (fs::exists(chat_file)) {
        std::ifstream in(chat_file);
        session = diag::session_from_json(nlohmann::json::parse(in));
    } else {
        session = diag::start_session("local", diag::load_final(run_dir));
    }
    const kb::VectorIndex none;
    llm::Gateway gw(c.provider, backend_for(c));
    diag::Engine engine(gw, none, c.engine, prompts_for(c));
    for (const auto& m : session.history)
        std::cout << (m.role == llm::Role::user ? "you> " : "") << m.text << "\n\n";
    std::string line;
    while (std::cout << "you> " << std::flush, std::getline(std::cin, line)) {
        if (line == "/quit" || line == "/exit") break;
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::cout << "\n" << engine.answer_followup(session, line) << "\n\n";
        const auto tmp = chat_file.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            out << diag::to_json(session).dump(2) << "\n";
        }
        fs::rename(tmp, chat_file);
    }
    return 0;
}

int cmd_eval(const service::AppConfig& c, const std::string& manifest, const std::vector<std::string>& tool_dirs,
             const std::string& judge_model, const std::string& out_dir, const std::vector<std::string>& criteria_names,
             std::size_t repetitions, bool no_ground_truth) {
    const auto samples = eval::load_manifest(manifest);
    std::vector<fs::path> dirs(tool_dirs.begin(), tool_dirs.end());
    const auto outputs = eval::load_tool_outputs(dirs, samples);
    std::vector<eval::Criterion> criteria;
    for (const auto& n : criteria_names) {
        const auto cr = eval::criterion_from_name(n);
        if (!cr) throw CLI::ValidationError("--criteria", "unknown criterion " + n);
        criteria.push_back(*cr);
    }
    if (criteria.empty()) criteria.assign(std::begin(eval::kAllCriteria), std::end(eval::kAllCriteria));

    llm::Gateway gw(c.provider, backend_for(c));
    const auto judge = [&](const std::string& prompt) {
        llm::ChatExchange ex;
        ex.model = judge_model;
        ex.temperature = c.provider.temperature;
        ex.messages = {{llm::Role::user, prompt}};
        return gw.chat(ex);
    };
    eval::RankingOptions opt;
    opt.repetitions = repetitions;
    opt.include_ground_truth = !no_ground_truth;
    opt.execution = c.engine.execution;
    opt.max_parallel = c.engine.max_parallel;

    std::vector<eval::RankingOutcome> outcomes;
    nlohmann::ordered_json log = nlohmann::ordered_json::array();
    for (auto cr : criteria) {
        auto part = eval::run_ranking(samples, outputs, cr, judge, opt);
        for (const auto& o : part) {
            log.push_back({{"sample_id", o.sample_id},
                           {"criterion", std::string(eval::criterion_name(o.criterion))},
                           {"repetition", o.repetition},
                           {"valid", o.valid},
                           {"ranks", o.ranks},
                           {"attempts", o.attempts},
                           {"explanation", o.explanation},
                           {"error", o.error}});
            if (!o.valid)
                std::cerr << "warning: invalid judge outcome for " << o.sample_id << " rep " << o.repetition
                          << ": " << o.error << "\n";
        }
        outcomes.insert(outcomes.end(), part.begin(), part.end());
    }
    const auto table = eval::compute_scores(outcomes, samples);
    nlohmann::ordered_json settings{{"judge_model", judge_model},
                                    {"repetitions", repetitions},
                                    {"include_ground_truth", !no_ground_truth},
                                    {"manifest", manifest},
                                    {"samples", samples.size()}};
    eval::write_scores(table, settings, out_dir);
    {
        std::ofstream out(fs::path(out_dir) / "outcomes.json", std::ios::binary | std::ios::trunc);
        out << log.dump(2) << "\n";
    }
    std::cout << table.to_markdown();
    return 0;
}

service::Server* g_server = nullptr;
extern "C" void on_signal(int) {
    if (g_server) g_server->stop();
}

int cmd_serve(service::AppConfig c) {
    service::Server server(c, backend_for(c));
    const int port = server.bind();
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "listening on http://" << c.host << ":" << port << std::endl;
    server.run();
    g_server = nullptr;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"HPC I/O trace diagnosis with retrieval-augmented language models"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_file, "key = value config file")->check(CLI::ExistingFile);
    app.add_flag("--mock", g.mock, "use the offline deterministic model instead of a provider");
    app.add_option("--mock-script", g.mock_script, "JSON rules for the mock provider")->check(CLI::ExistingFile);
    app.add_option("--endpoint", g.endpoint, "OpenAI-compatible base URL");
    app.add_option("--reasoning-model", g.reasoning_model);
    app.add_option("--filter-model", g.filter_model);
    app.add_option("--embedding-model", g.embedding_model);
    app.add_option("--prompts", g.prompts_dir, "directory overriding the builtin prompt templates");
    app.add_option("--threads", g.threads, "parallel fan-out width");
    app.add_flag("--serial", g.serial, "run fan-out stages one at a time");

    std::string trace_path, dump_dir, index_path, out_dir, corpus, run_dir, manifest, judge_model;
    std::vector<std::string> tool_dirs, criteria;
    std::size_t chunk_size = kb::kDefaultChunkSize, overlap = kb::kDefaultChunkOverlap, batch = 16;
    std::size_t repetitions = 4;
    bool no_ground_truth = false;
    int port = -1;
    std::string host, session_dir, static_dir;

    auto* parse = app.add_subcommand("parse", "parse a darshan-parser text trace");
    parse->add_option("trace", trace_path)->required();
    parse->add_option("--dump-csv", dump_dir, "write one CSV per module");

    auto* summarize = app.add_subcommand("summarize", "extract summary fragments");
    summarize->add_option("trace", trace_path)->required();
    summarize->add_option("--dump-json", dump_dir, "write one JSON file per fragment");

    auto* kb_cmd = app.add_subcommand("kb", "knowledge base");
    kb_cmd->require_subcommand(1);
    auto* kb_build = kb_cmd->add_subcommand("build", "chunk and embed a corpus directory");
    kb_build->add_option("corpus", corpus)->required()->check(CLI::ExistingDirectory);
    kb_build->add_option("--index", index_path)->required();
    kb_build->add_option("--chunk-size", chunk_size);
    kb_build->add_option("--overlap", overlap);
    kb_build->add_option("--batch-size", batch);

    auto* diagnose = app.add_subcommand("diagnose", "run the full diagnosis pipeline");
    diagnose->add_option("trace", trace_path)->required();
    diagnose->add_option("--index", index_path, "vector index file");
    diagnose->add_option("--out", out_dir)->required();

    auto* chat = app.add_subcommand("chat", "ask follow-up questions about a diagnosis run");
    chat->add_option("run-dir", run_dir)->required()->check(CLI::ExistingDirectory);

    auto* eval_cmd = app.add_subcommand("eval", "rank tool outputs with a judge model and score them");
    eval_cmd->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--tool-outputs", tool_dirs, "one directory per tool")->required();
    eval_cmd->add_option("--judge-model", judge_model)->required();
    eval_cmd->add_option("--out", out_dir, "results directory")->default_val("eval-results");
    eval_cmd->add_option("--criteria", criteria, "Accuracy, Utility, Interpretability");
    eval_cmd->add_option("--repetitions", repetitions)->default_val(4);
    eval_cmd->add_flag("--no-ground-truth", no_ground_truth, "hide labels from Accuracy prompts");

    auto* serve = app.add_subcommand("serve", "HTTP session service");
    serve->add_option("--port", port);
    serve->add_option("--host", host);
    serve->add_option("--index", index_path);
    serve->add_option("--session-dir", session_dir);
    serve->add_option("--static-dir", static_dir);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (*parse) return cmd_parse(trace_path, dump_dir);
        if (*summarize) return cmd_summarize(trace_path, dump_dir);
        auto c = resolve_config(g);
        if (!index_path.empty()) c.index_path = index_path;
        if (*kb_build) return cmd_kb_build(c, corpus, index_path, chunk_size, overlap, batch);
        if (*diagnose) return cmd_diagnose(c, trace_path, out_dir);
        if (*chat) return cmd_chat(c, run_dir);
        if (*eval_cmd)
            return cmd_eval(c, manifest, tool_dirs, judge_model, out_dir, criteria, repetitions, no_ground_truth);
        if (*serve) {
            if (port >= 0) c.port = port;
            if (!host.empty()) c.host = host;
            if (!session_dir.empty()) c.session_dir = session_dir;
            if (!static_dir.empty()) c.static_dir = static_dir;
            return cmd_serve(std::move(c));
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
