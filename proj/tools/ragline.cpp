// ragline: ingest Markdown corpora, serve the MCP endpoint, run one-off
// queries and evaluations.

#include <pthread.h>
#include <signal.h>
#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "ragline/app.hpp"

namespace fs = std::filesystem;
using namespace ragline;

namespace {

struct Options {
    std::string config_path;
    bool mock = false;
    bool verbose = false;
    std::vector<std::string> sets;
    std::vector<std::pair<std::string, std::string>> flags;

    std::string input_dir;
    std::string text;
    std::string dataset;
    bool search_only = false;
    bool no_cache = false;
    bool json_output = false;
};

AppConfig resolve(const Options& opt) {
    ConfigLayers layers;
    if (!opt.config_path.empty()) layers.file = load_config_file(opt.config_path);
    layers.env = process_environment();
    for (const auto& s : opt.sets) {
        auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects KEY=VALUE, got " + s);
        layers.flags.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& f : opt.flags) layers.flags.push_back(f);
    return build_app_config(merge_config(layers), layers.env);
}

std::shared_ptr<HybridIndex> load_index(const AppConfig& cfg) {
    if (!fs::exists(cfg.index_path)) {
        throw StartupError("no index snapshot at " + cfg.index_path.string() +
                           "; build one first with `ragline ingest --input DIR`");
    }
    return std::make_shared<HybridIndex>(HybridIndex::load(cfg.index_path));
}

std::shared_ptr<Pipeline> make_pipeline(const AppConfig& cfg, bool mock) {
    auto prompts = load_prompts(cfg.prompts_path);
    auto gateway = make_gateway(cfg, mock);
    auto index = load_index(cfg);
    auto cache = std::make_shared<SemanticCache>(cfg.pipeline.cache);
    return std::make_shared<Pipeline>(index, cache, gateway, prompts, cfg.pipeline);
}

int cmd_ingest(const Options& opt, const AppConfig& cfg) {
    auto gateway = make_gateway(cfg, opt.mock);
    HybridIndex index = fs::exists(cfg.index_path)
                            ? HybridIndex::load(cfg.index_path)
                            : HybridIndex(Bm25Params{cfg.merged["bm25"]["k1"].get<double>(),
                                                     cfg.merged["bm25"]["b"].get<double>()});
    auto summary = ingest_directory(opt.input_dir, cfg.pipeline.partition_key, cfg.splitter,
                                    *gateway.embedder, index, cfg.ingest_batch_size,
                                    cfg.ingest_parallelism);
    index.save(cfg.index_path);
    std::cout << "docs=" << summary.docs << " chunks=" << summary.chunks
              << " skipped=" << summary.skipped << " partition=" << cfg.pipeline.partition_key
              << " index=" << cfg.index_path.string() << "\n";
    return 0;
}

void print_timings(const std::map<std::string, double>& timings) {
    std::cout << "timings_ms:\n";
    for (const auto& [stage, ms] : timings) {
        std::cout << "  " << stage << ": " << std::fixed << std::setprecision(3) << ms << "\n";
    }
}

int cmd_query(const Options& opt, const AppConfig& cfg) {
    auto pipeline = make_pipeline(cfg, opt.mock);
    if (opt.search_only) {
        auto hits = pipeline->search(opt.text, cfg.pipeline);
        if (opt.json_output) {
            nlohmann::json out = nlohmann::json::array();
            for (const auto& h : hits) {
                out.push_back({{"id", h.id()}, {"score", h.score}, {"doc_id", h.chunk->doc_id},
                               {"content", h.chunk->content}});
            }
            std::cout << out.dump(2) << "\n";
            return 0;
        }
        if (hits.empty()) std::cout << "no results\n";
        for (std::size_t i = 0; i < hits.size(); ++i) {
            std::cout << i + 1 << ". " << hits[i].id() << "  score=" << std::setprecision(6)
                      << hits[i].score << "  doc=" << hits[i].chunk->doc_id << "\n   "
                      << hits[i].chunk->content << "\n";
        }
        return 0;
    }

    auto r = pipeline->chat(opt.text, cfg.pipeline);
    if (opt.json_output) {
        nlohmann::json sources = nlohmann::json::array();
        for (const auto& s : r.sources) sources.push_back({{"id", s.id}, {"score", s.score}, {"web", s.web}});
        nlohmann::json out{{"answer", r.answer},
                           {"sources", sources},
                           {"route", to_string(r.route)},
                           {"cache_hit", r.cache_hit},
                           {"hops_used", r.hops_used},
                           {"verdict", r.verdict ? nlohmann::json(std::string(to_string(*r.verdict)))
                                                 : nlohmann::json(nullptr)},
                           {"timings_ms", r.timings_ms}};
        std::cout << out.dump(2) << "\n";
        return 0;
    }
    std::cout << "answer: " << r.answer << "\n"
              << "route: " << to_string(r.route) << "\n"
              << "cache_hit: " << (r.cache_hit ? "true" : "false") << "\n"
              << "hops_used: " << r.hops_used << "\n"
              << "verdict: " << (r.verdict ? std::string(to_string(*r.verdict)) : "none") << "\n"
              << "sources:\n";
    for (const auto& s : r.sources) {
        std::cout << "  - " << s.id << " (score " << std::setprecision(6) << s.score << ")\n";
    }
    print_timings(r.timings_ms);
    return 0;
}

int cmd_eval(const Options& opt, const AppConfig& cfg) {
    auto pipeline = make_pipeline(cfg, opt.mock);
    EvalOptions eo;
    eo.no_cache = opt.no_cache;
    eo.parallelism = cfg.eval_parallelism;
    eo.prompts = load_prompts(cfg.prompts_path);
    if (!opt.mock) eo.judge = pipeline->gateway().generator;
    auto report = run_eval(fs::path(opt.dataset), *pipeline, cfg.pipeline, eo);
    write_report(report, cfg.eval_report);
    std::cout << summary_text(report) << "\nreport: " << cfg.eval_report << ".jsonl, "
              << cfg.eval_report << ".txt\n";
    return 0;
}

// Signals are blocked in every thread; this one waits for them.
class SignalWatcher {
public:
    template <typename F>
    explicit SignalWatcher(F on_signal) {
        sigemptyset(&set_);
        sigaddset(&set_, SIGINT);
        sigaddset(&set_, SIGTERM);
        sigaddset(&set_, SIGUSR1);
        pthread_sigmask(SIG_BLOCK, &set_, nullptr);
        thread_ = std::thread([this, on_signal] {
            int sig = 0;
            sigwait(&set_, &sig);
            if (sig != SIGUSR1) on_signal();
        });
    }
    ~SignalWatcher() {
        pthread_kill(thread_.native_handle(), SIGUSR1);
        thread_.join();
    }

private:
    sigset_t set_{};
    std::thread thread_;
};

int cmd_serve(const Options& opt, const AppConfig& cfg) {
    std::string transport = cfg.merged["server"]["transport"].get<std::string>();
    auto pipeline = make_pipeline(cfg, opt.mock);
    McpServer server(pipeline, cfg.server);

    std::atomic<bool> stop{false};
    if (transport == "http") {
        HttpTransport http(server);
        int port = http.bind(cfg.bind_address);
        SignalWatcher watcher([&] {
            stop = true;
            http.stop();
        });
        spdlog::info("serving JSON-RPC on http port {}", port);
        std::cerr << "listening on " << cfg.bind_address << " (port " << port << ")" << std::endl;
        http.run();
        return 0;
    }
    SignalWatcher watcher([&] { stop = true; });
    server.serve_fd(STDIN_FILENO, STDOUT_FILENO, stop);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("ragline"));
    spdlog::set_level(spdlog::level::warn);

    Options opt;
    CLI::App app{"Retrieval-augmented generation engine with an MCP tool server"};
    app.require_subcommand(1);
    app.add_option("--config", opt.config_path, "JSON configuration file");
    app.add_flag("--mock", opt.mock, "Use deterministic offline model mocks");
    app.add_flag("-v,--verbose", opt.verbose, "Log progress to stderr");
    app.add_option("--set", opt.sets, "Override a setting, e.g. --set pipeline.top_k_retrieve=10");
    app.add_option_function<std::string>(
        "--index", [&](const std::string& v) { opt.flags.emplace_back("index.path", v); },
        "Index snapshot path");
    app.add_option_function<std::string>(
        "--web-fixtures", [&](const std::string& v) { opt.flags.emplace_back("mock.web_fixtures", v); },
        "Canned web search results for --mock");

    auto partition_option = [&](CLI::App* sub) {
        sub->add_option_function<std::string>(
            "--partition", [&](const std::string& v) { opt.flags.emplace_back("pipeline.partition", v); },
            "Partition key");
    };

    auto* ingest = app.add_subcommand("ingest", "Split, embed and index a directory of Markdown");
    ingest->add_option("--input", opt.input_dir, "Directory to ingest")->required();
    partition_option(ingest);

    auto* serve = app.add_subcommand("serve", "Expose rag_chat and rag_search over JSON-RPC");
    serve->add_option_function<std::string>(
             "--transport",
             [&](const std::string& v) { opt.flags.emplace_back("server.transport", v); },
             "stdio or http")
        ->check(CLI::IsMember({"stdio", "http"}));
    serve->add_option_function<std::string>(
        "--bind", [&](const std::string& v) { opt.flags.emplace_back("server.bind", v); },
        "host:port for http");

    auto* query = app.add_subcommand("query", "Answer or search once");
    query->add_option("--text", opt.text, "Query text")->required();
    query->add_flag("--search-only", opt.search_only, "Retrieve and rerank without generation");
    query->add_flag("--no-cache", opt.no_cache, "Bypass the semantic cache");
    query->add_flag("--json", opt.json_output, "Print JSON");
    partition_option(query);

    auto* eval = app.add_subcommand("eval", "Score the pipeline on a JSONL dataset");
    eval->add_option("--dataset", opt.dataset, "JSONL dataset")->required();
    eval->add_flag("--no-cache", opt.no_cache, "Bypass the semantic cache");
    eval->add_option_function<std::string>(
        "--report", [&](const std::string& v) { opt.flags.emplace_back("eval.report", v); },
        "Report path without extension");
    partition_option(eval);

    auto* config = app.add_subcommand("config", "Print the effective configuration");

    CLI11_PARSE(app, argc, argv);
    if (opt.verbose) spdlog::set_level(spdlog::level::info);
    if (opt.no_cache) opt.flags.emplace_back("pipeline.use_cache", "false");

    try {
        AppConfig cfg = resolve(opt);
        if (*ingest) return cmd_ingest(opt, cfg);
        if (*serve) return cmd_serve(opt, cfg);
        if (*query) return cmd_query(opt, cfg);
        if (*eval) return cmd_eval(opt, cfg);
        if (*config) {
            std::cout << cfg.merged.dump(2) << "\n";
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
