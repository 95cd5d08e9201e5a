#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ragline/eval.hpp"
#include "ragline/mcp_server.hpp"
#include "ragline/model_gateway.hpp"
#include "ragline/pipeline.hpp"
#include "ragline/splitter.hpp"

namespace ragline {

/// Configuration problem detected before any work starts.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Every setting with its default, as nested JSON. Keys are addressed with
/// dots ("pipeline.top_k_retrieve").
nlohmann::json default_config();

/// Environment variable consulted for a dotted key:
/// "pipeline.top_k_retrieve" -> "RAGLINE_PIPELINE_TOP_K_RETRIEVE".
std::string env_name_for(const std::string& dotted_key);

struct ConfigLayers {
    nlohmann::json file = nlohmann::json::object();            // parsed config file
    std::map<std::string, std::string> env;                      // process environment
    std::vector<std::pair<std::string, std::string>> flags;      // dotted key -> raw value
};

/// default < file < environment < flags. Unknown keys and values of the
/// wrong type raise ConfigError.
nlohmann::json merge_config(const ConfigLayers& layers);

struct AppConfig {
    std::filesystem::path index_path;
    std::filesystem::path prompts_path;  // empty: built-in catalog
    SplitterConfig splitter;
    PipelineConfig pipeline;
    GatewayConfig gateway;
    McpServerConfig server;
    std::string bind_address;
    std::size_t mock_dim = 64;
    std::filesystem::path mock_web_fixtures;
    std::size_t ingest_batch_size = 32;
    std::size_t ingest_parallelism = 4;
    std::size_t eval_parallelism = 1;
    std::string eval_report;

    nlohmann::json merged;
};

/// Converts a merged tree into typed settings and validates every module
/// invariant. API keys come from EMBEDDER_API_KEY, LLM_API_KEY,
/// RERANKER_API_KEY and WEBSEARCH_API_KEY in `env`, never from files.
AppConfig build_app_config(const nlohmann::json& merged,
                           const std::map<std::string, std::string>& env);

nlohmann::json load_config_file(const std::filesystem::path& path);

/// Snapshot of the process environment.
std::map<std::string, std::string> process_environment();

/// Catalog from `path`, or the built-in one when empty. Checks that every
/// template the pipeline renders is present.
std::shared_ptr<const PromptCatalog> load_prompts(const std::filesystem::path& path);

struct IngestSummary {
    std::size_t docs = 0;
    std::size_t chunks = 0;
    std::size_t skipped = 0;
};

class IngestError : public Error {
public:
    using Error::Error;
};

/// Loads every *.md below `dir` (sorted, recursive), splits, embeds in
/// batches and upserts. Document ids are paths relative to `dir`, so
/// re-ingesting replaces earlier chunks of the same files. Unreadable or
/// empty files are skipped; an embedder failure aborts with IngestError
/// before anything is written to the index.
IngestSummary ingest_directory(const std::filesystem::path& dir, const std::string& partition,
                               const SplitterConfig& splitter, Embedder& embedder,
                               HybridIndex& index, std::size_t batch_size = 32,
                               std::size_t parallelism = 4);

/// Gateway for the configuration: mocks (with optional web fixtures) or
/// the HTTP backends.
ModelGateway make_gateway(const AppConfig& cfg, bool mock, std::shared_ptr<CallLog> log = nullptr);

}  // namespace ragline
