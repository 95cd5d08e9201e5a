#include "ragline/app.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

extern char** environ;

namespace ragline {

using nlohmann::json;

json default_config() {
    CacheConfig cache;
    auto service = [] {
        return json{{"base_url", ""},
                    {"model", ""},
                    {"timeout_seconds", 30.0},
                    {"retry_count", 2},
                    {"backoff_ms", 200}};
    };
    json reranker = service();
    RerankShape shape;
    reranker["path"] = shape.path;
    reranker["query_field"] = shape.query_field;
    reranker["documents_field"] = shape.documents_field;
    reranker["results_field"] = shape.results_field;
    reranker["index_field"] = shape.index_field;
    reranker["score_field"] = shape.score_field;
    json llm = service();
    llm["temperature"] = 0.0;

    return json{
        {"index", {{"path", "ragline_index.json"}}},
        {"prompts", {{"path", ""}}},
        {"splitter", {{"max_chunk_chars", 1500}, {"split_heading_levels", {2, 3}}}},
        {"bm25", {{"k1", 1.2}, {"b", 0.75}}},
        {"pipeline",
         {{"top_k_retrieve", 20},
          {"top_n_rerank", 5},
          {"max_hops", 2},
          {"use_cache", true},
          {"partition", "default"},
          {"max_subs", 4},
          {"web_top_k", 5},
          {"rrf_k", 60},
          {"boost_rules", json::array()}}},
        {"crag", {{"upper_threshold", 0.7}, {"lower_threshold", 0.3}, {"web_top_k", 5}}},
        {"cache",
         {{"threshold", cache.default_threshold},
          {"fuzzy_threshold", cache.fuzzy_threshold},
          {"ttl_seconds", cache.default_ttl_seconds},
          {"max_entries", cache.max_entries},
          {"fuzzy_markers", cache.fuzzy_markers}}},
        {"embedder", service()},
        {"llm", llm},
        {"reranker", reranker},
        {"websearch", service()},
        {"mock", {{"dim", 64}, {"web_fixtures", ""}}},
        {"server",
         {{"transport", "stdio"}, {"bind", "127.0.0.1:8765"}, {"protocol_version", "2025-06-18"}}},
        {"ingest", {{"batch_size", 32}, {"parallelism", 4}}},
        {"eval", {{"parallelism", 1}, {"report", "eval_report"}}}};
}

std::string env_name_for(const std::string& dotted_key) {
    std::string name = "RAGLINE_";
    for (char c : dotted_key) {
        name += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
    return name;
}

namespace {

// Leaves of the default tree, keyed by dotted path.
void flatten(const json& node, const std::string& prefix, std::map<std::string, json>& out) {
    for (auto it = node.begin(); it != node.end(); ++it) {
        std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (it->is_object()) {
            flatten(*it, key, out);
        } else {
            out[key] = *it;
        }
    }
}

bool same_kind(const json& expected, const json& value) {
    if (expected.is_boolean()) return value.is_boolean();
    if (expected.is_number_integer()) return value.is_number_integer();
    if (expected.is_number()) return value.is_number();
    if (expected.is_string()) return value.is_string();
    if (expected.is_array()) return value.is_array();
    return false;
}

json parse_raw(const std::string& key, const json& expected, const std::string& raw,
               const std::string& origin) {
    auto fail = [&] {
        return ConfigError(origin + ": invalid value '" + raw + "' for " + key);
    };
    if (expected.is_string()) return raw;
    if (expected.is_boolean()) {
        std::string v = to_lower(trim(raw));
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw fail();
    }
    std::string text(trim(raw));
    if (expected.is_number_integer()) {
        std::size_t used = 0;
        long long v = 0;
        try {
            v = std::stoll(text, &used);
        } catch (const std::exception&) {
            throw fail();
        }
        if (used != text.size()) throw fail();
        return v;
    }
    if (expected.is_number()) {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(text, &used);
        } catch (const std::exception&) {
            throw fail();
        }
        if (used != text.size()) throw fail();
        return v;
    }
    json parsed = json::parse(text, nullptr, false);
    if (parsed.is_discarded() || !parsed.is_array()) throw fail();
    return parsed;
}

void set_dotted(json& tree, const std::string& key, json value) {
    json* node = &tree;
    std::size_t start = 0;
    for (;;) {
        std::size_t dot = key.find('.', start);
        std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (dot == std::string::npos) {
            (*node)[part] = std::move(value);
            return;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

const json& at_dotted(const json& tree, const std::string& key) {
    return tree.at(json::json_pointer("/" + [&] {
        std::string p = key;
        std::replace(p.begin(), p.end(), '.', '/');
        return p;
    }()));
}

template <typename T>
T non_negative(const json& tree, const std::string& key) {
    long long v = at_dotted(tree, key).get<long long>();
    if (v < 0) throw ConfigError(key + " must not be negative");
    return static_cast<T>(v);
}

ServiceConfig service_config(const json& tree, const std::string& name,
                             const std::map<std::string, std::string>& env,
                             const std::string& key_var) {
    ServiceConfig s;
    s.base_url = at_dotted(tree, name + ".base_url").get<std::string>();
    s.model_name = at_dotted(tree, name + ".model").get<std::string>();
    s.timeout_seconds = at_dotted(tree, name + ".timeout_seconds").get<double>();
    s.retry_count = static_cast<int>(non_negative<long long>(tree, name + ".retry_count"));
    s.backoff = std::chrono::milliseconds(non_negative<long long>(tree, name + ".backoff_ms"));
    if (auto it = env.find(key_var); it != env.end()) s.api_key = it->second;
    if (!(s.timeout_seconds > 0)) throw ConfigError(name + ".timeout_seconds must be positive");
    return s;
}

}  // namespace

json merge_config(const ConfigLayers& layers) {
    json merged = default_config();
    std::map<std::string, json> known;
    flatten(merged, "", known);

    if (!layers.file.is_object()) throw ConfigError("config file must hold a JSON object");
    std::map<std::string, json> from_file;
    flatten(layers.file, "", from_file);
    for (auto& [key, value] : from_file) {
        auto it = known.find(key);
        if (it == known.end()) throw ConfigError("config file: unknown key " + key);
        if (!same_kind(it->second, value)) {
            throw ConfigError("config file: wrong type for " + key);
        }
        set_dotted(merged, key, value);
    }
    for (const auto& [key, expected] : known) {
        auto it = layers.env.find(env_name_for(key));
        if (it == layers.env.end()) continue;
        set_dotted(merged, key, parse_raw(key, expected, it->second, it->first));
    }
    for (const auto& [key, raw] : layers.flags) {
        auto it = known.find(key);
        if (it == known.end()) throw ConfigError("unknown setting " + key);
        set_dotted(merged, key, parse_raw(key, it->second, raw, "flag"));
    }
    return merged;
}

AppConfig build_app_config(const json& merged, const std::map<std::string, std::string>& env) {
    AppConfig cfg;
    cfg.merged = merged;
    try {
        cfg.index_path = at_dotted(merged, "index.path").get<std::string>();
        if (cfg.index_path.empty()) throw ConfigError("index.path must not be empty");
        cfg.prompts_path = at_dotted(merged, "prompts.path").get<std::string>();

        cfg.splitter.max_chunk_chars = non_negative<std::size_t>(merged, "splitter.max_chunk_chars");
        cfg.splitter.split_heading_levels.clear();
        for (const auto& level : at_dotted(merged, "splitter.split_heading_levels")) {
            if (!level.is_number_integer()) throw ConfigError("split_heading_levels must be integers");
            cfg.splitter.split_heading_levels.insert(level.get<int>());
        }

        auto& p = cfg.pipeline;
        p.top_k_retrieve = non_negative<std::size_t>(merged, "pipeline.top_k_retrieve");
        p.top_n_rerank = non_negative<std::size_t>(merged, "pipeline.top_n_rerank");
        p.max_hops = non_negative<int>(merged, "pipeline.max_hops");
        p.use_cache = at_dotted(merged, "pipeline.use_cache").get<bool>();
        p.partition_key = at_dotted(merged, "pipeline.partition").get<std::string>();
        if (p.partition_key.empty()) throw ConfigError("pipeline.partition must not be empty");
        p.max_subs = non_negative<std::size_t>(merged, "pipeline.max_subs");
        p.web_top_k = non_negative<std::size_t>(merged, "pipeline.web_top_k");
        p.rrf.k = non_negative<int>(merged, "pipeline.rrf_k");
        for (const auto& rule : at_dotted(merged, "pipeline.boost_rules")) {
            if (!rule.is_object() || !rule.contains("key") || !rule.contains("value")) {
                throw ConfigError("boost rules need \"key\" and \"value\"");
            }
            BoostRule r;
            r.metadata_key = rule.at("key").get<std::string>();
            r.metadata_value = rule.at("value").get<std::string>();
            r.factor = rule.value("factor", 1.2);
            p.boost_rules.push_back(std::move(r));
        }
        p.crag.upper_threshold = at_dotted(merged, "crag.upper_threshold").get<double>();
        p.crag.lower_threshold = at_dotted(merged, "crag.lower_threshold").get<double>();
        p.crag.web_top_k = non_negative<std::size_t>(merged, "crag.web_top_k");
        p.cache.default_threshold = at_dotted(merged, "cache.threshold").get<double>();
        p.cache.fuzzy_threshold = at_dotted(merged, "cache.fuzzy_threshold").get<double>();
        p.cache.default_ttl_seconds = at_dotted(merged, "cache.ttl_seconds").get<std::int64_t>();
        p.cache.max_entries = non_negative<std::size_t>(merged, "cache.max_entries");
        p.cache.fuzzy_markers = at_dotted(merged, "cache.fuzzy_markers").get<std::vector<std::string>>();

        auto& g = cfg.gateway;
        g.embedder = service_config(merged, "embedder", env, "EMBEDDER_API_KEY");
        g.llm = service_config(merged, "llm", env, "LLM_API_KEY");
        g.reranker = service_config(merged, "reranker", env, "RERANKER_API_KEY");
        g.websearch = service_config(merged, "websearch", env, "WEBSEARCH_API_KEY");
        g.temperature = at_dotted(merged, "llm.temperature").get<double>();
        g.rerank_shape.path = at_dotted(merged, "reranker.path").get<std::string>();
        g.rerank_shape.query_field = at_dotted(merged, "reranker.query_field").get<std::string>();
        g.rerank_shape.documents_field = at_dotted(merged, "reranker.documents_field").get<std::string>();
        g.rerank_shape.results_field = at_dotted(merged, "reranker.results_field").get<std::string>();
        g.rerank_shape.index_field = at_dotted(merged, "reranker.index_field").get<std::string>();
        g.rerank_shape.score_field = at_dotted(merged, "reranker.score_field").get<std::string>();

        cfg.mock_dim = non_negative<std::size_t>(merged, "mock.dim");
        if (cfg.mock_dim == 0) throw ConfigError("mock.dim must be at least 1");
        cfg.mock_web_fixtures = at_dotted(merged, "mock.web_fixtures").get<std::string>();
        cfg.bind_address = at_dotted(merged, "server.bind").get<std::string>();
        cfg.server.protocol_version = at_dotted(merged, "server.protocol_version").get<std::string>();
        std::string transport = at_dotted(merged, "server.transport").get<std::string>();
        if (transport != "stdio" && transport != "http") {
            throw ConfigError("server.transport must be stdio or http");
        }
        cfg.ingest_batch_size = non_negative<std::size_t>(merged, "ingest.batch_size");
        cfg.ingest_parallelism = non_negative<std::size_t>(merged, "ingest.parallelism");
        cfg.eval_parallelism = non_negative<std::size_t>(merged, "eval.parallelism");
        cfg.eval_report = at_dotted(merged, "eval.report").get<std::string>();
        if (cfg.ingest_batch_size == 0 || cfg.ingest_parallelism == 0 || cfg.eval_parallelism == 0) {
            throw ConfigError("batch size and parallelism settings must be at least 1");
        }

        cfg.splitter.validate();
        p.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
    return cfg;
}

json load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file " + path.string() + " is not valid JSON");
    return j;
}

std::map<std::string, std::string> process_environment() {
    std::map<std::string, std::string> env;
    for (char** e = environ; e && *e; ++e) {
        std::string_view kv(*e);
        auto eq = kv.find('=');
        if (eq == std::string_view::npos) continue;
        env.emplace(std::string(kv.substr(0, eq)), std::string(kv.substr(eq + 1)));
    }
    return env;
}

std::shared_ptr<const PromptCatalog> load_prompts(const std::filesystem::path& path) {
    std::shared_ptr<PromptCatalog> catalog;
    try {
        catalog = std::make_shared<PromptCatalog>(path.empty() ? PromptCatalog::defaults()
                                                               : PromptCatalog::load(path));
    } catch (const std::exception& e) {
        throw ConfigError(std::string(e.what()) + " (" + path.string() + ")");
    }
    for (const char* task : {"route", "rewrite", "decompose", "hyde", "evaluate", "answer", "judge"}) {
        for (const char* part : {".system", ".user"}) {
            std::string name = std::string(task) + part;
            if (!catalog->contains(name)) {
                throw ConfigError("prompt catalog " + (path.empty() ? std::string("(built-in)") : path.string()) +
                                  " lacks [" + name + "]");
            }
        }
    }
    return catalog;
}

IngestSummary ingest_directory(const std::filesystem::path& dir, const std::string& partition,
                               const SplitterConfig& splitter, Embedder& embedder,
                               HybridIndex& index, std::size_t batch_size,
                               std::size_t parallelism) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IngestError("input directory " + dir.string() + " does not exist");
    if (partition.empty()) throw PreconditionError("partition must not be empty");
    if (batch_size == 0 || parallelism == 0) {
        throw PreconditionError("batch size and parallelism must be at least 1");
    }
    splitter.validate();

    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".md") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    struct Prepared {
        std::string doc_id;
        bool skipped = false;
        std::vector<std::pair<Chunk, EmbeddingVector>> items;
        std::string error;
    };
    std::vector<Prepared> prepared(files.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};

    auto work = [&] {
        for (std::size_t i = next++; i < files.size() && !failed; i = next++) {
            Prepared& out = prepared[i];
            out.doc_id = fs::relative(files[i], dir).generic_string();
            std::ifstream in(files[i], std::ios::binary);
            std::stringstream buf;
            if (in) buf << in.rdbuf();
            if (!in || in.bad()) {
                spdlog::warn("cannot read {}, skipped", files[i].string());
                out.skipped = true;
                continue;
            }
            std::vector<Chunk> chunks;
            try {
                chunks = split_document(make_document(out.doc_id, out.doc_id, buf.str(), partition),
                                        splitter);
            } catch (const EmptyDocumentError&) {
                spdlog::warn("{} has no content, skipped", out.doc_id);
                out.skipped = true;
                continue;
            }
            try {
                for (std::size_t b = 0; b < chunks.size(); b += batch_size) {
                    std::vector<std::string> texts;
                    for (std::size_t c = b; c < std::min(chunks.size(), b + batch_size); ++c) {
                        texts.push_back(chunks[c].content);
                    }
                    auto vectors = embedder.embed(texts);
                    if (vectors.size() != texts.size()) {
                        throw GatewayError("embedder", "returned " + std::to_string(vectors.size()) +
                                                           " vectors for " +
                                                           std::to_string(texts.size()) + " texts");
                    }
                    for (std::size_t c = 0; c < vectors.size(); ++c) {
                        out.items.emplace_back(std::move(chunks[b + c]), std::move(vectors[c]));
                    }
                }
            } catch (const std::exception& e) {
                out.error = e.what();
                failed = true;
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(parallelism, std::max<std::size_t>(files.size(), 1)); ++w) {
        pool.emplace_back(work);
    }
    for (auto& t : pool) t.join();

    if (failed) {
        std::size_t embedded = 0;
        std::string first_error;
        std::string failed_doc;
        for (const auto& p : prepared) {
            if (!p.error.empty() && first_error.empty()) {
                first_error = p.error;
                failed_doc = p.doc_id;
            }
            if (p.error.empty() && !p.items.empty()) ++embedded;
        }
        throw IngestError("embedding failed on " + failed_doc + ": " + first_error + " (" +
                          std::to_string(embedded) + " of " + std::to_string(files.size()) +
                          " files embedded before the failure; index left unchanged)");
    }

    IngestSummary summary;
    for (auto& p : prepared) {
        if (p.skipped) {
            ++summary.skipped;
            continue;
        }
        index.delete_document(p.doc_id);
        summary.chunks += p.items.size();
        index.upsert_chunks(std::move(p.items));
        ++summary.docs;
    }
    return summary;
}

ModelGateway make_gateway(const AppConfig& cfg, bool mock, std::shared_ptr<CallLog> log) {
    if (!mock) {
        try {
            return make_http_gateway(cfg.gateway);
        } catch (const PreconditionError& e) {
            throw ConfigError(std::string(e.what()) + " (or pass --mock)");
        }
    }
    auto gateway = make_mock_gateway(cfg.mock_dim, std::move(log));
    if (!cfg.mock_web_fixtures.empty()) {
        std::ifstream in(cfg.mock_web_fixtures);
        if (!in) throw ConfigError("cannot read web fixtures " + cfg.mock_web_fixtures.string());
        std::stringstream buf;
        buf << in.rdbuf();
        std::static_pointer_cast<MockWebSearch>(gateway.web)->load_fixtures(buf.str());
    }
    return gateway;
}

}  // namespace ragline
