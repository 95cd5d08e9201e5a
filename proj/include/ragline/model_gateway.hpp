#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ragline/core.hpp"

namespace ragline {

/// Failure talking to a model service; names the service.
class GatewayError : public Error {
public:
    GatewayError(std::string service, const std::string& message)
        : Error(service + ": " + message), service_(std::move(service)) {}
    const std::string& service() const noexcept { return service_; }

private:
    std::string service_;
};

struct WebResult {
    std::string title;
    std::string url;
    std::string snippet;
    double score = 0.0;
};

// ---------------------------------------------------------------------------
// Service contracts
// ---------------------------------------------------------------------------

class Embedder {
public:
    virtual ~Embedder() = default;
    /// One vector per input, all of the same dimension.
    virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) = 0;
    EmbeddingVector embed_one(const std::string& text);
};

class Generator {
public:
    virtual ~Generator() = default;
    virtual std::string complete(const std::string& prompt, const std::string& system) = 0;
};

class Reranker {
public:
    virtual ~Reranker() = default;
    /// One finite score per passage; higher is more relevant.
    virtual std::vector<double> rerank_scores(const std::string& query,
                                              const std::vector<std::string>& passages) = 0;
};

class WebSearch {
public:
    virtual ~WebSearch() = default;
    virtual std::vector<WebResult> web_search(const std::string& query, std::size_t top_k) = 0;
};

/// The four services a pipeline talks to.
struct ModelGateway {
    std::shared_ptr<Embedder> embedder;
    std::shared_ptr<Generator> generator;
    std::shared_ptr<Reranker> reranker;
    std::shared_ptr<WebSearch> web;
};

// ---------------------------------------------------------------------------
// Call log shared by the mocks
// ---------------------------------------------------------------------------

struct CallRecord {
    std::string service;    // "embedder", "generator", "reranker", "web"
    std::string operation;  // directive for generator calls, e.g. "route"
};

class CallLog {
public:
    void record(std::string service, std::string operation);
    std::vector<CallRecord> snapshot() const;
    std::size_t count(std::string_view service, std::string_view operation = {}) const;
    void clear();

private:
    mutable std::mutex mutex_;
    std::vector<CallRecord> records_;
};

// ---------------------------------------------------------------------------
// Deterministic mocks
// ---------------------------------------------------------------------------

/// Feature-hashed bag of tokens with hashed signs, L2-normalised.
class MockEmbedder : public Embedder {
public:
    explicit MockEmbedder(std::size_t dim = 64, std::shared_ptr<CallLog> log = nullptr);
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
    std::size_t dim() const noexcept { return dim_; }

    /// The pure hashing function behind embed().
    static EmbeddingVector hash_embed(std::string_view text, std::size_t dim);

private:
    std::size_t dim_;
    std::shared_ptr<CallLog> log_;
};

/// Fields the scripted generator pulls out of a rendered prompt.
struct PromptFields {
    std::string directive;
    std::string query;
    std::string passage;
    std::vector<std::string> contexts;
    std::string answer;
};

/// Extracts the `[[directive]]` tag from the system prompt and the labelled
/// sections ("Query:", "Passage:", "Answer:", context blocks) from the user
/// prompt.
PromptFields parse_prompt_fields(const std::string& prompt, const std::string& system);

/// Scripted responder keyed by the `[[directive]]` tag in the system prompt.
///
/// Default rules:
///   route     - "external" for time-sensitive wording, "complex" for
///               comparative or explanatory wording, otherwise "simple"
///   rewrite   - the query's content words plus connectives, lowercased
///   decompose - "compare X and Y" / "X vs Y" -> "features of X\nfeatures of Y"
///   hyde      - a templated passage that mentions every content word
///   evaluate  - 0.9 when the passage covers >= 2 (or all) query content
///               words, 0.5 for exactly one, 0.1 for none
///   answer    - first sentence of the first context block, or a refusal
///   judge     - token overlap of answer and contexts
/// A script installed for a directive runs first; returning nullopt falls
/// through to the default rule.
class MockGenerator : public Generator {
public:
    using Script = std::function<std::optional<std::string>(const PromptFields&)>;

    explicit MockGenerator(std::shared_ptr<CallLog> log = nullptr);
    std::string complete(const std::string& prompt, const std::string& system) override;
    void script(const std::string& directive, Script fn);

    static constexpr std::string_view kRefusal =
        "I don't know based on the provided context.";

private:
    std::shared_ptr<CallLog> log_;
    mutable std::mutex mutex_;
    std::map<std::string, Script> scripts_;
};

/// Token-overlap F1 between query and passage.
class MockReranker : public Reranker {
public:
    explicit MockReranker(std::shared_ptr<CallLog> log = nullptr);
    std::vector<double> rerank_scores(const std::string& query,
                                      const std::vector<std::string>& passages) override;

private:
    std::shared_ptr<CallLog> log_;
};

/// Canned results keyed by a phrase; a query matches when the phrase's
/// tokens occur contiguously in the query's tokens. First match wins.
class MockWebSearch : public WebSearch {
public:
    explicit MockWebSearch(std::shared_ptr<CallLog> log = nullptr);
    void add_fixture(const std::string& phrase, std::vector<WebResult> results);
    std::vector<WebResult> web_search(const std::string& query, std::size_t top_k) override;

    /// Loads {"phrase": [{"title","url","snippet","score"}...], ...}.
    void load_fixtures(const std::string& json_text);

    /// When set, every call throws GatewayError (for degradation tests).
    void set_failing(bool failing);

private:
    std::shared_ptr<CallLog> log_;
    mutable std::mutex mutex_;
    std::vector<std::pair<std::vector<std::string>, std::vector<WebResult>>> fixtures_;
    bool failing_ = false;
};

ModelGateway make_mock_gateway(std::size_t dim = 64, std::shared_ptr<CallLog> log = nullptr);

// ---------------------------------------------------------------------------
// HTTP backends
// ---------------------------------------------------------------------------

struct ServiceConfig {
    std::string base_url;  // e.g. http://127.0.0.1:8000/v1
    std::string api_key;   // filled from the environment, never from files
    std::string model_name;
    double timeout_seconds = 30.0;
    int retry_count = 2;
    std::chrono::milliseconds backoff{200};

    void validate(std::string_view service) const;
};

/// JSON shape of a rerank endpoint. The default matches the common
/// {query, documents} -> {results: [{index, relevance_score}]} form.
struct RerankShape {
    std::string path = "/rerank";
    std::string query_field = "query";
    std::string documents_field = "documents";
    std::string results_field = "results";
    std::string index_field = "index";
    std::string score_field = "relevance_score";
};

struct GatewayConfig {
    ServiceConfig embedder;
    ServiceConfig llm;
    ServiceConfig reranker;
    ServiceConfig websearch;
    RerankShape rerank_shape;
    double temperature = 0.0;
};

/// Posts JSON and retries transport failures, HTTP 429 and 5xx with
/// exponential backoff. The (retry_count + 1)-th failure, or any other
/// non-2xx status, raises GatewayError.
class JsonHttpClient {
public:
    JsonHttpClient(std::string service, ServiceConfig cfg);
    std::string post(const std::string& path, const std::string& body) const;
    const ServiceConfig& config() const noexcept { return cfg_; }

private:
    std::string service_;
    ServiceConfig cfg_;
    std::string scheme_host_port_;
    std::string path_prefix_;
};

/// OpenAI-compatible POST {base}/embeddings.
class HttpEmbedder : public Embedder {
public:
    explicit HttpEmbedder(ServiceConfig cfg);
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;

private:
    JsonHttpClient client_;
};

/// OpenAI-compatible POST {base}/chat/completions.
class HttpGenerator : public Generator {
public:
    HttpGenerator(ServiceConfig cfg, double temperature = 0.0);
    std::string complete(const std::string& prompt, const std::string& system) override;

private:
    JsonHttpClient client_;
    double temperature_;
};

class HttpReranker : public Reranker {
public:
    HttpReranker(ServiceConfig cfg, RerankShape shape = {});
    std::vector<double> rerank_scores(const std::string& query,
                                      const std::vector<std::string>& passages) override;

private:
    JsonHttpClient client_;
    RerankShape shape_;
};

/// Tavily-style POST {base}/search -> {results: [{title, url, content, score}]}.
class HttpWebSearch : public WebSearch {
public:
    explicit HttpWebSearch(ServiceConfig cfg);
    std::vector<WebResult> web_search(const std::string& query, std::size_t top_k) override;

private:
    JsonHttpClient client_;
};

ModelGateway make_http_gateway(const GatewayConfig& cfg);

}  // namespace ragline
