#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ragline/core.hpp"
#include "ragline/model_gateway.hpp"
#include "ragline/post_retrieval.hpp"
#include "ragline/pre_retrieval.hpp"
#include "ragline/prompts.hpp"
#include "ragline/retrieval.hpp"
#include "ragline/semantic_cache.hpp"

namespace ragline {

/// A failure inside one pipeline stage; `stage()` names it ("embed",
/// "route", "retrieve", "rerank", "crag", "generate", ...).
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& message)
        : Error(stage + ": " + message), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

struct PipelineConfig {
    std::size_t top_k_retrieve = 20;
    std::size_t top_n_rerank = 5;
    int max_hops = 2;
    bool use_cache = true;
    std::string partition_key = "default";
    std::vector<BoostRule> boost_rules;
    RrfConfig rrf;
    CragConfig crag;
    CacheConfig cache;
    std::size_t max_subs = 4;
    std::size_t web_top_k = 5;  // External route

    void validate() const;
};

struct Source {
    std::string id;  // chunk id, or url for web results
    double score = 0.0;
    bool web = false;
};

struct ChatResult {
    std::string answer;
    std::vector<Source> sources;
    RouteDecision route = RouteDecision::Simple;
    bool cache_hit = false;
    int hops_used = 0;
    std::optional<CragVerdict> verdict;
    std::map<std::string, double> timings_ms;
    /// Context passages handed to the generator, in prompt order.
    std::vector<std::string> contexts;
};

/// Orchestrates search (retrieve + rerank) and chat (cache, routing,
/// transformation, retrieval, CRAG, multi-hop, generation). Safe to share
/// across threads; index and cache guard themselves.
class Pipeline {
public:
    using Clock = std::function<std::int64_t()>;

    Pipeline(std::shared_ptr<HybridIndex> index, std::shared_ptr<SemanticCache> cache,
             ModelGateway gateway, std::shared_ptr<const PromptCatalog> prompts,
             PipelineConfig defaults = {});

    std::vector<ScoredChunk> search(const std::string& query) const { return search(query, defaults_); }
    std::vector<ScoredChunk> search(const std::string& query, const PipelineConfig& cfg) const;

    ChatResult chat(const std::string& query) const { return chat(query, defaults_); }
    ChatResult chat(const std::string& query, const PipelineConfig& cfg) const;

    /// Seconds since epoch; replaceable for TTL tests.
    void set_clock(Clock clock) { clock_ = std::move(clock); }

    const PipelineConfig& defaults() const noexcept { return defaults_; }
    const HybridIndex& index() const noexcept { return *index_; }
    const SemanticCache& cache() const noexcept { return *cache_; }
    const ModelGateway& gateway() const noexcept { return gateway_; }

private:
    struct Round;

    Round retrieve_round(const std::string& original, const std::string& current,
                         RouteDecision route, const EmbeddingVector* query_vec,
                         const PipelineConfig& cfg, std::map<std::string, double>& timings) const;

    std::shared_ptr<HybridIndex> index_;
    std::shared_ptr<SemanticCache> cache_;
    ModelGateway gateway_;
    std::shared_ptr<const PromptCatalog> prompts_;
    QueryTransformer transformer_;
    CragEvaluator crag_;
    PipelineConfig defaults_;
    Clock clock_;
};

/// "--- context N (source: id) ---" blocks, or "(none)".
std::string format_contexts(const std::vector<std::pair<std::string, std::string>>& passages);

}  // namespace ragline
