#include "ragline/pipeline.hpp"

#include <chrono>
#include <type_traits>
#include <unordered_map>

#include <spdlog/spdlog.h>

namespace ragline {

void PipelineConfig::validate() const {
    if (max_hops < 1) throw PreconditionError("max_hops must be at least 1");
    if (top_k_retrieve == 0) throw PreconditionError("top_k_retrieve must be at least 1");
    if (top_n_rerank == 0) throw PreconditionError("top_n_rerank must be at least 1");
    if (top_n_rerank > top_k_retrieve) {
        throw PreconditionError("top_n_rerank must not exceed top_k_retrieve");
    }
    if (rrf.k < 1) throw PreconditionError("rrf.k must be at least 1");
    if (max_subs == 0) throw PreconditionError("max_subs must be at least 1");
    if (web_top_k == 0) throw PreconditionError("web_top_k must be at least 1");
    for (const auto& rule : boost_rules) {
        if (rule.metadata_key.empty()) throw PreconditionError("boost rule needs a metadata key");
        if (!(rule.factor > 0.0)) throw PreconditionError("boost factor must be positive");
    }
    crag.validate();
    cache.validate();
}

std::string format_contexts(const std::vector<std::pair<std::string, std::string>>& passages) {
    if (passages.empty()) return "(none)";
    std::string out;
    for (std::size_t i = 0; i < passages.size(); ++i) {
        if (i > 0) out += "\n\n";
        out += "--- context " + std::to_string(i + 1) + " (source: " + passages[i].first + ") ---\n";
        out += passages[i].second;
    }
    return out;
}

namespace {

using Timings = std::map<std::string, double>;

// Runs one stage, adds its wall time to `timings` and tags failures with
// the stage name.
template <typename F>
auto stage(const char* name, Timings& timings, F&& fn) -> decltype(fn()) {
    auto start = std::chrono::steady_clock::now();
    auto record = [&] {
        timings[name] += std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - start)
                             .count();
    };
    try {
        if constexpr (std::is_void_v<decltype(fn())>) {
            fn();
            record();
        } else {
            auto out = fn();
            record();
            return out;
        }
    } catch (const StageError&) {
        record();
        throw;
    } catch (const std::exception& e) {
        record();
        throw StageError(name, e.what());
    }
}

std::int64_t system_seconds() {
    return std::chrono::duration_cast<std::chrono::seconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

void require_query(const std::string& query) {
    if (trim(query).empty()) throw PreconditionError("query must not be empty");
}

}  // namespace

struct Pipeline::Round {
    std::string query;  // text this round retrieved with
    CragOutcome crag;
};

Pipeline::Pipeline(std::shared_ptr<HybridIndex> index, std::shared_ptr<SemanticCache> cache,
                   ModelGateway gateway, std::shared_ptr<const PromptCatalog> prompts,
                   PipelineConfig defaults)
    : index_(std::move(index)),
      cache_(std::move(cache)),
      gateway_(std::move(gateway)),
      prompts_(std::move(prompts)),
      transformer_(gateway_.generator, prompts_),
      crag_(gateway_.generator, gateway_.web, prompts_),
      defaults_(std::move(defaults)),
      clock_(system_seconds) {
    if (!index_ || !cache_) throw PreconditionError("pipeline needs an index and a cache");
    if (!gateway_.embedder || !gateway_.reranker) {
        throw PreconditionError("pipeline needs an embedder and a reranker");
    }
    defaults_.validate();
}

std::vector<ScoredChunk> Pipeline::search(const std::string& query,
                                          const PipelineConfig& cfg) const {
    require_query(query);
    cfg.validate();
    Timings timings;
    if (index_->partition_size(cfg.partition_key) == 0) return {};
    auto vec = stage("embed", timings, [&] { return gateway_.embedder->embed_one(query); });
    auto hits = stage("retrieve", timings, [&] {
        return hybrid_search(*index_, query, vec, cfg.partition_key, cfg.top_k_retrieve, cfg.rrf,
                             cfg.boost_rules);
    });
    if (hits.empty()) return hits;
    return stage("rerank", timings,
                 [&] { return rerank(*gateway_.reranker, query, hits, cfg.top_n_rerank); });
}

Pipeline::Round Pipeline::retrieve_round(const std::string& original, const std::string& current,
                                         RouteDecision route, const EmbeddingVector* query_vec,
                                         const PipelineConfig& cfg, Timings& timings) const {
    Round round;
    round.query = current;
    std::vector<ScoredChunk> candidates;

    if (route == RouteDecision::Simple) {
        EmbeddingVector vec = query_vec ? *query_vec
                                        : stage("embed", timings, [&] {
                                              return gateway_.embedder->embed_one(current);
                                          });
        candidates = stage("retrieve", timings, [&] {
            return hybrid_search(*index_, current, vec, cfg.partition_key, cfg.top_k_retrieve,
                                 cfg.rrf, cfg.boost_rules);
        });
    } else {
        auto tq = stage("transform", timings,
                        [&] { return transformer_.transform(current, route, cfg.max_subs); });
        round.query = tq.rewritten;
        auto vec = stage("embed", timings, [&] {
            return gateway_.embedder->embed_one(tq.hyde_document.value_or(tq.rewritten));
        });
        std::vector<std::string> legs = tq.sub_queries;
        if (legs.empty()) legs.push_back(tq.rewritten);

        candidates = stage("retrieve", timings, [&] {
            if (legs.size() == 1) {
                return hybrid_search(*index_, legs.front(), vec, cfg.partition_key,
                                     cfg.top_k_retrieve, cfg.rrf, cfg.boost_rules);
            }
            // One hybrid list per sub-query, fused again across sub-queries;
            // boosting happens once, after the final fusion.
            std::vector<std::vector<std::string>> rankings;
            std::unordered_map<std::string, ChunkPtr> by_id;
            for (const auto& leg : legs) {
                auto hits = hybrid_search(*index_, leg, vec, cfg.partition_key,
                                          cfg.top_k_retrieve, cfg.rrf, {});
                auto& ids = rankings.emplace_back();
                for (const auto& h : hits) {
                    ids.push_back(h.id());
                    by_id.emplace(h.id(), h.chunk);
                }
            }
            std::vector<ScoredChunk> fused;
            for (auto& [id, score] : rrf_fuse(rankings, cfg.rrf)) {
                fused.push_back({by_id.at(id), score, Stage::Fused});
            }
            auto boosted = apply_boost(std::move(fused), cfg.boost_rules);
            if (boosted.size() > cfg.top_k_retrieve) boosted.resize(cfg.top_k_retrieve);
            return boosted;
        });
    }

    if (!candidates.empty()) {
        candidates = stage("rerank", timings, [&] {
            return rerank(*gateway_.reranker, original, candidates, cfg.top_n_rerank);
        });
    }
    round.crag = stage("crag", timings, [&] { return crag_.evaluate(original, candidates, cfg.crag); });
    return round;
}

ChatResult Pipeline::chat(const std::string& query, const PipelineConfig& cfg) const {
    require_query(query);
    cfg.validate();
    ChatResult result;
    auto& timings = result.timings_ms;

    std::optional<EmbeddingVector> query_vec;
    if (cfg.use_cache) {
        query_vec = stage("embed", timings, [&] { return gateway_.embedder->embed_one(query); });
        try {
            auto hit = stage("cache_lookup", timings, [&] {
                return cache_->lookup(query, *query_vec, cfg.partition_key, clock_());
            });
            if (hit) {
                result.answer = hit->answer;
                for (const auto& id : hit->sources) {
                    result.sources.push_back({id, hit->similarity, id.find("://") != std::string::npos});
                }
                result.cache_hit = true;
                result.hops_used = 0;
                return result;
            }
        } catch (const StageError& e) {
            spdlog::warn("cache lookup failed, continuing without cache: {}", e.what());
        }
    }

    result.route = stage("route", timings, [&] { return transformer_.route(query); });

    std::vector<std::pair<std::string, std::string>> passages;
    if (result.route == RouteDecision::External) {
        auto web = stage("web_search", timings, [&] {
            return gateway_.web ? gateway_.web->web_search(query, cfg.web_top_k)
                                : std::vector<WebResult>{};
        });
        result.hops_used = 1;
        for (const auto& w : web) {
            passages.emplace_back(w.url, w.snippet);
            result.sources.push_back({w.url, w.score, true});
        }
    } else {
        RouteDecision route = result.route;
        std::string current = query;
        Round round;
        while (true) {
            round = retrieve_round(query, current, route,
                                   route == RouteDecision::Simple && query_vec ? &*query_vec
                                                                               : nullptr,
                                   cfg, timings);
            ++result.hops_used;
            bool insufficient = round.crag.verdict == CragVerdict::Incorrect &&
                                round.crag.web_results.empty();
            if (!insufficient || result.hops_used >= cfg.max_hops) break;
            route = RouteDecision::Complex;
            current = round.query;
        }
        result.verdict = round.crag.verdict;
        for (const auto& sc : round.crag.retained) {
            passages.emplace_back(sc.id(), sc.chunk->content);
            result.sources.push_back({sc.id(), sc.score, false});
        }
        for (const auto& w : round.crag.web_results) {
            passages.emplace_back(w.url, w.snippet);
            result.sources.push_back({w.url, w.score, true});
        }
    }

    for (const auto& p : passages) result.contexts.push_back(p.second);
    result.answer = stage("generate", timings, [&] {
        if (!gateway_.generator) throw Error("no generator configured");
        std::map<std::string, std::string> vars{{"query", query},
                                                {"contexts", format_contexts(passages)}};
        return std::string(trim(gateway_.generator->complete(prompts_->render("answer.user", vars),
                                                             prompts_->render("answer.system", vars))));
    });

    if (cfg.use_cache) {
        try {
            stage("cache_insert", timings, [&] {
                CacheEntry entry{query, query_vec ? *query_vec : gateway_.embedder->embed_one(query),
                                 result.answer, {}, clock_(), cache_->config().default_ttl_seconds,
                                 cfg.partition_key};
                for (const auto& s : result.sources) entry.sources.push_back(s.id);
                cache_->insert(std::move(entry));
            });
        } catch (const StageError& e) {
            spdlog::warn("cache insert failed, answer still returned: {}", e.what());
        }
    }
    return result;
}

}  // namespace ragline
