#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ragline/core.hpp"
#include "ragline/model_gateway.hpp"
#include "ragline/prompts.hpp"

namespace ragline {

struct CragConfig {
    double upper_threshold = 0.7;
    double lower_threshold = 0.3;
    std::string evaluator_prompt_key = "evaluate";
    std::size_t web_top_k = 5;

    void validate() const;
};

struct CragOutcome {
    CragVerdict verdict = CragVerdict::Incorrect;
    std::vector<double> per_chunk_scores;
    std::vector<ScoredChunk> retained;
    std::vector<WebResult> web_results;
    /// Ambiguous verdict whose web search failed; only internal context kept.
    bool web_degraded = false;
};

/// Band rule on the aggregate (max) score: >= upper is Correct, <= lower is
/// Incorrect, anything between is Ambiguous. An empty list is Incorrect.
CragVerdict classify_confidence(const std::vector<double>& scores, const CragConfig& cfg);

/// First real number in the evaluator's reply, clamped to [0, 1]; 0.0 when
/// there is none.
double parse_evaluator_score(std::string_view response);

/// Replaces scores with cross-encoder scores, sorts (score desc, id asc)
/// and keeps the best top_n.
std::vector<ScoredChunk> rerank(Reranker& reranker, const std::string& query,
                                const std::vector<ScoredChunk>& candidates, std::size_t top_n);

/// Splits on . ! ? followed by whitespace; fenced code blocks are single
/// sentences.
std::vector<std::string> split_sentences(std::string_view text);

/// Keeps sentences sharing at least one content token with the query, in
/// order. Returns the full content when nothing survives.
std::string compress(const std::string& query, const Chunk& chunk);

/// Corrective retrieval: scores each chunk with the evaluator (calls run
/// concurrently, results kept in input order), classifies, compresses what
/// is retained and consults web search for Incorrect and Ambiguous.
class CragEvaluator {
public:
    CragEvaluator(std::shared_ptr<Generator> generator, std::shared_ptr<WebSearch> web,
                  std::shared_ptr<const PromptCatalog> prompts);

    CragOutcome evaluate(const std::string& query, const std::vector<ScoredChunk>& chunks,
                         const CragConfig& cfg) const;

private:
    std::shared_ptr<Generator> generator_;
    std::shared_ptr<WebSearch> web_;
    std::shared_ptr<const PromptCatalog> prompts_;
};

}  // namespace ragline
