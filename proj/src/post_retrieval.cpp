#include "ragline/post_retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <regex>
#include <set>

#include <spdlog/spdlog.h>

#include "ragline/retrieval.hpp"
#include "ragline/splitter.hpp"

namespace ragline {

void CragConfig::validate() const {
    if (!(0.0 <= lower_threshold && lower_threshold < upper_threshold && upper_threshold <= 1.0)) {
        throw PreconditionError("CRAG thresholds must satisfy 0 <= lower < upper <= 1");
    }
    if (web_top_k == 0) throw PreconditionError("CRAG web_top_k must be at least 1");
}

CragVerdict classify_confidence(const std::vector<double>& scores, const CragConfig& cfg) {
    if (scores.empty()) return CragVerdict::Incorrect;
    double aggregate = *std::max_element(scores.begin(), scores.end());
    if (aggregate >= cfg.upper_threshold) return CragVerdict::Correct;
    if (aggregate <= cfg.lower_threshold) return CragVerdict::Incorrect;
    return CragVerdict::Ambiguous;
}

double parse_evaluator_score(std::string_view response) {
    static const std::regex number(R"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)");
    std::string text(response);
    std::smatch m;
    if (!std::regex_search(text, m, number)) return 0.0;
    double value = 0.0;
    try {
        value = std::stod(m.str());
    } catch (const std::exception&) {
        return 0.0;
    }
    if (!std::isfinite(value)) return 0.0;
    return std::clamp(value, 0.0, 1.0);
}

std::vector<ScoredChunk> rerank(Reranker& reranker, const std::string& query,
                                const std::vector<ScoredChunk>& candidates, std::size_t top_n) {
    if (candidates.empty()) throw PreconditionError("rerank requires candidates");
    if (top_n == 0) throw PreconditionError("top_n must be at least 1");
    std::vector<std::string> passages;
    passages.reserve(candidates.size());
    for (const auto& c : candidates) passages.push_back(c.chunk->content);
    auto scores = reranker.rerank_scores(query, passages);
    if (scores.size() != candidates.size()) {
        throw GatewayError("reranker", "returned " + std::to_string(scores.size()) +
                                           " scores for " + std::to_string(candidates.size()) +
                                           " passages");
    }
    std::vector<ScoredChunk> out;
    out.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (!std::isfinite(scores[i])) throw GatewayError("reranker", "non-finite score");
        out.push_back({candidates[i].chunk, scores[i], Stage::Reranked});
    }
    sort_ranked(out);
    if (out.size() > top_n) out.resize(top_n);
    return out;
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> sentences;
    auto code = detect_code_blocks(text);
    auto emit = [&](std::size_t from, std::size_t to) {
        std::string_view s = trim(text.substr(from, to - from));
        if (!s.empty()) sentences.emplace_back(s);
    };
    std::size_t start = 0;
    std::size_t pos = 0;
    std::size_t next_code = 0;
    while (pos < text.size()) {
        if (next_code < code.size() && pos == code[next_code].start) {
            emit(start, pos);
            emit(code[next_code].start, code[next_code].end);
            pos = start = code[next_code].end;
            ++next_code;
            continue;
        }
        char c = text[pos];
        bool terminal = (c == '.' || c == '!' || c == '?') &&
                        (pos + 1 == text.size() ||
                         std::isspace(static_cast<unsigned char>(text[pos + 1])));
        ++pos;
        if (terminal) {
            emit(start, pos);
            start = pos;
        }
    }
    emit(start, text.size());
    return sentences;
}

std::string compress(const std::string& query, const Chunk& chunk) {
    if (trim(chunk.content).empty()) throw PreconditionError("chunk content must not be empty");
    auto q = content_tokens(query);
    std::set<std::string> wanted(q.begin(), q.end());

    std::string out;
    bool prev_code = false;
    for (const auto& sentence : split_sentences(chunk.content)) {
        auto tokens = tokenize(sentence);
        bool keep = std::any_of(tokens.begin(), tokens.end(),
                                [&](const std::string& t) { return wanted.contains(t); });
        if (!keep) continue;
        bool is_code = sentence.starts_with("```");
        if (!out.empty()) out += (is_code || prev_code) ? "\n" : " ";
        out += sentence;
        prev_code = is_code;
    }
    return out.empty() ? chunk.content : out;
}

CragEvaluator::CragEvaluator(std::shared_ptr<Generator> generator, std::shared_ptr<WebSearch> web,
                             std::shared_ptr<const PromptCatalog> prompts)
    : generator_(std::move(generator)), web_(std::move(web)), prompts_(std::move(prompts)) {
    if (!generator_ || !web_ || !prompts_) {
        throw PreconditionError("CragEvaluator needs a generator, web search and prompts");
    }
}

CragOutcome CragEvaluator::evaluate(const std::string& query,
                                    const std::vector<ScoredChunk>& chunks,
                                    const CragConfig& cfg) const {
    cfg.validate();
    CragOutcome outcome;

    std::vector<std::future<std::string>> pending;
    pending.reserve(chunks.size());
    for (const auto& c : chunks) {
        std::map<std::string, std::string> vars{{"query", query}, {"passage", c.chunk->content}};
        std::string user = prompts_->render(cfg.evaluator_prompt_key + ".user", vars);
        std::string system = prompts_->render(cfg.evaluator_prompt_key + ".system", vars);
        pending.push_back(std::async(std::launch::async, [this, user = std::move(user),
                                                          system = std::move(system)] {
            return generator_->complete(user, system);
        }));
    }
    for (auto& f : pending) outcome.per_chunk_scores.push_back(parse_evaluator_score(f.get()));

    outcome.verdict = classify_confidence(outcome.per_chunk_scores, cfg);

    if (outcome.verdict != CragVerdict::Incorrect) {
        for (std::size_t i = 0; i < chunks.size(); ++i) {
            if (outcome.per_chunk_scores[i] < cfg.lower_threshold) continue;
            auto refined = std::make_shared<Chunk>(*chunks[i].chunk);
            refined->content = compress(query, *chunks[i].chunk);
            outcome.retained.push_back({std::move(refined), chunks[i].score, chunks[i].stage});
        }
    }

    if (outcome.verdict == CragVerdict::Incorrect) {
        outcome.web_results = web_->web_search(query, cfg.web_top_k);
    } else if (outcome.verdict == CragVerdict::Ambiguous) {
        try {
            outcome.web_results = web_->web_search(query, cfg.web_top_k);
        } catch (const GatewayError& e) {
            spdlog::warn("web search failed on ambiguous retrieval, using internal context only: {}",
                         e.what());
            outcome.web_degraded = true;
        }
    }
    return outcome;
}

}  // namespace ragline
