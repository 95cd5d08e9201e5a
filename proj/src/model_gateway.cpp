#include "ragline/model_gateway.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ragline {

EmbeddingVector Embedder::embed_one(const std::string& text) {
    auto out = embed({text});
    if (out.size() != 1) throw GatewayError("embedder", "expected exactly one embedding");
    return std::move(out.front());
}

// ---------------------------------------------------------------------------
// CallLog
// ---------------------------------------------------------------------------

void CallLog::record(std::string service, std::string operation) {
    std::lock_guard lock(mutex_);
    records_.push_back({std::move(service), std::move(operation)});
}

std::vector<CallRecord> CallLog::snapshot() const {
    std::lock_guard lock(mutex_);
    return records_;
}

std::size_t CallLog::count(std::string_view service, std::string_view operation) const {
    std::lock_guard lock(mutex_);
    return static_cast<std::size_t>(std::count_if(records_.begin(), records_.end(), [&](const auto& r) {
        return r.service == service && (operation.empty() || r.operation == operation);
    }));
}

void CallLog::clear() {
    std::lock_guard lock(mutex_);
    records_.clear();
}

// ---------------------------------------------------------------------------
// MockEmbedder
// ---------------------------------------------------------------------------

MockEmbedder::MockEmbedder(std::size_t dim, std::shared_ptr<CallLog> log)
    : dim_(dim), log_(std::move(log)) {
    if (dim_ == 0) throw PreconditionError("embedding dimension must be positive");
}

EmbeddingVector MockEmbedder::hash_embed(std::string_view text, std::size_t dim) {
    std::vector<double> values(dim, 0.0);
    for (const auto& token : tokenize(text)) {
        std::uint64_t h = fnv1a64(token);
        double sign = ((h >> 32) & 1U) ? -1.0 : 1.0;
        values[h % dim] += sign;
    }
    double norm = 0.0;
    for (double v : values) norm += v * v;
    if (norm == 0.0) {
        // No tokens, or signed collisions cancelled out: fall back to one
        // bucket chosen by the raw text so the vector stays non-zero.
        values[fnv1a64(text) % dim] = 1.0;
        norm = 1.0;
    }
    norm = std::sqrt(norm);
    for (double& v : values) v /= norm;
    return EmbeddingVector(std::move(values));
}

std::vector<EmbeddingVector> MockEmbedder::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw PreconditionError("embed requires at least one text");
    for (const auto& t : texts) {
        if (t.empty()) throw PreconditionError("embed requires non-empty texts");
    }
    if (log_) log_->record("embedder", "embed");
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(hash_embed(t, dim_));
    return out;
}

// ---------------------------------------------------------------------------
// Prompt field extraction
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            lines.push_back(text.substr(pos));
            break;
        }
        lines.push_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
    return lines;
}

std::string join_lines(const std::vector<std::string_view>& lines, std::size_t from,
                       std::size_t to) {
    std::string out;
    for (std::size_t i = from; i < to; ++i) {
        if (i > from) out += '\n';
        out += lines[i];
    }
    return std::string(trim(out));
}

constexpr std::string_view kContextMarker = "--- context ";

}  // namespace

PromptFields parse_prompt_fields(const std::string& prompt, const std::string& system) {
    PromptFields f;
    if (auto open = system.find("[["); open != std::string::npos) {
        if (auto close = system.find("]]", open); close != std::string::npos) {
            f.directive = system.substr(open + 2, close - open - 2);
        }
    }
    auto lines = split_lines(prompt);
    std::optional<std::size_t> passage_at, answer_at, context_at;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::string_view line = lines[i];
        if (f.query.empty() && line.starts_with("Query:")) {
            f.query = std::string(trim(line.substr(6)));
        } else if (!passage_at && trim(line) == "Passage:") {
            passage_at = i;
        } else if (!answer_at && trim(line) == "Answer:") {
            answer_at = i;
        } else if (!context_at && trim(line) == "Context:") {
            context_at = i;
        }
    }
    if (passage_at) f.passage = join_lines(lines, *passage_at + 1, lines.size());
    if (answer_at) {
        std::size_t end = context_at && *context_at > *answer_at ? *context_at : lines.size();
        f.answer = join_lines(lines, *answer_at + 1, end);
    }
    if (context_at) {
        std::optional<std::size_t> block_start;
        for (std::size_t i = *context_at + 1; i <= lines.size(); ++i) {
            bool boundary = i == lines.size() || lines[i].starts_with(kContextMarker);
            if (!boundary) continue;
            if (block_start) f.contexts.push_back(join_lines(lines, *block_start, i));
            block_start = i + 1;
        }
    }
    return f;
}

// ---------------------------------------------------------------------------
// MockGenerator
// ---------------------------------------------------------------------------

namespace {

bool contains_any(const std::vector<std::string>& tokens, std::initializer_list<std::string_view> words) {
    return std::any_of(tokens.begin(), tokens.end(), [&](const std::string& t) {
        return std::find(words.begin(), words.end(), t) != words.end();
    });
}

std::string route_rule(const std::string& query) {
    auto tokens = tokenize(query);
    if (contains_any(tokens, {"yesterday", "today", "tonight", "tomorrow", "latest", "news",
                              "current", "currently", "recent", "recently", "weather"})) {
        return "external";
    }
    if (contains_any(tokens, {"compare", "comparison", "versus", "vs", "difference",
                              "differences", "differ", "tradeoff", "tradeoffs", "why", "explain",
                              "pros", "cons"})) {
        return "complex";
    }
    return "simple";
}

std::string rewrite_rule(const std::string& query) {
    std::string out;
    for (const auto& t : tokenize(query)) {
        bool connective = t == "and" || t == "or" || t == "vs" || t == "versus";
        if (is_stopword(t) && !connective) continue;
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

std::string strip_trailing_punct(std::string s) {
    while (!s.empty() && (s.back() == '?' || s.back() == '.' || s.back() == '!' ||
                          std::isspace(static_cast<unsigned char>(s.back())))) {
        s.pop_back();
    }
    return s;
}

std::string decompose_rule(const std::string& query) {
    static const std::regex compare(R"(^\s*compare\s+(.+?)\s+(?:and|with|vs\.?|versus)\s+(.+)$)",
                                    std::regex::icase);
    static const std::regex versus(R"(^\s*(.+?)\s+(?:vs\.?|versus)\s+(.+)$)", std::regex::icase);
    std::smatch m;
    if (std::regex_match(query, m, compare) || std::regex_match(query, m, versus)) {
        return "features of " + strip_trailing_punct(m[1].str()) + "\nfeatures of " +
               strip_trailing_punct(m[2].str());
    }
    return "";
}

std::string hyde_rule(const std::string& query) {
    std::string words;
    for (const auto& t : content_tokens(query)) {
        if (!words.empty()) words += ' ';
        words += t;
    }
    if (words.empty()) return "";
    return "A hypothetical answer about " + words + ". It covers " + words + " in detail.";
}

std::string evaluate_rule(const std::string& query, const std::string& passage) {
    auto q = content_tokens(query);
    std::set<std::string> wanted(q.begin(), q.end());
    auto p = tokenize(passage);
    std::set<std::string> have(p.begin(), p.end());
    std::size_t overlap = 0;
    for (const auto& w : wanted) overlap += have.contains(w) ? 1 : 0;
    if (overlap >= 2 || (overlap >= 1 && overlap == wanted.size())) return "0.9";
    if (overlap == 1) return "0.5";
    return "0.1";
}

// First sentence of the text, skipping leading heading lines.
std::string first_sentence(std::string_view text) {
    text = trim(text);
    while (text.starts_with('#')) {
        std::size_t nl = text.find('\n');
        if (nl == std::string_view::npos) return std::string(trim(text));
        text = trim(text.substr(nl + 1));
    }
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if ((c == '.' || c == '!' || c == '?') &&
            (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1])))) {
            return std::string(text.substr(0, i + 1));
        }
    }
    return std::string(text);
}

std::string answer_rule(const PromptFields& f) {
    for (const auto& ctx : f.contexts) {
        std::string sentence = first_sentence(ctx);
        if (!sentence.empty()) return sentence;
    }
    return std::string(MockGenerator::kRefusal);
}

std::string judge_rule(const PromptFields& f) {
    std::string joined;
    for (const auto& c : f.contexts) joined += c + "\n";
    auto answer = tokenize(f.answer);
    auto ctx = tokenize(joined);
    std::set<std::string> have(ctx.begin(), ctx.end());
    if (answer.empty()) return "0";
    std::size_t supported = 0;
    for (const auto& t : answer) supported += have.contains(t) ? 1 : 0;
    std::ostringstream out;
    out << static_cast<double>(supported) / static_cast<double>(answer.size());
    return out.str();
}

}  // namespace

MockGenerator::MockGenerator(std::shared_ptr<CallLog> log) : log_(std::move(log)) {}

void MockGenerator::script(const std::string& directive, Script fn) {
    std::lock_guard lock(mutex_);
    scripts_[directive] = std::move(fn);
}

std::string MockGenerator::complete(const std::string& prompt, const std::string& system) {
    if (prompt.empty()) throw PreconditionError("prompt must not be empty");
    PromptFields f = parse_prompt_fields(prompt, system);
    if (log_) log_->record("generator", f.directive);

    Script custom;
    {
        std::lock_guard lock(mutex_);
        if (auto it = scripts_.find(f.directive); it != scripts_.end()) custom = it->second;
    }
    if (custom) {
        if (auto reply = custom(f)) return *reply;
    }

    if (f.directive == "route") return route_rule(f.query);
    if (f.directive == "rewrite") return rewrite_rule(f.query);
    if (f.directive == "decompose") return decompose_rule(f.query);
    if (f.directive == "hyde") return hyde_rule(f.query);
    if (f.directive == "evaluate") return evaluate_rule(f.query, f.passage);
    if (f.directive == "answer") return answer_rule(f);
    if (f.directive == "judge") return judge_rule(f);
    return "";
}

// ---------------------------------------------------------------------------
// MockReranker
// ---------------------------------------------------------------------------

MockReranker::MockReranker(std::shared_ptr<CallLog> log) : log_(std::move(log)) {}

std::vector<double> MockReranker::rerank_scores(const std::string& query,
                                                const std::vector<std::string>& passages) {
    if (passages.empty()) throw PreconditionError("rerank requires at least one passage");
    if (log_) log_->record("reranker", "rerank");
    auto q = tokenize(query);
    std::vector<double> scores;
    scores.reserve(passages.size());
    for (const auto& p : passages) scores.push_back(overlap_f1(tokenize(p), q));
    return scores;
}

// ---------------------------------------------------------------------------
// MockWebSearch
// ---------------------------------------------------------------------------

MockWebSearch::MockWebSearch(std::shared_ptr<CallLog> log) : log_(std::move(log)) {}

void MockWebSearch::add_fixture(const std::string& phrase, std::vector<WebResult> results) {
    auto tokens = tokenize(phrase);
    if (tokens.empty()) throw PreconditionError("web fixture phrase has no tokens");
    std::lock_guard lock(mutex_);
    fixtures_.emplace_back(std::move(tokens), std::move(results));
}

void MockWebSearch::load_fixtures(const std::string& json_text) {
    auto doc = nlohmann::json::parse(json_text);
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        std::vector<WebResult> results;
        for (const auto& r : it.value()) {
            results.push_back({r.value("title", ""), r.at("url").get<std::string>(),
                               r.value("snippet", ""), r.value("score", 0.0)});
        }
        add_fixture(it.key(), std::move(results));
    }
}

void MockWebSearch::set_failing(bool failing) {
    std::lock_guard lock(mutex_);
    failing_ = failing;
}

std::vector<WebResult> MockWebSearch::web_search(const std::string& query, std::size_t top_k) {
    if (top_k == 0) throw PreconditionError("web search top_k must be at least 1");
    if (log_) log_->record("web", "search");
    auto tokens = tokenize(query);
    std::lock_guard lock(mutex_);
    if (failing_) throw GatewayError("web", "mock web search configured to fail");
    for (const auto& [phrase, results] : fixtures_) {
        if (std::search(tokens.begin(), tokens.end(), phrase.begin(), phrase.end()) !=
            tokens.end()) {
            std::vector<WebResult> out(results.begin(),
                                       results.begin() + std::min(top_k, results.size()));
            return out;
        }
    }
    return {};
}

ModelGateway make_mock_gateway(std::size_t dim, std::shared_ptr<CallLog> log) {
    return ModelGateway{std::make_shared<MockEmbedder>(dim, log),
                        std::make_shared<MockGenerator>(log),
                        std::make_shared<MockReranker>(log),
                        std::make_shared<MockWebSearch>(log)};
}

}  // namespace ragline
