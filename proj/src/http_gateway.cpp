#include <algorithm>
#include <cmath>
#include <regex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ragline/model_gateway.hpp"

namespace ragline {

using json = nlohmann::json;

void ServiceConfig::validate(std::string_view service) const {
    if (!(timeout_seconds > 0.0)) {
        throw PreconditionError(std::string(service) + ": timeout must be positive");
    }
    if (retry_count < 0) {
        throw PreconditionError(std::string(service) + ": retry_count must be >= 0");
    }
}

namespace {

bool transient_status(int status) { return status == 429 || status >= 500; }

}  // namespace

JsonHttpClient::JsonHttpClient(std::string service, ServiceConfig cfg)
    : service_(std::move(service)), cfg_(std::move(cfg)) {
    cfg_.validate(service_);
    static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
    std::smatch m;
    if (!std::regex_match(cfg_.base_url, m, url)) {
        throw PreconditionError(service_ + ": invalid base_url '" + cfg_.base_url + "'");
    }
    scheme_host_port_ = m[1].str();
    path_prefix_ = m[2].matched ? m[2].str() : "";
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::string JsonHttpClient::post(const std::string& path, const std::string& body) const {
    httplib::Client client(scheme_host_port_);
    const auto secs = static_cast<time_t>(cfg_.timeout_seconds);
    const auto usecs = static_cast<time_t>((cfg_.timeout_seconds - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Headers headers;
    if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

    std::string last_error;
    for (int attempt = 0; attempt <= cfg_.retry_count; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(cfg_.backoff * (1 << (attempt - 1)));
        auto res = client.Post(path_prefix_ + path, headers, body, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 200 && res->status < 300) return res->body;
        last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
        if (!transient_status(res->status)) break;
    }
    throw GatewayError(service_, last_error);
}

// ---------------------------------------------------------------------------

namespace {

json parse_body(const std::string& service, const std::string& body) {
    try {
        return json::parse(body);
    } catch (const json::parse_error& e) {
        throw GatewayError(service, std::string("malformed response: ") + e.what());
    }
}

}  // namespace

HttpEmbedder::HttpEmbedder(ServiceConfig cfg) : client_("embedder", std::move(cfg)) {}

std::vector<EmbeddingVector> HttpEmbedder::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw PreconditionError("embed requires at least one text");
    for (const auto& t : texts) {
        if (t.empty()) throw PreconditionError("embed requires non-empty texts");
    }
    json req = {{"model", client_.config().model_name}, {"input", texts}};
    json res = parse_body("embedder", client_.post("/embeddings", req.dump()));
    try {
        std::vector<std::pair<std::size_t, std::vector<double>>> rows;
        std::size_t fallback_index = 0;
        for (const auto& item : res.at("data")) {
            std::size_t idx = item.value("index", fallback_index);
            rows.emplace_back(idx, item.at("embedding").get<std::vector<double>>());
            ++fallback_index;
        }
        std::sort(rows.begin(), rows.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        if (rows.size() != texts.size()) {
            throw GatewayError("embedder", "expected " + std::to_string(texts.size()) +
                                               " embeddings, got " + std::to_string(rows.size()));
        }
        std::vector<EmbeddingVector> out;
        for (auto& [idx, values] : rows) {
            if (!out.empty() && values.size() != out.front().dim()) {
                throw GatewayError("embedder", "inconsistent embedding dimensions");
            }
            out.emplace_back(std::move(values));
        }
        return out;
    } catch (const json::exception& e) {
        throw GatewayError("embedder", std::string("unexpected response shape: ") + e.what());
    } catch (const PreconditionError& e) {
        throw GatewayError("embedder", e.what());
    }
}

HttpGenerator::HttpGenerator(ServiceConfig cfg, double temperature)
    : client_("llm", std::move(cfg)), temperature_(temperature) {}

std::string HttpGenerator::complete(const std::string& prompt, const std::string& system) {
    if (prompt.empty()) throw PreconditionError("prompt must not be empty");
    json messages = json::array();
    if (!system.empty()) messages.push_back({{"role", "system"}, {"content", system}});
    messages.push_back({{"role", "user"}, {"content", prompt}});
    json req = {{"model", client_.config().model_name},
                {"messages", std::move(messages)},
                {"temperature", temperature_},
                {"stream", false}};
    json res = parse_body("llm", client_.post("/chat/completions", req.dump()));
    try {
        const auto& content = res.at("choices").at(0).at("message").at("content");
        return content.is_null() ? std::string() : content.get<std::string>();
    } catch (const json::exception& e) {
        throw GatewayError("llm", std::string("unexpected response shape: ") + e.what());
    }
}

HttpReranker::HttpReranker(ServiceConfig cfg, RerankShape shape)
    : client_("reranker", std::move(cfg)), shape_(std::move(shape)) {}

std::vector<double> HttpReranker::rerank_scores(const std::string& query,
                                                const std::vector<std::string>& passages) {
    if (passages.empty()) throw PreconditionError("rerank requires at least one passage");
    json req = {{"model", client_.config().model_name},
                {shape_.query_field, query},
                {shape_.documents_field, passages}};
    json res = parse_body("reranker", client_.post(shape_.path, req.dump()));
    try {
        std::vector<double> scores(passages.size(), 0.0);
        std::vector<bool> seen(passages.size(), false);
        for (const auto& item : res.at(shape_.results_field)) {
            auto idx = item.at(shape_.index_field).get<std::size_t>();
            double score = item.at(shape_.score_field).get<double>();
            if (idx >= passages.size() || !std::isfinite(score)) {
                throw GatewayError("reranker", "result index or score out of range");
            }
            scores[idx] = score;
            seen[idx] = true;
        }
        if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
            throw GatewayError("reranker", "response did not score every passage");
        }
        return scores;
    } catch (const json::exception& e) {
        throw GatewayError("reranker", std::string("unexpected response shape: ") + e.what());
    }
}

HttpWebSearch::HttpWebSearch(ServiceConfig cfg) : client_("web", std::move(cfg)) {}

std::vector<WebResult> HttpWebSearch::web_search(const std::string& query, std::size_t top_k) {
    if (top_k == 0) throw PreconditionError("web search top_k must be at least 1");
    json req = {{"query", query}, {"max_results", top_k}};
    json res = parse_body("web", client_.post("/search", req.dump()));
    try {
        std::vector<WebResult> out;
        for (const auto& item : res.at("results")) {
            WebResult r{item.value("title", ""), item.at("url").get<std::string>(),
                        item.value("content", item.value("snippet", "")), item.value("score", 0.0)};
            if (r.url.empty()) continue;
            out.push_back(std::move(r));
            if (out.size() == top_k) break;
        }
        return out;
    } catch (const json::exception& e) {
        throw GatewayError("web", std::string("unexpected response shape: ") + e.what());
    }
}

ModelGateway make_http_gateway(const GatewayConfig& cfg) {
    return ModelGateway{std::make_shared<HttpEmbedder>(cfg.embedder),
                        std::make_shared<HttpGenerator>(cfg.llm, cfg.temperature),
                        std::make_shared<HttpReranker>(cfg.reranker, cfg.rerank_shape),
                        std::make_shared<HttpWebSearch>(cfg.websearch)};
}

}  // namespace ragline
