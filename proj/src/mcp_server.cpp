#include "ragline/mcp_server.hpp"

#include <poll.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <istream>
#include <ostream>
#include <regex>

#include <httplib.h>
#include <spdlog/spdlog.h>

namespace ragline {

using nlohmann::json;

namespace {

// Thrown inside dispatch to produce a JSON-RPC error object.
struct RpcFailure {
    int code;
    std::string message;
    json data = nullptr;
};

json error_response(const json& id, int code, const std::string& message,
                    const json& data = nullptr) {
    json err{{"code", code}, {"message", message}};
    if (!data.is_null()) err["data"] = data;
    return {{"jsonrpc", "2.0"}, {"id", id}, {"error", err}};
}

json build_tools() {
    json chat_schema = {
        {"type", "object"},
        {"properties",
         {{"query", {{"type", "string"}, {"description", "Question to answer from the knowledge base"}}},
          {"no_cache", {{"type", "boolean"}, {"description", "Skip the semantic cache"}}},
          {"partition", {{"type", "string"}, {"description", "Partition key to search"}}}}},
        {"required", {"query"}},
        {"additionalProperties", false}};
    json search_schema = {
        {"type", "object"},
        {"properties",
         {{"query", {{"type", "string"}, {"description", "Search text"}}},
          {"top_k", {{"type", "integer"}, {"minimum", 1}, {"description", "Results to return"}}},
          {"partition", {{"type", "string"}, {"description", "Partition key to search"}}}}},
        {"required", {"query"}},
        {"additionalProperties", false}};
    return {{"tools",
             {{{"name", "rag_chat"},
               {"description",
                "Answer a question with retrieval-augmented generation over the indexed corpus."},
               {"inputSchema", chat_schema}},
              {{"name", "rag_search"},
               {"description", "Return the most relevant chunks of the indexed corpus."},
               {"inputSchema", search_schema}}}}};
}

std::string require_query(const json& args) {
    auto it = args.find("query");
    if (it == args.end() || !it->is_string()) {
        throw RpcFailure{rpc::kInvalidParams, "missing required string argument 'query'"};
    }
    std::string q = it->get<std::string>();
    if (trim(q).empty()) throw RpcFailure{rpc::kInvalidParams, "'query' must not be empty"};
    return q;
}

void apply_partition(const json& args, PipelineConfig& cfg) {
    if (auto it = args.find("partition"); it != args.end()) {
        if (!it->is_string() || it->get<std::string>().empty()) {
            throw RpcFailure{rpc::kInvalidParams, "'partition' must be a non-empty string"};
        }
        cfg.partition_key = it->get<std::string>();
    }
}

json chat_payload(const ChatResult& r) {
    json sources = json::array();
    for (const auto& s : r.sources) {
        sources.push_back({{"id", s.id}, {"score", s.score}, {"web", s.web}});
    }
    json out{{"answer", r.answer},
             {"sources", sources},
             {"route", to_string(r.route)},
             {"cache_hit", r.cache_hit},
             {"hops_used", r.hops_used},
             {"verdict", r.verdict ? json(std::string(to_string(*r.verdict))) : json(nullptr)},
             {"timings_ms", r.timings_ms}};
    return out;
}

std::string chat_text(const ChatResult& r) {
    std::string text = r.answer;
    if (!r.sources.empty()) {
        text += "\n\nSources:";
        for (const auto& s : r.sources) text += "\n- " + s.id;
    }
    return text;
}

json search_payload(const std::vector<ScoredChunk>& hits) {
    json results = json::array();
    for (const auto& h : hits) {
        results.push_back({{"id", h.id()},
                           {"doc_id", h.chunk->doc_id},
                           {"score", h.score},
                           {"heading_path", h.chunk->heading_path},
                           {"content", h.chunk->content}});
    }
    return {{"results", results}};
}

std::string search_text(const std::vector<ScoredChunk>& hits) {
    if (hits.empty()) return "No results.";
    std::string text;
    for (std::size_t i = 0; i < hits.size(); ++i) {
        if (i > 0) text += "\n\n";
        text += std::to_string(i + 1) + ". [" + hits[i].id() + "] " + hits[i].chunk->content;
    }
    return text;
}

}  // namespace

McpServer::McpServer(std::shared_ptr<const Pipeline> pipeline, McpServerConfig cfg)
    : pipeline_(std::move(pipeline)), cfg_(std::move(cfg)), tools_(build_tools()) {
    if (!pipeline_) throw PreconditionError("MCP server needs a pipeline");
}

json McpServer::call_tool(const json& params) const {
    auto name_it = params.find("name");
    if (name_it == params.end() || !name_it->is_string()) {
        throw RpcFailure{rpc::kInvalidParams, "tools/call requires a tool name"};
    }
    const std::string name = name_it->get<std::string>();
    json args = json::object();
    if (auto it = params.find("arguments"); it != params.end() && !it->is_null()) {
        if (!it->is_object()) throw RpcFailure{rpc::kInvalidParams, "'arguments' must be an object"};
        args = *it;
    }

    PipelineConfig cfg = pipeline_->defaults();
    if (name == "rag_chat") {
        std::string query = require_query(args);
        if (auto it = args.find("no_cache"); it != args.end()) {
            if (!it->is_boolean()) throw RpcFailure{rpc::kInvalidParams, "'no_cache' must be a boolean"};
            if (it->get<bool>()) cfg.use_cache = false;
        }
        apply_partition(args, cfg);
        auto result = pipeline_->chat(query, cfg);
        return {{"content", {{{"type", "text"}, {"text", chat_text(result)}}}},
                {"structuredContent", chat_payload(result)},
                {"isError", false}};
    }
    if (name == "rag_search") {
        std::string query = require_query(args);
        if (auto it = args.find("top_k"); it != args.end()) {
            if (!it->is_number_integer() || it->get<long long>() < 1) {
                throw RpcFailure{rpc::kInvalidParams, "'top_k' must be an integer >= 1"};
            }
            cfg.top_n_rerank = static_cast<std::size_t>(it->get<long long>());
            cfg.top_k_retrieve = std::max(cfg.top_k_retrieve, cfg.top_n_rerank);
        }
        apply_partition(args, cfg);
        auto hits = pipeline_->search(query, cfg);
        return {{"content", {{{"type", "text"}, {"text", search_text(hits)}}}},
                {"structuredContent", search_payload(hits)},
                {"isError", false}};
    }
    throw RpcFailure{rpc::kInvalidParams, "unknown tool '" + name + "'"};
}

json McpServer::dispatch(const std::string& method, const json& params) const {
    if (method == "initialize") {
        return {{"protocolVersion", cfg_.protocol_version},
                {"capabilities", {{"tools", {{"listChanged", false}}}}},
                {"serverInfo", {{"name", cfg_.server_name}, {"version", cfg_.server_version}}}};
    }
    if (method == "ping") return json::object();
    if (method == "tools/list") return tools_;
    if (method == "tools/call") return call_tool(params);
    throw RpcFailure{rpc::kMethodNotFound, "method not found: " + method};
}

std::optional<std::string> McpServer::handle_request(std::string_view raw) const {
    json request;
    try {
        request = json::parse(raw);
    } catch (const json::parse_error&) {
        return error_response(nullptr, rpc::kParseError, "parse error").dump();
    }
    if (!request.is_object()) {
        return error_response(nullptr, rpc::kInvalidRequest, "request must be a JSON object").dump();
    }

    const bool has_id = request.contains("id");
    json id = has_id ? request["id"] : json(nullptr);
    if (has_id && !(id.is_null() || id.is_string() || id.is_number())) {
        return error_response(nullptr, rpc::kInvalidRequest, "id must be a string, number or null")
            .dump();
    }
    auto version = request.find("jsonrpc");
    if (version == request.end() || *version != "2.0") {
        return error_response(id, rpc::kInvalidRequest, "jsonrpc must be \"2.0\"").dump();
    }
    auto method = request.find("method");
    if (method == request.end() || !method->is_string()) {
        return error_response(id, rpc::kInvalidRequest, "method must be a string").dump();
    }

    json params = json::object();
    if (auto p = request.find("params"); p != request.end() && !p->is_null()) params = *p;

    json response;
    try {
        if (!params.is_object()) throw RpcFailure{rpc::kInvalidParams, "params must be an object"};
        if (method->get<std::string>().starts_with("notifications/")) {
            if (!has_id) return std::nullopt;
            response = {{"jsonrpc", "2.0"}, {"id", id}, {"result", json::object()}};
        } else {
            response = {{"jsonrpc", "2.0"}, {"id", id}, {"result", dispatch(*method, params)}};
        }
    } catch (const RpcFailure& f) {
        response = error_response(id, f.code, f.message, f.data);
    } catch (const StageError& e) {
        spdlog::error("tool call failed in stage {}: {}", e.stage(), e.what());
        response = error_response(id, rpc::kInternalError, e.what(), {{"stage", e.stage()}});
    } catch (const PreconditionError& e) {
        response = error_response(id, rpc::kInvalidParams, e.what());
    } catch (const std::exception& e) {
        spdlog::error("tool call failed: {}", e.what());
        response = error_response(id, rpc::kInternalError, e.what(), {{"stage", "internal"}});
    }
    if (!has_id) return std::nullopt;
    return response.dump();
}

void McpServer::serve_stream(std::istream& in, std::ostream& out) const {
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        if (auto response = handle_request(line)) out << *response << '\n' << std::flush;
    }
}

void McpServer::serve_fd(int in_fd, int out_fd, const std::atomic<bool>& stop) const {
    auto write_all = [out_fd](const std::string& data) {
        std::size_t done = 0;
        while (done < data.size()) {
            ssize_t n = ::write(out_fd, data.data() + done, data.size() - done);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw Error("cannot write to output: " + std::string(std::strerror(errno)));
            }
            done += static_cast<std::size_t>(n);
        }
    };
    auto handle_line = [&](std::string line) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) return;
        if (auto response = handle_request(line)) write_all(*response + "\n");
    };

    std::string buffer;
    char chunk[65536];
    while (!stop.load()) {
        pollfd pfd{in_fd, POLLIN, 0};
        int ready = ::poll(&pfd, 1, 100);
        if (ready < 0) {
            if (errno == EINTR) continue;
            throw Error("poll on input failed: " + std::string(std::strerror(errno)));
        }
        if (ready == 0) continue;
        ssize_t n = ::read(in_fd, chunk, sizeof chunk);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            throw Error("cannot read input: " + std::string(std::strerror(errno)));
        }
        if (n == 0) break;
        buffer.append(chunk, static_cast<std::size_t>(n));
        std::size_t nl;
        while ((nl = buffer.find('\n')) != std::string::npos) {
            std::string line = buffer.substr(0, nl);
            buffer.erase(0, nl + 1);
            handle_line(std::move(line));
        }
    }
    if (!stop.load()) handle_line(buffer);  // unterminated last line
}

struct HttpTransport::Impl {
    const McpServer& server;
    httplib::Server http;
    std::string address;

    explicit Impl(const McpServer& s) : server(s) {
        // No SO_REUSEPORT: a second server on a taken port must fail to
        // start instead of silently sharing it.
        http.set_socket_options([](socket_t sock) {
            int yes = 1;
            ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
        });
    }
};

HttpTransport::HttpTransport(const McpServer& server) : impl_(std::make_unique<Impl>(server)) {
    impl_->http.Post("/rpc", [this](const httplib::Request& req, httplib::Response& res) {
        auto response = impl_->server.handle_request(req.body);
        if (!response) {
            res.status = 204;
            return;
        }
        res.status = 200;
        res.set_content(*response, "application/json");
    });
}

HttpTransport::~HttpTransport() { stop(); }

int HttpTransport::bind(const std::string& address) {
    static const std::regex form(R"(^(.*):(\d{1,5})$)");
    std::smatch m;
    if (!std::regex_match(address, m, form)) {
        throw StartupError("cannot bind " + address + ": expected host:port");
    }
    std::string host = m[1].str();
    if (host.size() > 2 && host.front() == '[' && host.back() == ']') {
        host = host.substr(1, host.size() - 2);
    }
    int port = std::stoi(m[2].str());
    if (port > 65535) throw StartupError("cannot bind " + address + ": port out of range");
    impl_->address = address;
    if (port == 0) {
        int bound = impl_->http.bind_to_any_port(host);
        if (bound <= 0) throw StartupError("cannot bind " + address);
        return bound;
    }
    if (!impl_->http.bind_to_port(host, port)) throw StartupError("cannot bind " + address);
    return port;
}

void HttpTransport::run() { impl_->http.listen_after_bind(); }

void HttpTransport::stop() {
    if (impl_) impl_->http.stop();
}

}  // namespace ragline
