#pragma once

#include <atomic>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "ragline/pipeline.hpp"

namespace ragline {

/// The server could not start listening; the message names the address.
class StartupError : public Error {
public:
    using Error::Error;
};

namespace rpc {
inline constexpr int kParseError = -32700;
inline constexpr int kInvalidRequest = -32600;
inline constexpr int kMethodNotFound = -32601;
inline constexpr int kInvalidParams = -32602;
inline constexpr int kInternalError = -32603;
}  // namespace rpc

struct McpServerConfig {
    std::string protocol_version = "2025-06-18";
    std::string server_name = "ragline";
    std::string server_version = "0.1.0";
};

/// JSON-RPC 2.0 dispatcher exposing rag_chat and rag_search as MCP tools.
/// Stateless apart from the pipeline it wraps, so concurrent calls are fine.
class McpServer {
public:
    explicit McpServer(std::shared_ptr<const Pipeline> pipeline, McpServerConfig cfg = {});

    /// One envelope in, one response out; nullopt for notifications.
    std::optional<std::string> handle_request(std::string_view raw) const;

    /// The tools/list payload ({"tools": [...]}); identical on every call.
    const nlohmann::json& tool_list() const noexcept { return tools_; }

    /// Newline-delimited JSON-RPC until end of input. Requests are handled
    /// in arrival order.
    void serve_stream(std::istream& in, std::ostream& out) const;

    /// Same framing over raw descriptors, polling so that `stop` is noticed
    /// between requests. Returns at end of input or once `stop` is set.
    void serve_fd(int in_fd, int out_fd, const std::atomic<bool>& stop) const;

private:
    nlohmann::json dispatch(const std::string& method, const nlohmann::json& params) const;
    nlohmann::json call_tool(const nlohmann::json& params) const;

    std::shared_ptr<const Pipeline> pipeline_;
    McpServerConfig cfg_;
    nlohmann::json tools_;
};

/// POST /rpc carrying one envelope per request. JSON-RPC errors travel
/// in-band with HTTP 200; notifications get 204.
class HttpTransport {
public:
    explicit HttpTransport(const McpServer& server);
    ~HttpTransport();

    /// Binds "host:port" (port 0 picks a free one) and returns the port.
    /// Throws StartupError naming the address on failure.
    int bind(const std::string& address);

    /// Blocks serving requests until stop().
    void run();

    /// Stops accepting; requests already being handled complete first.
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace ragline
