#pragma once

// Transport-neutral request/response pair used by the hub and meta-hub
// handlers, and a small HTTP server that feeds them.

#include "iothub/engine.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

namespace iothub {

struct ApiRequest {
    std::string method;
    /// Path without the query string, percent-decoded.
    std::string path;
    std::map<std::string, std::string> query;
    /// Keys lower-cased.
    std::map<std::string, std::string> headers;
    std::string body;

    std::optional<std::string> header(const std::string& name) const;
    /// Token from `Authorization: Bearer <token>`.
    std::optional<std::string> bearer() const;
};

struct ApiResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
    /// Set for event streams: samples are framed as server-sent events
    /// until the channel closes; `on_close` runs when the client goes away.
    std::shared_ptr<EventChannel> stream;
    std::function<void()> on_close;
};

/// `id: <seq>`, `event: sample`, `data: <canonical sample>`, blank line.
std::string sse_frame(const Sample& s);

/// Splits a path into its non-empty segments.
std::vector<std::string> path_segments(const std::string& path);

class HttpServer {
public:
    using Handler = std::function<ApiResponse(const ApiRequest&)>;

    explicit HttpServer(Handler handler);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// False when the address cannot be bound. Port 0 picks a free port.
    bool bind(const std::string& host, int port);
    int port() const noexcept { return port_; }
    /// Serves on a background thread.
    void start();
    /// Serves on the calling thread until stop().
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
};

} // namespace iothub
