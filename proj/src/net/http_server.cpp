#include "iothub/http_server.hpp"

#include "iothub/canonical.hpp"

#include <httplib.h>

#include <algorithm>
#include <thread>

namespace iothub {

std::optional<std::string> ApiRequest::header(const std::string& name) const {
    std::string key = name;
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
    auto it = headers.find(key);
    if (it == headers.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<std::string> ApiRequest::bearer() const {
    auto h = header("authorization");
    if (!h || h->size() <= 7 || h->compare(0, 7, "Bearer ") != 0) {
        return std::nullopt;
    }
    return h->substr(7);
}

std::string sse_frame(const Sample& s) {
    return "id: " + std::to_string(s.seq) + "\nevent: sample\ndata: " + canonical_of(s) + "\n\n";
}

std::vector<std::string> path_segments(const std::string& path) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < path.size()) {
        const auto j = path.find('/', i);
        const auto end = j == std::string::npos ? path.size() : j;
        if (end > i) {
            out.push_back(path.substr(i, end - i));
        }
        i = end + 1;
    }
    return out;
}

struct HttpServer::Impl {
    httplib::Server server;
    Handler handler;
    std::thread thread;
    bool served = false;
};

namespace {

ApiRequest convert(const httplib::Request& req) {
    ApiRequest r;
    r.method = req.method;
    r.path = req.path;
    for (const auto& [k, v] : req.params) {
        r.query.emplace(k, v);
    }
    for (const auto& [k, v] : req.headers) {
        std::string key = k;
        std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
        r.headers.emplace(std::move(key), v);
    }
    r.body = req.body;
    return r;
}

} // namespace

HttpServer::HttpServer(Handler handler) : impl_(std::make_unique<Impl>()) {
    impl_->handler = std::move(handler);
    // No SO_REUSEPORT: a second server on a taken port must fail to bind.
    impl_->server.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    });
    auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
        ApiResponse out;
        try {
            out = impl_->handler(convert(req));
        } catch (const std::exception& e) {
            out.status = 500;
            out.body = canonical(json{{"error", "internal"}, {"message", e.what()}});
        }
        res.status = out.status;
        if (!out.stream) {
            res.set_content(out.body, out.content_type);
            return;
        }
        auto channel = out.stream;
        auto on_close = out.on_close;
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream",
            [channel](std::size_t, httplib::DataSink& sink) {
                if (!sink.is_writable()) {
                    return false;
                }
                if (auto s = channel->pop(std::chrono::milliseconds(250))) {
                    const auto frame = sse_frame(*s);
                    return sink.write(frame.data(), frame.size());
                }
                if (channel->closed()) {
                    sink.done();
                    return true;
                }
                static const std::string keepalive = ": keepalive\n\n";
                return sink.write(keepalive.data(), keepalive.size());
            },
            [on_close](bool) {
                if (on_close) {
                    on_close();
                }
            });
    };
    const std::string any = "/.*";
    impl_->server.Get(any, dispatch);
    impl_->server.Post(any, dispatch);
    impl_->server.Put(any, dispatch);
    impl_->server.Delete(any, dispatch);
}

HttpServer::~HttpServer() {
    // httplib only closes a socket that is listening.
    if (port_ > 0 && !impl_->served) {
        start();
    }
    stop();
}

bool HttpServer::bind(const std::string& host, int port) {
    if (port == 0) {
        port_ = impl_->server.bind_to_any_port(host);
        return port_ > 0;
    }
    if (!impl_->server.bind_to_port(host, port)) {
        return false;
    }
    port_ = port;
    return true;
}

void HttpServer::start() {
    impl_->served = true;
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

void HttpServer::run() {
    impl_->served = true;
    impl_->server.listen_after_bind();
}

void HttpServer::stop() {
    impl_->server.stop();
    if (impl_->thread.joinable()) {
        impl_->thread.join();
    }
}

} // namespace iothub
