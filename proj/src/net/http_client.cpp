#include "iothub/http_client.hpp"

#include "iothub/engine.hpp"

#include <httplib.h>

#include <regex>

namespace iothub {

std::optional<UrlParts> split_url(const std::string& url) {
    static const std::regex re(R"(^(http://[A-Za-z0-9.\-]+(?::[0-9]{1,5})?)(/[^\s#]*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, re)) {
        return std::nullopt;
    }
    return UrlParts{m[1].str(), m[2].matched ? m[2].str() : "/"};
}

std::optional<HttpResponse> http_request(const std::string& method, const std::string& url,
                                         const std::string& body,
                                         const std::map<std::string, std::string>& headers,
                                         std::chrono::milliseconds timeout) {
    const auto parts = split_url(url);
    if (!parts) {
        return std::nullopt;
    }
    httplib::Client client(parts->origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers h(headers.begin(), headers.end());
    httplib::Result res;
    if (method == "GET") {
        res = client.Get(parts->path, h);
    } else if (method == "POST") {
        res = client.Post(parts->path, h, body, "application/json");
    } else if (method == "PUT") {
        res = client.Put(parts->path, h, body, "application/json");
    } else if (method == "DELETE") {
        res = client.Delete(parts->path, h, body, "application/json");
    } else {
        return std::nullopt;
    }
    if (!res) {
        return std::nullopt;
    }
    return HttpResponse{res->status, res->body};
}

HttpTransport http_transport(std::chrono::milliseconds timeout) {
    return [timeout](const std::string& method, const std::string& url, const std::string& body,
                     const std::map<std::string, std::string>& headers) {
        return http_request(method, url, body, headers, timeout);
    };
}

WebhookPoster http_webhook_poster(std::chrono::milliseconds timeout) {
    return [timeout](const std::string& url, const std::string& body) {
        const auto res = http_request("POST", url, body, {}, timeout);
        return res && res->status >= 200 && res->status < 300;
    };
}

} // namespace iothub
