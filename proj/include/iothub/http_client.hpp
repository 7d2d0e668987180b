#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <optional>
#include <string>

namespace iothub {

struct UrlParts {
    std::string origin;  // scheme://host[:port]
    std::string path;    // starts with '/'
};

/// Splits an absolute http URL; nullopt for anything else.
std::optional<UrlParts> split_url(const std::string& url);

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Blocking request through the bundled client. nullopt when the server
/// could not be reached.
std::optional<HttpResponse> http_request(const std::string& method, const std::string& url,
                                         const std::string& body = "",
                                         const std::map<std::string, std::string>& headers = {},
                                         std::chrono::milliseconds timeout = std::chrono::milliseconds(2000));

/// Outbound request function; swapped for an in-process handler in tests.
using HttpTransport = std::function<std::optional<HttpResponse>(
    const std::string& method, const std::string& url, const std::string& body,
    const std::map<std::string, std::string>& headers)>;

HttpTransport http_transport(std::chrono::milliseconds timeout = std::chrono::milliseconds(2000));

} // namespace iothub
