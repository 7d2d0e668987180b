#pragma once

// Request builders and response inspection for the in-process API tests.

#include "iothub/canonical.hpp"
#include "iothub/http_server.hpp"

#include <map>
#include <optional>
#include <string>

namespace iothub::testing {

/// `target` may carry a query string; values are taken literally.
inline ApiRequest make_request(std::string method, std::string target, std::string body = {},
                               const std::map<std::string, std::string>& headers = {}) {
    ApiRequest r;
    r.method = std::move(method);
    if (const auto q = target.find('?'); q != std::string::npos) {
        const std::string rest = target.substr(q + 1);
        target.resize(q);
        std::size_t i = 0;
        while (i <= rest.size()) {
            auto amp = rest.find('&', i);
            if (amp == std::string::npos) {
                amp = rest.size();
            }
            const std::string kv = rest.substr(i, amp - i);
            if (!kv.empty()) {
                const auto eq = kv.find('=');
                r.query.emplace(kv.substr(0, eq), eq == std::string::npos ? "" : kv.substr(eq + 1));
            }
            i = amp + 1;
        }
    }
    r.path = std::move(target);
    r.body = std::move(body);
    for (const auto& [k, v] : headers) {
        std::string key = k;
        for (auto& c : key) {
            c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
        r.headers[key] = v;
    }
    return r;
}

inline std::optional<json> try_parse(const std::string& body) {
    try {
        return json::parse(body);
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

/// True when any object in `j` looks like a serialized geo point.
inline bool contains_geo(const json& j) {
    if (j.is_object()) {
        if (j.contains("lat") || j.contains("lon")) {
            return true;
        }
        for (const auto& [k, v] : j.items()) {
            if (contains_geo(v)) {
                return true;
            }
        }
    } else if (j.is_array()) {
        for (const auto& v : j) {
            if (contains_geo(v)) {
                return true;
            }
        }
    }
    return false;
}

inline bool contains_key(const json& j, const std::string& key) {
    if (j.is_object()) {
        if (j.contains(key)) {
            return true;
        }
        for (const auto& [k, v] : j.items()) {
            if (contains_key(v, key)) {
                return true;
            }
        }
    } else if (j.is_array()) {
        for (const auto& v : j) {
            if (contains_key(v, key)) {
                return true;
            }
        }
    }
    return false;
}

} // namespace iothub::testing
