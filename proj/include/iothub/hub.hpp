#pragma once

// The IoT hub: REST API over the feed engine, enablers and apps, bearer-token
// scope enforcement, and publication of descriptors to meta-hubs.

#include "iothub/app.hpp"
#include "iothub/enablers.hpp"
#include "iothub/engine.hpp"
#include "iothub/http_client.hpp"
#include "iothub/http_server.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

namespace iothub {

struct EnablerInstance {
    std::string enabler;
    json config = json::object();
};

struct HubConfig {
    std::string hub_id = "hub";
    std::string bind_address = "127.0.0.1";
    int listen_port = 8080;
    /// Advertised to meta-hubs; http://<bind_address>:<port> when empty.
    std::string base_uri;
    std::optional<std::filesystem::path> data_dir;
    std::vector<std::string> metahub_urls;
    std::optional<std::filesystem::path> city_table_path;
    ClockMode clock_mode = ClockMode::Wall;
    std::string owner_token;
    /// Self-reported quality and location sent with publications.
    std::optional<GeoPoint> position;
    std::optional<double> accuracy;
    std::optional<double> latency_ms;
    /// Enabler instances created at startup.
    std::vector<EnablerInstance> enablers;
    /// Added to the built-in semantic types.
    std::vector<SemanticType> semantic_types;
};

/// Throws Error(config_error).
HubConfig parse_hub_config(const json& j);
/// Throws Error(config_error), also for a missing or unreadable file.
HubConfig load_hub_config(const std::filesystem::path& path);

struct AccessToken {
    std::string token;
    std::set<Scope> grants;
    std::string label;
    bool owner = false;
};

/// Allow iff some grant is at most the feed's scope: a hub grant reads hub
/// and global feeds, a global grant only global ones, the owner everything.
bool authorize(const AccessToken& token, Scope feed_scope);

struct PublicationRecord {
    std::string feed_id;
    std::string metahub_url;
    std::int64_t published_at = 0;
    std::string descriptor_hash;
};

void to_json(json& j, const PublicationRecord& r);

/// HTTP status for a domain error code.
int http_status(Errc code);
/// `{"error": <code>, "message": ..., "subject": ...}` response.
ApiResponse error_response(const Error& e);
ApiResponse error_response(int status, const std::string& code, const std::string& message);
ApiResponse json_response(int status, const json& body);

class Hub {
public:
    /// `clock` overrides the configured clock mode. `transport` carries all
    /// outbound requests, meta-hub calls and webhooks (HTTP when empty).
    explicit Hub(HubConfig config, Scheduler* clock = nullptr, HttpTransport transport = {});
    ~Hub();
    Hub(const Hub&) = delete;
    Hub& operator=(const Hub&) = delete;

    ApiResponse handle(const ApiRequest& req);

    Engine& engine() noexcept { return *engine_; }
    EnablerRegistry& enablers() noexcept { return *enablers_; }
    AppEngine& apps() noexcept { return *apps_; }
    Scheduler& scheduler() noexcept { return *clock_; }
    const HubConfig& config() const noexcept { return config_; }
    const std::string& owner_token() const noexcept { return config_.owner_token; }

    /// Non-owner tokens may hold hub and global grants only; throws
    /// Error(config_error) for an empty or private grant set.
    AccessToken issue_token(std::set<Scope> grants, std::string label);
    /// The owner token cannot be revoked.
    bool revoke_token(const std::string& token);
    std::optional<AccessToken> find_token(const std::string& token) const;

    /// Sends the descriptor (never samples) to `<metahub_url>/catalog/feeds`.
    /// Skips the request when the same hash was already published there.
    /// Throws unknown_feed, scope_violation or metahub_unreachable.
    PublicationRecord publish_to_metahub(const std::string& feed_id, const std::string& metahub_url);
    std::vector<PublicationRecord> publications() const;
    /// POST /hubs on every configured meta-hub; returns those that failed.
    std::vector<std::string> register_with_metahubs();

    std::string base_uri() const;
    void set_base_uri(std::string uri);

    /// Digest of all observable state; equal before and after any GET.
    std::string state_digest() const;
    /// Ends every open event stream.
    void close_streams();

private:
    struct Stream {
        std::shared_ptr<EventChannel> channel;
        std::string subscription;
    };

    ApiResponse route(const ApiRequest& req, const AccessToken& token);
    ApiResponse feeds_route(const ApiRequest& req, const AccessToken& token, const std::vector<std::string>& seg);
    ApiResponse open_stream(const std::string& feed_id);
    void register_with(const std::string& metahub_url);

    HubConfig config_;
    std::unique_ptr<Scheduler> owned_clock_;
    Scheduler* clock_;
    HttpTransport transport_;
    TypeRegistry types_;
    std::unique_ptr<Engine> engine_;
    std::unique_ptr<EnablerRegistry> enablers_;
    std::unique_ptr<AppEngine> apps_;

    mutable std::shared_mutex mutex_;
    std::map<std::string, AccessToken> tokens_;
    std::map<std::string, std::string> subscription_owner_;
    std::vector<PublicationRecord> publications_;
    std::map<std::uint64_t, Stream> streams_;
    std::uint64_t next_stream_ = 1;
    std::uint64_t next_pipe_ = 1;
    std::string base_uri_;
};

} // namespace iothub
