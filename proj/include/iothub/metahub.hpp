#pragma once

// The meta-hub: hub registry, descriptor and app catalogs, ranked search and
// usage metering.

#include "iothub/app.hpp"
#include "iothub/clock.hpp"
#include "iothub/enablers.hpp"
#include "iothub/http_server.hpp"

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

namespace iothub {

enum class BillingScheme { Free, QuantityBased, TimeBased };
enum class UsageKind { CatalogQuery, DescriptorFetch, AppFetch };

std::string_view to_string(BillingScheme s);
std::optional<BillingScheme> parse_billing_scheme(std::string_view text);
std::string_view to_string(UsageKind k);

/// Usage of callers that do not name a registered hub.
inline constexpr std::string_view kAnonymousHub = "anonymous";

struct MetahubConfig {
    std::string metahub_id = "metahub";
    std::string bind_address = "127.0.0.1";
    int listen_port = 9090;
    BillingScheme default_scheme = BillingScheme::Free;
    std::map<std::string, BillingScheme> schemes;
};

/// Throws Error(config_error).
MetahubConfig parse_metahub_config(const json& j);
MetahubConfig load_metahub_config(const std::filesystem::path& path);

struct HubRegistration {
    std::string hub_id;
    std::string base_uri;
    std::int64_t registered_at = 0;
    std::int64_t last_seen = 0;
};

struct CatalogEntry {
    std::string hub_id;
    FeedDescriptor descriptor;
    std::string descriptor_hash;
    std::optional<GeoPoint> position;
    std::optional<double> accuracy;
    std::optional<double> latency_ms;
    std::int64_t published_at = 0;
};

struct SearchQuery {
    std::set<std::string> keywords;
    std::optional<std::string> aggregation_class;
    std::optional<GeoPoint> center;
    std::optional<std::size_t> k;
    std::size_t max_results = 100;
};

struct AppCatalogEntry {
    std::string app_id;
    std::string name;
    std::string version;
    AppPackage package;
    /// Canonical serialization as published; served verbatim.
    std::string package_bytes;
    std::set<std::string> keywords;
    std::int64_t published_at = 0;
};

struct UsageRecord {
    std::string hub_id;
    std::map<UsageKind, std::uint64_t> counters;
    BillingScheme scheme = BillingScheme::Free;
};

void to_json(json& j, const HubRegistration& r);
void to_json(json& j, const CatalogEntry& e);
void to_json(json& j, const UsageRecord& u);

/// Lower-cased descriptor and field keywords.
std::set<std::string> entry_keywords(const FeedDescriptor& d);
/// Occurrences of the query keywords over the descriptor and its fields.
std::size_t keyword_matches(const FeedDescriptor& d, const std::set<std::string>& keywords);

/// Ranking order: match count desc, accuracy desc (missing = 0), latency asc
/// (missing = +inf), hub_id asc, descriptor_hash asc.
bool rank_before(const CatalogEntry& a, std::size_t matches_a, const CatalogEntry& b, std::size_t matches_b);

class Metahub {
public:
    explicit Metahub(MetahubConfig config = {}, Scheduler* clock = nullptr);

    ApiResponse handle(const ApiRequest& req);

    /// Creates or refreshes; throws Error(invalid_uri).
    HubRegistration register_hub(const std::string& hub_id, const std::string& base_uri);
    std::optional<HubRegistration> hub(const std::string& hub_id) const;

    /// Inserts, or refreshes published_at and quality of an existing
    /// (hub_id, hash) entry. Throws unregistered_hub, invalid_descriptor,
    /// scope_violation or schema_error.
    CatalogEntry publish_descriptor(const std::string& hub_id, const FeedDescriptor& descriptor,
                                    std::optional<GeoPoint> position = std::nullopt,
                                    std::optional<double> accuracy = std::nullopt,
                                    std::optional<double> latency_ms = std::nullopt);
    bool remove_descriptor(const std::string& hub_id, const std::string& hash);
    std::size_t catalog_size() const;
    std::vector<CatalogEntry> entries() const;
    /// Entries with this hash, ordered by hub_id.
    std::vector<CatalogEntry> entries_with_hash(const std::string& hash) const;

    /// Throws Error(schema_error) when k is given without a center.
    std::vector<CatalogEntry> search(const SearchQuery& query) const;

    /// Throws invalid_package or duplicate_version.
    AppCatalogEntry publish_app(const AppPackage& pkg);
    std::vector<AppCatalogEntry> apps() const;
    std::optional<AppCatalogEntry> app(const std::string& app_id, const std::string& version) const;

    bool add_enabler(const EnablerDescriptor& d);
    std::vector<EnablerDescriptor> enablers() const;

    /// Counts under `hub_id` when registered, else under kAnonymousHub.
    UsageRecord record_usage(const std::string& hub_id, UsageKind kind);
    UsageRecord usage(const std::string& hub_id) const;

    const MetahubConfig& config() const noexcept { return config_; }

private:
    struct Counters {
        std::atomic<std::uint64_t> values[3] = {0, 0, 0};
    };

    std::int64_t now_ms() const;
    std::string usage_key(const std::string& hub_id) const;
    ApiResponse route(const ApiRequest& req);
    /// Entry plus the publishing hub's current base_uri.
    json entry_json(const CatalogEntry& e) const;

    MetahubConfig config_;
    Scheduler* clock_;

    mutable std::shared_mutex mutex_;
    std::map<std::string, HubRegistration> hubs_;
    std::map<std::pair<std::string, std::string>, CatalogEntry> catalog_;
    std::map<std::pair<std::string, std::string>, AppCatalogEntry> apps_;
    std::vector<EnablerDescriptor> enablers_;

    mutable std::shared_mutex usage_mutex_;
    std::map<std::string, std::unique_ptr<Counters>> usage_;
};

} // namespace iothub
