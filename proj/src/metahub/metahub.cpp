#include "iothub/metahub.hpp"

#include "iothub/error.hpp"
#include "iothub/hash.hpp"
#include "iothub/http_client.hpp"
#include "iothub/hub.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <regex>
#include <sstream>

namespace iothub {

namespace {

constexpr std::string_view kSchemeNames[] = {"free", "quantity_based", "time_based"};
constexpr std::string_view kUsageNames[] = {"catalog_query", "descriptor_fetch", "app_fetch"};

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

bool valid_hub_id(const std::string& id) {
    static const std::regex re(R"(^[A-Za-z0-9_][A-Za-z0-9_.:-]*$)");
    return std::regex_match(id, re);
}

[[noreturn]] void config_fail(const std::string& msg) {
    throw Error(Errc::config_error, "meta-hub config: " + msg);
}

double query_number(const ApiRequest& req, const std::string& key) {
    const std::string& s = req.query.at(key);
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw Error(Errc::schema_error, "query parameter '" + key + "' must be a number", key);
    }
    return v;
}

std::size_t query_count(const ApiRequest& req, const std::string& key) {
    const std::string& s = req.query.at(key);
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw Error(Errc::schema_error, "query parameter '" + key + "' must be a non-negative integer", key);
    }
    return v;
}

std::set<std::string> split_keywords(const std::string& q) {
    std::set<std::string> out;
    std::istringstream in(q);
    for (std::string w; in >> w;) {
        out.insert(lower(w));
    }
    return out;
}

json app_summary(const AppCatalogEntry& e) {
    return json{{"app_id", e.app_id},   {"name", e.name},
                {"version", e.version}, {"keywords", e.keywords},
                {"published_at", e.published_at}};
}

} // namespace

std::string_view to_string(BillingScheme s) {
    return kSchemeNames[static_cast<int>(s)];
}

std::optional<BillingScheme> parse_billing_scheme(std::string_view text) {
    for (int i = 0; i < 3; ++i) {
        if (kSchemeNames[i] == text) {
            return static_cast<BillingScheme>(i);
        }
    }
    return std::nullopt;
}

std::string_view to_string(UsageKind k) {
    return kUsageNames[static_cast<int>(k)];
}

MetahubConfig parse_metahub_config(const json& j) {
    if (!j.is_object()) {
        config_fail("must be a JSON object");
    }
    static const std::set<std::string> known = {"metahub_id", "bind_address", "listen_port", "default_scheme",
                                                "schemes"};
    for (const auto& [k, v] : j.items()) {
        if (!known.contains(k)) {
            config_fail("unknown key '" + k + "'");
        }
    }
    MetahubConfig c;
    try {
        c.metahub_id = j.value("metahub_id", c.metahub_id);
        c.bind_address = j.value("bind_address", c.bind_address);
        c.listen_port = j.value("listen_port", c.listen_port);
        if (j.contains("default_scheme")) {
            const auto s = parse_billing_scheme(j.at("default_scheme").get<std::string>());
            if (!s) {
                config_fail("unknown billing scheme");
            }
            c.default_scheme = *s;
        }
        const json schemes = j.value("schemes", json::object());
        for (const auto& [hub, scheme] : schemes.items()) {
            const auto s = parse_billing_scheme(scheme.get<std::string>());
            if (!s) {
                config_fail("unknown billing scheme for " + hub);
            }
            c.schemes[hub] = *s;
        }
    } catch (const json::exception& e) {
        config_fail(e.what());
    }
    if (c.listen_port < 1 || c.listen_port > 65535) {
        config_fail("listen_port must be in [1, 65535]");
    }
    return c;
}

MetahubConfig load_metahub_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        config_fail("cannot read " + path.string());
    }
    try {
        return parse_metahub_config(json::parse(in));
    } catch (const json::exception& e) {
        config_fail(path.string() + ": " + e.what());
    }
}

void to_json(json& j, const HubRegistration& r) {
    j = json{{"hub_id", r.hub_id},
             {"base_uri", r.base_uri},
             {"registered_at", r.registered_at},
             {"last_seen", r.last_seen}};
}

void to_json(json& j, const CatalogEntry& e) {
    j = json{{"hub_id", e.hub_id},
             {"descriptor", e.descriptor},
             {"descriptor_hash", e.descriptor_hash},
             {"published_at", e.published_at}};
    j["position"] = e.position ? value_to_json(*e.position) : json(nullptr);
    j["accuracy"] = e.accuracy ? json(*e.accuracy) : json(nullptr);
    j["latency_ms"] = e.latency_ms ? json(*e.latency_ms) : json(nullptr);
}

void to_json(json& j, const UsageRecord& u) {
    json counters = json::object();
    for (int i = 0; i < 3; ++i) {
        const auto k = static_cast<UsageKind>(i);
        auto it = u.counters.find(k);
        counters[std::string(to_string(k))] = it == u.counters.end() ? 0 : it->second;
    }
    j = json{{"hub_id", u.hub_id}, {"scheme", std::string(to_string(u.scheme))}, {"counters", counters}};
}

std::set<std::string> entry_keywords(const FeedDescriptor& d) {
    std::set<std::string> out;
    for (const auto& k : d.keywords) {
        out.insert(lower(k));
    }
    for (const auto& f : d.fields) {
        for (const auto& k : f.keywords) {
            out.insert(lower(k));
        }
    }
    return out;
}

std::size_t keyword_matches(const FeedDescriptor& d, const std::set<std::string>& keywords) {
    std::size_t n = 0;
    auto count_in = [&](const std::set<std::string>& set) {
        for (const auto& k : set) {
            if (keywords.contains(lower(k))) {
                ++n;
            }
        }
    };
    count_in(d.keywords);
    for (const auto& f : d.fields) {
        count_in(f.keywords);
    }
    return n;
}

bool rank_before(const CatalogEntry& a, std::size_t matches_a, const CatalogEntry& b, std::size_t matches_b) {
    if (matches_a != matches_b) {
        return matches_a > matches_b;
    }
    const double acc_a = a.accuracy.value_or(0.0);
    const double acc_b = b.accuracy.value_or(0.0);
    if (acc_a != acc_b) {
        return acc_a > acc_b;
    }
    const double inf = std::numeric_limits<double>::infinity();
    const double lat_a = a.latency_ms.value_or(inf);
    const double lat_b = b.latency_ms.value_or(inf);
    if (lat_a != lat_b) {
        return lat_a < lat_b;
    }
    if (a.hub_id != b.hub_id) {
        return a.hub_id < b.hub_id;
    }
    return a.descriptor_hash < b.descriptor_hash;
}

// ---------------------------------------------------------------------------

Metahub::Metahub(MetahubConfig config, Scheduler* clock) : config_(std::move(config)), clock_(clock) {}

std::int64_t Metahub::now_ms() const {
    if (clock_) {
        return clock_->now_ms();
    }
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

HubRegistration Metahub::register_hub(const std::string& hub_id, const std::string& base_uri) {
    if (!valid_hub_id(hub_id) || hub_id == kAnonymousHub) {
        throw Error(Errc::schema_error, "hub_id '" + hub_id + "' is not a valid identifier", hub_id);
    }
    if (!split_url(base_uri)) {
        throw Error(Errc::invalid_uri, "base_uri '" + base_uri + "' is not an absolute http URI", base_uri);
    }
    const auto now = now_ms();
    std::unique_lock lock(mutex_);
    auto [it, inserted] = hubs_.try_emplace(hub_id, HubRegistration{hub_id, base_uri, now, now});
    if (!inserted) {
        it->second.base_uri = base_uri;
        it->second.last_seen = std::max(now, it->second.last_seen);
    }
    return it->second;
}

std::optional<HubRegistration> Metahub::hub(const std::string& hub_id) const {
    std::shared_lock lock(mutex_);
    auto it = hubs_.find(hub_id);
    if (it == hubs_.end()) {
        return std::nullopt;
    }
    return it->second;
}

CatalogEntry Metahub::publish_descriptor(const std::string& hub_id, const FeedDescriptor& descriptor,
                                         std::optional<GeoPoint> position, std::optional<double> accuracy,
                                         std::optional<double> latency_ms) {
    if (const auto report = validate_feed(descriptor); !report.ok()) {
        throw Error(Errc::invalid_descriptor, report.summary(), descriptor.id);
    }
    if (descriptor.scope != Scope::Global) {
        throw Error(Errc::scope_violation, "only global descriptors can be published", descriptor.id);
    }
    if (position && !valid_coordinates(*position)) {
        throw Error(Errc::schema_error, "position out of range");
    }
    if (accuracy && !(*accuracy >= 0.0 && *accuracy <= 1.0)) {
        throw Error(Errc::schema_error, "accuracy must be in [0, 1]");
    }
    if (latency_ms && !(*latency_ms >= 0.0 && std::isfinite(*latency_ms))) {
        throw Error(Errc::schema_error, "latency_ms must be a non-negative number");
    }
    const std::string hash = descriptor_hash(descriptor);
    const auto now = now_ms();
    std::unique_lock lock(mutex_);
    auto hub = hubs_.find(hub_id);
    if (hub == hubs_.end()) {
        throw Error(Errc::unregistered_hub, "hub '" + hub_id + "' is not registered", hub_id);
    }
    hub->second.last_seen = std::max(now, hub->second.last_seen);
    auto [it, inserted] = catalog_.try_emplace({hub_id, hash});
    CatalogEntry& e = it->second;
    if (inserted) {
        e.hub_id = hub_id;
        e.descriptor = descriptor;
        e.descriptor_hash = hash;
    }
    e.position = position;
    e.accuracy = accuracy;
    e.latency_ms = latency_ms;
    e.published_at = now;
    return e;
}

bool Metahub::remove_descriptor(const std::string& hub_id, const std::string& hash) {
    std::unique_lock lock(mutex_);
    return catalog_.erase({hub_id, hash}) > 0;
}

std::size_t Metahub::catalog_size() const {
    std::shared_lock lock(mutex_);
    return catalog_.size();
}

std::vector<CatalogEntry> Metahub::entries() const {
    std::shared_lock lock(mutex_);
    std::vector<CatalogEntry> out;
    for (const auto& [key, e] : catalog_) {
        out.push_back(e);
    }
    return out;
}

std::vector<CatalogEntry> Metahub::entries_with_hash(const std::string& hash) const {
    std::shared_lock lock(mutex_);
    std::vector<CatalogEntry> out;
    for (const auto& [key, e] : catalog_) {
        if (key.second == hash) {
            out.push_back(e);
        }
    }
    return out;
}

std::vector<CatalogEntry> Metahub::search(const SearchQuery& query) const {
    if (query.k && !query.center) {
        throw Error(Errc::schema_error, "a geo k needs a center");
    }
    std::set<std::string> wanted;
    for (const auto& k : query.keywords) {
        wanted.insert(lower(k));
    }
    const auto cls = query.aggregation_class ? std::optional(lower(*query.aggregation_class)) : std::nullopt;

    struct Candidate {
        const CatalogEntry* entry;
        std::size_t matches;
        double distance;
    };
    std::vector<Candidate> cands;
    std::shared_lock lock(mutex_);
    for (const auto& [key, e] : catalog_) {
        if (cls && std::none_of(e.descriptor.fields.begin(), e.descriptor.fields.end(), [&](const FieldDescriptor& f) {
                return lower(f.semantic_type.aggregation_class) == *cls;
            })) {
            continue;
        }
        const auto kws = entry_keywords(e.descriptor);
        if (!std::includes(kws.begin(), kws.end(), wanted.begin(), wanted.end())) {
            continue;
        }
        if (query.k && !e.position) {
            continue;
        }
        const double d = query.k ? haversine_km(*query.center, *e.position) : 0.0;
        cands.push_back({&e, keyword_matches(e.descriptor, wanted), d});
    }

    if (query.k) {
        const std::size_t k = std::min(*query.k, cands.size());
        std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(k), cands.end(),
                          [](const Candidate& a, const Candidate& b) {
                              if (a.distance != b.distance) {
                                  return a.distance < b.distance;
                              }
                              if (a.entry->hub_id != b.entry->hub_id) {
                                  return a.entry->hub_id < b.entry->hub_id;
                              }
                              return a.entry->descriptor_hash < b.entry->descriptor_hash;
                          });
        cands.resize(k);
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        return rank_before(*a.entry, a.matches, *b.entry, b.matches);
    });
    std::vector<CatalogEntry> out;
    for (std::size_t i = 0; i < cands.size() && i < query.max_results; ++i) {
        out.push_back(*cands[i].entry);
    }
    return out;
}

AppCatalogEntry Metahub::publish_app(const AppPackage& pkg) {
    if (const auto report = validate_app_static(pkg); !report.ok()) {
        throw Error(Errc::invalid_package, report.summary(), pkg.app_id);
    }
    AppCatalogEntry e{pkg.app_id, pkg.name, pkg.version, pkg, canonical_of(pkg), pkg.keywords, now_ms()};
    std::unique_lock lock(mutex_);
    auto [it, inserted] = apps_.try_emplace({pkg.app_id, pkg.version}, e);
    if (!inserted) {
        throw Error(Errc::duplicate_version,
                    "app '" + pkg.app_id + "' version '" + pkg.version + "' is already published", pkg.app_id);
    }
    return e;
}

std::vector<AppCatalogEntry> Metahub::apps() const {
    std::shared_lock lock(mutex_);
    std::vector<AppCatalogEntry> out;
    for (const auto& [key, e] : apps_) {
        out.push_back(e);
    }
    return out;
}

std::optional<AppCatalogEntry> Metahub::app(const std::string& app_id, const std::string& version) const {
    std::shared_lock lock(mutex_);
    auto it = apps_.find({app_id, version});
    if (it == apps_.end()) {
        return std::nullopt;
    }
    return it->second;
}

bool Metahub::add_enabler(const EnablerDescriptor& d) {
    for (const auto& f : d.produces) {
        if (const auto report = validate_feed(f); !report.ok()) {
            throw Error(Errc::invalid_descriptor, "enabler " + d.id + ": " + report.summary(), d.id);
        }
    }
    std::unique_lock lock(mutex_);
    if (std::any_of(enablers_.begin(), enablers_.end(), [&](const EnablerDescriptor& e) { return e.id == d.id; })) {
        return false;
    }
    enablers_.push_back(d);
    return true;
}

std::vector<EnablerDescriptor> Metahub::enablers() const {
    std::shared_lock lock(mutex_);
    return enablers_;
}

std::string Metahub::usage_key(const std::string& hub_id) const {
    std::shared_lock lock(mutex_);
    return hubs_.contains(hub_id) ? hub_id : std::string(kAnonymousHub);
}

UsageRecord Metahub::record_usage(const std::string& hub_id, UsageKind kind) {
    const std::string key = usage_key(hub_id);
    Counters* counters = nullptr;
    {
        std::shared_lock lock(usage_mutex_);
        if (auto it = usage_.find(key); it != usage_.end()) {
            counters = it->second.get();
        }
    }
    if (!counters) {
        std::unique_lock lock(usage_mutex_);
        auto& slot = usage_[key];
        if (!slot) {
            slot = std::make_unique<Counters>();
        }
        counters = slot.get();
    }
    counters->values[static_cast<int>(kind)].fetch_add(1, std::memory_order_relaxed);
    return usage(key);
}

UsageRecord Metahub::usage(const std::string& hub_id) const {
    UsageRecord u;
    u.hub_id = hub_id;
    auto scheme = config_.schemes.find(hub_id);
    u.scheme = scheme == config_.schemes.end() ? config_.default_scheme : scheme->second;
    std::shared_lock lock(usage_mutex_);
    auto it = usage_.find(hub_id);
    for (int i = 0; i < 3; ++i) {
        u.counters[static_cast<UsageKind>(i)] =
            it == usage_.end() ? 0 : it->second->values[i].load(std::memory_order_relaxed);
    }
    return u;
}

ApiResponse Metahub::handle(const ApiRequest& req) {
    try {
        return route(req);
    } catch (const Error& e) {
        return error_response(e);
    }
}

json Metahub::entry_json(const CatalogEntry& e) const {
    json j = e;
    const auto reg = hub(e.hub_id);
    j["base_uri"] = reg ? json(reg->base_uri) : json(nullptr);
    return j;
}

ApiResponse Metahub::route(const ApiRequest& req) {
    const auto seg = path_segments(req.path);
    const std::string& m = req.method;
    const std::string caller = req.header("x-hub-id").value_or(std::string(kAnonymousHub));
    auto not_found = [] { return error_response(404, "not_found", "no such route"); };

    if (seg.empty()) {
        return m == "GET" ? json_response(200, json{{"metahub_id", config_.metahub_id}}) : not_found();
    }

    if (seg[0] == "hubs" && seg.size() == 1) {
        if (m == "POST") {
            const json body = parse_json(req.body);
            if (!body.is_object() || !body.contains("hub_id") || !body["hub_id"].is_string() ||
                !body.contains("base_uri") || !body["base_uri"].is_string()) {
                throw Error(Errc::schema_error, "expected {hub_id, base_uri}");
            }
            const bool known = hub(body["hub_id"]).has_value();
            return json_response(known ? 200 : 201, register_hub(body["hub_id"], body["base_uri"]));
        }
        if (m == "GET") {
            std::shared_lock lock(mutex_);
            json out = json::array();
            for (const auto& [id, r] : hubs_) {
                out.push_back(r);
            }
            return json_response(200, out);
        }
        return not_found();
    }

    if (seg[0] == "accounting" && seg.size() == 2 && m == "GET") {
        return json_response(200, usage(seg[1]));
    }

    if (seg[0] != "catalog" || seg.size() < 2) {
        return not_found();
    }
    const std::string& area = seg[1];

    if (area == "feeds") {
        if (seg.size() == 2 && m == "POST") {
            const json body = parse_json(req.body);
            if (!body.is_object() || !body.contains("descriptor")) {
                throw Error(Errc::schema_error, "expected {descriptor, ...}");
            }
            const std::string hub_id =
                body.contains("hub_id") && body["hub_id"].is_string() ? body["hub_id"].get<std::string>() : caller;
            std::optional<GeoPoint> position;
            if (body.contains("position") && !body["position"].is_null()) {
                position = std::get<GeoPoint>(value_from_json(body["position"], ValueKind::GeoPoint));
            }
            auto number = [&](const char* key) -> std::optional<double> {
                if (!body.contains(key) || body[key].is_null()) {
                    return std::nullopt;
                }
                if (!body[key].is_number()) {
                    throw Error(Errc::schema_error, std::string(key) + " must be a number");
                }
                return body[key].get<double>();
            };
            const auto desc = decode<FeedDescriptor>(body["descriptor"]);
            const bool existed = [&] {
                if (!validate_feed(desc).ok()) {
                    return false;
                }
                std::shared_lock lock(mutex_);
                return catalog_.contains({hub_id, descriptor_hash(desc)});
            }();
            const auto entry = publish_descriptor(hub_id, desc, position, number("accuracy"), number("latency_ms"));
            return json_response(existed ? 200 : 201, entry_json(entry));
        }
        if (seg.size() == 2 && m == "GET") {
            SearchQuery q;
            if (auto it = req.query.find("q"); it != req.query.end()) {
                q.keywords = split_keywords(it->second);
            }
            if (auto it = req.query.find("class"); it != req.query.end() && !it->second.empty()) {
                q.aggregation_class = it->second;
            }
            const bool has_lat = req.query.contains("lat");
            const bool has_lon = req.query.contains("lon");
            if (has_lat != has_lon) {
                throw Error(Errc::schema_error, "lat and lon go together");
            }
            if (has_lat) {
                q.center = GeoPoint{query_number(req, "lat"), query_number(req, "lon")};
                if (!valid_coordinates(*q.center)) {
                    throw Error(Errc::schema_error, "center out of range");
                }
            }
            if (req.query.contains("k")) {
                q.k = query_count(req, "k");
            }
            if (req.query.contains("max")) {
                q.max_results = query_count(req, "max");
            }
            json out = json::array();
            for (const auto& e : search(q)) {
                out.push_back(entry_json(e));
            }
            record_usage(caller, UsageKind::CatalogQuery);
            return json_response(200, out);
        }
        if (seg.size() == 3 && m == "GET") {
            auto entries = entries_with_hash(seg[2]);
            if (auto it = req.query.find("hub"); it != req.query.end()) {
                std::erase_if(entries, [&](const CatalogEntry& e) { return e.hub_id != it->second; });
            }
            if (entries.empty()) {
                return error_response(404, "not_found", "no catalog entry with hash " + seg[2]);
            }
            record_usage(caller, UsageKind::DescriptorFetch);
            return json_response(200, entry_json(entries.front()));
        }
        if (seg.size() == 3 && m == "DELETE") {
            if (!remove_descriptor(caller, seg[2])) {
                return error_response(404, "not_found", "no catalog entry of " + caller + " with hash " + seg[2]);
            }
            ApiResponse r;
            r.status = 204;
            r.content_type = "text/plain";
            return r;
        }
        return not_found();
    }

    if (area == "apps") {
        if (seg.size() == 2 && m == "POST") {
            const auto entry = publish_app(decode<AppPackage>(parse_json(req.body)));
            return json_response(201, app_summary(entry));
        }
        if (seg.size() == 2 && m == "GET") {
            std::set<std::string> wanted;
            if (auto it = req.query.find("q"); it != req.query.end()) {
                wanted = split_keywords(it->second);
            }
            json out = json::array();
            for (const auto& e : apps()) {
                std::set<std::string> kws;
                for (const auto& k : e.keywords) {
                    kws.insert(lower(k));
                }
                kws.insert(lower(e.app_id));
                if (std::includes(kws.begin(), kws.end(), wanted.begin(), wanted.end())) {
                    out.push_back(app_summary(e));
                }
            }
            record_usage(caller, UsageKind::CatalogQuery);
            return json_response(200, out);
        }
        if (seg.size() == 4 && m == "GET") {
            const auto e = app(seg[2], seg[3]);
            if (!e) {
                return error_response(404, "unknown_app", "no app " + seg[2] + " version " + seg[3]);
            }
            record_usage(caller, UsageKind::AppFetch);
            ApiResponse r;
            r.status = 200;
            r.body = e->package_bytes;
            return r;
        }
        return not_found();
    }

    if (area == "enablers" && seg.size() == 2) {
        if (m == "GET") {
            json out = json::array();
            for (const auto& e : enablers()) {
                out.push_back(e);
            }
            return json_response(200, out);
        }
        if (m == "POST") {
            const auto d = decode<EnablerDescriptor>(parse_json(req.body));
            return json_response(add_enabler(d) ? 201 : 200, d);
        }
    }
    return not_found();
}

} // namespace iothub
