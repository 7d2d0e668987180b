#include "iothub/demo.hpp"

#include "iothub/error.hpp"
#include "iothub/hub.hpp"
#include "iothub/metahub.hpp"
#include "iothub/pipe_plan.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <mutex>
#include <random>

namespace iothub {

namespace {

constexpr std::int64_t kHourMs = 3600 * 1000;
constexpr const char* kMetahub = "http://metahub.local";
/// Relative tolerance between city-held weekly totals and sums recomputed
/// from the raw readings.
constexpr double kWeeklyTolerance = 1e-9;

std::string number(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) {
        throw Error(Errc::io_error, "cannot write " + path.string());
    }
}

std::string url_decode(const std::string& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '+') {
            out += ' ';
        } else if (s[i] == '%' && i + 2 < s.size()) {
            int v = 0;
            std::from_chars(s.data() + i + 1, s.data() + i + 3, v, 16);
            out += static_cast<char>(v);
            i += 2;
        } else {
            out += s[i];
        }
    }
    return out;
}

/// In-process transport: origin -> handler, every request logged.
class Router {
public:
    using Handler = std::function<ApiResponse(const ApiRequest&)>;

    void add(const std::string& origin, Handler h) {
        std::lock_guard lock(mutex_);
        handlers_[origin] = std::move(h);
    }

    std::optional<HttpResponse> send(const std::string& method, const std::string& url, const std::string& body,
                                     const std::map<std::string, std::string>& headers) {
        const auto parts = split_url(url);
        Handler h;
        {
            std::lock_guard lock(mutex_);
            log_.push_back({url, body});
            if (!parts) {
                return std::nullopt;
            }
            auto it = handlers_.find(parts->origin);
            if (it == handlers_.end()) {
                return std::nullopt;
            }
            h = it->second;
        }
        ApiRequest req;
        req.method = method;
        req.path = parts->path;
        req.body = body;
        if (const auto q = req.path.find('?'); q != std::string::npos) {
            std::string rest = req.path.substr(q + 1);
            req.path.resize(q);
            std::size_t i = 0;
            while (i < rest.size()) {
                auto amp = rest.find('&', i);
                if (amp == std::string::npos) {
                    amp = rest.size();
                }
                const std::string kv = rest.substr(i, amp - i);
                const auto eq = kv.find('=');
                req.query.emplace(url_decode(kv.substr(0, eq)),
                                  eq == std::string::npos ? "" : url_decode(kv.substr(eq + 1)));
                i = amp + 1;
            }
        }
        for (const auto& [k, v] : headers) {
            std::string key = k;
            for (auto& c : key) {
                c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            }
            req.headers[key] = v;
        }
        const auto res = h(req);
        return HttpResponse{res.status, res.body};
    }

    HttpTransport transport() {
        return [this](const std::string& m, const std::string& u, const std::string& b,
                      const std::map<std::string, std::string>& hd) { return send(m, u, b, hd); };
    }

    std::vector<std::pair<std::string, std::string>> log() const {
        std::lock_guard lock(mutex_);
        return log_;
    }

private:
    mutable std::mutex mutex_;
    std::map<std::string, Handler> handlers_;
    std::vector<std::pair<std::string, std::string>> log_;
};

struct Site {
    std::string id;
    std::string owner;
    std::string base_uri;
    double base_kwh;
    std::unique_ptr<Hub> hub;

    std::string meter() const { return id + ".meter"; }
    std::string weekly() const { return id + ".energy.weekly"; }
};

SemanticType energy_type() {
    return {"energy", ValueKind::Decimal, "kwh", "energy"};
}

HubConfig site_config(const std::string& id, const std::string& owner, const std::string& base_uri,
                      GeoPoint position, double accuracy, double latency) {
    HubConfig c;
    c.hub_id = id;
    c.owner_token = owner;
    c.base_uri = base_uri;
    c.clock_mode = ClockMode::Simulated;
    c.metahub_urls = {kMetahub};
    c.position = position;
    c.accuracy = accuracy;
    c.latency_ms = latency;
    c.semantic_types = {energy_type()};
    return c;
}

json call(Router& router, const std::string& method, const std::string& url, const std::string& token,
          const json& body, int& status) {
    std::map<std::string, std::string> headers;
    if (!token.empty()) {
        headers["Authorization"] = "Bearer " + token;
    }
    const auto res = router.send(method, url, body.is_null() ? std::string() : canonical(body), headers);
    status = res ? res->status : 0;
    if (!res || res->body.empty()) {
        return nullptr;
    }
    try {
        return json::parse(res->body);
    } catch (const json::exception&) {
        return nullptr;
    }
}

json must(Router& router, const std::string& method, const std::string& url, const std::string& token,
          const json& body = nullptr) {
    int status = 0;
    json out = call(router, method, url, token, body, status);
    if (status < 200 || status >= 300) {
        throw Error(Errc::io_error, method + " " + url + " answered " + std::to_string(status) + ": " +
                                        (out.is_null() ? std::string() : out.dump()));
    }
    return out;
}

/// Catalog search on behalf of the city hub, so usage is billed to it.
json city_search(Router& router, const std::string& query) {
    const auto res = router.send("GET", std::string(kMetahub) + "/catalog/feeds?q=" + query, "", {{"X-Hub-Id", "city"}});
    if (!res || res->status != 200) {
        throw Error(Errc::metahub_unreachable, "catalog search for " + query + " failed");
    }
    return json::parse(res->body);
}

FeedDescriptor meter_feed(const std::string& id) {
    FeedDescriptor d;
    d.id = id;
    d.kind = FeedKind::TimeSeries;
    d.scope = Scope::Private;
    d.keywords = {"energy", "meter"};
    d.fields = {{"t", {"time", ValueKind::Timestamp, "ms", "time"}, AccessMode::Stored, {}},
                {"energy", energy_type(), AccessMode::Stored, {}}};
    d.sample_period_ms = kHourMs;
    return d;
}

} // namespace

SmartCityResult run_smart_city(const SmartCityOptions& options) {
    if (options.weeks < 1) {
        throw Error(Errc::config_error, "weeks must be at least 1");
    }
    std::error_code ec;
    std::filesystem::create_directories(options.out_dir, ec);
    if (ec) {
        throw Error(Errc::io_error, "cannot create " + options.out_dir.string() + ": " + ec.message());
    }

    SmartCityResult result;
    SimulatedScheduler clock(kSmartCityStartMs);
    Router router;
    MetahubConfig mh_config;
    mh_config.metahub_id = "city-metahub";
    Metahub metahub(mh_config, &clock);
    router.add(kMetahub, [&](const ApiRequest& r) { return metahub.handle(r); });

    Site home{"home", "home-owner", "http://home.local", 0.4, nullptr};
    Site building{"building", "building-owner", "http://building.local", 3.0, nullptr};
    Site city{"city", "city-owner", "http://city.local", 0, nullptr};
    home.hub = std::make_unique<Hub>(site_config(home.id, home.owner, home.base_uri, {60.1699, 24.9384}, 0.95, 50),
                                     &clock, router.transport());
    building.hub = std::make_unique<Hub>(
        site_config(building.id, building.owner, building.base_uri, {60.1710, 24.9410}, 0.9, 80), &clock,
        router.transport());
    city.hub = std::make_unique<Hub>(site_config(city.id, city.owner, city.base_uri, {60.1699, 24.9384}, 1.0, 20),
                                     &clock, router.transport());
    for (Site* s : {&home, &building, &city}) {
        Hub* hub = s->hub.get();
        router.add(s->base_uri, [hub](const ApiRequest& r) { return hub->handle(r); });
        if (!hub->register_with_metahubs().empty()) {
            throw Error(Errc::metahub_unreachable, s->id + " could not register");
        }
    }

    // Producers: private hourly meter, global weekly sum, published.
    const std::string sum_field = aggregate_output_name(AggregateFn::Sum, "energy");
    std::map<std::string, std::string> city_tokens;
    for (Site* s : {&home, &building}) {
        must(router, "POST", s->base_uri + "/feeds", s->owner, meter_feed(s->meter()));
        const PipeSpec weekly{{s->meter()},
                              {{"week", AggregateParams{AggregateFn::Sum, {"energy"}, kWeekMs}, {s->meter()}}},
                              "week"};
        must(router, "POST", s->base_uri + "/pipes", s->owner,
             {{"id", s->weekly()}, {"scope", "global"}, {"keywords", {"energy", "weekly", s->id}}, {"pipe", weekly}});
        must(router, "POST", s->base_uri + "/publications", s->owner,
             {{"feed_id", s->weekly()}, {"metahub_url", kMetahub}});
        city_tokens[s->id] =
            must(router, "POST", s->base_uri + "/tokens", s->owner, {{"grants", {"global"}}, {"label", "city"}})["token"];
    }

    // Hourly readings; one extra reading opens the week after the last one.
    std::mt19937_64 rng(options.seed);
    auto uniform = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    const std::int64_t hours = static_cast<std::int64_t>(options.weeks) * 7 * 24;
    for (std::int64_t h = 0; h <= hours; ++h) {
        const std::int64_t t = kSmartCityStartMs + h * kHourMs;
        clock.run_until(t);
        const int hour_of_day = static_cast<int>(h % 24);
        const double daytime = hour_of_day >= 7 && hour_of_day < 22 ? 1.0 : 0.35;
        for (Site* s : {&home, &building}) {
            const double kwh = std::round(s->base_kwh * daytime * (0.6 + 0.8 * uniform()) * 1000.0) / 1000.0;
            must(router, "POST", s->base_uri + "/feeds/" + s->meter() + "/data", s->owner,
                 {{"t_ms", t}, {"values", {{"t", t}, {"energy", kwh}}}});
            (s == &home ? result.home_readings : result.building_readings).emplace_back(t, kwh);
        }
    }

    // The city finds weekly reports through the catalog and pulls them.
    const json found = city_search(router, "energy+weekly");
    int probe_status = 0;
    bool raw_private = true;
    for (const auto& entry : found) {
        const std::string source = entry["hub_id"];
        const std::string base = entry["base_uri"];
        const std::string feed = entry["descriptor"]["id"];
        const auto token = city_tokens.at(source);
        const json samples = must(router, "GET", base + "/feeds/" + feed + "/data", token);

        const std::string local = "city.energy." + source;
        FeedDescriptor d;
        d.id = local;
        d.kind = FeedKind::TimeSeries;
        d.scope = Scope::Hub;
        d.keywords = {"energy", "weekly", source};
        d.fields = {{"t", {"time", ValueKind::Timestamp, "ms", "time"}, AccessMode::Stored, {}},
                    {"energy", energy_type(), AccessMode::Stored, {}}};
        d.sample_period_ms = kWeekMs;
        must(router, "POST", city.base_uri + "/feeds", city.owner, d);
        for (const auto& s : samples) {
            const std::int64_t t = s["t_ms"];
            const double kwh = s["values"][sum_field];
            must(router, "POST", city.base_uri + "/feeds/" + local + "/data", city.owner,
                 {{"t_ms", t}, {"values", {{"t", t}, {"energy", kwh}}}});
            result.city_reports.push_back({source, t, kwh});
        }
        // The raw meter stays out of reach for the same token.
        call(router, "GET", base + "/feeds/" + source + ".meter/data", token, nullptr, probe_status);
        raw_private = raw_private && probe_status == 403;
    }
    for (const auto& f : city.hub->engine().feeds()) {
        for (const auto& s : city.hub->engine().storage().query(f.id, TimeSeriesStore::kMinTime,
                                                                TimeSeriesStore::kMaxTime,
                                                                std::numeric_limits<std::size_t>::max())) {
            result.city_samples.push_back(canonical_of(s));
        }
    }

    // Checks against sums recomputed from the raw readings.
    std::map<std::string, std::vector<double>> oracle;
    for (const auto& [source, readings] :
         {std::pair{std::string("home"), &result.home_readings}, {std::string("building"), &result.building_readings}}) {
        std::vector<double> sums(static_cast<std::size_t>(options.weeks), 0.0);
        for (const auto& [t, kwh] : *readings) {
            const auto week = (t - kSmartCityStartMs) / kWeekMs;
            if (week < options.weeks) {
                sums[static_cast<std::size_t>(week)] += kwh;
            }
        }
        oracle[source] = sums;
    }
    bool sums_ok = result.city_reports.size() == 2 * static_cast<std::size_t>(options.weeks);
    std::string sums_detail = std::to_string(result.city_reports.size()) + " weekly reports";
    for (const auto& r : result.city_reports) {
        const auto week = (r.week_end_ms - kSmartCityStartMs) / kWeekMs - 1;
        const auto& sums = oracle[r.source];
        const bool aligned = (r.week_end_ms - kSmartCityStartMs) % kWeekMs == 0 && week >= 0 &&
                             week < static_cast<std::int64_t>(sums.size());
        if (!aligned || std::fabs(r.energy_kwh - sums[static_cast<std::size_t>(week)]) >
                            kWeeklyTolerance * std::max(1.0, std::fabs(sums[static_cast<std::size_t>(week)]))) {
            sums_ok = false;
            sums_detail += "; mismatch for " + r.source + " at " + std::to_string(r.week_end_ms);
        }
    }
    result.checks.push_back({"weekly_sums_match_raw_readings", sums_ok, sums_detail});

    bool only_weekly = result.city_samples.size() == 2 * static_cast<std::size_t>(options.weeks);
    for (const auto& text : result.city_samples) {
        const auto s = json::parse(text);
        const std::int64_t t = s["t_ms"];
        only_weekly = only_weekly && (t - kSmartCityStartMs) % kWeekMs == 0 && s["values"].size() == 2;
    }
    result.checks.push_back({"city_holds_only_weekly_aggregates", only_weekly,
                             std::to_string(result.city_samples.size()) + " samples on the city hub"});
    result.checks.push_back({"catalog_lists_both_reports", found.size() == 2,
                             std::to_string(found.size()) + " catalog entries"});
    result.checks.push_back({"raw_meters_refused", raw_private && !found.empty(), "meter reads with city tokens"});
    const json meters = city_search(router, "meter");
    bool descriptors_only = meters.empty();
    for (const auto& [url, body] : router.log()) {
        if (url.rfind(kMetahub, 0) == 0 && !body.empty() && json::parse(body).contains("values")) {
            descriptors_only = false;
        }
    }
    result.checks.push_back({"meta_hub_never_sees_samples", descriptors_only, "requests to the meta-hub"});

    // Outputs.
    for (const auto& [name, readings] :
         {std::pair{std::string("home_readings.tsv"), &result.home_readings},
          {std::string("building_readings.tsv"), &result.building_readings}}) {
        std::string text = "# t_ms\tenergy_kwh\n";
        for (const auto& [t, kwh] : *readings) {
            text += std::to_string(t) + "\t" + number(kwh) + "\n";
        }
        write_file(options.out_dir / name, text);
    }
    std::string weekly = "# source\tweek_end_ms\tenergy_kwh\trecomputed_kwh\n";
    for (const auto& r : result.city_reports) {
        const auto week = static_cast<std::size_t>((r.week_end_ms - kSmartCityStartMs) / kWeekMs - 1);
        const auto& sums = oracle[r.source];
        weekly += r.source + "\t" + std::to_string(r.week_end_ms) + "\t" + number(r.energy_kwh) + "\t" +
                  (week < sums.size() ? number(sums[week]) : std::string("-")) + "\n";
    }
    write_file(options.out_dir / "weekly.tsv", weekly);
    write_file(options.out_dir / "catalog.json", found.dump(2) + "\n");
    json checks = json::array();
    for (const auto& c : result.checks) {
        checks.push_back({{"name", c.name}, {"ok", c.ok}, {"detail", c.detail}});
    }
    const json summary = {{"scenario", "smart_city"},
                          {"seed", options.seed},
                          {"weeks", options.weeks},
                          {"hubs", {"home", "building", "city"}},
                          {"catalog_entries", found.size()},
                          {"city_samples", result.city_samples.size()},
                          {"usage", json(metahub.usage("city"))},
                          {"checks", checks},
                          {"ok", all_ok(result.checks)}};
    write_file(options.out_dir / "summary.json", summary.dump(2) + "\n");
    return result;
}

} // namespace iothub
