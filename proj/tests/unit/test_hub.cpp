#include "api.hpp"
#include "fixtures.hpp"
#include "hub_harness.hpp"

#include "iothub/error.hpp"
#include "iothub/hub.hpp"

#include <doctest.h>
#include <httplib.h>

#include <filesystem>
#include <fstream>
#include <thread>

using namespace iothub;
using namespace iothub::testing;

namespace {

Errc code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return Errc::io_error;
}

json body_of(const ApiResponse& r) {
    return json::parse(r.body);
}

std::string error_of(const ApiResponse& r) {
    const auto j = try_parse(r.body);
    return j && j->contains("error") ? (*j)["error"].get<std::string>() : std::string();
}

/// A hub with an accelerometer, a switch, a weather series and tokens.
struct Home : HubHarness {
    std::string hub_token;
    std::string global_token;

    Home() {
        auto weather = weather_series("weather");
        weather.scope = Scope::Global;
        weather.keywords = {"weather", "outdoor"};
        REQUIRE(owner("POST", "/feeds", weather).status == 201);
        auto accel = accel_feed("accel");
        accel.scope = Scope::Hub;
        REQUIRE(owner("POST", "/feeds", accel).status == 201);
        REQUIRE(owner("POST", "/feeds", gps_feed("gps")).status == 201);
        hub_token = body_of(owner("POST", "/tokens", {{"grants", {"hub"}}}))["token"];
        global_token = body_of(owner("POST", "/tokens", {{"grants", {"global"}}}))["token"];
    }

    void weather_sample(double temperature) {
        owner("POST", "/feeds/weather/data",
              {{"values", {{"t", clock.now_ms()}, {"temperature", temperature}, {"humidity", 50.0}}}});
        clock.run_until(clock.now_ms() + 200);
    }
};

} // namespace

TEST_CASE("authorize follows the scope order") {
    const AccessToken owner{"o", {Scope::Private, Scope::Hub, Scope::Global}, "owner", true};
    const AccessToken hub{"h", {Scope::Hub}, "", false};
    const AccessToken global{"g", {Scope::Global}, "", false};
    for (auto s : {Scope::Private, Scope::Hub, Scope::Global}) {
        CHECK(authorize(owner, s));
    }
    CHECK_FALSE(authorize(global, Scope::Private));
    CHECK_FALSE(authorize(global, Scope::Hub));
    CHECK(authorize(global, Scope::Global));
    CHECK_FALSE(authorize(hub, Scope::Private));
    CHECK(authorize(hub, Scope::Hub));
    CHECK(authorize(hub, Scope::Global));
    CHECK_FALSE(authorize(AccessToken{}, Scope::Global));
}

TEST_CASE("tokens") {
    Home h;
    CHECK(h.call("GET", "/feeds", "").status == 401);
    CHECK(h.call("GET", "/feeds", "unknown").status == 401);
    CHECK(h.call("GET", "/feeds", h.global_token).status == 200);

    CHECK(h.call("POST", "/tokens", h.hub_token, R"({"grants":["global"]})").status == 403);
    CHECK(h.owner("POST", "/tokens", {{"grants", {"private"}}}).status == 403);
    CHECK(h.owner("POST", "/tokens", {{"grants", json::array()}}).status == 400);
    CHECK(h.owner("POST", "/tokens", {{"grants", {"root"}}}).status == 400);
    CHECK(code_of([&] { h.hub.revoke_token(kOwnerToken); }) == Errc::config_error);

    CHECK(h.owner("DELETE", "/tokens/" + h.global_token).status == 204);
    CHECK(h.call("GET", "/feeds", h.global_token).status == 401);
    CHECK(h.owner("DELETE", "/tokens/" + h.global_token).status == 404);
    CHECK(h.call("DELETE", "/tokens/" + h.hub_token, h.hub_token).status == 403);
}

TEST_CASE("feed routes") {
    Home h;
    SUBCASE("listing is filtered by scope") {
        auto ids = [&](const std::string& tok) {
            std::set<std::string> out;
            for (const auto& f : body_of(h.call("GET", "/feeds", tok))) {
                out.insert(f["id"].get<std::string>());
            }
            return out;
        };
        CHECK(ids(kOwnerToken) == std::set<std::string>{"accel", "gps", "weather"});
        CHECK(ids(h.hub_token) == std::set<std::string>{"accel", "weather"});
        CHECK(ids(h.global_token) == std::set<std::string>{"weather"});
    }
    SUBCASE("create and delete") {
        const auto dup = h.owner("POST", "/feeds", weather_series("weather"));
        CHECK(dup.status == 409);
        CHECK(error_of(dup) == "duplicate_id");
        CHECK(h.owner("POST", "/feeds", json{{"id", "x"}}).status == 400);
        CHECK(h.owner("POST", "/feeds", gps_feed("bad id")).status == 400);
        CHECK(h.call("POST", "/feeds", h.hub_token, canonical_of(gps_feed("g2"))).status == 403);
        CHECK(h.call("DELETE", "/feeds/accel", h.hub_token).status == 403);
        CHECK(h.owner("DELETE", "/feeds/accel").status == 204);
        CHECK(h.owner("GET", "/feeds/accel").status == 404);
        CHECK(error_of(h.owner("GET", "/feeds/accel")) == "unknown_feed");
    }
    SUBCASE("private data is refused to other tokens") {
        const auto r = h.call("GET", "/feeds/gps/data", h.hub_token);
        CHECK(r.status == 403);
        CHECK(error_of(r) == "scope_violation");
        CHECK(h.call("GET", "/feeds/accel/latest", h.global_token).status == 403);
        CHECK(h.call("GET", "/feeds/gps", h.global_token).status == 403);
    }
    SUBCASE("data ingest and range queries") {
        for (int i = 0; i < 10; ++i) {
            h.weather_sample(10.0 + i);
        }
        const auto all = body_of(h.call("GET", "/feeds/weather/data", h.global_token));
        REQUIRE(all.size() == 10);
        CHECK(all[0]["seq"] == 1);
        CHECK(all[9]["values"]["temperature"] == 19.0);
        const auto t0 = all[0]["t_ms"].get<std::int64_t>();
        const auto window = body_of(h.call(
            "GET", "/feeds/weather/data?from=" + std::to_string(t0 + 200) + "&to=" + std::to_string(t0 + 800) + "&limit=2",
            h.hub_token));
        REQUIRE(window.size() == 2);
        CHECK(window[0]["seq"] == 2);
        CHECK(h.call("GET", "/feeds/weather/data?limit=-1", h.hub_token).status == 400);
        CHECK(h.call("GET", "/feeds/weather/data?from=abc", h.hub_token).status == 400);
        CHECK(body_of(h.call("GET", "/feeds/weather/latest", h.global_token))["seq"] == 10);

        const auto explicit_seq = h.owner("POST", "/feeds/weather/data",
                                          {{"seq", 11}, {"t_ms", h.clock.now_ms()},
                                           {"values", {{"t", h.clock.now_ms()}, {"temperature", 1.0}, {"humidity", 2.0}}}});
        CHECK(explicit_seq.status == 201);
        const auto stale = h.owner("POST", "/feeds/weather/data",
                                   {{"seq", 11}, {"t_ms", h.clock.now_ms()},
                                    {"values", {{"t", h.clock.now_ms()}, {"temperature", 1.0}, {"humidity", 2.0}}}});
        CHECK(stale.status == 400);
        CHECK(error_of(stale) == "out_of_order");
        CHECK(h.owner("POST", "/feeds/weather/data", {{"values", {{"pressure", 1.0}}}}).status == 400);
        CHECK(h.owner("POST", "/feeds/weather/data", {{"values", {{"temperature", "warm"}}}}).status == 400);
        CHECK(h.call("POST", "/feeds/weather/data", h.hub_token, R"({"values":{}})").status == 403);
    }
    SUBCASE("latest on an empty feed") {
        const auto r = h.owner("GET", "/feeds/gps/latest");
        CHECK(r.status == 404);
        CHECK(error_of(r) == "no_data");
    }
    SUBCASE("unknown routes") {
        CHECK(h.owner("GET", "/nothing").status == 404);
        CHECK(h.owner("PUT", "/feeds").status == 405);
        CHECK(h.owner("GET", "/feeds/weather/other").status == 404);
        CHECK(body_of(h.owner("GET", "/"))["hub_id"] == "home");
    }
}

TEST_CASE("actuator commands") {
    Home h;
    REQUIRE(h.owner("POST", "/enablers/switch/instantiate", {{"feed_id", "lamp"}}).status == 201);
    const auto on = h.owner("POST", "/feeds/lamp/commands", {{"command", "toggle"}});
    CHECK(on.status == 200);
    CHECK(body_of(on)["on"] == true);
    CHECK(body_of(h.owner("POST", "/feeds/lamp/commands", {{"command", "set"}, {"on", true}}))["on"] == true);
    CHECK(body_of(h.owner("POST", "/feeds/lamp/commands", {{"command", "toggle"}}))["on"] == false);
    CHECK(h.owner("POST", "/feeds/lamp/commands", {{"command", "blink"}}).status == 400);
    CHECK(error_of(h.owner("POST", "/feeds/weather/commands", {{"command", "toggle"}})) == "not_an_actuator");
    CHECK(h.owner("POST", "/feeds/lamp/data", {{"values", {{"on", true}}}}).status == 400);
    CHECK(h.call("POST", "/feeds/lamp/commands", h.hub_token, R"({"command":"toggle"})").status == 403);
}

TEST_CASE("pipes") {
    Home h;
    SUBCASE("temperature and humidity cannot be aggregated") {
        const PipeSpec mixed{{"weather"}, {{"agg", AggregateParams{AggregateFn::Mean, {"temperature", "humidity"}, 0}, {"weather"}}}, "agg"};
        const auto r = h.owner("POST", "/pipes", {{"pipe", mixed}});
        CHECK(r.status == 400);
        CHECK(error_of(r) == "type_error");
    }
    SUBCASE("a cycle is a conflict") {
        const PipeSpec self{{"loop"}, {{"d", SlidingDeltaParams{"temperature", "force"}, {"loop"}}}, "d"};
        const auto r = h.owner("POST", "/pipes", {{"id", "loop"}, {"pipe", self}});
        CHECK(r.status == 409);
        CHECK(error_of(r) == "cycle_error");
    }
    SUBCASE("a valid pipe creates a derived feed") {
        const PipeSpec hot{{"weather"}, {{"hot", FilterParams{"temperature", CompareOp::Gt, 25.0}, {"weather"}}}, "hot"};
        const auto r = h.owner("POST", "/pipes", hot);
        REQUIRE(r.status == 201);
        const auto d = body_of(r);
        CHECK(d["id"] == "pipe-1");
        CHECK(d["kind"] == "derived");
        CHECK(d["dependencies"] == json::array({"weather"}));
        h.weather_sample(20.0);
        h.weather_sample(30.0);
        const auto out = body_of(h.owner("GET", "/feeds/pipe-1/data"));
        REQUIRE(out.size() == 1);
        CHECK(out[0]["values"]["temperature"] == 30.0);
        CHECK(h.owner("POST", "/feeds/pipe-1/data", {{"values", {{"temperature", 1.0}}}}).status == 400);
        CHECK(error_of(h.owner("DELETE", "/feeds/weather")) == "has_dependents");
        CHECK(h.call("POST", "/pipes", h.hub_token, canonical_of(hot)).status == 403);
    }
    SUBCASE("unknown source") {
        const PipeSpec ghost{{"ghost"}, {}, ""};
        CHECK(error_of(h.owner("POST", "/pipes", ghost)) == "unknown_feed");
    }
}

TEST_CASE("subscriptions") {
    Home h;
    const auto sub = h.call("POST", "/subscriptions", h.global_token,
                            canonical(json{{"feed_id", "weather"}, {"callback_url", "http://client.test/hook"}}));
    REQUIRE(sub.status == 201);
    const std::string id = body_of(sub)["id"];
    h.weather_sample(12.5);
    h.hub.engine().drain_webhooks();
    std::vector<Outbound> hooks;
    for (const auto& o : h.sent()) {
        if (o.url == "http://client.test/hook") {
            hooks.push_back(o);
        }
    }
    REQUIRE(hooks.size() == 1);
    CHECK(json::parse(hooks[0].body)["values"]["temperature"] == 12.5);

    CHECK(h.call("POST", "/subscriptions", h.global_token,
                 canonical(json{{"feed_id", "gps"}, {"callback_url", "http://client.test/hook"}}))
              .status == 403);
    CHECK(h.call("POST", "/subscriptions", h.global_token,
                 canonical(json{{"feed_id", "weather"}, {"callback_url", "nope"}}))
              .status == 400);
    CHECK(h.call("POST", "/subscriptions", h.global_token, "{}").status == 400);
    CHECK(h.call("DELETE", "/subscriptions/" + id, h.hub_token).status == 403);
    CHECK(h.call("DELETE", "/subscriptions/" + id, h.global_token).status == 204);
    CHECK(h.call("DELETE", "/subscriptions/" + id, h.global_token).status == 404);
}

TEST_CASE("apps over the API") {
    Home h;
    REQUIRE(h.owner("POST", "/enablers/switch/instantiate", {{"feed_id", "lamp"}}).status == 201);
    const auto installed = h.owner("POST", "/apps", shake_app());
    REQUIRE(installed.status == 201);
    CHECK(body_of(installed)["state"] == "installed");
    // Reinstalling replaces a package that is not running.
    CHECK(h.owner("POST", "/apps", shake_app()).status == 201);
    CHECK(body_of(h.owner("GET", "/apps/shake_flash")) == json(shake_app()));
    const auto started = h.owner("POST", "/apps/shake_flash/start");
    REQUIRE(started.status == 200);
    CHECK(body_of(started)["state"] == "running");
    CHECK(h.owner("POST", "/apps/shake_flash/start").status == 409);
    CHECK(error_of(h.owner("POST", "/apps", shake_app())) == "already_running");

    for (int i = 0; i < 3; ++i) {
        const double z = i == 2 ? 19.8 : 9.8;
        h.owner("POST", "/feeds/accel/data", {{"values", {{"x", 0.0}, {"y", 0.0}, {"z", z}}}});
        h.clock.run_until(h.clock.now_ms() + 200);
    }
    const auto status = body_of(h.owner("GET", "/apps/shake_flash/status"));
    CHECK(status["fire_count"] == 1);
    CHECK(body_of(h.owner("GET", "/feeds/lamp/latest"))["values"]["on"] == true);

    CHECK(body_of(h.owner("POST", "/apps/shake_flash/stop"))["state"] == "stopped");
    CHECK(h.owner("POST", "/apps/shake_flash/stop").status == 409);
    CHECK(h.owner("GET", "/apps/nope/status").status == 404);
    CHECK(h.call("GET", "/apps", h.hub_token).status == 403);
    CHECK(body_of(h.owner("GET", "/apps")).size() == 1);
}

TEST_CASE("publication sends descriptors only") {
    Home h;
    const auto r = h.owner("POST", "/publications", {{"feed_id", "weather"}, {"metahub_url", kMetahubUrl}});
    REQUIRE(r.status == 201);
    CHECK(body_of(r)["feed_id"] == "weather");
    CHECK(h.metahub.catalog_size() == 1);
    const auto entry = h.metahub.entries().front();
    CHECK(entry.hub_id == "home");
    CHECK(entry.descriptor == h.hub.engine().feed("weather"));
    CHECK(entry.accuracy == 0.9);
    REQUIRE(entry.position);
    CHECK(entry.position->lat == 60.17);
    CHECK(h.metahub.hub("home")->base_uri == "http://home.test:8080");

    // Auto-registration: a 404 from the catalog, POST /hubs, then the retry.
    const auto sent = h.sent();
    REQUIRE(sent.size() == 3);
    CHECK(sent[1].url == std::string(kMetahubUrl) + "/hubs");
    for (int i = 0; i < 5; ++i) {
        h.weather_sample(i);
    }
    for (const auto& o : h.sent()) {
        CHECK_FALSE(contains_key(json::parse(o.body), "values"));
    }

    SUBCASE("republishing an unchanged feed sends nothing") {
        CHECK(h.owner("POST", "/publications", {{"feed_id", "weather"}, {"metahub_url", kMetahubUrl}}).status == 201);
        CHECK(h.sent().size() == 3);
        CHECK(h.metahub.catalog_size() == 1);
        CHECK(body_of(h.owner("GET", "/publications")).size() == 1);
    }
    SUBCASE("a private feed is never sent") {
        const auto p = h.owner("POST", "/publications", {{"feed_id", "gps"}, {"metahub_url", kMetahubUrl}});
        CHECK(p.status == 403);
        CHECK(error_of(p) == "scope_violation");
        CHECK(h.sent().size() == 3);
        CHECK(h.owner("POST", "/publications", {{"feed_id", "accel"}, {"metahub_url", kMetahubUrl}}).status == 403);
    }
    SUBCASE("an unreachable meta-hub is reported") {
        auto city = weather_series("other");
        city.scope = Scope::Global;
        h.owner("POST", "/feeds", city);
        h.set_metahub_down(true);
        const auto p = h.owner("POST", "/publications", {{"feed_id", "other"}, {"metahub_url", kMetahubUrl}});
        CHECK(p.status == 502);
        CHECK(error_of(p) == "metahub_unreachable");
        h.set_metahub_down(false);
        CHECK(h.owner("POST", "/publications", {{"feed_id", "other"}, {"metahub_url", kMetahubUrl}}).status == 201);
        CHECK(h.metahub.catalog_size() == 2);
    }
    SUBCASE("bad meta-hub url") {
        CHECK(h.owner("POST", "/publications", {{"feed_id", "weather"}, {"metahub_url", "nope"}}).status == 400);
    }
    SUBCASE("non-owners cannot publish") {
        CHECK(h.call("POST", "/publications", h.global_token,
                     canonical(json{{"feed_id", "weather"}, {"metahub_url", kMetahubUrl}}))
                  .status == 403);
    }
}

TEST_CASE("registration with configured meta-hubs") {
    HubHarness h;
    CHECK(h.hub.register_with_metahubs().empty());
    CHECK(h.metahub.hub("home"));
    h.set_metahub_down(true);
    CHECK(h.hub.register_with_metahubs() == std::vector<std::string>{kMetahubUrl});
}

TEST_CASE("privacy wall holds under fuzzed non-owner requests") {
    const auto rep = run_privacy_fuzz(2024, 10000);
    INFO(rep.first_leak);
    CHECK(rep.requests == 10000);
    CHECK(rep.leaks == 0);
    CHECK(rep.webhook_leaks == 0);
    CHECK(rep.webhook_deliveries > 0);
    CHECK(rep.city_samples > 0);
    CHECK(rep.non_city_values == 0);
    CHECK(rep.owner_sees_geo);
    // The fuzz reaches both allowed and refused paths.
    CHECK(rep.statuses.contains(200));
    CHECK(rep.statuses.contains(201));
    CHECK(rep.statuses.contains(401));
    CHECK(rep.statuses.contains(403));
    CHECK(rep.statuses.contains(404));
}

TEST_CASE("GET requests never change state") {
    Home h;
    h.owner("POST", "/pipes", {{"id", "city"}, {"scope", "global"}, {"pipe", anonymize_pipe("gps")}});
    h.owner("POST", "/feeds/gps/data", {{"values", {{"position", {{"lat", 60.2}, {"lon", 24.9}}}}}});
    h.owner("POST", "/subscriptions", {{"feed_id", "weather"}, {"callback_url", "http://client.test/hook"}});
    h.owner("POST", "/enablers/switch/instantiate", {{"feed_id", "lamp"}});
    h.owner("POST", "/apps", shake_app());
    h.owner("POST", "/publications", {{"feed_id", "weather"}, {"metahub_url", kMetahubUrl}});
    for (int i = 0; i < 5; ++i) {
        h.weather_sample(i);
    }
    const std::vector<std::string> targets = {
        "/",
        "/feeds",
        "/feeds/weather",
        "/feeds/weather/data",
        "/feeds/weather/data?from=0&limit=2",
        "/feeds/weather/latest",
        "/feeds/gps/latest",
        "/feeds/city/data",
        "/feeds/city/stream",
        "/feeds/ghost",
        "/apps",
        "/apps/shake_flash",
        "/apps/shake_flash/status",
        "/publications",
        "/enablers",
        "/nothing",
    };
    const std::string before = h.hub.state_digest();
    for (const auto& tok : {std::string(kOwnerToken), h.hub_token, h.global_token, std::string("x")}) {
        for (const auto& t : targets) {
            for (int rep = 0; rep < 3; ++rep) {
                auto r = h.call("GET", t, tok);
                if (r.on_close) {
                    r.on_close();
                }
                CHECK_MESSAGE(h.hub.state_digest() == before, "GET " << t);
            }
        }
    }
}

TEST_CASE("event stream over HTTP") {
    HubConfig cfg = harness_config();
    cfg.clock_mode = ClockMode::Wall;
    Hub hub(cfg);
    auto weather = weather_series("weather");
    weather.scope = Scope::Global;
    hub.engine().create_feed(weather);
    const auto token = hub.issue_token({Scope::Global}, "viewer").token;

    HttpServer server([&](const ApiRequest& r) { return hub.handle(r); });
    REQUIRE(server.bind("127.0.0.1", 0));
    server.start();

    std::atomic<bool> done{false};
    std::thread producer([&] {
        // Keep publishing until the client has what it needs.
        double temp = 0;
        while (!done) {
            if (!hub.engine().subscriptions("weather").empty()) {
                hub.engine().publish_next("weather",
                                          {{"t", hub.engine().now_ms()}, {"temperature", temp}, {"humidity", 50.0}});
                temp += 1;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
    });

    httplib::Client client("127.0.0.1", server.port());
    client.set_read_timeout(5, 0);
    std::string text;
    std::vector<std::string> frames;
    const auto res = client.Get("/feeds/weather/stream", {{"Authorization", "Bearer " + token}},
                                [&](const char* data, std::size_t len) {
                                    text.append(data, len);
                                    std::size_t end;
                                    while ((end = text.find("\n\n")) != std::string::npos) {
                                        const auto frame = text.substr(0, end);
                                        text.erase(0, end + 2);
                                        if (frame.rfind("id: ", 0) == 0) {
                                            frames.push_back(frame);
                                        }
                                    }
                                    return frames.size() < 3;
                                });
    done = true;
    producer.join();

    REQUIRE(frames.size() >= 3);
    std::int64_t last = 0;
    for (const auto& f : frames) {
        const auto data = f.find("\ndata: ");
        REQUIRE(data != std::string::npos);
        CHECK(f.find("\nevent: sample\n") != std::string::npos);
        const auto sample = json::parse(f.substr(data + 7));
        CHECK(sample["feed_id"] == "weather");
        CHECK(f.substr(4, f.find('\n') - 4) == std::to_string(sample["seq"].get<std::int64_t>()));
        CHECK(sample["seq"].get<std::int64_t>() > last);
        last = sample["seq"];
    }

    // The stream's subscription goes away once the client hangs up.
    for (int i = 0; i < 100 && !hub.engine().subscriptions("weather").empty(); ++i) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    CHECK(hub.engine().subscriptions("weather").empty());

    const auto denied = client.Get("/feeds/weather/stream");
    REQUIRE(denied);
    CHECK(denied->status == 401);
    server.stop();
}

TEST_CASE("hub config") {
    const auto c = parse_hub_config(json::parse(R"({"hub_id": "home", "owner_token": "s", "listen_port": 8181,
        "metahub_urls": ["http://127.0.0.1:9090"], "clock_mode": "simulated",
        "enablers": [{"enabler": "switch", "config": {"feed_id": "lamp"}}]})"));
    CHECK(c.listen_port == 8181);
    CHECK(c.clock_mode == ClockMode::Simulated);
    CHECK(c.enablers.size() == 1);
    CHECK(code_of([] { parse_hub_config(json::parse(R"({"hub_id": "h"})")); }) == Errc::config_error);
    CHECK(code_of([] { parse_hub_config(json::parse(R"({"owner_token": "s", "listen_port": 70000})")); }) ==
          Errc::config_error);
    CHECK(code_of([] { parse_hub_config(json::parse(R"({"owner_token": "s", "colour": "red"})")); }) ==
          Errc::config_error);
    CHECK(code_of([] { parse_hub_config(json::parse(R"({"owner_token": "s", "clock_mode": "lunar"})")); }) ==
          Errc::config_error);
    CHECK(code_of([] { parse_hub_config(json::parse(R"({"owner_token": "s", "metahub_urls": ["x"]})")); }) ==
          Errc::config_error);
    CHECK(code_of([] { load_hub_config("/nonexistent/hub.json"); }) == Errc::config_error);

    const auto dir = std::filesystem::temp_directory_path() / "iothub_hub_config_test";
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "hub.json") << R"({"owner_token": "s", "data_dir": "data", "city_table_path": "cities.tsv"})";
    const auto loaded = load_hub_config(dir / "hub.json");
    CHECK(*loaded.data_dir == dir / "data");
    CHECK(*loaded.city_table_path == dir / "cities.tsv");
    std::filesystem::remove_all(dir);

    HubConfig bad = harness_config();
    bad.enablers = {{"warp_drive", json::object()}};
    CHECK(code_of([&] { Hub hub(bad); }) == Errc::config_error);
}

TEST_CASE("semantic types from config") {
    const auto c = parse_hub_config(json::parse(R"({"owner_token": "s", "semantic_types": [
        {"id": "energy", "value_kind": "decimal", "unit": "kwh", "aggregation_class": "energy"}]})"));
    REQUIRE(c.semantic_types.size() == 1);
    CHECK(c.semantic_types[0].aggregation_class == "energy");
    CHECK(code_of([] {
        parse_hub_config(json::parse(R"({"owner_token": "s", "semantic_types": [{"id": "energy"}]})"));
    }) == Errc::config_error);

    HubConfig cfg = harness_config();
    cfg.semantic_types = c.semantic_types;
    HubHarness h(cfg);
    FeedDescriptor meter;
    meter.id = "meter";
    meter.kind = FeedKind::TimeSeries;
    meter.fields = {stored("t", timestamp()), {"energy", c.semantic_types[0], AccessMode::Stored, {}}};
    CHECK(h.owner("POST", "/feeds", meter).status == 201);
    // Summing energy with temperature mixes aggregation classes.
    CHECK(h.owner("POST", "/feeds", weather_series("weather")).status == 201);
    const PipeSpec mixed{{"meter", "weather"},
                         {{"sum", AggregateParams{AggregateFn::Sum, {"energy", "temperature"}, 0}, {"meter", "weather"}}},
                         "sum"};
    const auto res = h.owner("POST", "/pipes", {{"id", "mixed"}, {"pipe", mixed}});
    CHECK(res.status == 400);
    CHECK(json::parse(res.body)["error"] == "type_error");

    // A hub without the type rejects the descriptor.
    HubHarness plain;
    CHECK(plain.owner("POST", "/feeds", meter).status == 400);

    HubConfig clash = harness_config();
    clash.semantic_types = {{"temperature", ValueKind::Decimal, "kelvin", "energy"}};
    CHECK(code_of([&] { Hub hub(clash); }) == Errc::config_error);
}

TEST_CASE("shipped sample configs load") {
    const std::string dir = std::string(IOTHUB_SOURCE_DIR) + "/data/config/";
    const auto hub = load_hub_config(dir + "hub.json");
    CHECK(hub.hub_id == "home");
    CHECK(CityTable::load(*hub.city_table_path).entries().size() == CityTable::nordic().entries().size());
    const auto mh = load_metahub_config(dir + "metahub.json");
    CHECK(mh.listen_port == 9090);
    CHECK(mh.schemes.size() == 1);
}
