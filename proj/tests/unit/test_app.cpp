#include "fixtures.hpp"

#include "iothub/app.hpp"
#include "iothub/error.hpp"
#include "iothub/trace.hpp"

#include <doctest.h>

#include <fstream>
#include <random>
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

EngineOptions sim_options(Scheduler& clock) {
    EngineOptions o;
    o.clock = &clock;
    o.webhook_poster = [](const std::string&, const std::string&) { return true; };
    return o;
}

struct Hub {
    SimulatedScheduler clock{0};
    Engine engine{sim_options(clock)};
    EnablerRegistry enablers{engine, clock};
    AppEngine apps{engine, enablers};
    std::vector<Sample> toggles;

    /// Accelerometer + switch, toggles recorded from the switch feed.
    void add_devices() {
        engine.create_feed(accel_feed("accel"));
        engine.create_feed(switch_feed("switch"));
        engine.subscribe("switch", Sink::internal([this](const Sample& s) { toggles.push_back(s); }));
    }

    void play(const std::vector<AccelSample>& trace) {
        for (const auto& a : trace) {
            engine.publish_next("accel", {{"x", a.x}, {"y", a.y}, {"z", a.z}}, a.t_ms);
        }
    }

    std::vector<std::int64_t> toggle_times() const {
        std::vector<std::int64_t> out;
        for (const auto& s : toggles) {
            out.push_back(s.t_ms);
        }
        return out;
    }
};

AppPackage two_class_app() {
    AppPackage p;
    p.app_id = "comfort";
    p.version = "1";
    p.requirements = {{"temp", "temperature", FeedKind::AtomicSensor, {"temperature"}},
                      {"hum", "relative_humidity", FeedKind::AtomicSensor, {"humidity"}},
                      {"fan", "switch_state", FeedKind::AtomicActuator, {"on"}}};
    PipeSpec spec;
    spec.sources = {"$0", "$1"};
    spec.operators = {{"agg", AggregateParams{AggregateFn::Mean, {"temperature", "humidity"}, 0}, {"$0", "$1"}}};
    spec.sink = "agg";
    p.pipes = {{"mix", spec}};
    return p;
}

std::vector<AccelSample> constant_force_trace(std::int64_t duration_ms) {
    // Alternating sums make every consecutive force 20.
    std::vector<AccelSample> out;
    for (std::int64_t t = 0; t <= duration_ms; t += 200) {
        const double v = (t / 200) % 2 == 0 ? 10.0 : -10.0;
        out.push_back({t, v, 0.0, 0.0});
    }
    return out;
}

} // namespace

TEST_CASE("shake app package validates and round-trips") {
    const AppPackage app = shake_app();
    const auto report = validate_app_static(app);
    CHECK_MESSAGE(report.ok(), report.summary());
    const json j = app;
    CHECK(decode<AppPackage>(j) == app);
    CHECK(canonical(json(decode<AppPackage>(parse_json(canonical(j))))) == canonical(j));

    std::ifstream in(std::string(IOTHUB_SOURCE_DIR) + "/data/apps/shake_flash.json");
    REQUIRE(in);
    CHECK(decode<AppPackage>(json::parse(in)) == app);
}

TEST_CASE("static validation reports broken packages") {
    auto has = [](const ValidationReport& r, const std::string& needle) {
        for (const auto& v : r.violations) {
            if (v.find(needle) != std::string::npos) {
                return true;
            }
        }
        return false;
    };

    AppPackage unknown_pipe = shake_app();
    unknown_pipe.rules[0].watch_pipe = "nope";
    CHECK(has(validate_app_static(unknown_pipe), "unknown pipe 'nope'"));

    const auto mixed = validate_app_static(two_class_app());
    CHECK(has(mixed, "pipe 'mix'"));
    CHECK(has(mixed, "type_error"));

    AppPackage bad_source = shake_app();
    bad_source.pipes[0].spec.sources = {"$7"};
    bad_source.pipes[0].spec.operators[0].inputs = {"$7"};
    CHECK(has(validate_app_static(bad_source), "does not name a requirement"));

    AppPackage sensor_action = shake_app();
    sensor_action.rules[0].action_requirement = 0;
    CHECK(has(validate_app_static(sensor_action), "not a switch actuator"));

    AppPackage no_param = shake_app();
    no_param.params.clear();
    CHECK(has(validate_app_static(no_param), "unknown param"));

    AppPackage text_field = shake_app();
    text_field.rules[0].field = "missing";
    CHECK(has(validate_app_static(text_field), "no field 'missing'"));

    AppPackage bool_rule = shake_app();
    bool_rule.rules[0].watch_pipe.reset();
    bool_rule.rules[0].watch_requirement = 1;
    bool_rule.rules[0].field = "on";
    bool_rule.rules[0].param.reset();
    bool_rule.rules[0].constant = Value{true};
    CHECK(has(validate_app_static(bool_rule), "only support == and !="));
    bool_rule.rules[0].op = CompareOp::Eq;
    CHECK(validate_app_static(bool_rule).ok());

    AppPackage bad_id = shake_app();
    bad_id.app_id = "has/slash";
    CHECK_FALSE(validate_app_static(bad_id).ok());

    CHECK(code_of([&] { decode<AppPackage>(json{{"app_id", "x"}}); }) == Errc::schema_error);
}

TEST_CASE("binding requirements to hub feeds") {
    const AppPackage app = shake_app();

    std::vector<FeedDescriptor> feeds = {accel_feed("a1"), switch_feed("s1")};
    auto b = bind_requirements(app, feeds);
    CHECK(b.missing.empty());
    CHECK(b.bound.at("accelerometer") == "a1");
    CHECK(b.bound.at("switch") == "s1");

    b = bind_requirements(app, {accel_feed("a1")});
    CHECK(b.missing == std::vector<std::string>{"switch"});

    // Earliest created_at wins, then registry order.
    auto late = accel_feed("late");
    late.created_at = 500;
    auto early = accel_feed("early");
    early.created_at = 100;
    auto tie = accel_feed("tie");
    tie.created_at = 100;
    b = bind_requirements(app, {late, early, tie, switch_feed("s")});
    CHECK(b.bound.at("accelerometer") == "early");

    Hub hub;
    hub.engine.create_feed(accel_feed("accel"));
    auto st = hub.apps.install(app);
    CHECK(st.state == AppState::Unsatisfied);
    CHECK(st.missing == std::vector<std::string>{"switch"});
    CHECK(code_of([&] { hub.apps.start(app.app_id); }) == Errc::not_bound);

    hub.engine.create_feed(switch_feed("switch"));
    st = hub.apps.install(app);
    CHECK(st.state == AppState::Installed);
    CHECK(st.bound_feeds.size() == 2);
    CHECK(code_of([&] { hub.apps.install(two_class_app()); }) == Errc::invalid_package);
    CHECK(code_of([&] { hub.apps.start("ghost"); }) == Errc::unknown_app);
}

TEST_CASE("app lifecycle") {
    Hub hub;
    hub.add_devices();
    const AppPackage app = shake_app();
    hub.apps.install(app);

    auto st = hub.apps.start(app.app_id);
    CHECK(st.state == AppState::Running);
    const auto force_id = AppEngine::derived_feed_id(app.app_id, "force");
    CHECK(st.derived_feeds == std::vector<std::string>{force_id});
    const auto force = hub.engine.feed(force_id);
    CHECK(force.scope == Scope::Private);
    CHECK(force.owner == "app:" + app.app_id);
    CHECK(force.dependencies == std::vector<std::string>{"accel"});
    CHECK(code_of([&] { hub.apps.start(app.app_id); }) == Errc::already_running);
    CHECK(code_of([&] { hub.apps.install(app); }) == Errc::already_running);
    CHECK(code_of([&] { hub.engine.delete_feed("accel"); }) == Errc::has_dependents);

    // A spike at 1000 fires; the rebound at 1200 falls into the cooldown.
    hub.play({{0, 0, 0, 9.81}, {200, 0, 0, 9.81}, {1000, 20, 0, 9.81}, {1200, 0, 0, 9.81}});
    CHECK(hub.toggle_times() == std::vector<std::int64_t>{1000});
    st = hub.apps.status(app.app_id);
    CHECK(st.fire_count == 1);
    CHECK(st.last_fired_ms == 1000);

    st = hub.apps.stop(app.app_id);
    CHECK(st.state == AppState::Stopped);
    CHECK_FALSE(hub.engine.find_feed(force_id));
    CHECK(code_of([&] { hub.apps.stop(app.app_id); }) == Errc::not_running);
    hub.play({{1400, 30, 0, 9.81}, {1600, -30, 0, 9.81}});
    CHECK(hub.toggles.size() == 1);
    CHECK(std::get<bool>(hub.engine.storage().latest("switch")->values.at("on")) == true);

    // Restarting clears the cooldown: 2000 is within 2000 ms of 1000. The
    // fresh pipe has no previous sample at 1800, so the first force is at 2000.
    hub.apps.start(app.app_id);
    hub.play({{1800, 0, 0, 9.81}, {2000, 25, 0, 9.81}});
    CHECK(hub.toggle_times() == std::vector<std::int64_t>{1000, 2000});
    CHECK(hub.apps.status(app.app_id).fire_count == 1);
    CHECK(hub.engine.callback_failures() == 0);
}

TEST_CASE("evaluate_rule fire and suppress semantics") {
    const AppPackage app = shake_app();
    const TriggerRule& rule = app.rules[0];
    const Value threshold = rule_threshold(app, rule);

    RuleState st;
    for (int i = 0; i < 100; ++i) {
        CHECK(evaluate_rule(rule, Value{0.0}, threshold, i * 200, st) == RuleOutcome::NoMatch);
    }
    CHECK_FALSE(st.last_fired_ms);

    RuleState spike;
    std::vector<RuleOutcome> outcomes;
    for (int i = 0; i < 20; ++i) {
        outcomes.push_back(evaluate_rule(rule, Value{i == 3 ? 12.0 : 0.1}, threshold, i * 200, spike));
    }
    CHECK(std::count(outcomes.begin(), outcomes.end(), RuleOutcome::Fire) == 1);
    CHECK(outcomes[3] == RuleOutcome::Fire);

    // Continuous forces for 5 s at 200 ms: fires at t0, t0+2000 and t0+4000.
    const std::int64_t t0 = 10000;
    RuleState cont;
    std::vector<std::int64_t> fired;
    std::vector<std::int64_t> oracle;
    std::optional<std::int64_t> last;
    for (std::int64_t t = t0; t < t0 + 5000; t += 200) {
        const auto out = evaluate_rule(rule, Value{9.0}, threshold, t, cont);
        if (out == RuleOutcome::Fire) {
            fired.push_back(t);
        } else {
            CHECK(out == RuleOutcome::Suppress);
        }
        if (!last || t - *last >= rule.cooldown_ms) {
            oracle.push_back(t);
            last = t;
        }
    }
    CHECK(fired == std::vector<std::int64_t>{t0, t0 + 2000, t0 + 4000});
    CHECK(fired == oracle);

    // Integer observations compare numerically against a decimal threshold.
    RuleState ints;
    CHECK(evaluate_rule(rule, Value{std::int64_t{6}}, threshold, 0, ints) == RuleOutcome::Fire);
    CHECK(evaluate_rule(rule, Value{std::string("9")}, threshold, 5000, ints) == RuleOutcome::NoMatch);
}

TEST_CASE("continuous shaking through the running app toggles every cooldown") {
    Hub hub;
    hub.add_devices();
    hub.apps.install(shake_app());
    hub.apps.start("shake_flash");
    hub.play(constant_force_trace(5000));
    CHECK(hub.toggle_times() == std::vector<std::int64_t>{200, 2200, 4200});
}

TEST_CASE("running app matches the brute-force oracle on generated traces") {
    std::mt19937 rng(2024);
    for (int run = 0; run < 40; ++run) {
        std::vector<TraceStage> stages;
        const int n = 1 + static_cast<int>(rng() % 4);
        for (int i = 0; i < n; ++i) {
            const auto kind = static_cast<StageKind>(rng() % 3);
            const double dur = 5 + static_cast<double>(rng() % 60);
            const double interval = 1 + static_cast<double>(rng() % 10);
            stages.push_back({kind, dur, kind == StageKind::ShakeEvery ? interval : 0});
        }
        const auto trace = generate_trace(stages, rng());
        Hub hub;
        hub.add_devices();
        hub.apps.install(shake_app());
        hub.apps.start("shake_flash");
        hub.play(trace.samples);
        const auto times = hub.toggle_times();
        CHECK(times == shake_oracle(trace.samples, kDefaultShakeThreshold, kShakeCooldownMs));
        for (std::size_t i = 1; i < times.size(); ++i) {
            CHECK(times[i] - times[i - 1] >= kShakeCooldownMs);
        }
        // Toggles alternate the switch, starting from off.
        for (std::size_t i = 0; i < hub.toggles.size(); ++i) {
            CHECK(std::get<bool>(hub.toggles[i].values.at("on")) == (i % 2 == 0));
        }
    }
}

TEST_CASE("evaluation trace through enablers is deterministic across 20 runs") {
    const auto trace = generate_trace(evaluation_stages(), 11);
    const auto path = std::filesystem::temp_directory_path() / "iothub-app-eval-trace.tsv";
    save_trace(path, trace.samples);
    std::string first;
    for (int run = 0; run < 20; ++run) {
        Hub hub;
        hub.enablers.instantiate("accelerometer", {{"trace_path", path.string()}, {"feed_id", "accel"}});
        hub.enablers.instantiate("switch", {{"feed_id", "switch"}});
        hub.engine.subscribe("switch", Sink::internal([&](const Sample& s) { hub.toggles.push_back(s); }));
        hub.apps.install(shake_app());
        hub.apps.start("shake_flash");
        hub.clock.run_all();

        std::string log;
        for (const auto& s : hub.toggles) {
            log += canonical_of(s) + "\n";
        }
        if (run == 0) {
            first = log;
            const auto times = hub.toggle_times();
            CHECK(times == shake_oracle(trace.samples, kDefaultShakeThreshold, kShakeCooldownMs));
            const auto [rest_from, rest_to] = trace.stage_bounds[1];
            const auto [s1_from, s1_to] = trace.stage_bounds[0];
            CHECK(std::count_if(times.begin(), times.end(), [&](auto t) { return t >= s1_from && t < s1_to; }) ==
                  static_cast<long>(trace.shake_events.size()));
            CHECK(std::none_of(times.begin(), times.end(), [&](auto t) { return t >= rest_from && t < rest_to; }));
        }
        CHECK(log == first);
    }
    std::filesystem::remove(path);
}

TEST_CASE("an action failure marks the app failed") {
    Hub hub;
    hub.add_devices();
    hub.apps.install(shake_app());
    hub.apps.start("shake_flash");
    hub.engine.delete_feed("switch");
    hub.play({{0, 0, 0, 9.81}, {200, 20, 0, 9.81}});
    auto st = hub.apps.status("shake_flash");
    CHECK(st.state == AppState::Failed);
    CHECK(st.diagnostic.find("switch") != std::string::npos);
    st = hub.apps.stop("shake_flash");
    CHECK(st.state == AppState::Stopped);
    CHECK(hub.engine.feeds().size() == 1);

    json j = st;
    CHECK(j.at("state") == "stopped");
}

TEST_CASE("start and stop race with a live publisher") {
    EngineOptions o;
    o.webhook_poster = [](const std::string&, const std::string&) { return true; };
    Engine engine(o);
    WallScheduler wall;
    EnablerRegistry enablers(engine, wall);
    AppEngine apps(engine, enablers);
    engine.create_feed(accel_feed("accel"));
    engine.create_feed(switch_feed("switch"));
    apps.install(shake_app());

    std::atomic<bool> done{false};
    std::thread producer([&] {
        for (std::int64_t i = 0; i < 20000; ++i) {
            const double v = i % 7 == 0 ? 20.0 : 0.0;
            engine.publish_next("accel", {{"x", v}, {"y", 0.0}, {"z", 9.81}}, i * 200);
        }
        done = true;
    });
    int cycles = 0;
    while (!done) {
        apps.start("shake_flash");
        apps.stop("shake_flash");
        ++cycles;
    }
    producer.join();
    CHECK(cycles > 0);
    CHECK(apps.status("shake_flash").state == AppState::Stopped);
    CHECK(engine.feeds().size() == 2);
    CHECK(engine.callback_failures() == 0);
}
