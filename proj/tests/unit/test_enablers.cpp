#include "fixtures.hpp"

#include "iothub/enablers.hpp"
#include "iothub/error.hpp"
#include "iothub/trace.hpp"

#include <doctest.h>

#include <filesystem>
#include <random>
#include <sstream>

#include <unistd.h>

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

// Force computed straight from the trace: |sum_t - sum_{t-1}|.
std::vector<double> forces(const std::vector<AccelSample>& s) {
    std::vector<double> out;
    for (std::size_t i = 1; i < s.size(); ++i) {
        out.push_back(std::fabs((s[i].x + s[i].y + s[i].z) - (s[i - 1].x + s[i - 1].y + s[i - 1].z)));
    }
    return out;
}

std::filesystem::path temp_trace(const std::vector<AccelSample>& samples) {
    static int n = 0;
    auto p = std::filesystem::temp_directory_path() /
             ("iothub-trace-" + std::to_string(::getpid()) + "-" + std::to_string(n++) + ".tsv");
    save_trace(p, samples);
    return p;
}

} // namespace

TEST_CASE("trace generator: rest stays below the shake threshold") {
    const auto trace = generate_trace({{StageKind::Rest, 10, 0}}, 1);
    REQUIRE(trace.samples.size() == 50);
    for (std::size_t i = 0; i < trace.samples.size(); ++i) {
        CHECK(trace.samples[i].t_ms == static_cast<std::int64_t>(i) * 200);
    }
    for (double f : forces(trace.samples)) {
        CHECK(f < 5.0);
    }
    CHECK(trace.shake_events.empty());
}

TEST_CASE("trace generator: shake_every(30) for 90 s has three events") {
    const auto trace = generate_trace({{StageKind::ShakeEvery, 90, 30}}, 9);
    CHECK(trace.samples.size() == 450);
    CHECK(trace.shake_events == std::vector<std::int64_t>{15000, 45000, 75000});
    const auto f = forces(trace.samples);
    for (auto ev : trace.shake_events) {
        const auto idx = static_cast<std::size_t>(ev / 200);
        CHECK(f[idx - 1] > 5.0);
    }
}

TEST_CASE("trace generator: every seed of the evaluation trace is well formed") {
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        const auto trace = generate_trace(evaluation_stages(), seed);
        REQUIRE(trace.samples.size() == (180 + 60 + 30) * 5);
        CHECK(trace.shake_events.size() == 6);
        REQUIRE(trace.stage_bounds.size() == 3);
        CHECK(trace.stage_bounds[1] == std::pair<std::int64_t, std::int64_t>{180000, 240000});
        const auto f = forces(trace.samples);
        // Rest stage: no force above threshold, including the stage boundary.
        for (std::size_t i = 180000 / 200; i < 240000 / 200; ++i) {
            CHECK(f[i - 1] < 5.0);
        }
        // High-frequency stage: every step is a large excursion.
        for (std::size_t i = 240000 / 200; i < trace.samples.size(); ++i) {
            CHECK(f[i - 1] > 5.0);
        }
    }
}

TEST_CASE("trace generator is deterministic and the file format is lossless") {
    const auto a = generate_trace(evaluation_stages(), 77);
    const auto b = generate_trace(evaluation_stages(), 77);
    const auto c = generate_trace(evaluation_stages(), 78);
    std::ostringstream sa, sb, sc;
    write_trace(sa, a.samples);
    write_trace(sb, b.samples);
    write_trace(sc, c.samples);
    CHECK(sa.str() == sb.str());
    CHECK(sa.str() != sc.str());

    std::istringstream in(sa.str());
    CHECK(read_trace(in) == a.samples);

    std::istringstream bad("0\t1.0\t2.0\n");
    CHECK(code_of([&] { read_trace(bad); }) == Errc::config_error);
    CHECK(code_of([&] { generate_trace({{StageKind::Rest, 0, 0}}, 1); }) == Errc::config_error);
}

TEST_CASE("stage lists parse and format") {
    const auto stages = parse_stages("shake_every(30):180, rest:60,shake_fast:30");
    REQUIRE(stages.size() == 3);
    CHECK(stages[0].kind == StageKind::ShakeEvery);
    CHECK(stages[0].interval_s == 30);
    CHECK(stages[2].duration_s == 30);
    CHECK(format_stages(stages) == "shake_every(30):180,rest:60,shake_fast:30");
    CHECK(code_of([&] { parse_stages("wiggle:3"); }) == Errc::config_error);
    CHECK(code_of([&] { parse_stages("rest:0"); }) == Errc::config_error);
}

TEST_CASE("enabler registry listing and remote descriptors") {
    SimulatedScheduler clock;
    Engine engine(sim_options(clock));
    EnablerRegistry reg(engine, clock);
    CHECK(reg.list().size() == 4);
    for (const auto& d : reg.list()) {
        for (const auto& f : d.produces) {
            CHECK(validate_feed(f).ok());
        }
    }
    EnablerDescriptor remote{"ruuvi_tag", DeviceClass::TemperatureSensor, {}, {}};
    CHECK(reg.add_remote(remote));
    CHECK(reg.list().size() == 5);
    CHECK_FALSE(reg.add_remote(remote));
    CHECK(reg.list().size() == 5);

    const json j = remote;
    CHECK(j.get<EnablerDescriptor>() == remote);
    const json builtin = builtin_enablers().front();
    CHECK(builtin.get<EnablerDescriptor>() == builtin_enablers().front());

    // A remote enabler runs the built-in adapter of its device class.
    const auto ids = reg.instantiate("ruuvi_tag", {{"period_ms", 500}});
    REQUIRE(ids.size() == 1);
    clock.run_until(2000);
    CHECK(engine.storage().size(ids[0]) == 1);
    CHECK(engine.storage().last_seq(ids[0]) == 5);
}

TEST_CASE("accelerometer enabler replays its trace at the configured period") {
    SimulatedScheduler clock(1000);
    Engine engine(sim_options(clock));
    EnablerRegistry reg(engine, clock);
    const auto trace = generate_trace({{StageKind::ShakeEvery, 20, 10}}, 3);
    const auto path = temp_trace(trace.samples);

    std::vector<Sample> seen;
    const auto ids = reg.instantiate("accelerometer", {{"trace_path", path.string()}, {"period_ms", 200}, {"feed_id", "accel"}});
    CHECK(ids == std::vector<std::string>{"accel"});
    CHECK(engine.feed("accel").kind == FeedKind::AtomicSensor);
    engine.subscribe("accel", Sink::internal([&](const Sample& s) { seen.push_back(s); }));
    clock.run_all();
    std::filesystem::remove(path);

    REQUIRE(seen.size() == trace.samples.size());
    for (std::size_t i = 0; i < seen.size(); ++i) {
        CHECK(seen[i].t_ms == 1000 + static_cast<std::int64_t>(i) * 200);
        CHECK(std::get<double>(seen[i].values.at("x")) == trace.samples[i].x);
        CHECK(std::get<double>(seen[i].values.at("z")) == trace.samples[i].z);
    }
}

TEST_CASE("instantiate errors") {
    SimulatedScheduler clock;
    Engine engine(sim_options(clock));
    EnablerRegistry reg(engine, clock);
    CHECK(code_of([&] { reg.instantiate("accelerometer", json::object()); }) == Errc::config_error);
    CHECK(code_of([&] { reg.instantiate("accelerometer", {{"trace_path", "/nonexistent/trace.tsv"}}); }) ==
          Errc::config_error);
    CHECK(code_of([&] { reg.instantiate("toaster", json::object()); }) == Errc::unknown_enabler);
    CHECK(code_of([&] { reg.instantiate("switch", {{"initial", "yes"}}); }) == Errc::config_error);
    CHECK(code_of([&] { reg.instantiate("switch", {{"colour", "red"}}); }) == Errc::config_error);
    CHECK(code_of([&] { reg.instantiate("temperature_sensor", {{"period_ms", 0}}); }) == Errc::config_error);
    CHECK(engine.feeds().empty());
}

TEST_CASE("sensor enablers publish exactly on their period in simulated mode") {
    SimulatedScheduler clock(0);
    Engine engine(sim_options(clock));
    EnablerRegistry reg(engine, clock);
    const auto temp = reg.instantiate("temperature_sensor", {{"period_ms", 250}, {"seed", 4}})[0];
    const auto gps = reg.instantiate("gps_sensor", {{"period_ms", 1000}, {"scope", "private"}})[0];
    std::vector<std::int64_t> tt, gt;
    engine.subscribe(temp, Sink::internal([&](const Sample& s) { tt.push_back(s.t_ms); }));
    engine.subscribe(gps, Sink::internal([&](const Sample& s) { gt.push_back(s.t_ms); }));
    clock.run_until(10000);
    REQUIRE(tt.size() == 41);
    REQUIRE(gt.size() == 11);
    for (std::size_t i = 1; i < tt.size(); ++i) {
        CHECK(tt[i] - tt[i - 1] == 250);
    }
    for (std::size_t i = 1; i < gt.size(); ++i) {
        CHECK(gt[i] - gt[i - 1] == 1000);
    }
    reg.stop_all();
    clock.run_until(20000);
    CHECK(tt.size() == 41);
}

TEST_CASE("switch commands") {
    SimulatedScheduler clock(100);
    Engine engine(sim_options(clock));
    EnablerRegistry reg(engine, clock);
    const auto sw = reg.instantiate("switch", json::object())[0];
    CHECK(engine.feed(sw).kind == FeedKind::AtomicActuator);
    CHECK(reg.switch_state(sw) == false);

    CHECK(reg.apply_command(sw, SwitchCommand::toggle()) == true);
    CHECK(reg.apply_command(sw, SwitchCommand::set(true)) == true);
    CHECK(engine.storage().last_seq(sw) == 2);
    CHECK(reg.apply_command(sw, SwitchCommand::toggle()) == false);
    CHECK(reg.apply_command(sw, SwitchCommand::toggle()) == true);

    engine.create_feed(accel_feed());
    CHECK(code_of([&] { reg.apply_command("accel", SwitchCommand::toggle()); }) == Errc::not_an_actuator);
    CHECK(code_of([&] { reg.apply_command("nope", SwitchCommand::toggle()); }) == Errc::unknown_feed);

    CHECK(parse_command(json{{"command", "toggle"}}).kind == SwitchCommand::Kind::Toggle);
    CHECK(parse_command(json{{"command", "set"}, {"on", true}}).on);
    CHECK(code_of([&] { parse_command(json{{"command", "set"}}); }) == Errc::schema_error);
    CHECK(code_of([&] { parse_command(json{{"command", "explode"}}); }) == Errc::schema_error);
}

TEST_CASE("actuator state follows the command model (model-based)") {
    std::mt19937 rng(31);
    for (int run = 0; run < 100; ++run) {
        SimulatedScheduler clock(0);
        Engine engine(sim_options(clock));
        EnablerRegistry reg(engine, clock);
        const bool initial = rng() % 2 == 0;
        const auto sw = reg.instantiate("switch", {{"initial", initial}})[0];
        bool model = initial;
        const int n = static_cast<int>(rng() % 40);
        for (int i = 0; i < n; ++i) {
            SwitchCommand cmd = rng() % 3 == 0 ? SwitchCommand::set(rng() % 2 == 0) : SwitchCommand::toggle();
            // Model: the last set assigns, each toggle afterwards flips.
            model = cmd.kind == SwitchCommand::Kind::Set ? cmd.on : !model;
            CHECK(reg.apply_command(sw, cmd, i * 10) == model);
        }
        CHECK(engine.storage().last_seq(sw) == n);
        if (n > 0) {
            CHECK(std::get<bool>(engine.storage().latest(sw)->values.at("on")) == model);
        }
    }
}
