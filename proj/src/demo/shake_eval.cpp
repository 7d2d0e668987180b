#include "iothub/demo.hpp"

#include "iothub/error.hpp"
#include "iothub/hub.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace iothub {

namespace {

constexpr const char* kOwner = "demo-owner";

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

ApiResponse owner_call(Hub& hub, const std::string& method, const std::string& path, const std::string& body = {}) {
    ApiRequest r;
    r.method = method;
    r.path = path;
    r.body = body;
    r.headers["authorization"] = std::string("Bearer ") + kOwner;
    return hub.handle(r);
}

} // namespace

bool all_ok(const std::vector<DemoCheck>& checks) {
    return std::all_of(checks.begin(), checks.end(), [](const DemoCheck& c) { return c.ok; });
}

std::string format_toggles(const std::vector<Toggle>& toggles) {
    std::string out;
    for (const auto& t : toggles) {
        out += std::to_string(t.t_ms) + (t.on ? "\ttrue\n" : "\tfalse\n");
    }
    return out;
}

std::vector<std::int64_t> ShakeEvalResult::toggle_times() const {
    std::vector<std::int64_t> out;
    for (const auto& t : toggles) {
        out.push_back(t.t_ms);
    }
    return out;
}

ShakeEvalResult run_shake_eval(const ShakeEvalOptions& options) {
    std::error_code ec;
    std::filesystem::create_directories(options.out_dir, ec);
    if (ec) {
        throw Error(Errc::io_error, "cannot create " + options.out_dir.string() + ": " + ec.message());
    }
    ShakeEvalResult result;
    result.trace = generate_trace(options.stages, options.seed);
    const auto trace_path = options.out_dir / "trace.tsv";
    save_trace(trace_path, result.trace.samples);

    HubConfig cfg;
    cfg.hub_id = "shake-eval";
    cfg.owner_token = kOwner;
    cfg.clock_mode = ClockMode::Simulated;
    cfg.enablers = {{"accelerometer", {{"trace_path", trace_path.string()}, {"feed_id", "accel"}}},
                    {"switch", {{"feed_id", "switch"}}}};
    SimulatedScheduler clock(0);
    Hub hub(cfg, &clock, [](auto&&...) { return std::optional<HttpResponse>(); });

    hub.engine().subscribe("switch", Sink::internal([&](const Sample& s) {
        result.toggles.push_back({s.t_ms, std::get<bool>(s.values.at("on"))});
    }));

    AppPackage pkg = shake_app();
    pkg.params["threshold"] = options.threshold;
    const auto installed = owner_call(hub, "POST", "/apps", canonical_of(pkg));
    const auto started = owner_call(hub, "POST", "/apps/" + pkg.app_id + "/start");
    result.checks.push_back({"app_running", started.status == 200,
                             "install " + std::to_string(installed.status) + ", start " +
                                 std::to_string(started.status)});
    if (started.status == 200) {
        hub.engine().subscribe(AppEngine::derived_feed_id(pkg.app_id, "force"),
                               Sink::internal([&](const Sample& s) {
                                   result.force.emplace_back(s.t_ms, std::get<double>(s.values.at("force")));
                               }));
    }
    clock.run_all();
    const AppStatus status = hub.apps().status(pkg.app_id);

    // Checks.
    const auto times = result.toggle_times();
    std::int64_t min_gap = -1;
    for (std::size_t i = 1; i < times.size(); ++i) {
        const auto gap = times[i] - times[i - 1];
        min_gap = min_gap < 0 ? gap : std::min(min_gap, gap);
    }
    result.checks.push_back({"cooldown_respected", min_gap < 0 || min_gap >= kShakeCooldownMs,
                             "min gap " + std::to_string(min_gap) + " ms"});
    result.checks.push_back({"fire_count_matches_log", status.fire_count == static_cast<std::int64_t>(times.size()),
                             std::to_string(status.fire_count) + " fires, " + std::to_string(times.size()) +
                                 " toggles"});
    json stages = json::array();
    for (std::size_t i = 0; i < options.stages.size() && i < result.trace.stage_bounds.size(); ++i) {
        const auto [from, to] = result.trace.stage_bounds[i];
        const auto in_stage = [&](std::int64_t t) { return t >= from && t < to; };
        const auto toggles = std::count_if(times.begin(), times.end(), in_stage);
        const auto events =
            std::count_if(result.trace.shake_events.begin(), result.trace.shake_events.end(), in_stage);
        const auto kind = options.stages[i].kind;
        const std::string label = "stage" + std::to_string(i + 1);
        if (kind == StageKind::ShakeEvery) {
            result.checks.push_back({label + "_toggles_equal_events", toggles == events,
                                     std::to_string(toggles) + " toggles, " + std::to_string(events) + " events"});
        } else if (kind == StageKind::Rest) {
            result.checks.push_back({label + "_rest_silent", toggles == 0, std::to_string(toggles) + " toggles"});
        }
        stages.push_back({{"from_ms", from}, {"to_ms", to}, {"toggles", toggles}, {"shake_events", events}});
    }

    // Outputs.
    std::string force = "# t_ms\tforce\n";
    for (const auto& [t, f] : result.force) {
        force += std::to_string(t) + "\t" + number(f) + "\n";
    }
    write_file(options.out_dir / "force.tsv", force);
    write_file(options.out_dir / "toggles.tsv", format_toggles(result.toggles));
    json checks = json::array();
    for (const auto& c : result.checks) {
        checks.push_back({{"name", c.name}, {"ok", c.ok}, {"detail", c.detail}});
    }
    const json summary = {{"scenario", "shake_eval"},
                          {"seed", options.seed},
                          {"stages", format_stages(options.stages)},
                          {"threshold", options.threshold},
                          {"cooldown_ms", kShakeCooldownMs},
                          {"samples", result.trace.samples.size()},
                          {"shake_events", result.trace.shake_events},
                          {"stage_summary", stages},
                          {"toggles", times},
                          {"fire_count", status.fire_count},
                          {"app_state", std::string(to_string(status.state))},
                          {"checks", checks},
                          {"ok", all_ok(result.checks)}};
    write_file(options.out_dir / "summary.json", summary.dump(2) + "\n");
    return result;
}

} // namespace iothub
