#pragma once

// Headless demo scenarios: the shake-to-toggle evaluation and a smart-city
// cascade of hubs sharing weekly energy reports through a meta-hub.

#include "iothub/app.hpp"
#include "iothub/trace.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace iothub {

struct DemoCheck {
    std::string name;
    bool ok = false;
    std::string detail;
};

bool all_ok(const std::vector<DemoCheck>& checks);

struct Toggle {
    std::int64_t t_ms = 0;
    bool on = false;
};

/// One `t_ms<TAB>true|false` line per toggle.
std::string format_toggles(const std::vector<Toggle>& toggles);

struct ShakeEvalOptions {
    std::uint64_t seed = 1;
    std::vector<TraceStage> stages = evaluation_stages();
    double threshold = kDefaultShakeThreshold;
    std::filesystem::path out_dir;
};

struct ShakeEvalResult {
    Trace trace;
    std::vector<std::pair<std::int64_t, double>> force;
    std::vector<Toggle> toggles;
    std::vector<DemoCheck> checks;

    std::vector<std::int64_t> toggle_times() const;
};

/// Replays a generated trace through an accelerometer enabler into a hub
/// running the shake app on a simulated clock. Writes trace.tsv, force.tsv
/// (plot-ready), toggles.tsv and summary.json to `out_dir`.
/// Throws Error(io_error) when the directory cannot be written.
ShakeEvalResult run_shake_eval(const ShakeEvalOptions& options);

struct SmartCityOptions {
    std::uint64_t seed = 1;
    int weeks = 4;
    std::filesystem::path out_dir;
};

struct WeeklyReport {
    std::string source;
    std::int64_t week_end_ms = 0;
    double energy_kwh = 0;
};

struct SmartCityResult {
    /// Hourly readings kept private on the home and building hubs.
    std::vector<std::pair<std::int64_t, double>> home_readings;
    std::vector<std::pair<std::int64_t, double>> building_readings;
    /// Weekly totals as held by the city hub.
    std::vector<WeeklyReport> city_reports;
    /// Every sample stored on the city hub, canonical JSON.
    std::vector<std::string> city_samples;
    std::vector<DemoCheck> checks;
};

/// Home and building hubs keep hourly meter readings private and publish
/// global weekly sums; the city hub finds them through the meta-hub catalog
/// and pulls the weekly data with global tokens. Writes readings, weekly.tsv,
/// catalog.json and summary.json to `out_dir`.
SmartCityResult run_smart_city(const SmartCityOptions& options);

inline constexpr std::int64_t kWeekMs = 7LL * 24 * 3600 * 1000;
/// Monday 2024-01-01T00:00:00Z.
inline constexpr std::int64_t kSmartCityStartMs = 1704067200000;

} // namespace iothub
