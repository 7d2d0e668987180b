#pragma once

// Synthetic accelerometer traces: staged shake / rest patterns sampled at a
// fixed period, plus the trace file format.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace iothub {

struct AccelSample {
    std::int64_t t_ms = 0;
    double x = 0;
    double y = 0;
    double z = 0;

    friend bool operator==(const AccelSample&, const AccelSample&) = default;
};

enum class StageKind { ShakeEvery, Rest, ShakeFast };

struct TraceStage {
    StageKind kind = StageKind::Rest;
    double duration_s = 0;
    /// Seconds between shake events; ShakeEvery only.
    double interval_s = 0;
};

struct Trace {
    std::vector<AccelSample> samples;
    /// Start time of every discrete shake event (ShakeEvery stages).
    std::vector<std::int64_t> shake_events;
    /// [start, end) of each stage, in order.
    std::vector<std::pair<std::int64_t, std::int64_t>> stage_bounds;
};

inline constexpr double kGravity = 9.81;
inline constexpr std::int64_t kTracePeriodMs = 200;

/// Deterministic for a given seed on every platform (own uniform mapping
/// over mt19937_64). Throws Error(config_error) for non-positive durations
/// or intervals.
Trace generate_trace(const std::vector<TraceStage>& stages, std::uint64_t seed,
                     std::int64_t period_ms = kTracePeriodMs);

/// The three-stage evaluation: shake every 30 s for 180 s, rest 60 s,
/// high-frequency shaking 30 s.
std::vector<TraceStage> evaluation_stages();

/// Parses "shake_every(30):180,rest:60,shake_fast:30" (durations and
/// intervals in seconds). Throws Error(config_error).
std::vector<TraceStage> parse_stages(const std::string& text);
std::string format_stages(const std::vector<TraceStage>& stages);

/// `t_ms<TAB>x<TAB>y<TAB>z` per line, shortest round-trip decimals.
void write_trace(std::ostream& out, const std::vector<AccelSample>& samples);
void save_trace(const std::filesystem::path& path, const std::vector<AccelSample>& samples);
/// Throws Error(config_error) on malformed lines, Error(io_error) when the
/// file cannot be read.
std::vector<AccelSample> read_trace(std::istream& in);
std::vector<AccelSample> load_trace(const std::filesystem::path& path);

} // namespace iothub
