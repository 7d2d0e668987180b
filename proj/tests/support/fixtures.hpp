#pragma once

// Descriptor builders and independent oracles shared by the test suites.

#include "iothub/feed.hpp"
#include "iothub/geo.hpp"
#include "iothub/sample.hpp"
#include "iothub/trace.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace iothub::testing {

inline SemanticType temperature() { return {"temperature", ValueKind::Decimal, "celsius", "temperature"}; }
inline SemanticType kelvin() { return {"temperature_kelvin", ValueKind::Decimal, "kelvin", "temperature"}; }
inline SemanticType humidity() { return {"relative_humidity", ValueKind::Decimal, "percent", "relative_humidity"}; }
inline SemanticType acceleration() { return {"acceleration", ValueKind::Decimal, "m_per_s2", "acceleration"}; }
inline SemanticType location() { return {"location", ValueKind::GeoPoint, std::nullopt, "location"}; }
inline SemanticType switch_state() { return {"switch_state", ValueKind::Boolean, std::nullopt, "switch_state"}; }
inline SemanticType timestamp() { return {"time", ValueKind::Timestamp, "ms", "time"}; }
inline SemanticType city_type() { return {"city", ValueKind::Text, std::nullopt, "location"}; }
inline SemanticType count_type() { return {"generic_count", ValueKind::Integer, std::nullopt, "generic_count"}; }

inline FieldDescriptor live(std::string name, SemanticType t) {
    return {std::move(name), std::move(t), AccessMode::Live, {}};
}
inline FieldDescriptor stored(std::string name, SemanticType t) {
    return {std::move(name), std::move(t), AccessMode::Stored, {}};
}

inline FeedDescriptor sensor(std::string id, std::vector<FieldDescriptor> fields,
                             std::optional<std::int64_t> period = std::nullopt) {
    FeedDescriptor d;
    d.id = std::move(id);
    d.kind = FeedKind::AtomicSensor;
    d.fields = std::move(fields);
    d.owner = "test-hub";
    d.sample_period_ms = period;
    return d;
}

inline FeedDescriptor accel_feed(std::string id = "accel", std::int64_t period = 200) {
    return sensor(std::move(id),
                  {live("x", acceleration()), live("y", acceleration()), live("z", acceleration())},
                  period);
}

inline FeedDescriptor gps_feed(std::string id = "gps") {
    return sensor(std::move(id), {live("position", location())}, 1000);
}

inline FeedDescriptor switch_feed(std::string id = "switch") {
    FeedDescriptor d = sensor(std::move(id), {live("on", switch_state())});
    d.kind = FeedKind::AtomicActuator;
    return d;
}

inline FeedDescriptor weather_series(std::string id = "weather") {
    FeedDescriptor d;
    d.id = std::move(id);
    d.kind = FeedKind::TimeSeries;
    d.fields = {stored("t", timestamp()), stored("temperature", temperature()),
                stored("humidity", humidity())};
    d.owner = "test-hub";
    d.sample_period_ms = 200;
    return d;
}

inline Sample sample(std::string feed, std::int64_t seq, std::int64_t t,
                     std::map<std::string, Value> values) {
    return Sample{std::move(feed), seq, t, std::move(values)};
}

/// Great-circle distance through the chord between unit vectors; shares no
/// code with the production haversine.
inline double chord_distance_km(const GeoPoint& a, const GeoPoint& b) {
    auto unit = [](const GeoPoint& p) {
        const double la = p.lat * std::numbers::pi / 180.0;
        const double lo = p.lon * std::numbers::pi / 180.0;
        return std::array<double, 3>{std::cos(la) * std::cos(lo), std::cos(la) * std::sin(lo),
                                     std::sin(la)};
    };
    const auto u = unit(a);
    const auto v = unit(b);
    const double c = std::sqrt((u[0] - v[0]) * (u[0] - v[0]) + (u[1] - v[1]) * (u[1] - v[1]) +
                               (u[2] - v[2]) * (u[2] - v[2]));
    return 2.0 * 6371.0 * std::asin(std::min(1.0, c / 2.0));
}

/// Straight-line shake detector: force between consecutive summed samples,
/// fire when above threshold and the cooldown since the last fire elapsed.
inline std::vector<std::int64_t> shake_oracle(const std::vector<AccelSample>& trace, double threshold,
                                              std::int64_t cooldown_ms) {
    std::vector<std::int64_t> fires;
    for (std::size_t i = 1; i < trace.size(); ++i) {
        const double prev = trace[i - 1].x + trace[i - 1].y + trace[i - 1].z;
        const double cur = trace[i].x + trace[i].y + trace[i].z;
        if (std::fabs(cur - prev) > threshold &&
            (fires.empty() || trace[i].t_ms - fires.back() >= cooldown_ms)) {
            fires.push_back(trace[i].t_ms);
        }
    }
    return fires;
}

} // namespace iothub::testing
