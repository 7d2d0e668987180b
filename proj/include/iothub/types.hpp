#pragma once

#include "iothub/geo.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace iothub {

enum class ValueKind { Decimal, Integer, Boolean, Text, GeoPoint, Timestamp };

std::string_view to_string(ValueKind kind);
std::optional<ValueKind> parse_value_kind(std::string_view text);

/// Scalar carried by a sample field. Timestamps travel as int64 milliseconds.
using Value = std::variant<bool, std::int64_t, double, std::string, GeoPoint>;

bool value_matches(const Value& v, ValueKind kind) noexcept;
bool is_numeric(ValueKind kind) noexcept;
std::optional<double> as_number(const Value& v) noexcept;

namespace aggregation {
inline constexpr std::string_view kLocation = "location";
inline constexpr std::string_view kTime = "time";
inline constexpr std::string_view kSwitchState = "switch_state";
} // namespace aggregation

struct SemanticType {
    std::string id;
    ValueKind value_kind = ValueKind::Decimal;
    std::optional<std::string> unit;
    std::string aggregation_class;

    friend bool operator==(const SemanticType&, const SemanticType&) = default;
};

/// Lists broken SemanticType invariants; empty when well formed.
std::vector<std::string> type_violations(const SemanticType& t);
inline bool well_formed(const SemanticType& t) { return type_violations(t).empty(); }

/// Affine unit conversions (value * scale + offset), registered in both
/// directions.
class UnitRegistry {
public:
    struct Affine {
        double scale = 1.0;
        double offset = 0.0;
    };

    void add(const std::string& from, const std::string& to, double scale, double offset);
    bool convertible(const std::optional<std::string>& from,
                     const std::optional<std::string>& to) const;
    /// Throws Error(type_error) when no conversion is registered.
    double convert(double v, const std::optional<std::string>& from,
                   const std::optional<std::string>& to) const;

    /// celsius <-> kelvin only.
    static const UnitRegistry& defaults();

private:
    std::map<std::pair<std::string, std::string>, Affine> table_;
};

bool compatible_types(const SemanticType& a, const SemanticType& b,
                      const UnitRegistry& units = UnitRegistry::defaults());

/// Closed registry of known semantic types, keyed by id.
class TypeRegistry {
public:
    TypeRegistry() = default;

    /// Throws Error(config_error) for malformed or conflicting types.
    void add(SemanticType t);
    const SemanticType* find(std::string_view id) const;
    const SemanticType& at(std::string_view id) const;
    /// First registered type of the class with the given kind, if any.
    const SemanticType* find_for_class(std::string_view aggregation_class,
                                       std::optional<ValueKind> kind = std::nullopt) const;
    bool knows_class(std::string_view aggregation_class) const;
    const std::vector<SemanticType>& all() const noexcept { return types_; }

    /// Seeded with temperature, relative_humidity, acceleration, location,
    /// switch_state, time and generic_count.
    static TypeRegistry defaults();

private:
    std::vector<SemanticType> types_;
};

} // namespace iothub
