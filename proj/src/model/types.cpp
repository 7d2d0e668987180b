#include "iothub/types.hpp"

#include "iothub/error.hpp"

#include <cmath>

namespace iothub {

std::string_view to_string(ValueKind kind) {
    switch (kind) {
    case ValueKind::Decimal: return "decimal";
    case ValueKind::Integer: return "integer";
    case ValueKind::Boolean: return "boolean";
    case ValueKind::Text: return "text";
    case ValueKind::GeoPoint: return "geo_point";
    case ValueKind::Timestamp: return "timestamp";
    }
    return "unknown";
}

std::optional<ValueKind> parse_value_kind(std::string_view text) {
    for (auto k : {ValueKind::Decimal, ValueKind::Integer, ValueKind::Boolean, ValueKind::Text,
                   ValueKind::GeoPoint, ValueKind::Timestamp}) {
        if (to_string(k) == text) {
            return k;
        }
    }
    return std::nullopt;
}

bool value_matches(const Value& v, ValueKind kind) noexcept {
    switch (kind) {
    case ValueKind::Decimal: {
        const auto* d = std::get_if<double>(&v);
        return d != nullptr && std::isfinite(*d);
    }
    case ValueKind::Integer:
    case ValueKind::Timestamp: return std::holds_alternative<std::int64_t>(v);
    case ValueKind::Boolean: return std::holds_alternative<bool>(v);
    case ValueKind::Text: return std::holds_alternative<std::string>(v);
    case ValueKind::GeoPoint: {
        const auto* g = std::get_if<GeoPoint>(&v);
        return g != nullptr && valid_coordinates(*g);
    }
    }
    return false;
}

bool is_numeric(ValueKind kind) noexcept {
    return kind == ValueKind::Decimal || kind == ValueKind::Integer;
}

std::optional<double> as_number(const Value& v) noexcept {
    if (const auto* d = std::get_if<double>(&v)) {
        return *d;
    }
    if (const auto* i = std::get_if<std::int64_t>(&v)) {
        return static_cast<double>(*i);
    }
    return std::nullopt;
}

std::vector<std::string> type_violations(const SemanticType& t) {
    std::vector<std::string> out;
    if (t.id.empty()) {
        out.emplace_back("semantic type id is empty");
    }
    if (t.aggregation_class.empty()) {
        out.push_back("semantic type '" + t.id + "' has no aggregation class");
    }
    if (t.value_kind == ValueKind::GeoPoint && t.aggregation_class != aggregation::kLocation) {
        out.push_back("semantic type '" + t.id + "': geo_point requires class location");
    }
    if (t.value_kind == ValueKind::Timestamp && t.aggregation_class != aggregation::kTime) {
        out.push_back("semantic type '" + t.id + "': timestamp requires class time");
    }
    if (t.value_kind != ValueKind::Timestamp && t.aggregation_class == aggregation::kTime) {
        out.push_back("semantic type '" + t.id + "': class time is reserved for timestamps");
    }
    return out;
}

void UnitRegistry::add(const std::string& from, const std::string& to, double scale,
                       double offset) {
    if (scale == 0.0 || !std::isfinite(scale) || !std::isfinite(offset)) {
        throw Error(Errc::config_error, "unit conversion " + from + "->" + to + " is not invertible");
    }
    table_[{from, to}] = {scale, offset};
    table_[{to, from}] = {1.0 / scale, -offset / scale};
}

bool UnitRegistry::convertible(const std::optional<std::string>& from,
                               const std::optional<std::string>& to) const {
    if (from == to) {
        return true;
    }
    if (!from || !to) {
        return false;
    }
    return table_.contains({*from, *to});
}

double UnitRegistry::convert(double v, const std::optional<std::string>& from,
                             const std::optional<std::string>& to) const {
    if (from == to) {
        return v;
    }
    if (from && to) {
        if (auto it = table_.find({*from, *to}); it != table_.end()) {
            return v * it->second.scale + it->second.offset;
        }
    }
    throw Error(Errc::type_error, "no unit conversion " + from.value_or("none") + " -> " +
                                      to.value_or("none"));
}

const UnitRegistry& UnitRegistry::defaults() {
    static const UnitRegistry registry = [] {
        UnitRegistry r;
        r.add("celsius", "kelvin", 1.0, 273.15);
        return r;
    }();
    return registry;
}

bool compatible_types(const SemanticType& a, const SemanticType& b, const UnitRegistry& units) {
    return a.aggregation_class == b.aggregation_class && a.value_kind == b.value_kind &&
           units.convertible(a.unit, b.unit);
}

void TypeRegistry::add(SemanticType t) {
    if (auto v = type_violations(t); !v.empty()) {
        throw Error(Errc::config_error, v.front(), t.id);
    }
    if (const auto* existing = find(t.id)) {
        if (*existing == t) {
            return;
        }
        throw Error(Errc::config_error, "semantic type '" + t.id + "' already registered", t.id);
    }
    types_.push_back(std::move(t));
}

const SemanticType* TypeRegistry::find(std::string_view id) const {
    for (const auto& t : types_) {
        if (t.id == id) {
            return &t;
        }
    }
    return nullptr;
}

const SemanticType& TypeRegistry::at(std::string_view id) const {
    if (const auto* t = find(id)) {
        return *t;
    }
    throw Error(Errc::type_error, "unknown semantic type '" + std::string(id) + "'",
                std::string(id));
}

const SemanticType* TypeRegistry::find_for_class(std::string_view aggregation_class,
                                                 std::optional<ValueKind> kind) const {
    for (const auto& t : types_) {
        if (t.aggregation_class == aggregation_class && (!kind || t.value_kind == *kind)) {
            return &t;
        }
    }
    return nullptr;
}

bool TypeRegistry::knows_class(std::string_view aggregation_class) const {
    return find_for_class(aggregation_class) != nullptr;
}

TypeRegistry TypeRegistry::defaults() {
    TypeRegistry r;
    r.add({"temperature", ValueKind::Decimal, "celsius", "temperature"});
    r.add({"temperature_kelvin", ValueKind::Decimal, "kelvin", "temperature"});
    r.add({"relative_humidity", ValueKind::Decimal, "percent", "relative_humidity"});
    r.add({"acceleration", ValueKind::Decimal, "m_per_s2", "acceleration"});
    r.add({"location", ValueKind::GeoPoint, std::nullopt, "location"});
    r.add({"city", ValueKind::Text, std::nullopt, "location"});
    r.add({"switch_state", ValueKind::Boolean, std::nullopt, "switch_state"});
    r.add({"time", ValueKind::Timestamp, "ms", "time"});
    r.add({"generic_count", ValueKind::Integer, std::nullopt, "generic_count"});
    return r;
}

} // namespace iothub
