#include "iothub/feed.hpp"

#include <algorithm>
#include <array>
#include <set>

namespace iothub {

namespace {

template <typename Enum, std::size_t N>
std::optional<Enum> parse_enum(std::string_view text, const std::array<Enum, N>& all) {
    for (auto e : all) {
        if (to_string(e) == text) {
            return e;
        }
    }
    return std::nullopt;
}

} // namespace

std::string_view to_string(AccessMode m) {
    return m == AccessMode::Live ? "live" : "stored";
}

std::string_view to_string(FeedKind k) {
    switch (k) {
    case FeedKind::AtomicSensor: return "atomic_sensor";
    case FeedKind::AtomicActuator: return "atomic_actuator";
    case FeedKind::TimeSeries: return "time_series";
    case FeedKind::Derived: return "derived";
    }
    return "unknown";
}

std::string_view to_string(Scope s) {
    switch (s) {
    case Scope::Private: return "private";
    case Scope::Hub: return "hub";
    case Scope::Global: return "global";
    }
    return "unknown";
}

std::string_view to_string(OperatorKind k) {
    switch (k) {
    case OperatorKind::Filter: return "filter";
    case OperatorKind::AggregateWindow: return "aggregate_window";
    case OperatorKind::Resample: return "resample";
    case OperatorKind::SlidingDelta: return "sliding_delta";
    case OperatorKind::AnonymizeLocation: return "anonymize_location";
    }
    return "unknown";
}

std::string_view to_string(CompareOp op) {
    switch (op) {
    case CompareOp::Lt: return "<";
    case CompareOp::Le: return "<=";
    case CompareOp::Eq: return "=";
    case CompareOp::Ge: return ">=";
    case CompareOp::Gt: return ">";
    case CompareOp::Ne: return "!=";
    }
    return "?";
}

std::string_view to_string(AggregateFn fn) {
    switch (fn) {
    case AggregateFn::Min: return "min";
    case AggregateFn::Max: return "max";
    case AggregateFn::Mean: return "mean";
    case AggregateFn::Sum: return "sum";
    case AggregateFn::Count: return "count";
    case AggregateFn::Magnitude: return "magnitude";
    }
    return "unknown";
}

std::string_view to_string(ResampleStrategy s) {
    return s == ResampleStrategy::Mean ? "mean" : "last";
}

std::optional<AccessMode> parse_access_mode(std::string_view text) {
    return parse_enum(text, std::array{AccessMode::Live, AccessMode::Stored});
}

std::optional<FeedKind> parse_feed_kind(std::string_view text) {
    return parse_enum(text, std::array{FeedKind::AtomicSensor, FeedKind::AtomicActuator,
                                       FeedKind::TimeSeries, FeedKind::Derived});
}

std::optional<Scope> parse_scope(std::string_view text) {
    return parse_enum(text, std::array{Scope::Private, Scope::Hub, Scope::Global});
}

std::optional<OperatorKind> parse_operator_kind(std::string_view text) {
    return parse_enum(text, std::array{OperatorKind::Filter, OperatorKind::AggregateWindow,
                                       OperatorKind::Resample, OperatorKind::SlidingDelta,
                                       OperatorKind::AnonymizeLocation});
}

std::optional<CompareOp> parse_compare_op(std::string_view text) {
    if (text == "==") {
        return CompareOp::Eq;
    }
    if (text == "≤") {
        return CompareOp::Le;
    }
    if (text == "≥") {
        return CompareOp::Ge;
    }
    if (text == "≠") {
        return CompareOp::Ne;
    }
    return parse_enum(text, std::array{CompareOp::Lt, CompareOp::Le, CompareOp::Eq, CompareOp::Ge,
                                       CompareOp::Gt, CompareOp::Ne});
}

std::optional<AggregateFn> parse_aggregate_fn(std::string_view text) {
    return parse_enum(text, std::array{AggregateFn::Min, AggregateFn::Max, AggregateFn::Mean,
                                       AggregateFn::Sum, AggregateFn::Count,
                                       AggregateFn::Magnitude});
}

std::optional<ResampleStrategy> parse_resample_strategy(std::string_view text) {
    return parse_enum(text, std::array{ResampleStrategy::Mean, ResampleStrategy::Last});
}

const FieldDescriptor* FeedDescriptor::field(std::string_view name) const {
    auto it = std::find_if(fields.begin(), fields.end(),
                           [&](const FieldDescriptor& f) { return f.name == name; });
    return it == fields.end() ? nullptr : &*it;
}

bool FeedDescriptor::has_stored_fields() const {
    return std::any_of(fields.begin(), fields.end(),
                       [](const FieldDescriptor& f) { return f.access_mode == AccessMode::Stored; });
}

std::string ValidationReport::summary() const {
    std::string out;
    for (const auto& v : violations) {
        if (!out.empty()) {
            out += "; ";
        }
        out += v;
    }
    return out;
}

ValidationReport validate_feed(const FeedDescriptor& desc) {
    ValidationReport report;
    auto& v = report.violations;

    if (desc.id.empty()) {
        v.emplace_back("feed id is empty");
    }
    if (desc.fields.empty()) {
        v.emplace_back("feed has no fields");
    }

    std::set<std::string> names;
    int timestamps = 0;
    for (const auto& f : desc.fields) {
        if (f.name.empty()) {
            v.emplace_back("field with empty name");
        } else if (!names.insert(f.name).second) {
            v.push_back("duplicate field name: " + f.name);
        }
        for (const auto& tv : type_violations(f.semantic_type)) {
            v.push_back("field " + f.name + ": " + tv);
        }
        if (f.semantic_type.value_kind == ValueKind::Timestamp) {
            ++timestamps;
        }
    }

    switch (desc.kind) {
    case FeedKind::TimeSeries:
        for (const auto& f : desc.fields) {
            if (f.access_mode == AccessMode::Live) {
                v.push_back("live field in time-series feed: " + f.name);
            }
        }
        if (timestamps != 1) {
            v.push_back("time-series feed requires exactly one timestamp field (found " +
                        std::to_string(timestamps) + ")");
        }
        break;
    case FeedKind::AtomicSensor:
    case FeedKind::AtomicActuator:
        for (const auto& f : desc.fields) {
            if (f.access_mode == AccessMode::Stored) {
                v.push_back("stored field in atomic feed: " + f.name);
            }
            if (f.semantic_type.value_kind == ValueKind::Timestamp) {
                v.push_back("timestamp field in atomic feed: " + f.name);
            }
        }
        if (desc.kind == FeedKind::AtomicActuator) {
            const auto switches =
                std::count_if(desc.fields.begin(), desc.fields.end(), [](const FieldDescriptor& f) {
                    return f.semantic_type.aggregation_class == aggregation::kSwitchState &&
                           f.semantic_type.value_kind == ValueKind::Boolean;
                });
            if (switches != 1) {
                v.emplace_back("actuator feed requires exactly one boolean switch_state field");
            }
        }
        break;
    case FeedKind::Derived: break;
    }

    const bool derived = desc.kind == FeedKind::Derived;
    if (derived && desc.dependencies.empty()) {
        v.emplace_back("derived feed requires dependencies");
    }
    if (derived && !desc.pipe) {
        v.emplace_back("derived feed requires a pipe");
    }
    if (!derived && !desc.dependencies.empty()) {
        v.emplace_back("only derived feeds may declare dependencies");
    }
    if (!derived && desc.pipe) {
        v.emplace_back("only derived feeds may carry a pipe");
    }
    if (desc.sample_period_ms && *desc.sample_period_ms <= 0) {
        v.emplace_back("sample period must be positive");
    }
    return report;
}

} // namespace iothub
