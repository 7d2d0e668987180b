#pragma once

#include "iothub/types.hpp"

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace iothub {

enum class AccessMode { Live, Stored };
enum class FeedKind { AtomicSensor, AtomicActuator, TimeSeries, Derived };

/// Visibility of a feed. Ordered Private < Hub < Global.
enum class Scope { Private = 0, Hub = 1, Global = 2 };

std::string_view to_string(AccessMode m);
std::string_view to_string(FeedKind k);
std::string_view to_string(Scope s);
std::optional<AccessMode> parse_access_mode(std::string_view text);
std::optional<FeedKind> parse_feed_kind(std::string_view text);
std::optional<Scope> parse_scope(std::string_view text);

struct FieldDescriptor {
    std::string name;
    SemanticType semantic_type;
    AccessMode access_mode = AccessMode::Live;
    std::set<std::string> keywords;

    friend bool operator==(const FieldDescriptor&, const FieldDescriptor&) = default;
};

// ---------------------------------------------------------------------------
// Pipe specifications: a DAG of operators deriving a feed from sources.
// Operator inputs name either a pipe source (feed id) or another operator.

enum class OperatorKind { Filter, AggregateWindow, Resample, SlidingDelta, AnonymizeLocation };
enum class CompareOp { Lt, Le, Eq, Ge, Gt, Ne };
enum class AggregateFn { Min, Max, Mean, Sum, Count, Magnitude };
enum class ResampleStrategy { Mean, Last };

std::string_view to_string(OperatorKind k);
std::string_view to_string(CompareOp op);
std::string_view to_string(AggregateFn fn);
std::string_view to_string(ResampleStrategy s);
std::optional<OperatorKind> parse_operator_kind(std::string_view text);
std::optional<CompareOp> parse_compare_op(std::string_view text);
std::optional<AggregateFn> parse_aggregate_fn(std::string_view text);
std::optional<ResampleStrategy> parse_resample_strategy(std::string_view text);

struct FilterParams {
    std::string field;
    CompareOp op = CompareOp::Eq;
    Value constant;

    friend bool operator==(const FilterParams&, const FilterParams&) = default;
};

/// Tumbling windows aligned to the first sample. A zero window aggregates
/// each sample on its own and emits immediately.
struct AggregateParams {
    AggregateFn fn = AggregateFn::Sum;
    std::vector<std::string> fields;
    std::int64_t window_ms = 0;

    friend bool operator==(const AggregateParams&, const AggregateParams&) = default;
};

struct ResampleParams {
    std::int64_t period_ms = 0;
    ResampleStrategy strategy = ResampleStrategy::Mean;

    friend bool operator==(const ResampleParams&, const ResampleParams&) = default;
};

struct SlidingDeltaParams {
    std::string field;
    std::string output = "force";

    friend bool operator==(const SlidingDeltaParams&, const SlidingDeltaParams&) = default;
};

struct AnonymizeParams {
    std::string output = "city";

    friend bool operator==(const AnonymizeParams&, const AnonymizeParams&) = default;
};

using OperatorParams =
    std::variant<FilterParams, AggregateParams, ResampleParams, SlidingDeltaParams, AnonymizeParams>;

struct Operator {
    std::string id;
    OperatorParams params;
    std::vector<std::string> inputs;

    OperatorKind kind() const noexcept { return static_cast<OperatorKind>(params.index()); }

    friend bool operator==(const Operator&, const Operator&) = default;
};

struct PipeSpec {
    std::vector<std::string> sources;
    std::vector<Operator> operators;
    /// Terminal operator id; empty only for an operator-free identity pipe.
    std::string sink;

    friend bool operator==(const PipeSpec&, const PipeSpec&) = default;
};

// ---------------------------------------------------------------------------

struct FeedDescriptor {
    std::string id;
    FeedKind kind = FeedKind::AtomicSensor;
    std::vector<FieldDescriptor> fields;
    Scope scope = Scope::Private;
    std::set<std::string> keywords;
    std::vector<std::string> dependencies;
    std::optional<PipeSpec> pipe;
    std::int64_t created_at = 0;
    std::string owner;
    /// Nominal spacing between samples, when known.
    std::optional<std::int64_t> sample_period_ms;

    const FieldDescriptor* field(std::string_view name) const;
    /// True when samples are kept beyond the latest value.
    bool has_stored_fields() const;

    friend bool operator==(const FeedDescriptor&, const FeedDescriptor&) = default;
};

struct ValidationReport {
    std::vector<std::string> violations;

    bool ok() const noexcept { return violations.empty(); }
    std::string summary() const;
};

ValidationReport validate_feed(const FeedDescriptor& desc);

} // namespace iothub
