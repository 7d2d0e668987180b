#pragma once

// Static typing of pipes. Walks the operator DAG, computes each operator's
// output schema and synthesizes the derived feed descriptor.

#include "iothub/feed.hpp"
#include "iothub/geo.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace iothub {

struct Schema {
    std::vector<FieldDescriptor> fields;
    std::optional<std::int64_t> period_ms;

    const FieldDescriptor* field(std::string_view name) const;
};

struct PipeContext {
    const TypeRegistry* types = nullptr;  // defaults when null
    const UnitRegistry* units = nullptr;  // defaults when null
    const CityTable* cities = nullptr;    // required by anonymize_location
};

struct NodePlan {
    Operator op;
    Schema input;
    Schema output;
    /// Resample to the source's own period: samples pass through untouched.
    bool identity = false;
};

struct PipePlan {
    PipeSpec spec;
    std::map<std::string, Schema> sources;
    /// Operators in a topological order; the last one is the sink.
    std::vector<NodePlan> nodes;
    FeedDescriptor output;
};

/// Throws Error(arity_error) on a source count mismatch, Error(type_error)
/// (subject = operator id) when field constraints fail, Error(config_error)
/// for malformed graphs or parameters and Error(empty_table) when a
/// location anonymizer has no city table.
PipePlan plan_pipe(const PipeSpec& pipe, std::span<const FeedDescriptor> inputs,
                   const PipeContext& ctx = {}, const std::string& output_id = "derived",
                   const std::string& owner = "");

/// The derived descriptor produced by plan_pipe (kind derived, scope private).
FeedDescriptor validate_pipe_types(const PipeSpec& pipe, std::span<const FeedDescriptor> inputs,
                                   const PipeContext& ctx = {},
                                   const std::string& output_id = "derived",
                                   const std::string& owner = "");

/// Output field name of an aggregate: `<fn>_<class>`.
std::string aggregate_output_name(AggregateFn fn, const std::string& aggregation_class);

} // namespace iothub
