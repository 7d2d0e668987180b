#include "iothub/pipe_plan.hpp"

#include "iothub/error.hpp"

#include <algorithm>
#include <deque>
#include <set>

namespace iothub {

namespace {

[[noreturn]] void type_error(const Operator& op, const std::string& what) {
    throw Error(Errc::type_error, "operator '" + op.id + "': " + what, op.id);
}

[[noreturn]] void config_error(const std::string& subject, const std::string& what) {
    throw Error(Errc::config_error, what, subject);
}

Schema merge_inputs(const Operator& op, const std::vector<const Schema*>& inputs) {
    if (inputs.size() == 1) {
        return *inputs.front();
    }
    Schema merged;
    std::optional<std::int64_t> period = inputs.front()->period_ms;
    for (const auto* in : inputs) {
        if (in->period_ms != period) {
            period.reset();
        }
        for (const auto& f : in->fields) {
            if (const auto* existing = merged.field(f.name)) {
                if (existing->semantic_type != f.semantic_type) {
                    type_error(op, "inputs disagree on the type of field " + f.name);
                }
                continue;
            }
            merged.fields.push_back(f);
        }
    }
    merged.period_ms = period;
    return merged;
}

bool constant_fits(const Value& c, ValueKind kind) {
    switch (kind) {
    case ValueKind::Decimal:
    case ValueKind::Integer:
    case ValueKind::Timestamp: return as_number(c).has_value();
    case ValueKind::Boolean: return std::holds_alternative<bool>(c);
    case ValueKind::Text: return std::holds_alternative<std::string>(c);
    case ValueKind::GeoPoint: return false;
    }
    return false;
}

SemanticType decimal_variant(const SemanticType& t, const TypeRegistry& types) {
    if (t.value_kind == ValueKind::Decimal) {
        return t;
    }
    for (const auto& candidate : types.all()) {
        if (candidate.aggregation_class == t.aggregation_class &&
            candidate.value_kind == ValueKind::Decimal && candidate.unit == t.unit) {
            return candidate;
        }
    }
    SemanticType out = t;
    out.id += "_decimal";
    out.value_kind = ValueKind::Decimal;
    return out;
}

Schema plan_filter(const Operator& op, const FilterParams& p, const Schema& in) {
    const auto* f = in.field(p.field);
    if (f == nullptr) {
        type_error(op, "unknown field " + p.field);
    }
    const auto kind = f->semantic_type.value_kind;
    if (kind == ValueKind::GeoPoint) {
        type_error(op, "geo_point fields cannot be compared");
    }
    if (!constant_fits(p.constant, kind)) {
        type_error(op, "constant does not match the kind of field " + p.field);
    }
    if (kind == ValueKind::Boolean && p.op != CompareOp::Eq && p.op != CompareOp::Ne) {
        type_error(op, "boolean fields support only = and !=");
    }
    return in;
}

Schema plan_aggregate(const Operator& op, const AggregateParams& p, const Schema& in,
                      const TypeRegistry& types, const UnitRegistry& units) {
    if (p.fields.empty()) {
        config_error(op.id, "operator '" + op.id + "': aggregate needs at least one field");
    }
    if (p.window_ms < 0) {
        config_error(op.id, "operator '" + op.id + "': window_ms must be >= 0");
    }
    std::vector<const FieldDescriptor*> fields;
    std::set<std::string> seen;
    for (const auto& name : p.fields) {
        const auto* f = in.field(name);
        if (f == nullptr) {
            type_error(op, "unknown field " + name);
        }
        if (!seen.insert(name).second) {
            type_error(op, "field listed twice: " + name);
        }
        fields.push_back(f);
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
        for (std::size_t j = i + 1; j < fields.size(); ++j) {
            if (!compatible_types(fields[i]->semantic_type, fields[j]->semantic_type, units)) {
                type_error(op, "cannot aggregate " + fields[i]->name + " (" +
                                   fields[i]->semantic_type.aggregation_class + ") with " +
                                   fields[j]->name + " (" +
                                   fields[j]->semantic_type.aggregation_class + ")");
            }
        }
    }
    const auto& first = fields.front()->semantic_type;
    if (p.fn != AggregateFn::Count && !is_numeric(first.value_kind)) {
        type_error(op, std::string(to_string(p.fn)) + " requires numeric fields");
    }

    FieldDescriptor out;
    out.name = aggregate_output_name(p.fn, first.aggregation_class);
    out.access_mode = AccessMode::Stored;
    switch (p.fn) {
    case AggregateFn::Count:
        if (const auto* t = types.find_for_class("generic_count", ValueKind::Integer)) {
            out.semantic_type = *t;
        } else {
            out.semantic_type = {"generic_count", ValueKind::Integer, std::nullopt, "generic_count"};
        }
        break;
    case AggregateFn::Mean:
    case AggregateFn::Magnitude: out.semantic_type = decimal_variant(first, types); break;
    default: out.semantic_type = first; break;
    }
    Schema schema;
    schema.fields.push_back(std::move(out));
    schema.period_ms = p.window_ms > 0 ? std::optional<std::int64_t>(p.window_ms) : in.period_ms;
    return schema;
}

Schema plan_resample(const Operator& op, const ResampleParams& p, const Schema& in, bool& identity) {
    if (p.period_ms <= 0) {
        config_error(op.id, "operator '" + op.id + "': period_ms must be positive");
    }
    if (in.period_ms && p.period_ms < *in.period_ms) {
        config_error(op.id, "operator '" + op.id + "': period " + std::to_string(p.period_ms) +
                                " ms is shorter than the source period " +
                                std::to_string(*in.period_ms) + " ms (upsampling)");
    }
    identity = in.period_ms && p.period_ms == *in.period_ms;
    Schema out = in;
    out.period_ms = p.period_ms;
    return out;
}

Schema plan_delta(const Operator& op, const SlidingDeltaParams& p, const Schema& in) {
    const auto* f = in.field(p.field);
    if (f == nullptr) {
        type_error(op, "unknown field " + p.field);
    }
    if (!is_numeric(f->semantic_type.value_kind)) {
        type_error(op, "sliding_delta requires a numeric field");
    }
    if (p.output.empty()) {
        config_error(op.id, "operator '" + op.id + "': empty output name");
    }
    Schema out;
    out.fields.push_back({p.output, f->semantic_type, AccessMode::Stored, {}});
    out.period_ms = in.period_ms;
    return out;
}

Schema plan_anonymize(const Operator& op, const AnonymizeParams& p, const Schema& in,
                      const TypeRegistry& types, const CityTable* cities) {
    if (cities == nullptr || cities->empty()) {
        throw Error(Errc::empty_table, "operator '" + op.id + "': city table is empty", op.id);
    }
    const auto geo = std::count_if(in.fields.begin(), in.fields.end(), [](const FieldDescriptor& f) {
        return f.semantic_type.value_kind == ValueKind::GeoPoint;
    });
    if (geo != 1) {
        type_error(op, "anonymize_location needs exactly one geo_point field");
    }
    if (p.output.empty()) {
        config_error(op.id, "operator '" + op.id + "': empty output name");
    }
    FieldDescriptor city;
    city.name = p.output;
    city.access_mode = AccessMode::Stored;
    if (const auto* t = types.find("city"); t != nullptr && t->value_kind == ValueKind::Text) {
        city.semantic_type = *t;
    } else {
        city.semantic_type = {"city", ValueKind::Text, std::nullopt, std::string(aggregation::kLocation)};
    }
    Schema out;
    out.fields.push_back(std::move(city));
    out.period_ms = in.period_ms;
    return out;
}

} // namespace

const FieldDescriptor* Schema::field(std::string_view name) const {
    for (const auto& f : fields) {
        if (f.name == name) {
            return &f;
        }
    }
    return nullptr;
}

std::string aggregate_output_name(AggregateFn fn, const std::string& aggregation_class) {
    return std::string(to_string(fn)) + "_" + aggregation_class;
}

PipePlan plan_pipe(const PipeSpec& pipe, std::span<const FeedDescriptor> inputs,
                   const PipeContext& ctx, const std::string& output_id, const std::string& owner) {
    static const TypeRegistry kDefaultTypes = TypeRegistry::defaults();
    const TypeRegistry& types = ctx.types != nullptr ? *ctx.types : kDefaultTypes;
    const UnitRegistry& units = ctx.units != nullptr ? *ctx.units : UnitRegistry::defaults();

    if (pipe.sources.empty()) {
        config_error("", "pipe has no sources");
    }
    if (inputs.size() != pipe.sources.size()) {
        throw Error(Errc::arity_error, "pipe declares " + std::to_string(pipe.sources.size()) +
                                           " sources but " + std::to_string(inputs.size()) +
                                           " inputs were given");
    }

    PipePlan plan;
    plan.spec = pipe;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (inputs[i].id != pipe.sources[i]) {
            config_error(pipe.sources[i], "input " + std::to_string(i) + " is feed '" +
                                              inputs[i].id + "', expected '" + pipe.sources[i] + "'");
        }
        Schema s{inputs[i].fields, inputs[i].sample_period_ms};
        if (!plan.sources.emplace(pipe.sources[i], std::move(s)).second) {
            config_error(pipe.sources[i], "source listed twice: " + pipe.sources[i]);
        }
    }

    // Structure: unique ids, resolvable inputs, a single terminal.
    std::map<std::string, const Operator*> by_id;
    for (const auto& op : pipe.operators) {
        if (op.id.empty()) {
            config_error("", "operator with empty id");
        }
        if (plan.sources.contains(op.id)) {
            config_error(op.id, "operator id '" + op.id + "' collides with a source id");
        }
        if (!by_id.emplace(op.id, &op).second) {
            config_error(op.id, "duplicate operator id '" + op.id + "'");
        }
    }
    std::map<std::string, int> consumers;
    std::map<std::string, int> pending;
    std::map<std::string, std::vector<std::string>> downstream;
    for (const auto& op : pipe.operators) {
        if (op.inputs.empty()) {
            config_error(op.id, "operator '" + op.id + "' has no inputs");
        }
        if (op.inputs.size() > 1 && op.kind() != OperatorKind::AggregateWindow) {
            throw Error(Errc::arity_error,
                        "operator '" + op.id + "' (" + std::string(to_string(op.kind())) +
                            ") takes exactly one input",
                        op.id);
        }
        std::set<std::string> distinct;
        for (const auto& in : op.inputs) {
            if (!distinct.insert(in).second) {
                config_error(op.id, "operator '" + op.id + "' lists input '" + in + "' twice");
            }
            if (!plan.sources.contains(in) && !by_id.contains(in)) {
                config_error(op.id, "operator '" + op.id + "' reads unknown input '" + in + "'");
            }
            ++consumers[in];
            if (by_id.contains(in)) {
                ++pending[op.id];
                downstream[in].push_back(op.id);
            }
        }
    }

    if (pipe.operators.empty()) {
        if (pipe.sources.size() != 1) {
            throw Error(Errc::arity_error, "an operator-free pipe takes exactly one source");
        }
        if (!pipe.sink.empty() && pipe.sink != pipe.sources.front()) {
            config_error(pipe.sink, "sink '" + pipe.sink + "' is not part of the pipe");
        }
    } else {
        for (const auto& src : pipe.sources) {
            if (!consumers.contains(src)) {
                config_error(src, "source '" + src + "' is not consumed by any operator");
            }
        }
        std::vector<std::string> terminals;
        for (const auto& op : pipe.operators) {
            if (!consumers.contains(op.id)) {
                terminals.push_back(op.id);
            }
        }
        if (terminals.size() != 1) {
            config_error(pipe.sink, "pipe must have exactly one terminal operator (found " +
                                        std::to_string(terminals.size()) + ")");
        }
        if (!pipe.sink.empty() && pipe.sink != terminals.front()) {
            config_error(pipe.sink, "sink '" + pipe.sink + "' is not the terminal operator '" +
                                        terminals.front() + "'");
        }

        // Kahn's algorithm in declaration order keeps the plan deterministic.
        std::deque<const Operator*> ready;
        for (const auto& op : pipe.operators) {
            if (pending[op.id] == 0) {
                ready.push_back(&op);
            }
        }
        std::map<std::string, Schema> schemas = plan.sources;
        while (!ready.empty()) {
            const Operator& op = *ready.front();
            ready.pop_front();

            std::vector<const Schema*> ins;
            for (const auto& in : op.inputs) {
                ins.push_back(&schemas.at(in));
            }
            NodePlan node;
            node.op = op;
            node.input = merge_inputs(op, ins);
            std::visit(
                [&](const auto& p) {
                    using T = std::decay_t<decltype(p)>;
                    if constexpr (std::is_same_v<T, FilterParams>) {
                        node.output = plan_filter(op, p, node.input);
                    } else if constexpr (std::is_same_v<T, AggregateParams>) {
                        node.output = plan_aggregate(op, p, node.input, types, units);
                    } else if constexpr (std::is_same_v<T, ResampleParams>) {
                        node.output = plan_resample(op, p, node.input, node.identity);
                    } else if constexpr (std::is_same_v<T, SlidingDeltaParams>) {
                        node.output = plan_delta(op, p, node.input);
                    } else {
                        node.output = plan_anonymize(op, p, node.input, types, ctx.cities);
                    }
                },
                op.params);
            schemas[op.id] = node.output;
            plan.nodes.push_back(std::move(node));

            for (const auto& next : downstream[op.id]) {
                if (--pending[next] == 0) {
                    ready.push_back(by_id.at(next));
                }
            }
        }
        if (plan.nodes.size() != pipe.operators.size()) {
            config_error("", "operator graph contains a cycle");
        }
        // The single terminal is the only node nothing depends on, so it is
        // last in any topological order only if we move it there.
        auto sink_it = std::find_if(plan.nodes.begin(), plan.nodes.end(),
                                    [&](const NodePlan& n) { return n.op.id == terminals.front(); });
        std::rotate(sink_it, sink_it + 1, plan.nodes.end());
    }

    const Schema& out_schema =
        plan.nodes.empty() ? plan.sources.at(pipe.sources.front()) : plan.nodes.back().output;

    FeedDescriptor& out = plan.output;
    out.id = output_id.empty() ? "derived" : output_id;
    out.kind = FeedKind::Derived;
    out.fields = out_schema.fields;
    out.scope = Scope::Private;
    out.dependencies = pipe.sources;
    out.pipe = pipe;
    out.owner = owner;
    out.sample_period_ms = out_schema.period_ms;
    return plan;
}

FeedDescriptor validate_pipe_types(const PipeSpec& pipe, std::span<const FeedDescriptor> inputs,
                                   const PipeContext& ctx, const std::string& output_id,
                                   const std::string& owner) {
    return plan_pipe(pipe, inputs, ctx, output_id, owner).output;
}

} // namespace iothub
