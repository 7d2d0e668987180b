#include "iothub/canonical.hpp"

#include <cmath>
#include <limits>

namespace iothub {

namespace {

[[noreturn]] void schema_fail(const std::string& what) { throw Error(Errc::schema_error, what); }

const json& member(const json& j, const char* key) {
    if (!j.is_object()) {
        schema_fail(std::string("expected an object holding '") + key + "'");
    }
    auto it = j.find(key);
    if (it == j.end()) {
        schema_fail(std::string("missing key '") + key + "'");
    }
    return *it;
}

std::string str(const json& j, const char* key) {
    const auto& v = member(j, key);
    if (!v.is_string()) {
        schema_fail(std::string("'") + key + "' must be a string");
    }
    return v.get<std::string>();
}

std::int64_t integer(const json& j, const char* key) {
    const auto& v = member(j, key);
    if (!v.is_number_integer()) {
        schema_fail(std::string("'") + key + "' must be an integer");
    }
    return v.get<std::int64_t>();
}

template <typename Enum, typename Parser>
Enum enum_member(const json& j, const char* key, Parser parse) {
    const auto text = str(j, key);
    if (auto e = parse(text)) {
        return *e;
    }
    schema_fail(std::string("bad value '") + text + "' for '" + key + "'");
}

std::set<std::string> string_set(const json& j, const char* key) {
    std::set<std::string> out;
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        return out;
    }
    if (!it->is_array()) {
        schema_fail(std::string("'") + key + "' must be an array of strings");
    }
    for (const auto& e : *it) {
        if (!e.is_string()) {
            schema_fail(std::string("'") + key + "' must be an array of strings");
        }
        out.insert(e.get<std::string>());
    }
    return out;
}

std::vector<std::string> string_list(const json& j, const char* key, bool required) {
    std::vector<std::string> out;
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        if (required) {
            schema_fail(std::string("missing key '") + key + "'");
        }
        return out;
    }
    if (!it->is_array()) {
        schema_fail(std::string("'") + key + "' must be an array of strings");
    }
    for (const auto& e : *it) {
        if (!e.is_string()) {
            schema_fail(std::string("'") + key + "' must be an array of strings");
        }
        out.push_back(e.get<std::string>());
    }
    return out;
}

} // namespace

std::string canonical(const json& j) { return j.dump(); }

json parse_json(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw Error(Errc::schema_error, std::string("malformed JSON: ") + e.what());
    }
}

json value_to_json(const Value& v) {
    return std::visit(
        [](const auto& x) -> json {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, GeoPoint>) {
                return json{{"lat", x.lat}, {"lon", x.lon}};
            } else {
                return json(x);
            }
        },
        v);
}

Value value_from_json(const json& j) {
    if (j.is_boolean()) {
        return j.get<bool>();
    }
    if (j.is_number_integer()) {
        return j.get<std::int64_t>();
    }
    if (j.is_number_float()) {
        return j.get<double>();
    }
    if (j.is_string()) {
        return j.get<std::string>();
    }
    if (j.is_object() && j.size() == 2 && j.contains("lat") && j.contains("lon") &&
        j["lat"].is_number() && j["lon"].is_number()) {
        return GeoPoint{j["lat"].get<double>(), j["lon"].get<double>()};
    }
    schema_fail("unsupported value " + j.dump());
}

Value value_from_json(const json& j, ValueKind kind) {
    Value out;
    switch (kind) {
    case ValueKind::Decimal:
        if (!j.is_number()) {
            schema_fail("expected a decimal, got " + j.dump());
        }
        out = j.get<double>();
        break;
    case ValueKind::Integer:
    case ValueKind::Timestamp:
        if (j.is_number_integer()) {
            out = j.get<std::int64_t>();
        } else if (j.is_number_float()) {
            const double d = j.get<double>();
            if (std::trunc(d) != d || std::abs(d) > 9.0e15) {
                schema_fail("expected an integer, got " + j.dump());
            }
            out = static_cast<std::int64_t>(d);
        } else {
            schema_fail("expected an integer, got " + j.dump());
        }
        break;
    case ValueKind::Boolean:
        if (!j.is_boolean()) {
            schema_fail("expected a boolean, got " + j.dump());
        }
        out = j.get<bool>();
        break;
    case ValueKind::Text:
        if (!j.is_string()) {
            schema_fail("expected text, got " + j.dump());
        }
        out = j.get<std::string>();
        break;
    case ValueKind::GeoPoint: {
        out = value_from_json(j);
        if (!std::holds_alternative<GeoPoint>(out)) {
            schema_fail("expected a geo point {lat, lon}, got " + j.dump());
        }
        break;
    }
    }
    if (!value_matches(out, kind)) {
        schema_fail("value " + j.dump() + " is not a valid " + std::string(to_string(kind)));
    }
    return out;
}

void to_json(json& j, const SemanticType& t) {
    j = json{{"id", t.id},
             {"value_kind", to_string(t.value_kind)},
             {"unit", t.unit ? json(*t.unit) : json(nullptr)},
             {"aggregation_class", t.aggregation_class}};
}

void from_json(const json& j, SemanticType& t) {
    t.id = str(j, "id");
    t.value_kind = enum_member<ValueKind>(j, "value_kind", parse_value_kind);
    auto unit = j.find("unit");
    if (unit == j.end() || unit->is_null()) {
        t.unit.reset();
    } else if (unit->is_string()) {
        t.unit = unit->get<std::string>();
    } else {
        schema_fail("'unit' must be a string or null");
    }
    t.aggregation_class = str(j, "aggregation_class");
}

void to_json(json& j, const FieldDescriptor& f) {
    j = json{{"name", f.name},
             {"semantic_type", f.semantic_type},
             {"access_mode", to_string(f.access_mode)},
             {"keywords", f.keywords}};
}

void from_json(const json& j, FieldDescriptor& f) {
    f.name = str(j, "name");
    from_json(member(j, "semantic_type"), f.semantic_type);
    f.access_mode = enum_member<AccessMode>(j, "access_mode", parse_access_mode);
    f.keywords = string_set(j, "keywords");
}

void to_json(json& j, const Operator& op) {
    json params = json::object();
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, FilterParams>) {
                params = {{"field", p.field}, {"op", to_string(p.op)},
                          {"value", value_to_json(p.constant)}};
            } else if constexpr (std::is_same_v<T, AggregateParams>) {
                params = {{"fn", to_string(p.fn)}, {"fields", p.fields}, {"window_ms", p.window_ms}};
            } else if constexpr (std::is_same_v<T, ResampleParams>) {
                params = {{"period_ms", p.period_ms}, {"strategy", to_string(p.strategy)}};
            } else if constexpr (std::is_same_v<T, SlidingDeltaParams>) {
                params = {{"field", p.field}, {"output", p.output}};
            } else {
                params = {{"output", p.output}};
            }
        },
        op.params);
    j = json{{"id", op.id}, {"kind", to_string(op.kind())}, {"inputs", op.inputs},
             {"params", std::move(params)}};
}

void from_json(const json& j, Operator& op) {
    op.id = str(j, "id");
    op.inputs = string_list(j, "inputs", true);
    const auto kind = enum_member<OperatorKind>(j, "kind", parse_operator_kind);
    const json empty = json::object();
    auto pit = j.find("params");
    const json& p = pit == j.end() ? empty : *pit;
    if (!p.is_object()) {
        schema_fail("operator '" + op.id + "': params must be an object");
    }
    switch (kind) {
    case OperatorKind::Filter: {
        FilterParams fp;
        fp.field = str(p, "field");
        fp.op = enum_member<CompareOp>(p, "op", parse_compare_op);
        fp.constant = value_from_json(member(p, "value"));
        op.params = std::move(fp);
        break;
    }
    case OperatorKind::AggregateWindow: {
        AggregateParams ap;
        ap.fn = enum_member<AggregateFn>(p, "fn", parse_aggregate_fn);
        ap.fields = string_list(p, "fields", true);
        ap.window_ms = p.contains("window_ms") ? integer(p, "window_ms") : 0;
        op.params = std::move(ap);
        break;
    }
    case OperatorKind::Resample: {
        ResampleParams rp;
        rp.period_ms = integer(p, "period_ms");
        rp.strategy = p.contains("strategy")
                          ? enum_member<ResampleStrategy>(p, "strategy", parse_resample_strategy)
                          : ResampleStrategy::Mean;
        op.params = rp;
        break;
    }
    case OperatorKind::SlidingDelta: {
        SlidingDeltaParams sp;
        sp.field = str(p, "field");
        if (p.contains("output")) {
            sp.output = str(p, "output");
        }
        op.params = std::move(sp);
        break;
    }
    case OperatorKind::AnonymizeLocation: {
        AnonymizeParams an;
        if (p.contains("output")) {
            an.output = str(p, "output");
        }
        op.params = std::move(an);
        break;
    }
    }
}

void to_json(json& j, const PipeSpec& p) {
    j = json{{"sources", p.sources}, {"operators", p.operators}, {"sink", p.sink}};
}

void from_json(const json& j, PipeSpec& p) {
    p.sources = string_list(j, "sources", true);
    p.operators.clear();
    if (auto it = j.find("operators"); it != j.end() && !it->is_null()) {
        if (!it->is_array()) {
            schema_fail("'operators' must be an array");
        }
        for (const auto& o : *it) {
            Operator op;
            from_json(o, op);
            p.operators.push_back(std::move(op));
        }
    }
    p.sink = j.contains("sink") && !j["sink"].is_null() ? str(j, "sink") : std::string{};
}

void to_json(json& j, const FeedDescriptor& d) {
    j = json{{"id", d.id},
             {"kind", to_string(d.kind)},
             {"fields", d.fields},
             {"scope", to_string(d.scope)},
             {"keywords", d.keywords},
             {"dependencies", d.dependencies},
             {"created_at", d.created_at},
             {"owner", d.owner}};
    if (d.pipe) {
        j["pipe"] = *d.pipe;
    }
    if (d.sample_period_ms) {
        j["sample_period_ms"] = *d.sample_period_ms;
    }
}

void from_json(const json& j, FeedDescriptor& d) {
    d.id = str(j, "id");
    d.kind = enum_member<FeedKind>(j, "kind", parse_feed_kind);
    d.fields.clear();
    const auto& fields = member(j, "fields");
    if (!fields.is_array()) {
        schema_fail("'fields' must be an array");
    }
    for (const auto& f : fields) {
        FieldDescriptor fd;
        from_json(f, fd);
        d.fields.push_back(std::move(fd));
    }
    d.scope = j.contains("scope") ? enum_member<Scope>(j, "scope", parse_scope) : Scope::Private;
    d.keywords = string_set(j, "keywords");
    d.dependencies = string_list(j, "dependencies", false);
    d.pipe.reset();
    if (auto it = j.find("pipe"); it != j.end() && !it->is_null()) {
        PipeSpec p;
        from_json(*it, p);
        d.pipe = std::move(p);
    }
    d.created_at = j.contains("created_at") ? integer(j, "created_at") : 0;
    d.owner = j.contains("owner") ? str(j, "owner") : std::string{};
    d.sample_period_ms.reset();
    if (auto it = j.find("sample_period_ms"); it != j.end() && !it->is_null()) {
        d.sample_period_ms = integer(j, "sample_period_ms");
    }
}

void to_json(json& j, const Sample& s) {
    json values = json::object();
    for (const auto& [name, v] : s.values) {
        values[name] = value_to_json(v);
    }
    j = json{{"feed_id", s.feed_id}, {"seq", s.seq}, {"t_ms", s.t_ms}, {"values", std::move(values)}};
}

void from_json(const json& j, Sample& s) {
    s.feed_id = str(j, "feed_id");
    s.seq = integer(j, "seq");
    s.t_ms = integer(j, "t_ms");
    s.values.clear();
    const auto& values = member(j, "values");
    if (!values.is_object()) {
        schema_fail("'values' must be an object");
    }
    for (auto it = values.begin(); it != values.end(); ++it) {
        s.values.emplace(it.key(), value_from_json(it.value()));
    }
}

Sample sample_from_json(const json& j, const FeedDescriptor& desc) {
    Sample s;
    s.feed_id = j.contains("feed_id") ? str(j, "feed_id") : desc.id;
    s.seq = j.contains("seq") ? integer(j, "seq") : 0;
    s.t_ms = j.contains("t_ms") ? integer(j, "t_ms") : 0;
    const auto& values = member(j, "values");
    if (!values.is_object()) {
        schema_fail("'values' must be an object");
    }
    for (auto it = values.begin(); it != values.end(); ++it) {
        const auto* f = desc.field(it.key());
        if (f == nullptr) {
            schema_fail("unknown field '" + it.key() + "' for feed " + desc.id);
        }
        s.values.emplace(it.key(), value_from_json(it.value(), f->semantic_type.value_kind));
    }
    return s;
}

} // namespace iothub
