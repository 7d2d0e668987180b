#include "iothub/enablers.hpp"

#include "iothub/error.hpp"

#include <atomic>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace iothub {

namespace {

constexpr std::string_view kClassNames[] = {"accelerometer", "temperature_sensor", "gps_sensor", "switch"};

const TypeRegistry& default_types() {
    static const TypeRegistry types = TypeRegistry::defaults();
    return types;
}

FieldDescriptor live_field(std::string name, std::string_view type) {
    return {std::move(name), default_types().at(type), AccessMode::Live, {}};
}

std::vector<ConfigParam> common_params() {
    return {{"feed_id", ValueKind::Text, false}, {"scope", ValueKind::Text, false},
            {"keywords", ValueKind::Text, false}};
}

EnablerDescriptor make_builtin(std::string id, DeviceClass cls, std::vector<ConfigParam> params,
                               FeedDescriptor produced) {
    EnablerDescriptor d{std::move(id), cls, common_params(), {std::move(produced)}};
    d.config_schema.insert(d.config_schema.end(), params.begin(), params.end());
    return d;
}

FeedDescriptor template_feed(std::string id, FeedKind kind, std::vector<FieldDescriptor> fields,
                             std::set<std::string> keywords, std::optional<std::int64_t> period) {
    FeedDescriptor f;
    f.id = std::move(id);
    f.kind = kind;
    f.fields = std::move(fields);
    f.keywords = std::move(keywords);
    f.sample_period_ms = period;
    return f;
}

bool kind_matches(const json& v, ValueKind kind) {
    switch (kind) {
    case ValueKind::Text: return v.is_string();
    case ValueKind::Boolean: return v.is_boolean();
    case ValueKind::Integer:
    case ValueKind::Timestamp: return v.is_number_integer();
    case ValueKind::Decimal: return v.is_number();
    case ValueKind::GeoPoint: return v.is_object();
    }
    return false;
}

void check_config(const EnablerDescriptor& d, const json& config) {
    if (!config.is_object()) {
        throw Error(Errc::config_error, "enabler config must be an object", d.id);
    }
    for (const auto& [key, value] : config.items()) {
        auto it = std::find_if(d.config_schema.begin(), d.config_schema.end(),
                               [&](const ConfigParam& p) { return p.name == key; });
        if (it == d.config_schema.end()) {
            throw Error(Errc::config_error, "unknown config key '" + key + "' for " + d.id, d.id);
        }
        if (!kind_matches(value, it->kind)) {
            throw Error(Errc::config_error,
                        "config key '" + key + "' must be " + std::string(to_string(it->kind)), d.id);
        }
    }
    for (const auto& p : d.config_schema) {
        if (p.required && !config.contains(p.name)) {
            throw Error(Errc::config_error, "missing config key '" + p.name + "' for " + d.id, d.id);
        }
    }
}

template <typename T>
T get_or(const json& config, const char* key, T fallback) {
    return config.contains(key) ? config.at(key).get<T>() : fallback;
}

class Uniform {
public:
    explicit Uniform(std::uint64_t seed) : rng_(seed) {}
    double operator()(double lo, double hi) {
        return lo + (hi - lo) * (static_cast<double>(rng_() >> 11) * 0x1.0p-53);
    }

private:
    std::mt19937_64 rng_;
};

} // namespace

/// Shared by a scheduled task and the registry so a task that is already
/// running when the registry stops exits on its next tick.
struct EnablerRegistry::TaskFlag {
    std::atomic<bool> alive{true};
};

std::string_view to_string(DeviceClass c) {
    return kClassNames[static_cast<int>(c)];
}

std::optional<DeviceClass> parse_device_class(std::string_view text) {
    for (int i = 0; i < 4; ++i) {
        if (kClassNames[i] == text) {
            return static_cast<DeviceClass>(i);
        }
    }
    return std::nullopt;
}

void to_json(json& j, const ConfigParam& p) {
    j = json{{"name", p.name}, {"kind", std::string(to_string(p.kind))}, {"required", p.required}};
}

void from_json(const json& j, ConfigParam& p) {
    p.name = j.at("name").get<std::string>();
    const auto kind = parse_value_kind(j.at("kind").get<std::string>());
    if (!kind) {
        throw Error(Errc::schema_error, "unknown kind in config parameter " + p.name);
    }
    p.kind = *kind;
    p.required = j.value("required", false);
}

void to_json(json& j, const EnablerDescriptor& d) {
    j = json{{"id", d.id},
             {"device_class", std::string(to_string(d.device_class))},
             {"config_schema", d.config_schema},
             {"produces", d.produces}};
}

void from_json(const json& j, EnablerDescriptor& d) {
    d.id = j.at("id").get<std::string>();
    const auto cls = parse_device_class(j.at("device_class").get<std::string>());
    if (!cls) {
        throw Error(Errc::schema_error, "unknown device_class for enabler " + d.id);
    }
    d.device_class = *cls;
    d.config_schema = j.value("config_schema", json::array()).get<std::vector<ConfigParam>>();
    d.produces = j.value("produces", json::array()).get<std::vector<FeedDescriptor>>();
}

const std::vector<EnablerDescriptor>& builtin_enablers() {
    static const std::vector<EnablerDescriptor> builtins = [] {
        std::vector<EnablerDescriptor> v;
        v.push_back(make_builtin(
            "accelerometer", DeviceClass::Accelerometer,
            {{"trace_path", ValueKind::Text, true}, {"period_ms", ValueKind::Integer, false},
             {"start_ms", ValueKind::Integer, false}, {"loop", ValueKind::Boolean, false}},
            template_feed("accelerometer", FeedKind::AtomicSensor,
                          {live_field("x", "acceleration"), live_field("y", "acceleration"),
                           live_field("z", "acceleration")},
                          {"accelerometer", "acceleration"}, kTracePeriodMs)));
        v.push_back(make_builtin(
            "temperature_sensor", DeviceClass::TemperatureSensor,
            {{"period_ms", ValueKind::Integer, false}, {"seed", ValueKind::Integer, false},
             {"base", ValueKind::Decimal, false}, {"amplitude", ValueKind::Decimal, false}},
            template_feed("temperature_sensor", FeedKind::AtomicSensor,
                          {live_field("temperature", "temperature")}, {"temperature"}, 1000)));
        v.push_back(make_builtin(
            "gps_sensor", DeviceClass::GpsSensor,
            {{"period_ms", ValueKind::Integer, false}, {"seed", ValueKind::Integer, false},
             {"lat", ValueKind::Decimal, false}, {"lon", ValueKind::Decimal, false},
             {"step_deg", ValueKind::Decimal, false}},
            template_feed("gps_sensor", FeedKind::AtomicSensor, {live_field("position", "location")},
                          {"gps", "location"}, 1000)));
        v.push_back(make_builtin(
            "switch", DeviceClass::Switch, {{"initial", ValueKind::Boolean, false}},
            template_feed("switch", FeedKind::AtomicActuator, {live_field("on", "switch_state")},
                          {"switch", "actuator"}, std::nullopt)));
        return v;
    }();
    return builtins;
}

SwitchCommand parse_command(const json& j) {
    if (!j.is_object() || !j.contains("command") || !j.at("command").is_string()) {
        throw Error(Errc::schema_error, "command body needs a string 'command'");
    }
    const auto cmd = j.at("command").get<std::string>();
    if (cmd == "toggle") {
        return SwitchCommand::toggle();
    }
    if (cmd == "set") {
        if (!j.contains("on") || !j.at("on").is_boolean()) {
            throw Error(Errc::schema_error, "set needs a boolean 'on'");
        }
        return SwitchCommand::set(j.at("on").get<bool>());
    }
    throw Error(Errc::schema_error, "unknown command '" + cmd + "'");
}

bool apply_switch(bool state, const SwitchCommand& cmd) {
    return cmd.kind == SwitchCommand::Kind::Toggle ? !state : cmd.on;
}

EnablerRegistry::EnablerRegistry(Engine& engine, Scheduler& scheduler, std::string owner)
    : engine_(engine), scheduler_(scheduler), owner_(std::move(owner)) {}

EnablerRegistry::~EnablerRegistry() {
    stop_all();
}

std::vector<EnablerDescriptor> EnablerRegistry::list() const {
    std::lock_guard lock(mutex_);
    std::vector<EnablerDescriptor> out = builtin_enablers();
    out.insert(out.end(), remote_.begin(), remote_.end());
    return out;
}

bool EnablerRegistry::add_remote(const EnablerDescriptor& d) {
    for (const auto& f : d.produces) {
        if (const auto report = validate_feed(f); !report.ok()) {
            throw Error(Errc::invalid_descriptor, "enabler " + d.id + ": " + report.summary(), d.id);
        }
    }
    if (d.id.empty()) {
        throw Error(Errc::invalid_descriptor, "enabler id is empty");
    }
    std::lock_guard lock(mutex_);
    for (const auto& b : builtin_enablers()) {
        if (b.id == d.id) {
            return false;
        }
    }
    for (const auto& r : remote_) {
        if (r.id == d.id) {
            return false;
        }
    }
    remote_.push_back(d);
    return true;
}

std::string EnablerRegistry::allocate_id(const std::string& base, const json& config) {
    if (config.contains("feed_id")) {
        return config.at("feed_id").get<std::string>();
    }
    std::lock_guard lock(mutex_);
    for (;;) {
        const std::string id = base + "-" + std::to_string(++counters_[base]);
        if (!engine_.find_feed(id)) {
            return id;
        }
    }
}

std::vector<std::string> EnablerRegistry::instantiate(const std::string& enabler_id, const json& config) {
    std::optional<EnablerDescriptor> desc;
    for (const auto& d : list()) {
        if (d.id == enabler_id) {
            desc = d;
            break;
        }
    }
    if (!desc) {
        throw Error(Errc::unknown_enabler, "unknown enabler '" + enabler_id + "'", enabler_id);
    }
    // Remote descriptors run the built-in adapter of their device class;
    // missing schema or templates are taken from it.
    for (const auto& b : builtin_enablers()) {
        if (b.device_class == desc->device_class) {
            if (desc->produces.empty()) {
                desc->produces = b.produces;
            }
            if (desc->config_schema.empty()) {
                desc->config_schema = b.config_schema;
            }
        }
    }
    check_config(*desc, config);

    FeedDescriptor feed = desc->produces.front();
    feed.id = allocate_id(enabler_id, config);
    feed.owner = owner_;
    feed.created_at = 0;
    if (config.contains("scope")) {
        const auto scope = parse_scope(config.at("scope").get<std::string>());
        if (!scope) {
            throw Error(Errc::config_error, "unknown scope '" + config.at("scope").get<std::string>() + "'");
        }
        feed.scope = *scope;
    }
    if (config.contains("keywords")) {
        std::stringstream ss(config.at("keywords").get<std::string>());
        for (std::string kw; std::getline(ss, kw, ',');) {
            if (!kw.empty()) {
                feed.keywords.insert(kw);
            }
        }
    }
    const std::int64_t period = get_or<std::int64_t>(config, "period_ms", feed.sample_period_ms.value_or(1000));
    if (desc->device_class != DeviceClass::Switch) {
        if (period <= 0) {
            throw Error(Errc::config_error, "period_ms must be positive", enabler_id);
        }
        feed.sample_period_ms = period;
    }

    auto flag = std::make_shared<TaskFlag>();
    Engine& engine = engine_;
    Scheduler& clock = scheduler_;
    const std::string id = feed.id;
    // Each task stops once its feed disappears or rejects a sample.
    auto guarded = [flag](auto body) {
        return [flag, body]() mutable {
            if (!flag->alive) {
                return false;
            }
            try {
                return body();
            } catch (const Error&) {
                return false;
            }
        };
    };

    Scheduler::Task task;
    std::int64_t first = scheduler_.now_ms();
    switch (desc->device_class) {
    case DeviceClass::Accelerometer: {
        std::vector<AccelSample> trace;
        const auto path = config.at("trace_path").get<std::string>();
        try {
            trace = load_trace(path);
        } catch (const Error& e) {
            throw Error(Errc::config_error, e.what(), enabler_id);
        }
        if (trace.empty()) {
            throw Error(Errc::config_error, "trace " + path + " is empty", enabler_id);
        }
        first = get_or<std::int64_t>(config, "start_ms", first);
        const bool loop = get_or<bool>(config, "loop", false);
        auto data = std::make_shared<std::vector<AccelSample>>(std::move(trace));
        task = guarded([&engine, id, data, first, period, loop, i = std::size_t{0}]() mutable {
            if (i >= data->size() && !loop) {
                return false;
            }
            const auto& s = (*data)[i % data->size()];
            engine.publish_next(id, {{"x", s.x}, {"y", s.y}, {"z", s.z}},
                                first + static_cast<std::int64_t>(i) * period);
            ++i;
            return loop || i < data->size();
        });
        break;
    }
    case DeviceClass::TemperatureSensor: {
        const double base = get_or<double>(config, "base", 20.0);
        const double amplitude = get_or<double>(config, "amplitude", 5.0);
        auto rng = std::make_shared<Uniform>(get_or<std::int64_t>(config, "seed", 1));
        task = guarded([&engine, &clock, id, base, amplitude, rng] {
            const auto t = clock.now_ms();
            const double day = 2.0 * std::numbers::pi * static_cast<double>(t % 86400000) / 86400000.0;
            engine.publish_next(id, {{"temperature", base + amplitude * std::sin(day) + (*rng)(-0.1, 0.1)}}, t);
            return true;
        });
        break;
    }
    case DeviceClass::GpsSensor: {
        GeoPoint pos{get_or<double>(config, "lat", 60.1699), get_or<double>(config, "lon", 24.9384)};
        if (!valid_coordinates(pos)) {
            throw Error(Errc::config_error, "lat/lon out of range", enabler_id);
        }
        const double step = get_or<double>(config, "step_deg", 0.001);
        auto rng = std::make_shared<Uniform>(get_or<std::int64_t>(config, "seed", 1));
        task = guarded([&engine, &clock, id, pos, step, rng]() mutable {
            pos.lat = std::clamp(pos.lat + (*rng)(-step, step), -89.9, 89.9);
            pos.lon += (*rng)(-step, step);
            if (pos.lon > 180.0) pos.lon -= 360.0;
            if (pos.lon < -180.0) pos.lon += 360.0;
            engine.publish_next(id, {{"position", pos}}, clock.now_ms());
            return true;
        });
        break;
    }
    case DeviceClass::Switch: break;
    }

    const auto created = engine_.create_feed(feed);
    if (desc->device_class == DeviceClass::Switch) {
        auto a = actuator(id);
        std::lock_guard lock(a->mutex);
        a->state = get_or<bool>(config, "initial", false);
        a->created_at = created.created_at;
    } else {
        const auto task_id = scheduler_.schedule_periodic(first, period, std::move(task));
        std::lock_guard lock(mutex_);
        tasks_.push_back(task_id);
        flags_.push_back(flag);
    }
    return {id};
}

std::shared_ptr<EnablerRegistry::Actuator> EnablerRegistry::actuator(const std::string& feed_id) {
    std::lock_guard lock(mutex_);
    auto& slot = actuators_[feed_id];
    if (!slot) {
        slot = std::make_shared<Actuator>();
    }
    return slot;
}

bool EnablerRegistry::apply_command(const std::string& feed_id, const SwitchCommand& cmd,
                                    std::optional<std::int64_t> t_ms) {
    const auto desc = engine_.feed(feed_id);
    if (desc.kind != FeedKind::AtomicActuator) {
        throw Error(Errc::not_an_actuator, "feed '" + feed_id + "' is not an actuator", feed_id);
    }
    std::string field;
    for (const auto& f : desc.fields) {
        if (f.semantic_type.value_kind == ValueKind::Boolean &&
            f.semantic_type.aggregation_class == aggregation::kSwitchState) {
            field = f.name;
        }
    }
    auto a = actuator(feed_id);
    std::lock_guard lock(a->mutex);
    const auto latest = engine_.storage().latest(feed_id);
    if (!a->state || a->created_at != desc.created_at) {
        a->state = latest ? std::get<bool>(latest->values.at(field)) : false;
        a->created_at = desc.created_at;
    }
    const bool next = apply_switch(*a->state, cmd);
    std::int64_t t = t_ms ? *t_ms : scheduler_.now_ms();
    if (latest && t < latest->t_ms) {
        t = latest->t_ms;
    }
    engine_.publish_next(feed_id, {{field, next}}, t);
    a->state = next;
    return next;
}

std::optional<bool> EnablerRegistry::switch_state(const std::string& feed_id) {
    const auto desc = engine_.feed(feed_id);
    if (desc.kind != FeedKind::AtomicActuator) {
        throw Error(Errc::not_an_actuator, "feed '" + feed_id + "' is not an actuator", feed_id);
    }
    auto a = actuator(feed_id);
    std::lock_guard lock(a->mutex);
    if (a->state && a->created_at == desc.created_at) {
        return a->state;
    }
    return std::nullopt;
}

void EnablerRegistry::stop_all() {
    std::lock_guard lock(mutex_);
    for (auto& f : flags_) {
        f->alive = false;
    }
    for (auto id : tasks_) {
        scheduler_.cancel(id);
    }
    tasks_.clear();
    flags_.clear();
}

} // namespace iothub
