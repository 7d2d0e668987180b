#include "iothub/app.hpp"

#include "iothub/error.hpp"
#include "iothub/operators.hpp"

#include <algorithm>
#include <regex>

namespace iothub {

namespace {

constexpr std::string_view kStateNames[] = {"installed", "unsatisfied", "running", "stopped", "failed"};

[[noreturn]] void schema_fail(const std::string& msg) {
    throw Error(Errc::schema_error, "app package: " + msg);
}

const json& member(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) {
        schema_fail(std::string("missing '") + key + "'");
    }
    return *it;
}

std::string text(const json& j, const char* key) {
    const json& v = member(j, key);
    if (!v.is_string()) {
        schema_fail(std::string("'") + key + "' must be a string");
    }
    return v.get<std::string>();
}

std::size_t index_of(const json& j, const char* key) {
    const json& v = member(j, key);
    if (!v.is_number_unsigned()) {
        schema_fail(std::string("'") + key + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

json command_to_json(const SwitchCommand& c) {
    if (c.kind == SwitchCommand::Kind::Toggle) {
        return json{{"command", "toggle"}};
    }
    return json{{"command", "set"}, {"on", c.on}};
}

std::optional<std::size_t> placeholder_index(const std::string& name) {
    static const std::regex re(R"(^\$([0-9]+)$)");
    std::smatch m;
    if (!std::regex_match(name, m, re)) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(std::stoul(m[1].str()));
}

bool valid_app_id(const std::string& id) {
    static const std::regex re(R"(^[A-Za-z0-9_-][A-Za-z0-9_.-]*$)");
    return std::regex_match(id, re);
}

const TypeRegistry& types_of(const AppContext& ctx) {
    static const TypeRegistry defaults = TypeRegistry::defaults();
    return ctx.types ? *ctx.types : defaults;
}

PipeSpec substitute(const PipeSpec& spec, const std::map<std::size_t, std::string>& ids) {
    PipeSpec out = spec;
    auto swap = [&](std::string& name) {
        if (auto i = placeholder_index(name); i && ids.contains(*i)) {
            name = ids.at(*i);
        }
    };
    for (auto& s : out.sources) {
        swap(s);
    }
    for (auto& op : out.operators) {
        for (auto& in : op.inputs) {
            swap(in);
        }
    }
    return out;
}

} // namespace

std::string_view to_string(AppState s) {
    return kStateNames[static_cast<int>(s)];
}

void to_json(json& j, const AppPackage& p) {
    json reqs = json::array();
    for (const auto& r : p.requirements) {
        reqs.push_back({{"name", r.name},
                        {"aggregation_class", r.aggregation_class},
                        {"kind", std::string(to_string(r.kind))},
                        {"fields", r.fields}});
    }
    json pipes = json::array();
    for (const auto& t : p.pipes) {
        pipes.push_back({{"name", t.name}, {"spec", t.spec}});
    }
    json rules = json::array();
    for (const auto& r : p.rules) {
        json watch = {{"field", r.field}};
        if (r.watch_pipe) {
            watch["pipe"] = *r.watch_pipe;
        }
        if (r.watch_requirement) {
            watch["requirement"] = *r.watch_requirement;
        }
        json condition = {{"op", std::string(to_string(r.op))}};
        if (r.param) {
            condition["param"] = *r.param;
        }
        if (r.constant) {
            condition["value"] = value_to_json(*r.constant);
        }
        rules.push_back({{"id", r.id},
                         {"watch", std::move(watch)},
                         {"condition", std::move(condition)},
                         {"cooldown_ms", r.cooldown_ms},
                         {"action", {{"requirement", r.action_requirement}, {"command", command_to_json(r.command)}}}});
    }
    json params = json::object();
    for (const auto& [k, v] : p.params) {
        params[k] = value_to_json(v);
    }
    j = json{{"app_id", p.app_id}, {"name", p.name},         {"version", p.version},
             {"keywords", p.keywords}, {"requires", std::move(reqs)}, {"pipes", std::move(pipes)},
             {"rules", std::move(rules)}, {"params", std::move(params)}};
}

void from_json(const json& j, AppPackage& p) {
    if (!j.is_object()) {
        schema_fail("must be an object");
    }
    p = AppPackage{};
    p.app_id = text(j, "app_id");
    p.name = j.contains("name") ? text(j, "name") : p.app_id;
    p.version = text(j, "version");
    if (auto it = j.find("keywords"); it != j.end()) {
        if (!it->is_array()) {
            schema_fail("'keywords' must be an array");
        }
        for (const auto& k : *it) {
            if (!k.is_string()) {
                schema_fail("keywords must be strings");
            }
            p.keywords.insert(k.get<std::string>());
        }
    }
    for (const auto& r : member(j, "requires")) {
        Requirement req;
        req.name = text(r, "name");
        req.aggregation_class = text(r, "aggregation_class");
        const auto kind = parse_feed_kind(text(r, "kind"));
        if (!kind) {
            schema_fail("requirement '" + req.name + "': unknown kind");
        }
        req.kind = *kind;
        if (auto it = r.find("fields"); it != r.end()) {
            for (const auto& f : *it) {
                if (!f.is_string()) {
                    schema_fail("requirement '" + req.name + "': field names must be strings");
                }
                req.fields.push_back(f.get<std::string>());
            }
        }
        p.requirements.push_back(std::move(req));
    }
    if (auto it = j.find("pipes"); it != j.end()) {
        for (const auto& t : *it) {
            p.pipes.push_back({text(t, "name"), decode<PipeSpec>(member(t, "spec"))});
        }
    }
    if (auto it = j.find("rules"); it != j.end()) {
        for (const auto& r : *it) {
            TriggerRule rule;
            rule.id = text(r, "id");
            const json& watch = member(r, "watch");
            rule.field = text(watch, "field");
            if (watch.contains("pipe")) {
                rule.watch_pipe = text(watch, "pipe");
            }
            if (watch.contains("requirement")) {
                rule.watch_requirement = index_of(watch, "requirement");
            }
            const json& cond = member(r, "condition");
            const auto op = parse_compare_op(text(cond, "op"));
            if (!op) {
                schema_fail("rule '" + rule.id + "': unknown comparison");
            }
            rule.op = *op;
            if (cond.contains("param")) {
                rule.param = text(cond, "param");
            }
            if (cond.contains("value")) {
                rule.constant = value_from_json(cond.at("value"));
            }
            const json& cooldown = r.contains("cooldown_ms") ? r.at("cooldown_ms") : json(0);
            if (!cooldown.is_number_integer()) {
                schema_fail("rule '" + rule.id + "': cooldown_ms must be an integer");
            }
            rule.cooldown_ms = cooldown.get<std::int64_t>();
            const json& action = member(r, "action");
            rule.action_requirement = index_of(action, "requirement");
            rule.command = parse_command(member(action, "command"));
            p.rules.push_back(std::move(rule));
        }
    }
    if (auto it = j.find("params"); it != j.end()) {
        if (!it->is_object()) {
            schema_fail("'params' must be an object");
        }
        for (const auto& [k, v] : it->items()) {
            p.params[k] = value_from_json(v);
        }
    }
}

void to_json(json& j, const AppStatus& s) {
    j = json{{"app_id", s.app_id},
             {"state", std::string(to_string(s.state))},
             {"bound_feeds", s.bound_feeds},
             {"missing", s.missing},
             {"fire_count", s.fire_count},
             {"derived_feeds", s.derived_feeds}};
    j["last_fired_ms"] = s.last_fired_ms ? json(*s.last_fired_ms) : json(nullptr);
    if (!s.diagnostic.empty()) {
        j["diagnostic"] = s.diagnostic;
    }
}

AppPackage shake_app() {
    AppPackage p;
    p.app_id = "shake_flash";
    p.name = "Shake to toggle";
    p.version = "1.0.0";
    p.keywords = {"shake", "accelerometer", "switch"};
    p.requirements = {
        {"accelerometer", "acceleration", FeedKind::AtomicSensor, {"x", "y", "z"}},
        {"switch", "switch_state", FeedKind::AtomicActuator, {"on"}},
    };
    PipeSpec force;
    force.sources = {"$0"};
    force.operators = {
        {"sum", AggregateParams{AggregateFn::Sum, {"x", "y", "z"}, 0}, {"$0"}},
        {"delta", SlidingDeltaParams{aggregate_output_name(AggregateFn::Sum, "acceleration"), "force"}, {"sum"}},
    };
    force.sink = "delta";
    p.pipes = {{"force", force}};
    TriggerRule rule;
    rule.id = "shake";
    rule.watch_pipe = "force";
    rule.field = "force";
    rule.op = CompareOp::Gt;
    rule.param = "threshold";
    rule.cooldown_ms = kShakeCooldownMs;
    rule.action_requirement = 1;
    rule.command = SwitchCommand::toggle();
    p.rules = {rule};
    p.params = {{"threshold", kDefaultShakeThreshold}};
    return p;
}

FeedDescriptor representative_feed(const AppPackage& pkg, std::size_t index, const AppContext& ctx) {
    const Requirement& req = pkg.requirements.at(index);
    const TypeRegistry& types = types_of(ctx);
    const SemanticType* t = types.find_for_class(req.aggregation_class);
    if (!t) {
        throw Error(Errc::invalid_package, "unknown aggregation class '" + req.aggregation_class + "'",
                    req.name);
    }
    const AccessMode mode =
        req.kind == FeedKind::AtomicSensor || req.kind == FeedKind::AtomicActuator ? AccessMode::Live
                                                                                  : AccessMode::Stored;
    FeedDescriptor d;
    d.id = "$" + std::to_string(index);
    d.kind = req.kind;
    d.owner = "app";
    const std::vector<std::string> names = req.fields.empty() ? std::vector{req.aggregation_class} : req.fields;
    for (const auto& n : names) {
        d.fields.push_back({n, *t, mode, {}});
    }
    if (req.kind == FeedKind::TimeSeries && t->value_kind != ValueKind::Timestamp) {
        if (const SemanticType* time = types.find_for_class(aggregation::kTime, ValueKind::Timestamp)) {
            d.fields.push_back({"t", *time, AccessMode::Stored, {}});
        }
    }
    return d;
}

ValidationReport validate_app_static(const AppPackage& pkg, const AppContext& ctx) {
    ValidationReport report;
    auto& v = report.violations;
    const TypeRegistry& types = types_of(ctx);

    if (!valid_app_id(pkg.app_id)) {
        v.push_back("app_id '" + pkg.app_id + "' is not a valid identifier");
    }
    if (pkg.version.empty()) {
        v.emplace_back("version is empty");
    }

    std::set<std::string> names;
    std::vector<std::optional<FeedDescriptor>> reps(pkg.requirements.size());
    for (std::size_t i = 0; i < pkg.requirements.size(); ++i) {
        const auto& r = pkg.requirements[i];
        if (r.name.empty() || !names.insert(r.name).second) {
            v.push_back("requirement " + std::to_string(i) + ": missing or duplicate name");
        }
        if (!types.knows_class(r.aggregation_class)) {
            v.push_back("requirement '" + r.name + "': unknown aggregation class '" + r.aggregation_class + "'");
            continue;
        }
        if (std::set<std::string>(r.fields.begin(), r.fields.end()).size() != r.fields.size()) {
            v.push_back("requirement '" + r.name + "': duplicate field names");
            continue;
        }
        reps[i] = representative_feed(pkg, i, ctx);
        if (const auto rv = validate_feed(*reps[i]); !rv.ok()) {
            v.push_back("requirement '" + r.name + "': " + rv.summary());
            reps[i].reset();
        }
    }

    std::map<std::string, FeedDescriptor> outputs;
    std::set<std::string> pipe_names;
    for (const auto& t : pkg.pipes) {
        if (t.name.empty() || !pipe_names.insert(t.name).second) {
            v.push_back("pipe '" + t.name + "': missing or duplicate name");
            continue;
        }
        std::vector<FeedDescriptor> inputs;
        bool resolved = true;
        for (const auto& s : t.spec.sources) {
            const auto i = placeholder_index(s);
            if (!i || *i >= reps.size()) {
                v.push_back("pipe '" + t.name + "': source '" + s + "' does not name a requirement");
                resolved = false;
            } else if (!reps[*i]) {
                resolved = false;
            } else {
                inputs.push_back(*reps[*i]);
            }
        }
        if (!resolved) {
            continue;
        }
        try {
            PipeContext pc{&types, ctx.units, ctx.cities ? ctx.cities : &CityTable::nordic()};
            outputs.emplace(t.name, plan_pipe(t.spec, inputs, pc, "app-pipe", "app").output);
        } catch (const Error& e) {
            v.push_back("pipe '" + t.name + "': " + std::string(to_string(e.code())) + ": " + e.what());
        }
    }

    std::set<std::string> rule_ids;
    for (const auto& r : pkg.rules) {
        const std::string where = "rule '" + r.id + "': ";
        if (r.id.empty() || !rule_ids.insert(r.id).second) {
            v.push_back(where + "missing or duplicate id");
        }
        const FeedDescriptor* watched = nullptr;
        if (r.watch_pipe.has_value() == r.watch_requirement.has_value()) {
            v.push_back(where + "must watch exactly one pipe or requirement");
        } else if (r.watch_pipe) {
            if (!pipe_names.contains(*r.watch_pipe)) {
                v.push_back(where + "unknown pipe '" + *r.watch_pipe + "'");
            } else if (auto it = outputs.find(*r.watch_pipe); it != outputs.end()) {
                watched = &it->second;
            }
        } else if (*r.watch_requirement >= reps.size()) {
            v.push_back(where + "requirement index out of range");
        } else if (reps[*r.watch_requirement]) {
            watched = &*reps[*r.watch_requirement];
        }

        std::optional<ValueKind> field_kind;
        if (watched) {
            if (const auto* f = watched->field(r.field)) {
                field_kind = f->semantic_type.value_kind;
                if (!is_numeric(*field_kind) && *field_kind != ValueKind::Boolean) {
                    v.push_back(where + "watched field '" + r.field + "' is neither numeric nor boolean");
                    field_kind.reset();
                }
            } else {
                v.push_back(where + "watched feed has no field '" + r.field + "'");
            }
        }

        std::optional<Value> threshold;
        if (r.param.has_value() == r.constant.has_value()) {
            v.push_back(where + "condition needs exactly one of param or value");
        } else if (r.param) {
            if (auto it = pkg.params.find(*r.param); it != pkg.params.end()) {
                threshold = it->second;
            } else {
                v.push_back(where + "unknown param '" + *r.param + "'");
            }
        } else {
            threshold = *r.constant;
        }
        if (field_kind && threshold) {
            const bool numeric_threshold =
                std::holds_alternative<double>(*threshold) || std::holds_alternative<std::int64_t>(*threshold);
            if (*field_kind == ValueKind::Boolean) {
                if (!std::holds_alternative<bool>(*threshold)) {
                    v.push_back(where + "boolean field compared against a non-boolean");
                } else if (r.op != CompareOp::Eq && r.op != CompareOp::Ne) {
                    v.push_back(where + "boolean fields only support == and !=");
                }
            } else if (!numeric_threshold) {
                v.push_back(where + "numeric field compared against a non-number");
            }
        }

        if (r.cooldown_ms < 0) {
            v.push_back(where + "cooldown_ms is negative");
        }
        if (r.action_requirement >= pkg.requirements.size()) {
            v.push_back(where + "action requirement index out of range");
        } else {
            const auto& target = pkg.requirements[r.action_requirement];
            if (target.kind != FeedKind::AtomicActuator || target.aggregation_class != aggregation::kSwitchState) {
                v.push_back(where + "action target '" + target.name + "' is not a switch actuator");
            }
        }
    }
    return report;
}

bool satisfies(const FeedDescriptor& feed, const Requirement& req) {
    if (feed.kind != req.kind) {
        return false;
    }
    auto of_class = [&](const FieldDescriptor& f) {
        return f.semantic_type.aggregation_class == req.aggregation_class;
    };
    if (req.fields.empty()) {
        return std::any_of(feed.fields.begin(), feed.fields.end(), of_class);
    }
    return std::all_of(req.fields.begin(), req.fields.end(), [&](const std::string& name) {
        const auto* f = feed.field(name);
        return f && of_class(*f);
    });
}

Binding bind_requirements(const AppPackage& pkg, const std::vector<FeedDescriptor>& feeds) {
    Binding b;
    for (const auto& req : pkg.requirements) {
        const FeedDescriptor* best = nullptr;
        for (const auto& f : feeds) {
            // Strict comparison keeps the first-created feed among equal timestamps.
            if (satisfies(f, req) && (!best || f.created_at < best->created_at)) {
                best = &f;
            }
        }
        if (best) {
            b.bound[req.name] = best->id;
        } else {
            b.missing.push_back(req.name);
        }
    }
    return b;
}

RuleOutcome evaluate_rule(const TriggerRule& rule, const Value& observed, const Value& threshold,
                          std::int64_t now_ms, RuleState& state) {
    if (!compare_values(observed, rule.op, threshold)) {
        return RuleOutcome::NoMatch;
    }
    if (state.last_fired_ms && now_ms - *state.last_fired_ms < rule.cooldown_ms) {
        return RuleOutcome::Suppress;
    }
    state.last_fired_ms = now_ms;
    return RuleOutcome::Fire;
}

Value rule_threshold(const AppPackage& pkg, const TriggerRule& rule) {
    if (rule.constant) {
        return *rule.constant;
    }
    if (rule.param) {
        if (auto it = pkg.params.find(*rule.param); it != pkg.params.end()) {
            return it->second;
        }
    }
    throw Error(Errc::invalid_package, "rule '" + rule.id + "' has no threshold", rule.id);
}

// ---------------------------------------------------------------------------

struct AppEngine::Run {
    AppPackage pkg;
    std::map<std::string, std::string> bound;
    std::vector<Value> thresholds;
    std::vector<RuleState> states;
    std::vector<std::string> subscriptions;
    std::vector<std::string> derived;
    std::mutex eval;
    bool active = true;
};

struct AppEngine::App {
    std::mutex lifecycle;
    AppPackage pkg;
    AppStatus status;
    std::shared_ptr<Run> run;
};

AppEngine::AppEngine(Engine& engine, EnablerRegistry& actuators) : engine_(engine), actuators_(actuators) {}

AppEngine::~AppEngine() {
    stop_all();
}

std::string AppEngine::derived_feed_id(const std::string& app_id, const std::string& pipe) {
    return "app." + app_id + "." + pipe;
}

std::shared_ptr<AppEngine::App> AppEngine::find(const std::string& app_id) const {
    std::lock_guard lock(mutex_);
    auto it = apps_.find(app_id);
    if (it == apps_.end()) {
        throw Error(Errc::unknown_app, "unknown app '" + app_id + "'", app_id);
    }
    return it->second;
}

AppStatus AppEngine::install(AppPackage pkg) {
    AppContext ctx{&engine_.types(), &engine_.units(), &engine_.cities()};
    if (const auto report = validate_app_static(pkg, ctx); !report.ok()) {
        throw Error(Errc::invalid_package, report.summary(), pkg.app_id);
    }
    std::shared_ptr<App> app;
    {
        std::lock_guard lock(mutex_);
        auto& slot = apps_[pkg.app_id];
        if (!slot) {
            slot = std::make_shared<App>();
        }
        app = slot;
    }
    std::lock_guard life(app->lifecycle);
    std::lock_guard lock(mutex_);
    if (app->status.state == AppState::Running) {
        throw Error(Errc::already_running, "app '" + pkg.app_id + "' is running", pkg.app_id);
    }
    const Binding b = bind_requirements(pkg, engine_.feeds());
    app->status = AppStatus{};
    app->status.app_id = pkg.app_id;
    app->status.bound_feeds = b.bound;
    app->status.missing = b.missing;
    app->status.state = b.missing.empty() ? AppState::Installed : AppState::Unsatisfied;
    app->pkg = std::move(pkg);
    return app->status;
}

AppStatus AppEngine::start(const std::string& app_id) {
    auto app = find(app_id);
    std::lock_guard life(app->lifecycle);
    AppPackage pkg;
    {
        std::lock_guard lock(mutex_);
        if (app->status.state == AppState::Running) {
            throw Error(Errc::already_running, "app '" + app_id + "' is already running", app_id);
        }
        pkg = app->pkg;
    }
    const Binding b = bind_requirements(pkg, engine_.feeds());
    if (!b.missing.empty()) {
        std::lock_guard lock(mutex_);
        app->status.state = AppState::Unsatisfied;
        app->status.bound_feeds = b.bound;
        app->status.missing = b.missing;
        std::string list;
        for (const auto& m : b.missing) {
            list += (list.empty() ? "" : ", ") + m;
        }
        throw Error(Errc::not_bound, "app '" + app_id + "' is missing " + list, app_id);
    }

    auto run = std::make_shared<Run>();
    run->pkg = pkg;
    run->bound = b.bound;
    run->states.resize(pkg.rules.size());
    for (const auto& r : pkg.rules) {
        run->thresholds.push_back(rule_threshold(pkg, r));
    }
    std::map<std::size_t, std::string> ids;
    for (std::size_t i = 0; i < pkg.requirements.size(); ++i) {
        ids[i] = b.bound.at(pkg.requirements[i].name);
    }
    {
        std::lock_guard lock(mutex_);
        app->run = run;
    }
    try {
        for (const auto& t : pkg.pipes) {
            DerivedFeedOptions opts;
            opts.id = derived_feed_id(app_id, t.name);
            opts.scope = Scope::Private;
            opts.keywords = {"app", app_id};
            opts.owner = "app:" + app_id;
            run->derived.push_back(engine_.create_derived_feed(substitute(t.spec, ids), opts).id);
        }
        for (std::size_t i = 0; i < pkg.rules.size(); ++i) {
            const auto& r = pkg.rules[i];
            const std::string target =
                r.watch_pipe ? derived_feed_id(app_id, *r.watch_pipe) : ids.at(*r.watch_requirement);
            auto sub = engine_.subscribe(target, Sink::internal([this, run, i](const Sample& s) { on_sample(run, i, s); }));
            run->subscriptions.push_back(sub.id);
        }
    } catch (const Error& e) {
        teardown(*run);
        std::lock_guard lock(mutex_);
        app->run.reset();
        app->status.state = AppState::Failed;
        app->status.diagnostic = e.what();
        throw;
    }

    std::lock_guard lock(mutex_);
    AppStatus& st = app->status;
    st.state = AppState::Running;
    st.bound_feeds = b.bound;
    st.missing.clear();
    st.fire_count = 0;
    st.last_fired_ms.reset();
    st.derived_feeds = run->derived;
    st.diagnostic.clear();
    return st;
}

void AppEngine::on_sample(const std::shared_ptr<Run>& run, std::size_t rule_index, const Sample& s) {
    std::lock_guard eval(run->eval);
    if (!run->active) {
        return;
    }
    const TriggerRule& rule = run->pkg.rules[rule_index];
    auto it = s.values.find(rule.field);
    if (it == s.values.end()) {
        return;
    }
    if (evaluate_rule(rule, it->second, run->thresholds[rule_index], s.t_ms, run->states[rule_index]) !=
        RuleOutcome::Fire) {
        return;
    }
    const std::string& target = run->bound.at(run->pkg.requirements[rule.action_requirement].name);
    std::string failure;
    try {
        actuators_.apply_command(target, rule.command, s.t_ms);
    } catch (const std::exception& e) {
        failure = "rule '" + rule.id + "' action on '" + target + "' failed: " + e.what();
        run->active = false;
    }
    std::lock_guard lock(mutex_);
    auto app = apps_.find(run->pkg.app_id);
    if (app == apps_.end() || app->second->run != run) {
        return;
    }
    AppStatus& st = app->second->status;
    if (!failure.empty()) {
        st.state = AppState::Failed;
        st.diagnostic = failure;
        return;
    }
    ++st.fire_count;
    st.last_fired_ms = s.t_ms;
}

void AppEngine::teardown(Run& run) {
    {
        std::lock_guard eval(run.eval);
        run.active = false;
    }
    for (const auto& sub : run.subscriptions) {
        engine_.unsubscribe(sub);
    }
    for (auto it = run.derived.rbegin(); it != run.derived.rend(); ++it) {
        try {
            engine_.delete_feed(*it);
        } catch (const Error&) {
            // Already gone, or a user pipe now depends on it; leave it.
        }
    }
}

AppStatus AppEngine::stop(const std::string& app_id) {
    auto app = find(app_id);
    std::lock_guard life(app->lifecycle);
    std::shared_ptr<Run> run;
    {
        std::lock_guard lock(mutex_);
        const auto state = app->status.state;
        if (state != AppState::Running && !(state == AppState::Failed && app->run)) {
            throw Error(Errc::not_running, "app '" + app_id + "' is not running", app_id);
        }
        run = std::move(app->run);
    }
    teardown(*run);
    std::lock_guard lock(mutex_);
    app->status.state = AppState::Stopped;
    app->status.derived_feeds.clear();
    return app->status;
}

AppStatus AppEngine::status(const std::string& app_id) const {
    auto app = find(app_id);
    std::lock_guard lock(mutex_);
    return app->status;
}

AppPackage AppEngine::package(const std::string& app_id) const {
    auto app = find(app_id);
    std::lock_guard lock(mutex_);
    return app->pkg;
}

std::vector<AppStatus> AppEngine::list() const {
    std::lock_guard lock(mutex_);
    std::vector<AppStatus> out;
    for (const auto& [id, app] : apps_) {
        out.push_back(app->status);
    }
    return out;
}

void AppEngine::stop_all() {
    std::vector<std::string> ids;
    {
        std::lock_guard lock(mutex_);
        for (const auto& [id, app] : apps_) {
            if (app->run) {
                ids.push_back(id);
            }
        }
    }
    for (const auto& id : ids) {
        try {
            stop(id);
        } catch (const Error&) {
        }
    }
}

} // namespace iothub
