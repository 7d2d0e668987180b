#pragma once

// Declarative application packages: required feeds, pipe templates and
// trigger rules driving actuator commands.

#include "iothub/canonical.hpp"
#include "iothub/enablers.hpp"
#include "iothub/engine.hpp"
#include "iothub/pipe_plan.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace iothub {

struct Requirement {
    std::string name;
    std::string aggregation_class;
    FeedKind kind = FeedKind::AtomicSensor;
    /// Field names the bound feed must expose, all of `aggregation_class`.
    /// Empty: one field of the class, named after the class.
    std::vector<std::string> fields;

    friend bool operator==(const Requirement&, const Requirement&) = default;
};

/// Sources and operator inputs of `spec` name requirements as "$<index>".
struct PipeTemplate {
    std::string name;
    PipeSpec spec;

    friend bool operator==(const PipeTemplate&, const PipeTemplate&) = default;
};

struct TriggerRule {
    std::string id;
    /// Exactly one of watch_pipe / watch_requirement is set.
    std::optional<std::string> watch_pipe;
    std::optional<std::size_t> watch_requirement;
    std::string field;
    CompareOp op = CompareOp::Gt;
    /// Exactly one of param / constant is set.
    std::optional<std::string> param;
    std::optional<Value> constant;
    std::int64_t cooldown_ms = 0;
    std::size_t action_requirement = 0;
    SwitchCommand command;

    friend bool operator==(const TriggerRule&, const TriggerRule&) = default;
};

struct AppPackage {
    std::string app_id;
    std::string name;
    std::string version;
    std::set<std::string> keywords;
    std::vector<Requirement> requirements;
    std::vector<PipeTemplate> pipes;
    std::vector<TriggerRule> rules;
    std::map<std::string, Value> params;

    friend bool operator==(const AppPackage&, const AppPackage&) = default;
};

void to_json(json& j, const AppPackage& p);
/// Throws Error(schema_error).
void from_json(const json& j, AppPackage& p);

/// Accelerometer + switch; summed axes, sliding delta "force", toggle when
/// force > threshold (default 5.0) with a 2000 ms cooldown.
AppPackage shake_app();

inline constexpr double kDefaultShakeThreshold = 5.0;
inline constexpr std::int64_t kShakeCooldownMs = 2000;

struct AppContext {
    const TypeRegistry* types = nullptr;  // defaults when null
    const UnitRegistry* units = nullptr;
    const CityTable* cities = nullptr;    // nordic when null
};

/// Stand-in descriptor for requirement `index`, id "$<index>".
FeedDescriptor representative_feed(const AppPackage& pkg, std::size_t index, const AppContext& ctx = {});

/// Structural checks plus pipe typing against representative descriptors.
ValidationReport validate_app_static(const AppPackage& pkg, const AppContext& ctx = {});

/// Whether `feed` can serve `req`.
bool satisfies(const FeedDescriptor& feed, const Requirement& req);

/// Requirement name to feed id. Ties go to the earliest created_at, then
/// creation order. Names of unmatched requirements land in `missing`.
struct Binding {
    std::map<std::string, std::string> bound;
    std::vector<std::string> missing;
};
Binding bind_requirements(const AppPackage& pkg, const std::vector<FeedDescriptor>& feeds);

enum class AppState { Installed, Unsatisfied, Running, Stopped, Failed };

std::string_view to_string(AppState s);

struct AppStatus {
    std::string app_id;
    AppState state = AppState::Installed;
    std::map<std::string, std::string> bound_feeds;
    std::vector<std::string> missing;
    std::int64_t fire_count = 0;
    std::optional<std::int64_t> last_fired_ms;
    std::vector<std::string> derived_feeds;
    std::string diagnostic;
};

void to_json(json& j, const AppStatus& s);

enum class RuleOutcome { Fire, Suppress, NoMatch };

struct RuleState {
    std::optional<std::int64_t> last_fired_ms;
};

/// Fires when the condition holds and the cooldown since the last firing
/// has elapsed; records `now_ms` on fire. Non-comparable values never match.
RuleOutcome evaluate_rule(const TriggerRule& rule, const Value& observed, const Value& threshold,
                          std::int64_t now_ms, RuleState& state);

/// The threshold a rule compares against (param value or constant).
/// Throws Error(invalid_package) for an unknown param.
Value rule_threshold(const AppPackage& pkg, const TriggerRule& rule);

/// Installed apps on one hub. Rule evaluation of an app is serialized;
/// actions go through the enabler registry's command path.
class AppEngine {
public:
    AppEngine(Engine& engine, EnablerRegistry& actuators);
    ~AppEngine();
    AppEngine(const AppEngine&) = delete;
    AppEngine& operator=(const AppEngine&) = delete;

    /// Validates and binds. Replaces an installed app of the same id unless
    /// it is running. Throws invalid_package or already_running.
    AppStatus install(AppPackage pkg);
    /// Re-binds and arms the rules. Throws unknown_app, not_bound or
    /// already_running.
    AppStatus start(const std::string& app_id);
    /// Disarms rules and removes app-owned derived feeds. Also accepted for
    /// failed apps. Throws unknown_app or not_running.
    AppStatus stop(const std::string& app_id);
    /// Throws unknown_app.
    AppStatus status(const std::string& app_id) const;
    AppPackage package(const std::string& app_id) const;
    std::vector<AppStatus> list() const;
    void stop_all();

    /// Derived feed id of pipe `pipe` of app `app_id`.
    static std::string derived_feed_id(const std::string& app_id, const std::string& pipe);

private:
    struct Run;
    struct App;

    std::shared_ptr<App> find(const std::string& app_id) const;
    void on_sample(const std::shared_ptr<Run>& run, std::size_t rule_index, const Sample& s);
    void teardown(Run& run);

    Engine& engine_;
    EnablerRegistry& actuators_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<App>> apps_;
};

} // namespace iothub
