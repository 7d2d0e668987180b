#pragma once

// Simulated device adapters. Each instance registers atomic feeds with the
// engine; sensors publish on a scheduler, actuators accept commands.

#include "iothub/canonical.hpp"
#include "iothub/clock.hpp"
#include "iothub/engine.hpp"
#include "iothub/trace.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace iothub {

enum class DeviceClass { Accelerometer, TemperatureSensor, GpsSensor, Switch };

std::string_view to_string(DeviceClass c);
std::optional<DeviceClass> parse_device_class(std::string_view text);

struct ConfigParam {
    std::string name;
    ValueKind kind = ValueKind::Text;
    bool required = false;

    friend bool operator==(const ConfigParam&, const ConfigParam&) = default;
};

struct EnablerDescriptor {
    std::string id;
    DeviceClass device_class = DeviceClass::Switch;
    std::vector<ConfigParam> config_schema;
    /// Template descriptors of the feeds an instance registers.
    std::vector<FeedDescriptor> produces;

    friend bool operator==(const EnablerDescriptor&, const EnablerDescriptor&) = default;
};

void to_json(json& j, const ConfigParam& p);
void from_json(const json& j, ConfigParam& p);
void to_json(json& j, const EnablerDescriptor& d);
void from_json(const json& j, EnablerDescriptor& d);

/// The four built-in enablers: accelerometer, temperature_sensor,
/// gps_sensor and switch.
const std::vector<EnablerDescriptor>& builtin_enablers();

struct SwitchCommand {
    enum class Kind { Toggle, Set } kind = Kind::Toggle;
    bool on = false;

    static SwitchCommand toggle() { return {Kind::Toggle, false}; }
    static SwitchCommand set(bool on) { return {Kind::Set, on}; }

    friend bool operator==(const SwitchCommand&, const SwitchCommand&) = default;
};

/// {"command":"toggle"} or {"command":"set","on":bool}; throws
/// Error(schema_error).
SwitchCommand parse_command(const json& j);

/// Pure state transition of an ON/OFF actuator.
bool apply_switch(bool state, const SwitchCommand& cmd);

class EnablerRegistry {
public:
    /// `owner` stamps the descriptors of instantiated feeds.
    EnablerRegistry(Engine& engine, Scheduler& scheduler, std::string owner = "hub");
    ~EnablerRegistry();
    EnablerRegistry(const EnablerRegistry&) = delete;
    EnablerRegistry& operator=(const EnablerRegistry&) = delete;

    /// Built-ins first, then remote descriptors in the order they arrived.
    std::vector<EnablerDescriptor> list() const;
    /// Adds a descriptor fetched from a catalog. Ids already known are
    /// ignored; returns whether it was new. Throws Error(invalid_descriptor)
    /// when a template fails validate_feed.
    bool add_remote(const EnablerDescriptor& d);

    /// Registers the instance's feed and starts publishing for sensors.
    /// Config keys: feed_id, scope, keywords (comma separated) plus the
    /// enabler's own parameters. Throws unknown_enabler or config_error.
    std::vector<std::string> instantiate(const std::string& enabler_id, const json& config);

    /// Serialized per actuator; always publishes the resulting state at
    /// `t_ms` (default: now, never before the feed's last sample).
    /// Throws unknown_feed or not_an_actuator.
    bool apply_command(const std::string& feed_id, const SwitchCommand& cmd,
                       std::optional<std::int64_t> t_ms = std::nullopt);

    /// Last commanded state, if this registry has seen one for the feed.
    /// Throws unknown_feed or not_an_actuator.
    std::optional<bool> switch_state(const std::string& feed_id);

    /// Cancels the publishing task of every instance.
    void stop_all();

private:
    struct Actuator {
        std::mutex mutex;
        std::optional<bool> state;
        std::int64_t created_at = 0;
    };
    struct TaskFlag;

    std::shared_ptr<Actuator> actuator(const std::string& feed_id);
    std::string allocate_id(const std::string& base, const json& config);

    Engine& engine_;
    Scheduler& scheduler_;
    std::string owner_;
    mutable std::mutex mutex_;
    std::vector<EnablerDescriptor> remote_;
    std::map<std::string, std::shared_ptr<Actuator>> actuators_;
    std::vector<Scheduler::TaskId> tasks_;
    std::vector<std::shared_ptr<TaskFlag>> flags_;
    std::map<std::string, int> counters_;
};

} // namespace iothub
