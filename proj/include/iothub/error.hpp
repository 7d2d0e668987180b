#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace iothub {

enum class Errc {
    type_error,
    arity_error,
    config_error,
    cycle_error,
    unknown_feed,
    schema_error,
    out_of_order,
    invalid_descriptor,
    duplicate_id,
    has_dependents,
    empty_table,
    unknown_enabler,
    not_an_actuator,
    scope_violation,
    metahub_unreachable,
    invalid_uri,
    unregistered_hub,
    duplicate_version,
    invalid_package,
    unknown_app,
    not_bound,
    already_running,
    not_running,
    unknown_scenario,
    io_error,
};

std::string_view to_string(Errc code);

/// Domain error carrying a stable code. `subject` names the offending
/// element where one exists (operator id, feed id, field name).
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message, std::string subject = {})
        : std::runtime_error(message), code_(code), subject_(std::move(subject)) {}

    Errc code() const noexcept { return code_; }
    const std::string& subject() const noexcept { return subject_; }

private:
    Errc code_;
    std::string subject_;
};

} // namespace iothub
