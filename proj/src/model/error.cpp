#include "iothub/error.hpp"

namespace iothub {

std::string_view to_string(Errc code) {
    switch (code) {
    case Errc::type_error: return "type_error";
    case Errc::arity_error: return "arity_error";
    case Errc::config_error: return "config_error";
    case Errc::cycle_error: return "cycle_error";
    case Errc::unknown_feed: return "unknown_feed";
    case Errc::schema_error: return "schema_error";
    case Errc::out_of_order: return "out_of_order";
    case Errc::invalid_descriptor: return "invalid_descriptor";
    case Errc::duplicate_id: return "duplicate_id";
    case Errc::has_dependents: return "has_dependents";
    case Errc::empty_table: return "empty_table";
    case Errc::unknown_enabler: return "unknown_enabler";
    case Errc::not_an_actuator: return "not_an_actuator";
    case Errc::scope_violation: return "scope_violation";
    case Errc::metahub_unreachable: return "metahub_unreachable";
    case Errc::invalid_uri: return "invalid_uri";
    case Errc::unregistered_hub: return "unregistered_hub";
    case Errc::duplicate_version: return "duplicate_version";
    case Errc::invalid_package: return "invalid_package";
    case Errc::unknown_app: return "unknown_app";
    case Errc::not_bound: return "not_bound";
    case Errc::already_running: return "already_running";
    case Errc::not_running: return "not_running";
    case Errc::unknown_scenario: return "unknown_scenario";
    case Errc::io_error: return "io_error";
    }
    return "unknown_error";
}

} // namespace iothub
