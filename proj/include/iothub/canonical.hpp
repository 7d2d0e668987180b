#pragma once

// Canonical JSON form shared by the hub and meta-hub wire formats, the
// storage log and descriptor hashing: UTF-8, keys sorted, no insignificant
// whitespace.

#include "iothub/error.hpp"
#include "iothub/feed.hpp"
#include "iothub/sample.hpp"

#include <json.hpp>

#include <string>

namespace iothub {

using json = nlohmann::json;

/// Compact dump; object keys come out sorted because json uses std::map.
std::string canonical(const json& j);

json value_to_json(const Value& v);
/// Decodes without a schema: integers stay int64, {lat, lon} becomes a GeoPoint.
Value value_from_json(const json& j);
/// Schema-directed decoding; numbers are coerced to the field's kind.
/// Throws Error(schema_error).
Value value_from_json(const json& j, ValueKind kind);

void to_json(json& j, const SemanticType& t);
void from_json(const json& j, SemanticType& t);
void to_json(json& j, const FieldDescriptor& f);
void from_json(const json& j, FieldDescriptor& f);
void to_json(json& j, const Operator& op);
void from_json(const json& j, Operator& op);
void to_json(json& j, const PipeSpec& p);
void from_json(const json& j, PipeSpec& p);
void to_json(json& j, const FeedDescriptor& d);
void from_json(const json& j, FeedDescriptor& d);
void to_json(json& j, const Sample& s);
void from_json(const json& j, Sample& s);

/// Sample decoding against a descriptor; throws Error(schema_error).
Sample sample_from_json(const json& j, const FeedDescriptor& desc);

/// `j.get<T>()` with library exceptions mapped to Error(schema_error).
template <typename T>
T decode(const json& j) {
    try {
        return j.get<T>();
    } catch (const json::exception& e) {
        throw Error(Errc::schema_error, e.what());
    }
}

/// Parses text, mapping parse failures to Error(schema_error).
json parse_json(const std::string& text);

template <typename T>
std::string canonical_of(const T& value) {
    json j = value;
    return canonical(j);
}

} // namespace iothub
