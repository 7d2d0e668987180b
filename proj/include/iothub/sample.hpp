#pragma once

#include "iothub/feed.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace iothub {

/// One timestamped record flowing through the bus.
struct Sample {
    std::string feed_id;
    std::int64_t seq = 0;
    std::int64_t t_ms = 0;
    std::map<std::string, Value> values;

    friend bool operator==(const Sample&, const Sample&) = default;
};

/// Throws Error(schema_error) unless `values` holds exactly the descriptor's
/// field names with matching kinds.
void validate_sample(const FeedDescriptor& desc, const Sample& sample);

} // namespace iothub
