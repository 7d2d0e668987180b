#pragma once

#include "iothub/feed.hpp"

#include <string>
#include <string_view>

namespace iothub {

std::string sha256_hex(std::string_view data);

/// Canonical text hashed for a descriptor: created_at removed, fields sorted
/// by name.
std::string hash_input(const FeedDescriptor& desc);

/// Content hash of a descriptor, stable across processes.
/// Throws Error(invalid_descriptor) when validate_feed fails.
std::string descriptor_hash(const FeedDescriptor& desc);

} // namespace iothub
