#include "iothub/sample.hpp"

#include "iothub/error.hpp"

namespace iothub {

void validate_sample(const FeedDescriptor& desc, const Sample& sample) {
    if (sample.feed_id != desc.id) {
        throw Error(Errc::schema_error,
                    "sample for feed '" + sample.feed_id + "' published to '" + desc.id + "'",
                    desc.id);
    }
    if (sample.values.size() != desc.fields.size()) {
        throw Error(Errc::schema_error,
                    "feed " + desc.id + " expects " + std::to_string(desc.fields.size()) +
                        " values, got " + std::to_string(sample.values.size()),
                    desc.id);
    }
    for (const auto& f : desc.fields) {
        auto it = sample.values.find(f.name);
        if (it == sample.values.end()) {
            throw Error(Errc::schema_error, "missing value for field " + f.name, f.name);
        }
        if (!value_matches(it->second, f.semantic_type.value_kind)) {
            throw Error(Errc::schema_error,
                        "field " + f.name + " expects " +
                            std::string(to_string(f.semantic_type.value_kind)),
                        f.name);
        }
    }
}

} // namespace iothub
