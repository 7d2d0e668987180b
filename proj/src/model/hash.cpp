#include "iothub/hash.hpp"

#include "iothub/canonical.hpp"
#include "iothub/error.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <memory>

namespace iothub {

std::string sha256_hex(std::string_view data) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
        throw std::runtime_error("sha256 digest failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0x0f]);
    }
    return out;
}

std::string hash_input(const FeedDescriptor& desc) {
    FeedDescriptor copy = desc;
    std::stable_sort(copy.fields.begin(), copy.fields.end(),
                     [](const FieldDescriptor& a, const FieldDescriptor& b) { return a.name < b.name; });
    json j = copy;
    j.erase("created_at");
    return canonical(j);
}

std::string descriptor_hash(const FeedDescriptor& desc) {
    if (auto report = validate_feed(desc); !report.ok()) {
        throw Error(Errc::invalid_descriptor, "invalid descriptor: " + report.summary(), desc.id);
    }
    return sha256_hex(hash_input(desc));
}

} // namespace iothub
