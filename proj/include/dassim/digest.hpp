#pragma once

// Thin wrappers over OpenSSL one-shot digests. Everything in the simulator
// that needs a cryptographic hash goes through here.

#include <openssl/evp.h>

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string_view>

namespace dassim {

using Digest256 = std::array<std::uint8_t, 32>;
using Digest384 = std::array<std::uint8_t, 48>;

namespace detail {

template <std::size_t N>
class DigestBuilder {
public:
    explicit DigestBuilder(const EVP_MD* md) : ctx_(EVP_MD_CTX_new()) {
        if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, md, nullptr) != 1)
            throw std::runtime_error("digest init failed");
    }
    DigestBuilder(const DigestBuilder&) = delete;
    DigestBuilder& operator=(const DigestBuilder&) = delete;
    ~DigestBuilder() { EVP_MD_CTX_free(ctx_); }

    DigestBuilder& update(std::span<const std::uint8_t> bytes) {
        if (!bytes.empty()) EVP_DigestUpdate(ctx_, bytes.data(), bytes.size());
        return *this;
    }
    DigestBuilder& update(std::string_view text) {
        if (!text.empty()) EVP_DigestUpdate(ctx_, text.data(), text.size());
        return *this;
    }
    // Fixed-width little-endian integer, so digests are platform independent.
    DigestBuilder& update_u64(std::uint64_t v) {
        std::array<std::uint8_t, 8> le{};
        for (std::size_t i = 0; i < 8; ++i) le[i] = static_cast<std::uint8_t>(v >> (8 * i));
        return update(le);
    }

    std::array<std::uint8_t, N> finish() {
        std::array<std::uint8_t, N> out{};
        unsigned int len = 0;
        EVP_DigestFinal_ex(ctx_, out.data(), &len);
        return out;
    }

private:
    EVP_MD_CTX* ctx_;
};

}  // namespace detail

class Sha256 : public detail::DigestBuilder<32> {
public:
    Sha256() : DigestBuilder(EVP_sha256()) {}
};

class Sha384 : public detail::DigestBuilder<48> {
public:
    Sha384() : DigestBuilder(EVP_sha384()) {}
};

inline Digest256 sha256(std::span<const std::uint8_t> bytes) {
    Digest256 out{};
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr);
    return out;
}

}  // namespace dassim
