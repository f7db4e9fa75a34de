#pragma once

// Binary extension fields GF(2^8) and GF(2^16) with log/exp tables.
// Symbols are stored as uint16_t for both fields so codec code is shared.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace dassim::gf {

using Symbol = std::uint16_t;

template <unsigned Bits, std::uint32_t Polynomial>
struct BinaryField {
    static constexpr unsigned kBits = Bits;
    static constexpr std::uint32_t kSize = 1u << Bits;
    static constexpr std::uint32_t kOrder = kSize - 1;  // multiplicative group order
    // log(0) maps here; every exp index >= kLogZero reads 0.
    static constexpr std::uint32_t kLogZero = 2 * kOrder;

    struct Tables {
        std::vector<std::uint32_t> log;  // kSize entries
        std::vector<Symbol> exp;         // 4*kOrder + 1 entries
    };

    static const Tables& tables() {
        static const Tables t = build();
        return t;
    }

    static Symbol add(Symbol a, Symbol b) noexcept { return static_cast<Symbol>(a ^ b); }

    static Symbol mul(Symbol a, Symbol b) noexcept {
        const auto& t = tables();
        return t.exp[t.log[a] + t.log[b]];
    }

    static Symbol inv(Symbol a) {
        if (a == 0) throw std::domain_error("gf: inverse of zero");
        const auto& t = tables();
        return t.exp[kOrder - t.log[a]];
    }

    static Symbol div(Symbol a, Symbol b) { return mul(a, inv(b)); }

    static std::uint32_t log_of(Symbol a) noexcept { return tables().log[a]; }

    static Symbol exp_of(std::uint32_t e) noexcept { return tables().exp[e]; }

    // dst[i] ^= c * src[i]
    static void mul_add(std::span<Symbol> dst, std::span<const Symbol> src, Symbol c) noexcept {
        if (c == 0) return;
        const auto& t = tables();
        const std::uint32_t lc = t.log[c];
        const Symbol* exp = t.exp.data();
        const std::uint32_t* lg = t.log.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] ^= exp[lc + lg[src[i]]];
    }

    // dst[i] = c * dst[i]
    static void scale(std::span<Symbol> dst, Symbol c) noexcept {
        const auto& t = tables();
        const std::uint32_t lc = t.log[c];
        for (auto& s : dst) s = t.exp[lc + t.log[s]];
    }

private:
    static Tables build() {
        Tables t;
        t.log.assign(kSize, kLogZero);
        t.exp.assign(4 * static_cast<std::size_t>(kOrder) + 1, 0);
        std::uint32_t x = 1;
        for (std::uint32_t i = 0; i < kOrder; ++i) {
            if (t.log[x] != kLogZero) throw std::logic_error("gf: polynomial is not primitive");
            t.exp[i] = static_cast<Symbol>(x);
            t.log[x] = i;
            x <<= 1;
            if (x & kSize) x ^= Polynomial;
        }
        for (std::uint32_t i = kOrder; i < 2 * kOrder; ++i) t.exp[i] = t.exp[i - kOrder];
        return t;
    }
};

using GF256 = BinaryField<8, 0x11D>;
using GF65536 = BinaryField<16, 0x1002D>;

}  // namespace dassim::gf
