#pragma once

// Systematic rate-1/2 Reed-Solomon line codec.
//
// A line of length 2k evaluates a polynomial of degree < k at the field
// points 0, 1, ..., 2k-1; positions [0, k) carry the data. When k is a power
// of two the codec works in the novel polynomial basis of Lin, Chung and Han:
// the data half is the subspace span{1, 2, ..., k/2} and the parity half is
// its coset k + span{...}, so encoding is one additive IFFT plus one FFT.
// Arbitrary erasure patterns fall back to barycentric Lagrange interpolation.
//
// Every routine is "slice-wise": a line holds 2k cells of `width` symbols and
// the j-th symbols of all cells form one codeword.

#include "dassim/core.hpp"
#include "dassim/gf.hpp"

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dassim {

using gf::Symbol;

enum class DecodeStatus : std::uint8_t { Ok, InsufficientShares, DecodeInconsistent };

inline const char* to_string(DecodeStatus s) {
    switch (s) {
        case DecodeStatus::Ok: return "ok";
        case DecodeStatus::InsufficientShares: return "insufficient-shares";
        case DecodeStatus::DecodeInconsistent: return "decode-inconsistent";
    }
    return "?";
}

struct FieldConfig {
    unsigned field_bits = 16;

    // Smallest supported field with at least `line_length` distinct points.
    static FieldConfig smallest_for(std::size_t line_length) {
        return FieldConfig{line_length <= gf::GF256::kSize ? 8u : 16u};
    }

    void validate(std::size_t line_length) const {
        if (field_bits != 8 && field_bits != 16) throw ConfigError("field_bits must be 8 or 16");
        if ((std::size_t{1} << field_bits) < line_length)
            throw ConfigError("GF(2^" + std::to_string(field_bits) + ") has too few points for a line of " +
                              std::to_string(line_length) + " symbols");
    }

    std::size_t symbol_bytes() const { return field_bits / 8; }
};

namespace rs {

// Not thread-safe (it memoises interpolation plans); use one per thread.
template <class Field>
class LineCodec {
public:
    explicit LineCodec(std::size_t k) : k_(k) {
        if (k == 0) throw ConfigError("rs: k must be >= 1");
        if (2 * k > Field::kSize)
            throw ConfigError("rs: GF(2^" + std::to_string(Field::kBits) + ") cannot hold " + std::to_string(2 * k) +
                              " evaluation points");
        pow2_ = std::has_single_bit(k);
        // W_j(v_j) for the subspace polynomials W_j over span{v_0..v_{j-1}}, v_j = 2^j.
        subspace_at_basis_.resize(Field::kBits);
        for (unsigned j = 0; j < Field::kBits; ++j)
            subspace_at_basis_[j] = subspace_poly(j, static_cast<Symbol>(1u << j));
    }

    std::size_t k() const { return k_; }
    std::size_t n() const { return 2 * k_; }

    // Fills positions [k, 2k) from positions [0, k).
    void encode(std::span<Symbol> line, std::size_t width) {
        check_line(line, width);
        if (pow2_) {
            Symbol* base = line.data();
            std::copy(base, base + k_ * width, base + k_ * width);
            ifft(base + k_ * width, k_, width, 0);
            fft(base + k_ * width, k_, width, static_cast<Symbol>(k_));
            return;
        }
        std::vector<std::uint8_t> present(2 * k_, 0);
        std::fill(present.begin(), present.begin() + static_cast<std::ptrdiff_t>(k_), 1);
        interpolate_missing(line, present, width);
    }

    // Restores every absent position. `present[i]` flags cells holding data;
    // absent cells are overwritten. Present cells beyond the first k that do
    // not match the interpolated codeword yield DecodeInconsistent and leave
    // the line untouched.
    DecodeStatus recover(std::span<Symbol> line, std::span<const std::uint8_t> present, std::size_t width) {
        check_line(line, width);
        if (present.size() != 2 * k_) throw ConfigError("rs: presence mask length mismatch");
        const auto have = static_cast<std::size_t>(std::count_if(present.begin(), present.end(), [](auto p) { return p != 0; }));
        if (have < k_) return DecodeStatus::InsufficientShares;

        const bool data_half = std::all_of(present.begin(), present.begin() + static_cast<std::ptrdiff_t>(k_), [](auto p) { return p != 0; });
        const bool parity_half = std::all_of(present.begin() + static_cast<std::ptrdiff_t>(k_), present.end(), [](auto p) { return p != 0; });

        std::vector<Symbol> full(line.begin(), line.end());
        if (pow2_ && data_half) {
            encode(full, width);
        } else if (pow2_ && parity_half) {
            Symbol* base = full.data();
            std::copy(base + k_ * width, base + 2 * k_ * width, base);
            ifft(base, k_, width, static_cast<Symbol>(k_));
            fft(base, k_, width, 0);
        } else {
            if (!interpolate_missing(full, present, width)) return DecodeStatus::DecodeInconsistent;
        }
        for (std::size_t i = 0; i < 2 * k_; ++i) {
            if (!present[i]) continue;
            if (!std::equal(line.begin() + static_cast<std::ptrdiff_t>(i * width),
                            line.begin() + static_cast<std::ptrdiff_t>((i + 1) * width),
                            full.begin() + static_cast<std::ptrdiff_t>(i * width)))
                return DecodeStatus::DecodeInconsistent;
        }
        std::copy(full.begin(), full.end(), line.begin());
        return DecodeStatus::Ok;
    }

    // Normalised subspace polynomial W_i(x) / W_i(v_i).
    Symbol normalized_subspace(unsigned i, Symbol x) const {
        return Field::div(subspace_poly(i, x), subspace_at_basis_[i]);
    }

    // Forward additive FFT: novel-basis coefficients -> evaluations on the
    // coset beta + span{1..n/2}; beta must be a multiple of n.
    void fft(Symbol* base, std::size_t n, std::size_t width, Symbol beta) const {
        if (n == 1) return;
        const std::size_t h = n / 2;
        const auto level = static_cast<unsigned>(std::countr_zero(h));
        const Symbol s = normalized_subspace(level, beta);
        for (std::size_t t = 0; t < h; ++t) {
            std::span<Symbol> a(base + t * width, width);
            std::span<Symbol> b(base + (t + h) * width, width);
            Field::mul_add(a, b, s);
            for (std::size_t j = 0; j < width; ++j) b[j] ^= a[j];
        }
        fft(base, h, width, beta);
        fft(base + h * width, h, width, static_cast<Symbol>(beta ^ h));
    }

    void ifft(Symbol* base, std::size_t n, std::size_t width, Symbol beta) const {
        if (n == 1) return;
        const std::size_t h = n / 2;
        const auto level = static_cast<unsigned>(std::countr_zero(h));
        ifft(base, h, width, beta);
        ifft(base + h * width, h, width, static_cast<Symbol>(beta ^ h));
        const Symbol s = normalized_subspace(level, beta);
        for (std::size_t t = 0; t < h; ++t) {
            std::span<Symbol> a(base + t * width, width);
            std::span<Symbol> b(base + (t + h) * width, width);
            for (std::size_t j = 0; j < width; ++j) b[j] ^= a[j];
            Field::mul_add(a, b, s);
        }
    }

private:
    struct Plan {
        std::vector<std::size_t> sources;  // k chosen present positions
        std::vector<std::size_t> targets;  // every other position
        std::vector<Symbol> coeffs;        // targets x sources
    };

    void check_line(std::span<const Symbol> line, std::size_t width) const {
        if (width == 0 || line.size() != 2 * k_ * width) throw ConfigError("rs: line buffer has wrong size");
    }

    Symbol subspace_poly(unsigned i, Symbol x) const {
        Symbol w = x;
        for (unsigned j = 0; j < i; ++j) w = Field::mul(w, static_cast<Symbol>(w ^ subspace_at_basis_[j]));
        return w;
    }

    const Plan& plan_for(std::span<const std::uint8_t> present) {
        std::vector<std::uint8_t> key(present.begin(), present.end());
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;
        if (plans_.size() > 64) plans_.clear();

        Plan p;
        for (std::size_t i = 0; i < present.size(); ++i) {
            if (present[i] && p.sources.size() < k_)
                p.sources.push_back(i);
            else
                p.targets.push_back(i);
        }
        // Barycentric weights w_i = 1 / prod_{j != i} (x_i - x_j).
        std::vector<Symbol> weight(k_);
        for (std::size_t a = 0; a < k_; ++a) {
            Symbol prod = 1;
            for (std::size_t b = 0; b < k_; ++b)
                if (a != b) prod = Field::mul(prod, static_cast<Symbol>(p.sources[a] ^ p.sources[b]));
            weight[a] = Field::inv(prod);
        }
        p.coeffs.resize(p.targets.size() * k_);
        for (std::size_t t = 0; t < p.targets.size(); ++t) {
            const auto xm = static_cast<Symbol>(p.targets[t]);
            Symbol node_poly = 1;
            for (auto s : p.sources) node_poly = Field::mul(node_poly, static_cast<Symbol>(xm ^ s));
            for (std::size_t a = 0; a < k_; ++a) {
                const auto diff = static_cast<Symbol>(xm ^ p.sources[a]);
                p.coeffs[t * k_ + a] = Field::mul(node_poly, Field::div(weight[a], diff));
            }
        }
        return plans_.emplace(std::move(key), std::move(p)).first->second;
    }

    // Writes interpolated values into every target position. Returns false if
    // a present target disagrees with the interpolation.
    bool interpolate_missing(std::span<Symbol> line, std::span<const std::uint8_t> present, std::size_t width) {
        return interpolate_with(plan_for(present), line, present, width);
    }

    bool interpolate_with(const Plan& p, std::span<Symbol> line, std::span<const std::uint8_t> present,
                          std::size_t width) const {
        std::vector<Symbol> acc(width);
        for (std::size_t t = 0; t < p.targets.size(); ++t) {
            std::fill(acc.begin(), acc.end(), Symbol{0});
            for (std::size_t a = 0; a < k_; ++a)
                Field::mul_add(acc, std::span<const Symbol>(line.data() + p.sources[a] * width, width),
                               p.coeffs[t * k_ + a]);
            Symbol* dst = line.data() + p.targets[t] * width;
            if (present[p.targets[t]]) {
                if (!std::equal(acc.begin(), acc.end(), dst)) return false;
            } else {
                std::copy(acc.begin(), acc.end(), dst);
            }
        }
        return true;
    }

    std::size_t k_;
    bool pow2_ = false;
    std::vector<Symbol> subspace_at_basis_;
    std::map<std::vector<std::uint8_t>, Plan> plans_;
};

}  // namespace rs

struct LineDecodeResult {
    DecodeStatus status = DecodeStatus::Ok;
    std::vector<Symbol> data;  // the k source symbols on success
};

namespace detail {

template <class Fn>
decltype(auto) with_field(const FieldConfig& cfg, Fn&& fn) {
    if (cfg.field_bits == 8) return fn(gf::GF256{});
    return fn(gf::GF65536{});
}

}  // namespace detail

// Systematic rate-1/2 encoding of a single codeword: returns 2k symbols whose
// first k equal `data`.
inline std::vector<Symbol> rs_encode_line(std::span<const Symbol> data, FieldConfig cfg = {}) {
    if (data.empty()) throw ConfigError("rs_encode_line: k must be >= 1");
    cfg.validate(2 * data.size());
    return detail::with_field(cfg, [&](auto field) {
        using F = decltype(field);
        for (auto s : data)
            if (s >= F::kSize) throw ConfigError("rs_encode_line: symbol out of field range");
        rs::LineCodec<F> codec(data.size());
        std::vector<Symbol> line(2 * data.size(), 0);
        std::copy(data.begin(), data.end(), line.begin());
        codec.encode(line, 1);
        return line;
    });
}

inline LineDecodeResult rs_decode_line(std::span<const std::optional<Symbol>> received, FieldConfig cfg = {}) {
    if (received.empty() || received.size() % 2 != 0) throw ConfigError("rs_decode_line: length must be 2k, k >= 1");
    cfg.validate(received.size());
    return detail::with_field(cfg, [&](auto field) {
        using F = decltype(field);
        const std::size_t k = received.size() / 2;
        rs::LineCodec<F> codec(k);
        std::vector<Symbol> line(received.size(), 0);
        std::vector<std::uint8_t> present(received.size(), 0);
        for (std::size_t i = 0; i < received.size(); ++i) {
            if (received[i]) {
                line[i] = *received[i];
                present[i] = 1;
            }
        }
        LineDecodeResult r;
        r.status = codec.recover(line, present, 1);
        if (r.status == DecodeStatus::Ok) r.data.assign(line.begin(), line.begin() + static_cast<std::ptrdiff_t>(k));
        return r;
    });
}

}  // namespace dassim
