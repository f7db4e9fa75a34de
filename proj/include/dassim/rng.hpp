#pragma once

// Seeded, stream-splittable PRNG (xoshiro256** seeded through splitmix64).
// All draws are defined here bit-for-bit; nothing relies on the
// implementation-defined distributions of <random>, so the same
// (seed, stream) pair replays identically on every platform.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace dassim {

inline constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Stateless 64-bit mix, handy for deriving per-entity values from a seed.
inline constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b = 0) noexcept {
    std::uint64_t s = a ^ (b * 0xD6E8FEB86659FD93ull);
    return splitmix64(s);
}

// Well-known stream ids. Per-node streams use the node index directly.
namespace streams {
inline constexpr std::uint64_t kTopology = 0xF000'0000'0000'0001ull;
inline constexpr std::uint64_t kBlob = 0xF000'0000'0000'0002ull;
inline constexpr std::uint64_t kAdversary = 0xF000'0000'0000'0003ull;
inline constexpr std::uint64_t kIdentity = 0xF000'0000'0000'0004ull;
inline constexpr std::uint64_t kEngine = 0xF000'0000'0000'0005ull;
inline constexpr std::uint64_t kProxy = 0xF000'0000'0000'0006ull;
inline constexpr std::uint64_t kSampling = 0xF000'0000'0000'0007ull;
}  // namespace streams

class DeterministicRng {
public:
    using result_type = std::uint64_t;

    DeterministicRng(std::uint64_t seed, std::uint64_t stream_id = 0) noexcept
        : seed_(seed), stream_(stream_id) {
        std::uint64_t sm = seed ^ mix64(stream_id, 0x5851F42D4C957F2Dull);
        for (auto& word : s_) word = splitmix64(sm);
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_; }

    // A child stream; independent of the parent's draw position.
    DeterministicRng fork(std::uint64_t sub_stream) const noexcept {
        return DeterministicRng(seed_, mix64(stream_, sub_stream));
    }

    result_type operator()() noexcept { return next(); }

    std::uint64_t next() noexcept {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, bound) via Lemire's multiply-and-reject.
    std::uint64_t below(std::uint64_t bound) {
        if (bound == 0) throw std::invalid_argument("DeterministicRng::below: bound must be > 0");
        unsigned __int128 m = static_cast<unsigned __int128>(next()) * bound;
        auto low = static_cast<std::uint64_t>(m);
        if (low < bound) {
            const std::uint64_t threshold = (0 - bound) % bound;
            while (low < threshold) {
                m = static_cast<unsigned __int128>(next()) * bound;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    // Uniform in [lo, hi] inclusive.
    std::int64_t between(std::int64_t lo, std::int64_t hi) {
        if (hi < lo) throw std::invalid_argument("DeterministicRng::between: empty range");
        return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
    }

    // Uniform double in [0, 1) with 53 bits of precision.
    double uniform01() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) noexcept { return uniform01() < p; }

    void fill(std::span<std::uint8_t> out) noexcept {
        std::size_t i = 0;
        while (i < out.size()) {
            std::uint64_t w = next();
            for (int b = 0; b < 8 && i < out.size(); ++b, ++i) out[i] = static_cast<std::uint8_t>(w >> (8 * b));
        }
    }

    template <class T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(items[i - 1], items[j]);
        }
    }

    // `count` distinct values from [0, population), in draw order.
    std::vector<std::uint64_t> sample_without_replacement(std::uint64_t population, std::uint64_t count) {
        if (count > population) throw std::invalid_argument("sample_without_replacement: count > population");
        std::vector<std::uint64_t> out;
        out.reserve(count);
        if (count * 4 >= population) {
            std::vector<std::uint64_t> all(population);
            for (std::uint64_t i = 0; i < population; ++i) all[i] = i;
            for (std::uint64_t i = 0; i < count; ++i) {
                std::uint64_t j = i + below(population - i);
                std::swap(all[i], all[j]);
                out.push_back(all[i]);
            }
            return out;
        }
        // Sparse case: rejection against a sorted small set.
        std::vector<std::uint64_t> seen;
        seen.reserve(count);
        while (out.size() < count) {
            std::uint64_t v = below(population);
            auto it = std::lower_bound(seen.begin(), seen.end(), v);
            if (it != seen.end() && *it == v) continue;
            seen.insert(it, v);
            out.push_back(v);
        }
        return out;
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t s_[4]{};
};

}  // namespace dassim
