#pragma once

// Domain types shared across the simulator: blob geometry, cell coordinates,
// node identities and roles, and slot timing.

#include "dassim/digest.hpp"

#include <array>
#include <bit>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dassim {

// Configuration or precondition violations. Operations whose failure is an
// expected outcome (undecodable blob, failed lookup, ...) return explicit
// result types instead.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class BoundsError : public Error {
public:
    using Error::Error;
};

// Reporting units are decimal throughout.
inline constexpr std::uint64_t kKB = 1'000;
inline constexpr std::uint64_t kMB = 1'000'000;
inline constexpr std::uint64_t kGB = 1'000'000'000;

// Virtual time in microseconds.
using Micros = std::int64_t;
inline constexpr Micros kMillis = 1'000;
inline constexpr Micros kSeconds = 1'000'000;

struct BlobGeometry {
    std::uint32_t source_rows = 0;
    std::uint32_t source_cols = 0;
    std::uint32_t cell_payload_bytes = 0;
    std::uint32_t proof_bytes = 0;

    static constexpr BlobGeometry mainnet() { return {256, 256, 512, 48}; }

    // Desk-scale default: 8x8 source, 16x16 extended, mainnet cell sizes.
    static constexpr BlobGeometry desk() { return {8, 8, 512, 48}; }

    constexpr std::uint32_t extended_rows() const { return 2 * source_rows; }
    constexpr std::uint32_t extended_cols() const { return 2 * source_cols; }
    constexpr std::uint64_t total_cells() const {
        return static_cast<std::uint64_t>(extended_rows()) * extended_cols();
    }
    constexpr std::uint64_t cell_wire_bytes() const {
        return static_cast<std::uint64_t>(cell_payload_bytes) + proof_bytes;
    }
    constexpr std::uint64_t total_wire_bytes() const { return total_cells() * cell_wire_bytes(); }
    constexpr std::uint64_t total_proof_bytes() const { return total_cells() * proof_bytes; }

    void validate() const {
        if (source_rows < 1 || source_cols < 1) throw ConfigError("geometry: source_rows and source_cols must be >= 1");
        if (cell_payload_bytes < 1) throw ConfigError("geometry: cell_payload_bytes must be >= 1");
    }

    friend constexpr bool operator==(const BlobGeometry&, const BlobGeometry&) = default;
};

struct CellCoordinate {
    std::uint32_t row = 0;
    std::uint32_t col = 0;

    friend constexpr auto operator<=>(const CellCoordinate&, const CellCoordinate&) = default;
};

inline bool in_bounds(CellCoordinate c, const BlobGeometry& g) {
    return c.row < g.extended_rows() && c.col < g.extended_cols();
}

// Row-major flat index into the extended matrix.
inline std::uint64_t coordinate_index(CellCoordinate c, const BlobGeometry& g) {
    if (!in_bounds(c, g))
        throw BoundsError("cell (" + std::to_string(c.row) + "," + std::to_string(c.col) + ") outside " +
                          std::to_string(g.extended_rows()) + "x" + std::to_string(g.extended_cols()));
    return static_cast<std::uint64_t>(c.row) * g.extended_cols() + c.col;
}

inline CellCoordinate coordinate_at(std::uint64_t index, const BlobGeometry& g) {
    if (index >= g.total_cells()) throw BoundsError("cell index " + std::to_string(index) + " out of range");
    return {static_cast<std::uint32_t>(index / g.extended_cols()), static_cast<std::uint32_t>(index % g.extended_cols())};
}

struct Cell {
    CellCoordinate coord;
    std::vector<std::uint8_t> payload;
    std::vector<std::uint8_t> proof;

    bool matches(const BlobGeometry& g) const {
        return payload.size() == g.cell_payload_bytes && proof.size() == g.proof_bytes;
    }
    friend bool operator==(const Cell&, const Cell&) = default;
};

// 256-bit identifier shared by nodes and DHT keys. Byte 0 is the most
// significant byte; bit 255 is the top bit of byte 0.
struct NodeId {
    std::array<std::uint8_t, 32> bytes{};

    static constexpr std::size_t kBits = 256;

    constexpr bool bit(std::size_t i) const {
        return (bytes[31 - i / 8] >> (i % 8)) & 1u;
    }
    constexpr void set_bit(std::size_t i, bool v) {
        auto& b = bytes[31 - i / 8];
        const auto mask = static_cast<std::uint8_t>(1u << (i % 8));
        b = v ? static_cast<std::uint8_t>(b | mask) : static_cast<std::uint8_t>(b & ~mask);
    }
    // Bit `i` counted from the most significant end (prefix order).
    constexpr bool prefix_bit(std::size_t i) const { return bit(255 - i); }

    std::size_t trailing_zero_bits() const {
        std::size_t n = 0;
        for (std::size_t i = 32; i-- > 0;) {
            if (bytes[i] == 0) {
                n += 8;
                continue;
            }
            return n + static_cast<std::size_t>(std::countr_zero(bytes[i]));
        }
        return n;
    }
    std::size_t leading_zero_bits() const {
        std::size_t n = 0;
        for (auto b : bytes) {
            if (b == 0) {
                n += 8;
                continue;
            }
            return n + static_cast<std::size_t>(std::countl_zero(b));
        }
        return n;
    }
    bool is_zero() const { return leading_zero_bits() == kBits; }

    // Leading 64 bits, useful for cheap hashing and sorting.
    std::uint64_t prefix64() const {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v = (v << 8) | bytes[static_cast<std::size_t>(i)];
        return v;
    }

    std::string hex() const {
        static constexpr char kDigits[] = "0123456789abcdef";
        std::string s;
        s.reserve(64);
        for (auto b : bytes) {
            s.push_back(kDigits[b >> 4]);
            s.push_back(kDigits[b & 0xF]);
        }
        return s;
    }

    static NodeId from_hex(std::string_view hex) {
        if (hex.size() != 64) throw ConfigError("node id hex must be 64 characters");
        NodeId id;
        auto nibble = [](char c) -> std::uint8_t {
            if (c >= '0' && c <= '9') return static_cast<std::uint8_t>(c - '0');
            if (c >= 'a' && c <= 'f') return static_cast<std::uint8_t>(c - 'a' + 10);
            if (c >= 'A' && c <= 'F') return static_cast<std::uint8_t>(c - 'A' + 10);
            throw ConfigError("invalid hex digit in node id");
        };
        for (std::size_t i = 0; i < 32; ++i)
            id.bytes[i] = static_cast<std::uint8_t>((nibble(hex[2 * i]) << 4) | nibble(hex[2 * i + 1]));
        return id;
    }

    friend constexpr auto operator<=>(const NodeId&, const NodeId&) = default;
};

struct NodeIdHash {
    std::size_t operator()(const NodeId& id) const noexcept { return static_cast<std::size_t>(id.prefix64()); }
};

// Self-generated identity: the SHA-256 digest of a public key.
inline NodeId derive_node_id(std::span<const std::uint8_t> pubkey_bytes) {
    if (pubkey_bytes.empty()) throw std::invalid_argument("derive_node_id: empty public key");
    return NodeId{sha256(pubkey_bytes)};
}

inline constexpr std::size_t kPublicKeyBytes = 32;
inline constexpr std::uint64_t kValidatorMinStake = 32;

enum class Role : std::uint8_t { Producer, Validator, Regular };

inline const char* to_string(Role r) {
    switch (r) {
        case Role::Producer: return "producer";
        case Role::Validator: return "validator";
        case Role::Regular: return "regular";
    }
    return "?";
}

// Simulator address of a node ("reachability handle").
using NodeIndex = std::uint32_t;

struct NodeProfile {
    NodeIndex index = 0;
    NodeId node_id;
    Role role = Role::Regular;
    std::uint64_t stake = 0;
    std::uint32_t subnet = 0;  // synthetic /24 tag, 24 bits
    bool honest = true;

    bool is_staking() const { return stake >= kValidatorMinStake; }

    void validate() const {
        if (role == Role::Validator && stake < kValidatorMinStake)
            throw ConfigError("validator stake must be >= 32");
        if (subnet > 0xFFFFFFu) throw ConfigError("subnet tag must fit in 24 bits");
    }
};

struct SlotParameters {
    Micros slot_duration = 12 * kSeconds;
    Micros validator_deadline = 4 * kSeconds;
    Micros regular_deadline = 10 * kSeconds;
    std::uint32_t slots_per_epoch = 32;

    static constexpr SlotParameters mainnet() { return {}; }

    void validate() const {
        if (slot_duration <= 0) throw ConfigError("slot_params.slot_duration: must be > 0");
        if (validator_deadline <= 0) throw ConfigError("slot_params.validator_deadline: must be > 0");
        if (validator_deadline >= slot_duration)
            throw ConfigError("slot_params.validator_deadline: must be < slot_duration");
        if (regular_deadline >= slot_duration) throw ConfigError("slot_params.regular_deadline: must be < slot_duration");
        if (validator_deadline >= regular_deadline)
            throw ConfigError("slot_params.validator_deadline: must be < regular_deadline");
        if (slots_per_epoch < 1) throw ConfigError("slot_params: slots_per_epoch must be >= 1");
    }

    friend constexpr bool operator==(const SlotParameters&, const SlotParameters&) = default;
};

}  // namespace dassim

template <>
struct std::hash<dassim::NodeId> {
    std::size_t operator()(const dassim::NodeId& id) const noexcept { return dassim::NodeIdHash{}(id); }
};
