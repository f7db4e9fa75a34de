#pragma once

// Size-preserving stand-in for per-cell KZG commitments.
//
// The blob commitment is a SHA-256 Merkle root over all cells in flat index
// order. A real Merkle path would not fit the 48 B proof budget, so the
// per-cell "proof" is a keyed digest SHA-384(key(root) || row || col ||
// payload), cut or zero-padded to the geometry's proof size. The key is
// derived from the root, which travels in the block header.
//
// This is a simulation device: anyone holding the root can mint proofs. The
// simulator's adversaries are never handed that capability for cells they do
// not hold, which is how commitment soundness is modelled.

#include "dassim/blob.hpp"
#include "dassim/core.hpp"
#include "dassim/digest.hpp"

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

namespace dassim {

struct BlobCommitment {
    Digest256 root{};
    BlobGeometry geometry{};

    friend bool operator==(const BlobCommitment&, const BlobCommitment&) = default;
};

// Header metadata (root, geometry, slot) is accounted at the size of an
// average pre-sampling block.
inline constexpr std::uint64_t kBlockHeaderBytes = 90 * kKB;

namespace detail {

inline Digest256 leaf_digest(std::uint64_t index, std::span<const std::uint8_t> payload) {
    Sha256 h;
    const std::uint8_t tag = 0x00;
    h.update(std::span<const std::uint8_t>(&tag, 1)).update_u64(index).update(payload);
    return h.finish();
}

inline Digest256 node_digest(const Digest256& left, const Digest256& right) {
    Sha256 h;
    const std::uint8_t tag = 0x01;
    h.update(std::span<const std::uint8_t>(&tag, 1)).update(left).update(right);
    return h.finish();
}

inline Digest256 proof_key(const BlobCommitment& c) {
    Sha256 h;
    h.update("dassim/cell-proof-key").update(c.root);
    return h.finish();
}

inline std::vector<std::uint8_t> mac(const Digest256& key, CellCoordinate coord, std::span<const std::uint8_t> payload,
                                     std::size_t proof_bytes) {
    Sha384 h;
    h.update(key).update_u64(coord.row).update_u64(coord.col).update(payload);
    const Digest384 d = h.finish();
    std::vector<std::uint8_t> out(proof_bytes, 0);
    std::copy_n(d.begin(), std::min(proof_bytes, d.size()), out.begin());
    return out;
}

}  // namespace detail

inline BlobCommitment commit_blob(const BlobMatrix& blob) {
    const auto& g = blob.geometry();
    if (!blob.complete()) throw Error("commit_blob: blob is not fully populated");
    std::vector<Digest256> level;
    level.reserve(g.total_cells());
    for (std::uint64_t i = 0; i < g.total_cells(); ++i) level.push_back(detail::leaf_digest(i, blob.payload(coordinate_at(i, g))));
    while (level.size() > 1) {
        std::vector<Digest256> next;
        next.reserve((level.size() + 1) / 2);
        for (std::size_t i = 0; i + 1 < level.size(); i += 2) next.push_back(detail::node_digest(level[i], level[i + 1]));
        if (level.size() % 2 == 1) next.push_back(level.back());
        level = std::move(next);
    }
    return BlobCommitment{level.front(), g};
}

inline std::vector<std::uint8_t> prove_cell(const BlobCommitment& commitment, CellCoordinate coord,
                                            std::span<const std::uint8_t> payload) {
    return detail::mac(detail::proof_key(commitment), coord, payload, commitment.geometry.proof_bytes);
}

inline std::vector<std::uint8_t> prove_cell(const BlobMatrix& blob, CellCoordinate coord) {
    const auto c = commit_blob(blob);
    return prove_cell(c, coord, blob.payload(coord));
}

inline bool verify_cell(const BlobCommitment& commitment, CellCoordinate coord, std::span<const std::uint8_t> payload,
                        std::span<const std::uint8_t> proof) {
    const auto& g = commitment.geometry;
    if (!in_bounds(coord, g)) return false;
    if (payload.size() != g.cell_payload_bytes || proof.size() != g.proof_bytes || g.proof_bytes == 0) return false;
    const auto expected = detail::mac(detail::proof_key(commitment), coord, payload, g.proof_bytes);
    return std::equal(expected.begin(), expected.end(), proof.begin());
}

inline bool verify_cell(const BlobCommitment& commitment, const Cell& cell) {
    return verify_cell(commitment, cell.coord, cell.payload, cell.proof);
}

// Commits to a fully populated blob and writes every cell's proof.
inline BlobCommitment seal_blob(BlobMatrix& blob) {
    if (blob.geometry().proof_bytes == 0) throw ConfigError("seal_blob: geometry has no proof bytes");
    const auto c = commit_blob(blob);
    const auto key = detail::proof_key(c);
    const auto& g = blob.geometry();
    for (std::uint64_t i = 0; i < g.total_cells(); ++i) {
        const auto coord = coordinate_at(i, g);
        const auto p = detail::mac(key, coord, blob.payload(coord), g.proof_bytes);
        std::copy(p.begin(), p.end(), blob.mutable_proof(coord).begin());
    }
    return c;
}

}  // namespace dassim
