#pragma once

// Extended blob matrix: 2r x 2c cells, every row and column a rate-1/2 RS
// codeword. Payloads are stored contiguously; presence is tracked per cell so
// the same type models a fully populated blob and a partially received one.

#include "dassim/core.hpp"
#include "dassim/reed_solomon.hpp"
#include "dassim/rng.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <vector>

namespace dassim {

class BlobMatrix {
public:
    BlobMatrix() = default;

    explicit BlobMatrix(const BlobGeometry& g) : geometry_(g) {
        g.validate();
        payload_.assign(g.total_cells() * g.cell_payload_bytes, 0);
        proof_.assign(g.total_cells() * g.proof_bytes, 0);
        present_.assign(g.total_cells(), 0);
    }

    const BlobGeometry& geometry() const { return geometry_; }

    bool present(CellCoordinate c) const { return present_[coordinate_index(c, geometry_)] != 0; }
    bool present_at(std::uint64_t index) const { return present_[index] != 0; }

    std::uint64_t present_count() const {
        return static_cast<std::uint64_t>(std::count(present_.begin(), present_.end(), std::uint8_t{1}));
    }
    bool complete() const { return present_count() == geometry_.total_cells(); }

    std::uint32_t row_present(std::uint32_t row) const {
        std::uint32_t n = 0;
        for (std::uint32_t c = 0; c < geometry_.extended_cols(); ++c) n += present_[index(row, c)];
        return n;
    }
    std::uint32_t col_present(std::uint32_t col) const {
        std::uint32_t n = 0;
        for (std::uint32_t r = 0; r < geometry_.extended_rows(); ++r) n += present_[index(r, col)];
        return n;
    }

    std::span<const std::uint8_t> payload(CellCoordinate c) const {
        const auto i = coordinate_index(c, geometry_);
        return {payload_.data() + i * geometry_.cell_payload_bytes, geometry_.cell_payload_bytes};
    }
    std::span<std::uint8_t> mutable_payload(CellCoordinate c) {
        const auto i = coordinate_index(c, geometry_);
        return {payload_.data() + i * geometry_.cell_payload_bytes, geometry_.cell_payload_bytes};
    }
    std::span<const std::uint8_t> proof(CellCoordinate c) const {
        const auto i = coordinate_index(c, geometry_);
        return {proof_.data() + i * geometry_.proof_bytes, geometry_.proof_bytes};
    }
    std::span<std::uint8_t> mutable_proof(CellCoordinate c) {
        const auto i = coordinate_index(c, geometry_);
        return {proof_.data() + i * geometry_.proof_bytes, geometry_.proof_bytes};
    }

    void set_present(CellCoordinate c, bool v = true) { present_[coordinate_index(c, geometry_)] = v ? 1 : 0; }

    void set_cell(const Cell& cell) {
        if (!cell.matches(geometry_)) throw ConfigError("cell payload/proof length does not match geometry");
        std::copy(cell.payload.begin(), cell.payload.end(), mutable_payload(cell.coord).begin());
        std::copy(cell.proof.begin(), cell.proof.end(), mutable_proof(cell.coord).begin());
        set_present(cell.coord);
    }

    void erase(CellCoordinate c) {
        auto p = mutable_payload(c);
        std::fill(p.begin(), p.end(), std::uint8_t{0});
        set_present(c, false);
    }

    Cell cell(CellCoordinate c) const {
        if (!present(c)) throw Error("cell is not present");
        Cell out;
        out.coord = c;
        auto p = payload(c);
        auto q = proof(c);
        out.payload.assign(p.begin(), p.end());
        out.proof.assign(q.begin(), q.end());
        return out;
    }

    std::optional<Cell> try_cell(CellCoordinate c) const {
        if (!present(c)) return std::nullopt;
        return cell(c);
    }

    // Copy with only the cells selected by `keep` present.
    template <class Pred>
    BlobMatrix filtered(Pred&& keep) const {
        BlobMatrix out(geometry_);
        out.proof_ = proof_;
        for (std::uint32_t r = 0; r < geometry_.extended_rows(); ++r) {
            for (std::uint32_t c = 0; c < geometry_.extended_cols(); ++c) {
                const CellCoordinate cc{r, c};
                if (!present(cc) || !keep(cc)) continue;
                auto src = payload(cc);
                std::copy(src.begin(), src.end(), out.mutable_payload(cc).begin());
                out.set_present(cc);
            }
        }
        return out;
    }

    // Payloads and presence are equal; proofs are not compared.
    bool same_payloads(const BlobMatrix& other) const {
        return geometry_ == other.geometry_ && present_ == other.present_ && payload_ == other.payload_;
    }

    friend bool operator==(const BlobMatrix&, const BlobMatrix&) = default;

private:
    std::uint64_t index(std::uint32_t r, std::uint32_t c) const {
        return static_cast<std::uint64_t>(r) * geometry_.extended_cols() + c;
    }

    BlobGeometry geometry_{};
    std::vector<std::uint8_t> payload_;
    std::vector<std::uint8_t> proof_;
    std::vector<std::uint8_t> present_;
};

// The un-extended r x c payload matrix, row-major.
struct SourceBlob {
    BlobGeometry geometry;
    std::vector<std::uint8_t> bytes;

    static SourceBlob random(const BlobGeometry& g, DeterministicRng& rng) {
        g.validate();
        SourceBlob s{g, std::vector<std::uint8_t>(static_cast<std::size_t>(g.source_rows) * g.source_cols * g.cell_payload_bytes)};
        rng.fill(s.bytes);
        return s;
    }

    std::span<const std::uint8_t> cell(std::uint32_t row, std::uint32_t col) const {
        const std::size_t off = (static_cast<std::size_t>(row) * geometry.source_cols + col) * geometry.cell_payload_bytes;
        return {bytes.data() + off, geometry.cell_payload_bytes};
    }
};

enum class ExtensionOrder : std::uint8_t { RowsFirst, ColumnsFirst };

inline FieldConfig default_field(const BlobGeometry& g) {
    return FieldConfig::smallest_for(std::max(g.extended_rows(), g.extended_cols()));
}

namespace detail {

// Symbols per cell for a field; payload bytes must split evenly.
inline std::size_t symbols_per_cell(const BlobGeometry& g, const FieldConfig& f) {
    if (g.cell_payload_bytes % f.symbol_bytes() != 0)
        throw ConfigError("cell_payload_bytes must be a multiple of the field symbol size");
    return g.cell_payload_bytes / f.symbol_bytes();
}

inline void load_symbols(std::span<const std::uint8_t> bytes, std::span<Symbol> out, std::size_t symbol_bytes) {
    if (symbol_bytes == 1) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = bytes[i];
    } else {
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = static_cast<Symbol>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
    }
}

inline void store_symbols(std::span<const Symbol> in, std::span<std::uint8_t> bytes, std::size_t symbol_bytes) {
    if (symbol_bytes == 1) {
        for (std::size_t i = 0; i < in.size(); ++i) bytes[i] = static_cast<std::uint8_t>(in[i]);
    } else {
        for (std::size_t i = 0; i < in.size(); ++i) {
            bytes[2 * i] = static_cast<std::uint8_t>(in[i] & 0xFF);
            bytes[2 * i + 1] = static_cast<std::uint8_t>(in[i] >> 8);
        }
    }
}

enum class Axis : std::uint8_t { Row, Column };

inline CellCoordinate line_cell(Axis axis, std::uint32_t line, std::uint32_t pos) {
    return axis == Axis::Row ? CellCoordinate{line, pos} : CellCoordinate{pos, line};
}

// Decodes one row or column in place using the cells currently present.
// Returns the decode status; on success every cell of the line is present.
template <class F>
DecodeStatus decode_line(BlobMatrix& m, rs::LineCodec<F>& codec, Axis axis, std::uint32_t line, std::size_t width,
                         std::size_t symbol_bytes, std::vector<Symbol>& buf, std::vector<std::uint8_t>& mask) {
    const auto len = static_cast<std::uint32_t>(codec.n());
    buf.assign(len * width, 0);
    mask.assign(len, 0);
    for (std::uint32_t p = 0; p < len; ++p) {
        const auto cc = line_cell(axis, line, p);
        if (!m.present(cc)) continue;
        mask[p] = 1;
        load_symbols(m.payload(cc), std::span<Symbol>(buf.data() + p * width, width), symbol_bytes);
    }
    const DecodeStatus st = codec.recover(buf, mask, width);
    if (st != DecodeStatus::Ok) return st;
    for (std::uint32_t p = 0; p < len; ++p) {
        if (mask[p]) continue;
        const auto cc = line_cell(axis, line, p);
        store_symbols(std::span<const Symbol>(buf.data() + p * width, width), m.mutable_payload(cc), symbol_bytes);
        m.set_present(cc);
    }
    return st;
}

template <class F>
void extend_axis(BlobMatrix& m, Axis axis, std::uint32_t lines, std::size_t width, std::size_t symbol_bytes) {
    const auto& g = m.geometry();
    const std::size_t k = axis == Axis::Row ? g.source_cols : g.source_rows;
    rs::LineCodec<F> codec(k);
    std::vector<Symbol> buf;
    std::vector<std::uint8_t> mask;
    for (std::uint32_t l = 0; l < lines; ++l) {
        const auto st = decode_line(m, codec, axis, l, width, symbol_bytes, buf, mask);
        if (st != DecodeStatus::Ok) throw std::logic_error("extension of a systematic line failed");
    }
}

}  // namespace detail

// Builds the 2D extension of `source`. Proof bytes are left zero; seal the
// blob with the commitment module to fill them.
inline BlobMatrix extend_blob(const SourceBlob& source, ExtensionOrder order = ExtensionOrder::RowsFirst,
                              std::optional<FieldConfig> field = std::nullopt) {
    const auto& g = source.geometry;
    g.validate();
    if (source.bytes.size() != static_cast<std::size_t>(g.source_rows) * g.source_cols * g.cell_payload_bytes)
        throw ConfigError("source blob size does not match geometry");
    const FieldConfig f = field.value_or(default_field(g));
    f.validate(std::max(g.extended_rows(), g.extended_cols()));
    const std::size_t width = detail::symbols_per_cell(g, f);

    BlobMatrix m(g);
    for (std::uint32_t r = 0; r < g.source_rows; ++r) {
        for (std::uint32_t c = 0; c < g.source_cols; ++c) {
            auto src = source.cell(r, c);
            std::copy(src.begin(), src.end(), m.mutable_payload({r, c}).begin());
            m.set_present({r, c});
        }
    }
    detail::with_field(f, [&](auto field_tag) {
        using F = decltype(field_tag);
        if (order == ExtensionOrder::RowsFirst) {
            detail::extend_axis<F>(m, detail::Axis::Row, g.source_rows, width, f.symbol_bytes());
            detail::extend_axis<F>(m, detail::Axis::Column, g.extended_cols(), width, f.symbol_bytes());
        } else {
            detail::extend_axis<F>(m, detail::Axis::Column, g.source_cols, width, f.symbol_bytes());
            detail::extend_axis<F>(m, detail::Axis::Row, g.extended_rows(), width, f.symbol_bytes());
        }
        return 0;
    });
    return m;
}

// The top-left quadrant of an extended matrix as a source blob.
inline SourceBlob source_quadrant(const BlobMatrix& m) {
    const auto& g = m.geometry();
    SourceBlob s{g, std::vector<std::uint8_t>(static_cast<std::size_t>(g.source_rows) * g.source_cols * g.cell_payload_bytes)};
    for (std::uint32_t r = 0; r < g.source_rows; ++r) {
        for (std::uint32_t c = 0; c < g.source_cols; ++c) {
            auto p = m.payload({r, c});
            std::copy(p.begin(), p.end(), s.bytes.begin() + static_cast<std::ptrdiff_t>((r * g.source_cols + c) * g.cell_payload_bytes));
        }
    }
    return s;
}

enum class ReconstructStatus : std::uint8_t { Complete, Undecodable, Inconsistent };

struct ReconstructResult {
    ReconstructStatus status = ReconstructStatus::Undecodable;
    BlobMatrix matrix;          // complete on success, fixpoint otherwise
    std::uint32_t lines_decoded = 0;
    std::uint32_t rounds = 0;

    bool success() const { return status == ReconstructStatus::Complete; }
};

// Iterative row/column peeling: decode any line with at least half its cells
// until nothing changes.
inline ReconstructResult reconstruct_blob(BlobMatrix partial, std::optional<FieldConfig> field = std::nullopt) {
    const auto g = partial.geometry();
    const FieldConfig f = field.value_or(default_field(g));
    f.validate(std::max(g.extended_rows(), g.extended_cols()));
    const std::size_t width = detail::symbols_per_cell(g, f);

    ReconstructResult res;
    detail::with_field(f, [&](auto field_tag) {
        using F = decltype(field_tag);
        rs::LineCodec<F> row_codec(g.source_cols);
        rs::LineCodec<F> col_codec(g.source_rows);
        std::vector<Symbol> buf;
        std::vector<std::uint8_t> mask;
        bool progress = true;
        while (progress && !partial.complete()) {
            progress = false;
            ++res.rounds;
            for (std::uint32_t r = 0; r < g.extended_rows(); ++r) {
                const auto have = partial.row_present(r);
                if (have == g.extended_cols() || have < g.source_cols) continue;
                const auto st = detail::decode_line(partial, row_codec, detail::Axis::Row, r, width, f.symbol_bytes(), buf, mask);
                if (st == DecodeStatus::DecodeInconsistent) {
                    res.status = ReconstructStatus::Inconsistent;
                    return 0;
                }
                ++res.lines_decoded;
                progress = true;
            }
            for (std::uint32_t c = 0; c < g.extended_cols(); ++c) {
                const auto have = partial.col_present(c);
                if (have == g.extended_rows() || have < g.source_rows) continue;
                const auto st = detail::decode_line(partial, col_codec, detail::Axis::Column, c, width, f.symbol_bytes(), buf, mask);
                if (st == DecodeStatus::DecodeInconsistent) {
                    res.status = ReconstructStatus::Inconsistent;
                    return 0;
                }
                ++res.lines_decoded;
                progress = true;
            }
        }
        res.status = partial.complete() ? ReconstructStatus::Complete : ReconstructStatus::Undecodable;
        return 0;
    });
    res.matrix = std::move(partial);
    return res;
}

}  // namespace dassim
