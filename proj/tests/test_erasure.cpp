#include <catch_amalgamated.hpp>

#include "dassim/blob.hpp"
#include "dassim/reed_solomon.hpp"
#include "dassim/rng.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <vector>

using namespace dassim;

namespace {

// Carry-less multiply reduced by the field polynomial; independent of the
// log/exp tables under test.
std::uint32_t slow_mul(std::uint32_t a, std::uint32_t b, unsigned bits, std::uint32_t poly) {
    std::uint32_t r = 0;
    while (b != 0) {
        if (b & 1u) r ^= a;
        b >>= 1;
        a <<= 1;
        if (a & (1u << bits)) a ^= poly;
    }
    return r;
}

std::uint32_t slow_pow(std::uint32_t a, std::uint32_t e, unsigned bits, std::uint32_t poly) {
    std::uint32_t r = 1;
    while (e != 0) {
        if (e & 1u) r = slow_mul(r, a, bits, poly);
        a = slow_mul(a, a, bits, poly);
        e >>= 1;
    }
    return r;
}

// Direct Lagrange evaluation of the degree < k polynomial through
// (i, data[i]) at point x, built only on slow_mul.
template <unsigned Bits, std::uint32_t Poly>
Symbol lagrange_at(const std::vector<Symbol>& data, std::uint32_t x) {
    const std::uint32_t order = (1u << Bits) - 1;
    std::uint32_t acc = 0;
    for (std::uint32_t i = 0; i < data.size(); ++i) {
        std::uint32_t num = 1, den = 1;
        for (std::uint32_t j = 0; j < data.size(); ++j) {
            if (i == j) continue;
            num = slow_mul(num, x ^ j, Bits, Poly);
            den = slow_mul(den, i ^ j, Bits, Poly);
        }
        const std::uint32_t inv = slow_pow(den, order - 1, Bits, Poly);
        acc ^= slow_mul(data[i], slow_mul(num, inv, Bits, Poly), Bits, Poly);
    }
    return static_cast<Symbol>(acc);
}

std::vector<Symbol> random_symbols(DeterministicRng& rng, std::size_t k, std::uint32_t field_size) {
    std::vector<Symbol> v(k);
    for (auto& s : v) s = static_cast<Symbol>(rng.below(field_size));
    return v;
}

std::vector<std::optional<Symbol>> erase(const std::vector<Symbol>& cw, const std::vector<std::size_t>& erased) {
    std::vector<std::optional<Symbol>> out(cw.begin(), cw.end());
    for (auto e : erased) out[e].reset();
    return out;
}

}  // namespace

TEST_CASE("field tables agree with carry-less multiplication", "[erasure][gf]") {
    DeterministicRng rng(1);
    for (int i = 0; i < 20'000; ++i) {
        const auto a = static_cast<Symbol>(rng.below(65536));
        const auto b = static_cast<Symbol>(rng.below(65536));
        REQUIRE(gf::GF65536::mul(a, b) == slow_mul(a, b, 16, 0x1002D));
        const auto c = static_cast<Symbol>(rng.below(256));
        const auto d = static_cast<Symbol>(rng.below(256));
        REQUIRE(gf::GF256::mul(c, d) == slow_mul(c, d, 8, 0x11D));
        if (a != 0) REQUIRE(gf::GF65536::mul(a, gf::GF65536::inv(a)) == 1);
    }
}

TEST_CASE("encoding matches direct Lagrange interpolation", "[erasure][rs]") {
    DeterministicRng rng(2);
    for (std::size_t k : {1, 2, 3, 4, 5, 6, 8, 16, 32}) {
        const auto data = random_symbols(rng, k, 65536);
        const auto cw = rs_encode_line(data, FieldConfig{16});
        REQUIRE(cw.size() == 2 * k);
        for (std::size_t i = 0; i < k; ++i) CHECK(cw[i] == data[i]);
        for (std::size_t x = k; x < 2 * k; ++x) CHECK(cw[x] == (lagrange_at<16, 0x1002D>(data, static_cast<std::uint32_t>(x))));

        const auto data8 = random_symbols(rng, k, 256);
        const auto cw8 = rs_encode_line(data8, FieldConfig{8});
        for (std::size_t x = k; x < 2 * k; ++x) CHECK(cw8[x] == (lagrange_at<8, 0x11D>(data8, static_cast<std::uint32_t>(x))));
    }
}

TEST_CASE("k=1 codeword decodes from either symbol", "[erasure][rs]") {
    const std::vector<Symbol> data{0xBEEF};
    const auto cw = rs_encode_line(data);
    REQUIRE(cw.size() == 2);
    for (std::size_t keep = 0; keep < 2; ++keep) {
        std::vector<std::optional<Symbol>> rx(2);
        rx[keep] = cw[keep];
        const auto r = rs_decode_line(rx);
        REQUIRE(r.status == DecodeStatus::Ok);
        CHECK(r.data == data);
    }
}

TEST_CASE("k=4: all 70 erasure patterns of size 4 decode", "[erasure][rs]") {
    DeterministicRng rng(3);
    const auto data = random_symbols(rng, 4, 65536);
    const auto cw = rs_encode_line(data);
    int patterns = 0;
    for (unsigned mask = 0; mask < 256; ++mask) {
        if (std::popcount(mask) != 4) continue;
        std::vector<std::size_t> erased;
        for (std::size_t i = 0; i < 8; ++i)
            if (mask & (1u << i)) erased.push_back(i);
        const auto r = rs_decode_line(erase(cw, erased));
        REQUIRE(r.status == DecodeStatus::Ok);
        CHECK(r.data == data);
        ++patterns;
    }
    CHECK(patterns == 70);
}

TEST_CASE("threshold is sharp for 2k=8, exhaustively", "[erasure][rs]") {
    DeterministicRng rng(4);
    const auto data = random_symbols(rng, 4, 256);
    const auto cw = rs_encode_line(data, FieldConfig{8});
    for (unsigned mask = 0; mask < 256; ++mask) {
        std::vector<std::size_t> erased;
        for (std::size_t i = 0; i < 8; ++i)
            if (!(mask & (1u << i))) erased.push_back(i);
        const auto r = rs_decode_line(erase(cw, erased), FieldConfig{8});
        if (std::popcount(mask) >= 4) {
            REQUIRE(r.status == DecodeStatus::Ok);
            CHECK(r.data == data);
        } else {
            CHECK(r.status == DecodeStatus::InsufficientShares);
        }
    }
}

TEST_CASE("k=256 mainnet line: 256 erasures decode, 257 do not", "[erasure][rs]") {
    DeterministicRng rng(5);
    const auto data = random_symbols(rng, 256, 65536);
    const auto cw = rs_encode_line(data);
    for (int trial = 0; trial < 100; ++trial) {
        auto order = rng.sample_without_replacement(512, 257);
        std::vector<std::size_t> erased(order.begin(), order.begin() + 256);
        const auto ok = rs_decode_line(erase(cw, erased));
        REQUIRE(ok.status == DecodeStatus::Ok);
        CHECK(ok.data == data);
        erased.push_back(order[256]);
        CHECK(rs_decode_line(erase(cw, erased)).status == DecodeStatus::InsufficientShares);
    }
}

TEST_CASE("only the parity half present recovers the data", "[erasure][rs]") {
    DeterministicRng rng(6);
    for (std::size_t k : {2, 4, 8, 256}) {
        for (int trial = 0; trial < 1000; ++trial) {
            const auto data = random_symbols(rng, k, 65536);
            const auto cw = rs_encode_line(data);
            std::vector<std::size_t> erased(k);
            std::iota(erased.begin(), erased.end(), std::size_t{0});
            const auto r = rs_decode_line(erase(cw, erased));
            REQUIRE(r.status == DecodeStatus::Ok);
            REQUIRE(r.data == data);
        }
    }
}

TEST_CASE("decode edge cases", "[erasure][rs]") {
    DeterministicRng rng(7);
    const auto data = random_symbols(rng, 8, 65536);
    const auto cw = rs_encode_line(data);

    // All present is the identity on the systematic half.
    const auto all = rs_decode_line(erase(cw, {}));
    REQUIRE(all.status == DecodeStatus::Ok);
    CHECK(all.data == data);

    // k - 1 present.
    std::vector<std::size_t> erased(9);
    std::iota(erased.begin(), erased.end(), std::size_t{0});
    CHECK(rs_decode_line(erase(cw, erased)).status == DecodeStatus::InsufficientShares);

    // Corrupted symbol beyond the erasure model.
    auto rx = erase(cw, {1, 5});
    *rx[12] ^= 0x0101;
    CHECK(rs_decode_line(rx).status == DecodeStatus::DecodeInconsistent);

    CHECK_THROWS_AS(rs_encode_line(std::vector<Symbol>(129, 1), FieldConfig{8}), ConfigError);
    CHECK_THROWS_AS(rs_encode_line(std::vector<Symbol>{}), ConfigError);
}

TEST_CASE("arbitrary-pattern decoding agrees with the oracle for non power-of-two k", "[erasure][rs]") {
    DeterministicRng rng(8);
    for (std::size_t k : {3, 5, 7, 12}) {
        for (int trial = 0; trial < 50; ++trial) {
            const auto data = random_symbols(rng, k, 65536);
            const auto cw = rs_encode_line(data);
            const auto order = rng.sample_without_replacement(2 * k, k);
            std::vector<std::size_t> erased(order.begin(), order.end());
            const auto r = rs_decode_line(erase(cw, erased));
            REQUIRE(r.status == DecodeStatus::Ok);
            CHECK(r.data == data);
        }
    }
}

// ---- 2D blob ---------------------------------------------------------------

namespace {

bool line_is_codeword(const BlobMatrix& m, bool row, std::uint32_t line) {
    const auto& g = m.geometry();
    const std::uint32_t len = row ? g.extended_cols() : g.extended_rows();
    const std::size_t k = len / 2;
    const auto f = default_field(g);
    const std::size_t sb = f.symbol_bytes();
    const std::size_t width = g.cell_payload_bytes / sb;
    for (std::size_t s = 0; s < width; ++s) {
        std::vector<Symbol> sym(len);
        for (std::uint32_t p = 0; p < len; ++p) {
            const CellCoordinate c = row ? CellCoordinate{line, p} : CellCoordinate{p, line};
            const auto bytes = m.payload(c);
            sym[p] = sb == 1 ? bytes[s] : static_cast<Symbol>(bytes[2 * s] | (bytes[2 * s + 1] << 8));
        }
        const auto cw = rs_encode_line(std::span<const Symbol>(sym.data(), k), f);
        if (!std::equal(cw.begin(), cw.end(), sym.begin())) return false;
    }
    return true;
}

BlobMatrix random_extended(const BlobGeometry& g, std::uint64_t seed) {
    DeterministicRng rng(seed, streams::kBlob);
    return extend_blob(SourceBlob::random(g, rng));
}

}  // namespace

TEST_CASE("1x1 source extends to 2x2 with mutually recoverable cells", "[erasure][blob]") {
    const BlobGeometry g{1, 1, 8, 48};
    const auto m = random_extended(g, 1);
    REQUIRE(m.complete());
    for (std::uint32_t keep = 0; keep < 4; ++keep) {
        const auto kept = coordinate_at(keep, g);
        auto partial = m.filtered([&](CellCoordinate c) { return c == kept; });
        const auto r = reconstruct_blob(partial);
        REQUIRE(r.success());
        CHECK(r.matrix.same_payloads(m));
    }
}

TEST_CASE("4x4 source: every row and column of the extension is a codeword", "[erasure][blob]") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        for (auto g : {BlobGeometry{4, 4, 32, 48}, BlobGeometry{4, 4, 16, 48}}) {
            const auto m = random_extended(g, seed);
            for (std::uint32_t l = 0; l < 8; ++l) {
                CHECK(line_is_codeword(m, true, l));
                CHECK(line_is_codeword(m, false, l));
            }
        }
    }
}

TEST_CASE("extension works in GF(2^16) and for non-square, non power-of-two geometry", "[erasure][blob]") {
    const BlobGeometry g{3, 5, 8, 48};
    DeterministicRng rng(12);
    const auto src = SourceBlob::random(g, rng);
    const auto m16 = extend_blob(src, ExtensionOrder::RowsFirst, FieldConfig{16});
    const auto m16c = extend_blob(src, ExtensionOrder::ColumnsFirst, FieldConfig{16});
    CHECK(m16.same_payloads(m16c));
    const auto part = m16.filtered([](CellCoordinate c) { return c.row >= 3 && c.col >= 5; });
    const auto r = reconstruct_blob(part, FieldConfig{16});
    REQUIRE(r.success());
    CHECK(r.matrix.same_payloads(m16));
}

TEST_CASE("extension is systematic and order-independent", "[erasure][blob]") {
    const BlobGeometry g{4, 4, 32, 48};
    DeterministicRng rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        const auto src = SourceBlob::random(g, rng);
        const auto rows_first = extend_blob(src, ExtensionOrder::RowsFirst);
        const auto cols_first = extend_blob(src, ExtensionOrder::ColumnsFirst);
        REQUIRE(rows_first.same_payloads(cols_first));
        REQUIRE(source_quadrant(rows_first).bytes == src.bytes);
    }
}

TEST_CASE("peeling from the top-left quadrant recovers the whole blob", "[erasure][blob]") {
    for (auto g : {BlobGeometry{4, 4, 64, 48}, BlobGeometry{32, 32, 64, 48}}) {
        const auto m = random_extended(g, 21);
        const auto quadrant = m.filtered([&](CellCoordinate c) { return c.row < g.source_rows && c.col < g.source_cols; });
        CHECK(quadrant.present_count() * 4 == g.total_cells());
        const auto r = reconstruct_blob(quadrant);
        REQUIRE(r.success());
        CHECK(r.matrix.same_payloads(m));
    }
}

TEST_CASE("empty matrix is undecodable", "[erasure][blob]") {
    const BlobGeometry g{4, 4, 16, 48};
    const auto r = reconstruct_blob(BlobMatrix(g));
    CHECK(r.status == ReconstructStatus::Undecodable);
    CHECK(r.lines_decoded == 0);
}

TEST_CASE("three cells per line (37.5%) is a peeling fixpoint", "[erasure][blob]") {
    const BlobGeometry g{4, 4, 16, 48};
    const auto m = random_extended(g, 22);
    // Diagonal band: each row and each column keeps exactly 3 of 8 cells.
    const auto part = m.filtered([](CellCoordinate c) { return (c.col + 8 - c.row) % 8 < 3; });
    for (std::uint32_t l = 0; l < 8; ++l) {
        REQUIRE(part.row_present(l) == 3);
        REQUIRE(part.col_present(l) == 3);
    }
    CHECK(part.present_count() == 24);  // 37.5% overall, above the 25% quadrant
    const auto r = reconstruct_blob(part);
    CHECK(r.status == ReconstructStatus::Undecodable);
    CHECK(r.lines_decoded == 0);
    CHECK(r.matrix.present_count() == 24);
}

TEST_CASE("peeling soundness and monotonicity on random partial blobs", "[erasure][blob]") {
    const BlobGeometry g{4, 4, 16, 48};
    DeterministicRng rng(23);
    int successes = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const auto m = random_extended(g, 1000 + static_cast<std::uint64_t>(trial));
        const auto keep_count = 16 + rng.below(24);
        const auto kept = rng.sample_without_replacement(64, keep_count);
        std::vector<std::uint8_t> mask(64, 0);
        for (auto i : kept) mask[i] = 1;
        const auto part = m.filtered([&](CellCoordinate c) { return mask[coordinate_index(c, g)] != 0; });
        const auto r = reconstruct_blob(part);
        if (r.success()) {
            ++successes;
            // Re-extending the recovered source reproduces the full matrix.
            CHECK(extend_blob(source_quadrant(r.matrix)).same_payloads(r.matrix));
            CHECK(r.matrix.same_payloads(m));
            // Adding cells keeps it decodable.
            for (int extra = 0; extra < 3; ++extra) mask[rng.below(64)] = 1;
            const auto more = m.filtered([&](CellCoordinate c) { return mask[coordinate_index(c, g)] != 0; });
            CHECK(reconstruct_blob(more).success());
        }
    }
    CHECK(successes > 0);
}

TEST_CASE("inconsistent cell is detected during peeling", "[erasure][blob]") {
    const BlobGeometry g{4, 4, 16, 48};
    auto m = random_extended(g, 24);
    auto part = m.filtered([](CellCoordinate c) { return c.row == 0 || c.col != 7; });
    part.mutable_payload({1, 1})[0] ^= 0xFF;
    const auto r = reconstruct_blob(part);
    CHECK(r.status == ReconstructStatus::Inconsistent);
}
