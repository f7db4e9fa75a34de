#pragma once

// Per-slot sample selection and success rules for validator (2 rows + 2
// columns), regular (75 random cells) and k-of-n sampling, plus the exact
// hypergeometric oracle for withholding detection.

#include "dassim/core.hpp"
#include "dassim/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

namespace dassim {

inline constexpr std::uint32_t kValidatorLines = 2;  // rows, and again columns
inline constexpr std::uint32_t kRegularSampleSize = 75;
inline constexpr std::uint32_t kDefaultKofNRequested = 80;
inline constexpr std::uint32_t kDefaultKofNRequired = 75;

enum class SamplingMode : std::uint8_t { ValidatorLines, RegularCells, KofN };

inline const char* to_string(SamplingMode m) {
    switch (m) {
        case SamplingMode::ValidatorLines: return "validator";
        case SamplingMode::RegularCells: return "regular";
        case SamplingMode::KofN: return "k-of-n";
    }
    return "?";
}

struct SampleAssignment {
    NodeIndex node = 0;
    SamplingMode mode = SamplingMode::RegularCells;
    std::vector<std::uint32_t> rows;     // sorted
    std::vector<std::uint32_t> cols;     // sorted
    std::vector<CellCoordinate> cells;   // sorted, distinct
    std::uint32_t k_required = 0;        // KofN only
    std::uint32_t n_requested = 0;       // KofN only

    bool contains(CellCoordinate c) const { return std::binary_search(cells.begin(), cells.end(), c); }
};

// Line identifier used for per-line counts: rows first, then columns.
struct LineId {
    bool is_row = true;
    std::uint32_t index = 0;
    friend constexpr auto operator<=>(const LineId&, const LineId&) = default;
};

struct SamplingVerdict {
    NodeIndex node = 0;
    SamplingMode mode = SamplingMode::RegularCells;
    bool success = false;
    std::uint32_t received_count = 0;
    std::vector<std::pair<LineId, std::uint32_t>> per_line_received;  // validator mode
    bool deadline_met = false;
    std::uint64_t bytes_downloaded = 0;
    std::optional<Micros> completion_time;  // when the success condition first held
};

inline SampleAssignment select_validator_sample(DeterministicRng& rng, const BlobGeometry& g, NodeIndex node = 0) {
    if (g.extended_rows() < kValidatorLines || g.extended_cols() < kValidatorLines)
        throw ConfigError("validator sampling needs at least 2 rows and 2 columns");
    SampleAssignment a;
    a.node = node;
    a.mode = SamplingMode::ValidatorLines;
    for (auto r : rng.sample_without_replacement(g.extended_rows(), kValidatorLines)) a.rows.push_back(static_cast<std::uint32_t>(r));
    for (auto c : rng.sample_without_replacement(g.extended_cols(), kValidatorLines)) a.cols.push_back(static_cast<std::uint32_t>(c));
    std::sort(a.rows.begin(), a.rows.end());
    std::sort(a.cols.begin(), a.cols.end());
    std::set<CellCoordinate> cells;
    for (auto r : a.rows)
        for (std::uint32_t c = 0; c < g.extended_cols(); ++c) cells.insert({r, c});
    for (auto c : a.cols)
        for (std::uint32_t r = 0; r < g.extended_rows(); ++r) cells.insert({r, c});
    a.cells.assign(cells.begin(), cells.end());
    return a;
}

namespace detail {

inline std::vector<CellCoordinate> random_cells(DeterministicRng& rng, const BlobGeometry& g, std::uint32_t count) {
    if (count > g.total_cells())
        throw ConfigError("sample count " + std::to_string(count) + " exceeds " + std::to_string(g.total_cells()) + " cells");
    std::vector<CellCoordinate> cells;
    cells.reserve(count);
    for (auto i : rng.sample_without_replacement(g.total_cells(), count)) cells.push_back(coordinate_at(i, g));
    std::sort(cells.begin(), cells.end());
    return cells;
}

}  // namespace detail

inline SampleAssignment select_regular_sample(DeterministicRng& rng, const BlobGeometry& g,
                                              std::uint32_t count = kRegularSampleSize, NodeIndex node = 0) {
    SampleAssignment a;
    a.node = node;
    a.mode = SamplingMode::RegularCells;
    a.cells = detail::random_cells(rng, g, count);
    return a;
}

inline SampleAssignment select_k_of_n_sample(DeterministicRng& rng, const BlobGeometry& g,
                                             std::uint32_t n = kDefaultKofNRequested,
                                             std::uint32_t k = kDefaultKofNRequired, NodeIndex node = 0) {
    if (n <= kRegularSampleSize) throw ConfigError("k-of-n sampling requires n > 75");
    if (k > n) throw ConfigError("k-of-n sampling requires k <= n");
    SampleAssignment a;
    a.node = node;
    a.mode = SamplingMode::KofN;
    a.cells = detail::random_cells(rng, g, n);
    a.n_requested = n;
    a.k_required = k;
    return a;
}

namespace detail {

inline void check_subset(const SampleAssignment& a, std::span<const CellCoordinate> received) {
    for (const auto& c : received)
        if (!a.contains(c)) throw std::invalid_argument("received cell is not part of the assignment");
}

inline std::uint32_t distinct_count(std::span<const CellCoordinate> received) {
    std::vector<CellCoordinate> v(received.begin(), received.end());
    std::sort(v.begin(), v.end());
    return static_cast<std::uint32_t>(std::unique(v.begin(), v.end()) - v.begin());
}

}  // namespace detail

// Success iff every chosen row and column has at least half of its extended
// length received.
inline SamplingVerdict evaluate_validator_sampling(const SampleAssignment& a, std::span<const CellCoordinate> received,
                                                   const BlobGeometry& g) {
    detail::check_subset(a, received);
    std::set<CellCoordinate> got(received.begin(), received.end());
    SamplingVerdict v;
    v.node = a.node;
    v.mode = a.mode;
    v.received_count = static_cast<std::uint32_t>(got.size());
    v.bytes_downloaded = v.received_count * g.cell_wire_bytes();
    bool ok = true;
    for (auto r : a.rows) {
        std::uint32_t n = 0;
        for (std::uint32_t c = 0; c < g.extended_cols(); ++c) n += got.count({r, c}) ? 1 : 0;
        v.per_line_received.push_back({LineId{true, r}, n});
        ok = ok && 2 * n >= g.extended_cols();
    }
    for (auto c : a.cols) {
        std::uint32_t n = 0;
        for (std::uint32_t r = 0; r < g.extended_rows(); ++r) n += got.count({r, c}) ? 1 : 0;
        v.per_line_received.push_back({LineId{false, c}, n});
        ok = ok && 2 * n >= g.extended_rows();
    }
    v.success = ok;
    return v;
}

// Success iff every selected cell was received.
inline SamplingVerdict evaluate_regular_sampling(const SampleAssignment& a, std::span<const CellCoordinate> received,
                                                 const BlobGeometry& g = BlobGeometry::mainnet()) {
    detail::check_subset(a, received);
    SamplingVerdict v;
    v.node = a.node;
    v.mode = a.mode;
    v.received_count = detail::distinct_count(received);
    v.bytes_downloaded = v.received_count * g.cell_wire_bytes();
    v.success = v.received_count == a.cells.size();
    return v;
}

inline SamplingVerdict evaluate_k_of_n(const SampleAssignment& a, std::span<const CellCoordinate> received,
                                       const BlobGeometry& g = BlobGeometry::mainnet()) {
    if (a.mode != SamplingMode::KofN) throw std::invalid_argument("evaluate_k_of_n: assignment is not k-of-n");
    detail::check_subset(a, received);
    SamplingVerdict v;
    v.node = a.node;
    v.mode = a.mode;
    v.received_count = detail::distinct_count(received);
    v.bytes_downloaded = v.received_count * g.cell_wire_bytes();
    v.success = v.received_count >= a.k_required;
    return v;
}

inline SamplingVerdict evaluate_sampling(const SampleAssignment& a, std::span<const CellCoordinate> received,
                                         const BlobGeometry& g) {
    switch (a.mode) {
        case SamplingMode::ValidatorLines: return evaluate_validator_sampling(a, received, g);
        case SamplingMode::RegularCells: return evaluate_regular_sampling(a, received, g);
        case SamplingMode::KofN: return evaluate_k_of_n(a, received, g);
    }
    return {};
}

// Number of cells a withholding fraction removes: ceil(f * N).
inline std::uint64_t withheld_cell_count(double f, std::uint64_t total_cells) {
    if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument("withheld fraction must be in [0, 1]");
    const double exact = f * static_cast<double>(total_cells);
    auto w = static_cast<std::uint64_t>(std::ceil(exact - 1e-9));
    return std::min(w, total_cells);
}

// P(at least one of n cells drawn without replacement from N is withheld)
// = 1 - C(N - W, n) / C(N, n), with W = ceil(f N). The miss probability is
// summed in log space as prod_{i<n} (1 - W / (N - i)).
inline double detection_probability(double f, std::uint64_t n, std::uint64_t total_cells) {
    if (n > total_cells) throw std::invalid_argument("detection_probability: n > N");
    const std::uint64_t withheld = withheld_cell_count(f, total_cells);
    if (n == 0 || withheld == 0) return 0.0;
    if (total_cells - withheld < n) return 1.0;
    double log_miss = 0.0;
    const auto w = static_cast<double>(withheld);
    for (std::uint64_t i = 0; i < n; ++i) log_miss += std::log1p(-w / static_cast<double>(total_cells - i));
    return -std::expm1(log_miss);
}

// Sampling-with-replacement approximation 1 - (1 - f)^n.
inline double detection_probability_binomial(double f, std::uint64_t n) {
    return 1.0 - std::pow(1.0 - f, static_cast<double>(n));
}

}  // namespace dassim
