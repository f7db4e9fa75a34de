#include <catch_amalgamated.hpp>

#include "dassim/sampling.hpp"

#include <cmath>
#include <set>

using namespace dassim;

namespace {

// Independent oracle: the hypergeometric miss probability as a running
// product, prod_{i<n} (N - W - i) / (N - i).
double detection_by_product(std::uint64_t withheld, std::uint64_t n, std::uint64_t total) {
    long double miss = 1.0L;
    for (std::uint64_t i = 0; i < n; ++i) {
        if (total - withheld < i + 1) return 1.0;
        miss *= static_cast<long double>(total - withheld - i) / static_cast<long double>(total - i);
    }
    return static_cast<double>(1.0L - miss);
}

double binomial_tail(int n, int k, double p) {
    double sum = 0;
    for (int i = k; i <= n; ++i)
        sum += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) + i * std::log(p) +
                        (n - i) * std::log1p(-p));
    return sum;
}

}  // namespace

TEST_CASE("validator assignment covers 2044 distinct cells on mainnet", "[sampling]") {
    DeterministicRng rng(1, streams::kSampling);
    const auto g = BlobGeometry::mainnet();
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = select_validator_sample(rng, g);
        REQUIRE(a.rows.size() == 2);
        REQUIRE(a.cols.size() == 2);
        CHECK(a.rows[0] != a.rows[1]);
        CHECK(a.cols[0] != a.cols[1]);
        CHECK(a.cells.size() == 2044);
        CHECK(a.cells.size() * g.cell_wire_bytes() == 1'144'640);
        CHECK(std::set<CellCoordinate>(a.cells.begin(), a.cells.end()).size() == a.cells.size());
    }
}

TEST_CASE("regular assignment is 75 distinct cells, 42 kB", "[sampling]") {
    DeterministicRng rng(2, streams::kSampling);
    const auto g = BlobGeometry::mainnet();
    const auto a = select_regular_sample(rng, g);
    CHECK(a.cells.size() == 75);
    CHECK(a.cells.size() * g.cell_wire_bytes() == 42'000);
    CHECK(std::set<CellCoordinate>(a.cells.begin(), a.cells.end()).size() == 75);
    CHECK_THROWS_AS(select_regular_sample(rng, BlobGeometry{4, 4, 512, 48}, 65), ConfigError);
}

TEST_CASE("validator success needs half of every chosen line", "[sampling]") {
    DeterministicRng rng(3, streams::kSampling);
    const auto g = BlobGeometry::mainnet();
    const auto a = select_validator_sample(rng, g);

    auto v = evaluate_validator_sampling(a, a.cells, g);
    CHECK(v.success);
    CHECK(v.received_count == 2044);

    CHECK_FALSE(evaluate_validator_sampling(a, {}, g).success);

    // Exactly 256 cells of each line, avoiding the intersections.
    std::vector<CellCoordinate> half;
    const std::set<std::uint32_t> rows(a.rows.begin(), a.rows.end()), cols(a.cols.begin(), a.cols.end());
    for (auto r : a.rows) {
        std::uint32_t taken = 0;
        for (std::uint32_t c = 0; c < 512 && taken < 256; ++c)
            if (!cols.count(c)) half.push_back({r, c}), ++taken;
    }
    for (auto c : a.cols) {
        std::uint32_t taken = 0;
        for (std::uint32_t r = 0; r < 512 && taken < 256; ++r)
            if (!rows.count(r)) half.push_back({r, c}), ++taken;
    }
    CHECK(evaluate_validator_sampling(a, half, g).success);
    half.pop_back();
    const auto short_one = evaluate_validator_sampling(a, half, g);
    CHECK_FALSE(short_one.success);
    CHECK(short_one.per_line_received.back().second == 255);
}

TEST_CASE("regular success needs all 75 cells", "[sampling]") {
    DeterministicRng rng(4, streams::kSampling);
    const auto g = BlobGeometry::mainnet();
    const auto a = select_regular_sample(rng, g);
    CHECK(evaluate_regular_sampling(a, a.cells, g).success);
    std::vector<CellCoordinate> missing(a.cells.begin() + 1, a.cells.end());
    CHECK_FALSE(evaluate_regular_sampling(a, missing, g).success);
    CHECK_THROWS_AS(evaluate_regular_sampling(a, std::vector<CellCoordinate>{{511, 511}, {0, 0}, {1, 1}}, g),
                    std::invalid_argument);
}

TEST_CASE("k-of-n sampling thresholds and preconditions", "[sampling]") {
    DeterministicRng rng(5, streams::kSampling);
    const auto g = BlobGeometry::mainnet();
    const auto a = select_k_of_n_sample(rng, g);
    CHECK(a.cells.size() == 80);
    std::vector<CellCoordinate> got(a.cells.begin(), a.cells.begin() + 75);
    CHECK(evaluate_k_of_n(a, got, g).success);
    got.pop_back();
    CHECK_FALSE(evaluate_k_of_n(a, got, g).success);
    CHECK_THROWS_AS(select_k_of_n_sample(rng, g, 75, 70), ConfigError);
    CHECK_THROWS_AS(select_k_of_n_sample(rng, g, 80, 81), ConfigError);
}

TEST_CASE("k-of-n Monte Carlo matches the binomial tail", "[sampling]") {
    DeterministicRng rng(6, streams::kSampling);
    const auto g = BlobGeometry::mainnet();
    constexpr int kTrials = 10'000;
    constexpr double p = 0.95;
    int successes = 0;
    for (int t = 0; t < kTrials; ++t) {
        const auto a = select_k_of_n_sample(rng, g);
        std::vector<CellCoordinate> got;
        for (const auto& c : a.cells)
            if (rng.bernoulli(p)) got.push_back(c);
        successes += evaluate_k_of_n(a, got, g).success ? 1 : 0;
    }
    const double expected = binomial_tail(80, 75, p);
    const double sigma = std::sqrt(kTrials * expected * (1 - expected));
    CHECK(std::abs(successes - kTrials * expected) < 3 * sigma);
}

TEST_CASE("detection probability matches the product oracle", "[sampling]") {
    const std::uint64_t n_cells = 262'144;
    CHECK(detection_probability(0.0, 75, n_cells) == 0.0);
    CHECK(detection_probability(1.0, 75, n_cells) == 1.0);
    for (double f : {0.001, 0.01, 0.05, 0.1, 0.25, 0.5}) {
        for (std::uint64_t n : {1, 10, 75, 2044}) {
            const auto w = withheld_cell_count(f, n_cells);
            CHECK(detection_probability(f, n, n_cells) == Catch::Approx(detection_by_product(w, n, n_cells)).epsilon(1e-9));
        }
    }
    // Small population where sampling without replacement matters.
    CHECK(detection_probability(0.5, 3, 4) == 1.0);
    CHECK(detection_probability(0.25, 2, 4) == Catch::Approx(0.5));
    CHECK(withheld_cell_count(0.26, 100) == 26);
    CHECK(withheld_cell_count(0.001, 10) == 1);
}

TEST_CASE("detection probability is monotone and close to the binomial form", "[sampling]") {
    const std::uint64_t n_cells = 262'144;
    double prev = -1;
    for (double f : {0.0, 0.01, 0.05, 0.1, 0.25}) {
        const double p = detection_probability(f, 75, n_cells);
        CHECK(p >= prev);
        prev = p;
        CHECK(p == Catch::Approx(detection_probability_binomial(f, 75)).margin(1e-3));
    }
    CHECK(detection_probability(0.05, 75, n_cells) > detection_probability(0.05, 30, n_cells));
}
