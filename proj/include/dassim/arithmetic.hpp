#pragma once

// Size and cost arithmetic with the published reference figures beside the
// exact values. A row whose reference is known to disagree with its own
// inputs is flagged rather than failed.

#include "dassim/gossip.hpp"
#include "dassim/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace dassim {

enum class CheckStatus { Exact, Ok, Flagged, Fail };

inline const char* to_string(CheckStatus s) {
    switch (s) {
        case CheckStatus::Exact: return "exact";
        case CheckStatus::Ok: return "ok";
        case CheckStatus::Flagged: return "FLAGGED";
        case CheckStatus::Fail: return "FAIL";
    }
    return "?";
}

struct ArithmeticRow {
    std::string quantity;
    double computed = 0;
    std::string unit;
    std::optional<double> reference;  // same unit as computed
    std::string reference_text;       // as printed in the literature
    double tolerance = 0;             // relative
    bool known_discrepancy = false;
    std::string note;

    CheckStatus status() const {
        if (!reference) return CheckStatus::Exact;
        const double rel = std::abs(computed - *reference) / std::abs(*reference);
        if (rel <= tolerance) return CheckStatus::Ok;
        return known_discrepancy ? CheckStatus::Flagged : CheckStatus::Fail;
    }
};

struct ArithmeticInputs {
    BlobGeometry geometry = BlobGeometry::mainnet();
    std::uint64_t validators = 500'000;
    std::uint64_t regulars = 1'200;
    std::uint32_t regular_samples = kRegularSampleSize;
    CostModel cost;
};

inline std::vector<ArithmeticRow> arithmetic_table(const ArithmeticInputs& in = {}) {
    const auto& g = in.geometry;
    const bool mainnet = g == BlobGeometry::mainnet();
    constexpr double MiB = 1024.0 * 1024.0;
    auto ref = [&](double v) { return mainnet ? std::optional<double>(v) : std::nullopt; };

    std::vector<ArithmeticRow> rows;
    rows.push_back({"extended blob on the wire", static_cast<double>(g.total_wire_bytes()), "B", ref(140 * MiB),
                    "140 MB", 1e-9, false, "binary megabytes"});
    rows.push_back({"proof bytes", static_cast<double>(g.total_proof_bytes()), "B", ref(12 * MiB), "12 MB", 1e-9,
                    false, "binary megabytes"});
    rows.push_back({"validator sample cells", static_cast<double>(validator_sample_cells(g)), "cells", ref(2044),
                    "2044", 0, false, "two rows plus two columns, shared cells counted once"});
    rows.push_back({"validator sample bytes", static_cast<double>(validator_sample_cells(g) * g.cell_wire_bytes()),
                    "B", ref(1.1e6), "1.1 MB", 0.05, false, "reference is rounded"});
    rows.push_back({"regular sample bytes", static_cast<double>(std::uint64_t{in.regular_samples} * g.cell_wire_bytes()),
                    "B", ref(42'000), "42 KB", 0, false, ""});
    rows.push_back({"row and column topics", static_cast<double>(topic_count(g, false)), "topics", ref(1024), "1,024",
                    0, false, ""});
    rows.push_back({"per-cell topics", static_cast<double>(topic_count(g, true) - topic_count(g, false)), "topics",
                    ref(262'144), "262,144", 0, false, ""});

    const bool reference_population = mainnet && in.validators == 500'000 && in.regulars == 1'200;
    const auto floor = efficiency_floor(in.validators, in.regulars, g, in.regular_samples);
    rows.push_back({"efficiency floor per slot", static_cast<double>(floor), "B",
                    reference_population ? std::optional<double>(static_cast<double>(reference::kFloorBytes))
                                         : std::nullopt,
                    "489 GB", 0.02, true, "reference does not follow from its own inputs"});

    // Cost rows are anchored on the reference egress so the price can be
    // checked on its own.
    const double ref_block = producer_cost(reference::kFloorBytes, in.cost);
    const double floor_block = producer_cost(floor, in.cost);
    rows.push_back({"centralized cost at 489 GB", ref_block, "USD/block", ref(reference::kCentralizedCostUsd),
                    "25 USD", 0.02, false, "price per GB back-solved from 25/489"});
    rows.push_back({"centralized cost per month", monthly_cost(ref_block, in.cost), "USD/month",
                    ref(reference::kCentralizedMonthlyUsd), "5.75M USD", 0.10, false, ""});
    rows.push_back({"centralized cost at computed floor", floor_block, "USD/block", std::nullopt, "", 0, false, ""});

    const double one_copy = producer_cost(g.total_wire_bytes(), in.cost);
    const double copies = copies_for_cost(reference::kGossipCostUsd, g, in.cost);
    rows.push_back({"gossip cost, one seed copy", one_copy, "USD/block", ref(reference::kGossipCostUsd), "0.03 USD",
                    0.10, true, "reference matches only with several seed copies"});
    rows.push_back({"seed copies implied by 0.03 USD", copies, "copies", std::nullopt, "", 0, false, ""});
    rows.push_back({"gossip cost, four seed copies", 4 * one_copy, "USD/block", ref(reference::kGossipCostUsd),
                    "0.03 USD", 0.10, false, ""});
    rows.push_back({"gossip cost per month, four copies", monthly_cost(4 * one_copy, in.cost), "USD/month",
                    ref(reference::kGossipMonthlyUsd), "6,000 USD", 0.10, false, ""});
    return rows;
}

inline bool arithmetic_ok(const std::vector<ArithmeticRow>& rows) {
    for (const auto& r : rows)
        if (r.status() == CheckStatus::Fail) return false;
    return true;
}

inline std::string format_arithmetic(const std::vector<ArithmeticRow>& rows) {
    std::ostringstream os;
    os << std::left << std::setw(38) << "quantity" << std::right << std::setw(22) << "computed" << "  " << std::left
       << std::setw(10) << "unit" << std::setw(12) << "reference" << std::setw(9) << "status" << "note\n";
    for (const auto& r : rows) {
        std::ostringstream v;
        if (r.computed == std::floor(r.computed) && std::abs(r.computed) < 1e18)
            v << static_cast<std::uint64_t>(r.computed);
        else
            v << std::setprecision(6) << r.computed;
        os << std::left << std::setw(38) << r.quantity << std::right << std::setw(22) << v.str() << "  " << std::left
           << std::setw(10) << r.unit << std::setw(12) << (r.reference_text.empty() ? "-" : r.reference_text)
           << std::setw(9) << to_string(r.status()) << r.note << '\n';
    }
    return os.str();
}

}  // namespace dassim
