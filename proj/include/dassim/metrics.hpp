#pragma once

// Per-slot reports, delivery floor, producer cost, and the CSV contract.

#include "dassim/core.hpp"
#include "dassim/engine.hpp"
#include "dassim/sampling.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace dassim {

enum class StrategyKind : std::uint8_t { Centralized, GossipMesh, DhtCache };

inline const char* to_string(StrategyKind k) {
    switch (k) {
        case StrategyKind::Centralized: return "centralized";
        case StrategyKind::GossipMesh: return "gossip";
        case StrategyKind::DhtCache: return "dht";
    }
    return "?";
}

inline StrategyKind parse_strategy_kind(std::string_view s) {
    if (s == "centralized") return StrategyKind::Centralized;
    if (s == "gossip") return StrategyKind::GossipMesh;
    if (s == "dht") return StrategyKind::DhtCache;
    throw ConfigError("unknown strategy kind '" + std::string(s) + "' (expected centralized, gossip or dht)");
}

struct CostModel {
    double egress_price_per_gb = 0.0511;  // USD per decimal GB
    std::uint64_t slots_per_month = 216'000;

    void validate() const {
        if (!(egress_price_per_gb > 0)) throw ConfigError("cost.egress_price_per_gb must be > 0");
        if (slots_per_month == 0) throw ConfigError("cost.slots_per_month must be > 0");
    }
};

inline double producer_cost(std::uint64_t egress_bytes, const CostModel& m = {}) {
    return static_cast<double>(egress_bytes) / static_cast<double>(kGB) * m.egress_price_per_gb;
}

inline double monthly_cost(double per_block, const CostModel& m = {}) {
    return per_block * static_cast<double>(m.slots_per_month);
}

// Figures quoted in the literature, kept beside the exact computed values.
namespace reference {
inline constexpr std::uint64_t kFloorBytes = 489 * kGB;
inline constexpr double kCentralizedCostUsd = 25.0;
inline constexpr double kCentralizedMonthlyUsd = 5.75e6;
inline constexpr double kGossipCostUsd = 0.03;
inline constexpr double kGossipMonthlyUsd = 6000.0;
}  // namespace reference

// Seed copies at which the one-copy gossip egress costs `target_usd`.
inline double copies_for_cost(double target_usd, const BlobGeometry& g, const CostModel& m = {}) {
    return target_usd / producer_cost(g.total_cells() * g.cell_wire_bytes(), m);
}

inline std::uint64_t validator_sample_cells(const BlobGeometry& g) {
    return 2ull * g.extended_cols() + 2ull * g.extended_rows() - 4;
}

// Every requested sample transferred exactly once.
inline std::uint64_t efficiency_floor(std::uint64_t validators, std::uint64_t regulars,
                                      const BlobGeometry& g = BlobGeometry::mainnet(),
                                      std::uint64_t regular_cells = kRegularSampleSize) {
    return (validators * validator_sample_cells(g) + regulars * regular_cells) * g.cell_wire_bytes();
}

inline std::uint64_t assignment_floor(std::span<const SampleAssignment> assignments, const BlobGeometry& g) {
    std::uint64_t cells = 0;
    for (const auto& a : assignments) cells += a.cells.size();
    return cells * g.cell_wire_bytes();
}

// Nearest-rank percentile; NaN for an empty sample.
inline double percentile(std::vector<double> values, double p) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(values.size())));
    return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

struct RoleStats {
    std::uint64_t nodes = 0;
    std::uint64_t success = 0;
    std::uint64_t failure = 0;
    std::uint64_t deadline_met = 0;
    std::uint64_t deadline_missed = 0;
    double p50_ms = std::numeric_limits<double>::quiet_NaN();
    double p90_ms = std::numeric_limits<double>::quiet_NaN();
    double p99_ms = std::numeric_limits<double>::quiet_NaN();

    double success_rate() const { return nodes ? static_cast<double>(success) / static_cast<double>(nodes) : 1.0; }
    double deadline_rate() const { return nodes ? static_cast<double>(deadline_met) / static_cast<double>(nodes) : 1.0; }
    bool consistent() const { return success + failure == nodes && deadline_met + deadline_missed == nodes; }
};

inline double to_ms(Micros t) { return static_cast<double>(t) / static_cast<double>(kMillis); }

// Deadlines are exclusive: a completion exactly at the deadline misses it.
inline RoleStats summarize_role(std::span<const SamplingVerdict> verdicts, Micros deadline) {
    RoleStats s;
    std::vector<double> done;
    for (const auto& v : verdicts) {
        ++s.nodes;
        v.success ? ++s.success : ++s.failure;
        const bool met = v.success && v.completion_time && *v.completion_time < deadline;
        met ? ++s.deadline_met : ++s.deadline_missed;
        if (v.success && v.completion_time) done.push_back(to_ms(*v.completion_time));
    }
    s.p50_ms = percentile(done, 50);
    s.p90_ms = percentile(done, 90);
    s.p99_ms = percentile(done, 99);
    return s;
}

inline double deadline_attainment(std::span<const SamplingVerdict> verdicts, Micros deadline) {
    return summarize_role(verdicts, deadline).deadline_rate();
}

// One row of the CSV contract.
struct CsvRecord {
    std::uint64_t slot = 0;
    std::string strategy;
    std::uint64_t bytes_cell = 0;
    std::uint64_t bytes_signaling = 0;
    std::uint64_t bytes_header = 0;
    std::uint64_t producer_egress = 0;
    double v_success_rate = 0;
    double r_success_rate = 0;
    double v_deadline_rate = 0;
    double r_deadline_rate = 0;
    double p50_ms = 0;
    double p90_ms = 0;
    double p99_ms = 0;
    double cost_usd = 0;

    // NaN compares equal to NaN here.
    friend bool operator==(const CsvRecord& a, const CsvRecord& b) {
        auto same = [](double x, double y) { return (std::isnan(x) && std::isnan(y)) || x == y; };
        return a.slot == b.slot && a.strategy == b.strategy && a.bytes_cell == b.bytes_cell &&
               a.bytes_signaling == b.bytes_signaling && a.bytes_header == b.bytes_header &&
               a.producer_egress == b.producer_egress && same(a.v_success_rate, b.v_success_rate) &&
               same(a.r_success_rate, b.r_success_rate) && same(a.v_deadline_rate, b.v_deadline_rate) &&
               same(a.r_deadline_rate, b.r_deadline_rate) && same(a.p50_ms, b.p50_ms) && same(a.p90_ms, b.p90_ms) &&
               same(a.p99_ms, b.p99_ms) && same(a.cost_usd, b.cost_usd);
    }
};

inline constexpr std::string_view kCsvHeader =
    "slot,strategy,bytes_cell,bytes_signaling,bytes_header,producer_egress,v_success_rate,r_success_rate,"
    "v_deadline_rate,r_deadline_rate,p50_ms,p90_ms,p99_ms,cost_usd";

struct SlotReport {
    std::uint64_t slot = 0;
    StrategyKind strategy = StrategyKind::Centralized;
    std::array<std::uint64_t, kTrafficClasses> bytes{};  // sent, by traffic class
    std::uint64_t producer_egress = 0;
    RoleStats validators;
    RoleStats regulars;
    double p50_ms = std::numeric_limits<double>::quiet_NaN();  // pooled over both roles
    double p90_ms = std::numeric_limits<double>::quiet_NaN();
    double p99_ms = std::numeric_limits<double>::quiet_NaN();
    double cost_usd = 0;
    std::uint64_t floor_bytes = 0;
    std::uint64_t withheld_cells = 0;

    // Gets by sampling nodes of the one cell an adversary targets.
    std::uint64_t target_gets_ok = 0;
    std::uint64_t target_gets_failed = 0;
    // Largest number of copies of one cell a node received within one topic.
    std::uint32_t max_mesh_copies = 0;

    std::uint64_t bytes_of(TrafficClass c) const { return bytes[static_cast<std::size_t>(c)]; }
    std::uint64_t total_bytes() const {
        std::uint64_t t = 0;
        for (auto b : bytes) t += b;
        return t;
    }
    double signaling_fraction() const {
        const auto t = total_bytes();
        return t ? static_cast<double>(bytes_of(TrafficClass::Signaling)) / static_cast<double>(t) : 0.0;
    }

    CsvRecord csv() const {
        return {slot,
                to_string(strategy),
                bytes_of(TrafficClass::CellTransfer),
                bytes_of(TrafficClass::Signaling),
                bytes_of(TrafficClass::Header),
                producer_egress,
                validators.success_rate(),
                regulars.success_rate(),
                validators.deadline_rate(),
                regulars.deadline_rate(),
                p50_ms,
                p90_ms,
                p99_ms,
                cost_usd};
    }
};

struct ReportInputs {
    std::uint64_t slot = 0;
    StrategyKind strategy = StrategyKind::Centralized;
    TrafficCounters traffic;  // slot delta of the global counters
    std::uint64_t producer_egress = 0;
    std::span<const SamplingVerdict> validator_verdicts;
    std::span<const SamplingVerdict> regular_verdicts;
    SlotParameters slot_params;
    CostModel cost;
    std::uint64_t floor_bytes = 0;
};

inline SlotReport make_report(const ReportInputs& in) {
    SlotReport r;
    r.slot = in.slot;
    r.strategy = in.strategy;
    for (std::size_t c = 0; c < kTrafficClasses; ++c) r.bytes[c] = in.traffic.bytes_sent[c];
    r.producer_egress = in.producer_egress;
    r.validators = summarize_role(in.validator_verdicts, in.slot_params.validator_deadline);
    r.regulars = summarize_role(in.regular_verdicts, in.slot_params.regular_deadline);
    std::vector<double> pooled;
    for (auto part : {in.validator_verdicts, in.regular_verdicts})
        for (const auto& v : part)
            if (v.success && v.completion_time) pooled.push_back(to_ms(*v.completion_time));
    r.p50_ms = percentile(pooled, 50);
    r.p90_ms = percentile(pooled, 90);
    r.p99_ms = percentile(pooled, 99);
    r.cost_usd = producer_cost(in.producer_egress, in.cost);
    r.floor_bytes = in.floor_bytes;
    return r;
}

namespace detail {

inline void put_double(std::string& out, double v) {
    if (std::isnan(v)) {
        out += "nan";
        return;
    }
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

template <class T>
T parse_field(std::string_view s, std::string_view name) {
    T v{};
    if constexpr (std::is_floating_point_v<T>) {
        if (s == "nan") return std::numeric_limits<T>::quiet_NaN();
    }
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw Error("csv: bad value '" + std::string(s) + "' for " + std::string(name));
    return v;
}

}  // namespace detail

inline std::string to_csv_line(const CsvRecord& r) {
    std::string s;
    s += std::to_string(r.slot) + ',' + r.strategy + ',' + std::to_string(r.bytes_cell) + ',' +
         std::to_string(r.bytes_signaling) + ',' + std::to_string(r.bytes_header) + ',' + std::to_string(r.producer_egress);
    for (double d : {r.v_success_rate, r.r_success_rate, r.v_deadline_rate, r.r_deadline_rate, r.p50_ms, r.p90_ms, r.p99_ms,
                     r.cost_usd}) {
        s += ',';
        detail::put_double(s, d);
    }
    return s;
}

inline CsvRecord parse_csv_line(std::string_view line) {
    std::vector<std::string_view> f;
    std::size_t pos = 0;
    while (true) {
        const auto comma = line.find(',', pos);
        f.push_back(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    if (f.size() != 14) throw Error("csv: expected 14 fields, got " + std::to_string(f.size()));
    using detail::parse_field;
    CsvRecord r;
    r.slot = parse_field<std::uint64_t>(f[0], "slot");
    r.strategy = std::string(f[1]);
    r.bytes_cell = parse_field<std::uint64_t>(f[2], "bytes_cell");
    r.bytes_signaling = parse_field<std::uint64_t>(f[3], "bytes_signaling");
    r.bytes_header = parse_field<std::uint64_t>(f[4], "bytes_header");
    r.producer_egress = parse_field<std::uint64_t>(f[5], "producer_egress");
    r.v_success_rate = parse_field<double>(f[6], "v_success_rate");
    r.r_success_rate = parse_field<double>(f[7], "r_success_rate");
    r.v_deadline_rate = parse_field<double>(f[8], "v_deadline_rate");
    r.r_deadline_rate = parse_field<double>(f[9], "r_deadline_rate");
    r.p50_ms = parse_field<double>(f[10], "p50_ms");
    r.p90_ms = parse_field<double>(f[11], "p90_ms");
    r.p99_ms = parse_field<double>(f[12], "p99_ms");
    r.cost_usd = parse_field<double>(f[13], "cost_usd");
    return r;
}

inline void write_csv(std::ostream& out, std::span<const SlotReport> reports) {
    out << kCsvHeader << '\n';
    for (const auto& r : reports) out << to_csv_line(r.csv()) << '\n';
}

inline std::vector<CsvRecord> read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) throw Error("csv: missing or unexpected header row");
    std::vector<CsvRecord> out;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(parse_csv_line(line));
    return out;
}

// Fixed-width text table for terminals.
inline std::string format_summary(std::span<const SlotReport> reports) {
    std::ostringstream os;
    os << std::left << std::setw(6) << "slot" << std::setw(13) << "strategy" << std::right << std::setw(14) << "total MB"
       << std::setw(14) << "producer MB" << std::setw(9) << "sig %" << std::setw(9) << "v ok" << std::setw(9) << "r ok"
       << std::setw(9) << "v <4s" << std::setw(9) << "r <10s" << std::setw(10) << "p50 ms" << std::setw(10) << "p99 ms"
       << std::setw(11) << "cost USD" << '\n';
    os << std::fixed;
    for (const auto& r : reports) {
        os << std::left << std::setw(6) << r.slot << std::setw(13) << to_string(r.strategy) << std::right << std::setprecision(2)
           << std::setw(14) << static_cast<double>(r.total_bytes()) / kMB << std::setw(14)
           << static_cast<double>(r.producer_egress) / kMB << std::setprecision(1) << std::setw(9)
           << 100 * r.signaling_fraction() << std::setprecision(3) << std::setw(9) << r.validators.success_rate()
           << std::setw(9) << r.regulars.success_rate() << std::setw(9) << r.validators.deadline_rate() << std::setw(9)
           << r.regulars.deadline_rate() << std::setprecision(1) << std::setw(10) << r.p50_ms << std::setw(10) << r.p99_ms
           << std::setprecision(4) << std::setw(11) << r.cost_usd << '\n';
    }
    return os.str();
}

}  // namespace dassim
