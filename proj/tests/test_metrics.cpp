#include <catch_amalgamated.hpp>

#include "dassim/metrics.hpp"

#include <cmath>
#include <sstream>

using namespace dassim;

namespace {

SamplingVerdict done_at(Micros t) {
    SamplingVerdict v;
    v.success = true;
    v.completion_time = t;
    return v;
}

}  // namespace

TEST_CASE("efficiency floor arithmetic", "[metrics][floor]") {
    CHECK(efficiency_floor(0, 0) == 0);
    CHECK(efficiency_floor(1, 0) == 1'144'640);
    CHECK(efficiency_floor(0, 1) == 42'000);
    // 500,000 * 2044 * 560 + 1,200 * 75 * 560
    CHECK(efficiency_floor(500'000, 1'200) == 572'370'400'000ull);
    CHECK(efficiency_floor(500'000, 1'200) > reference::kFloorBytes);
    CHECK(validator_sample_cells(BlobGeometry::desk()) == 60);
}

TEST_CASE("cost model reproduces the reference figures", "[metrics][cost]") {
    const CostModel m;
    const double per_block = producer_cost(reference::kFloorBytes, m);
    CHECK(per_block == Catch::Approx(reference::kCentralizedCostUsd).epsilon(0.02));
    const double monthly = monthly_cost(per_block, m);
    CHECK(monthly == Catch::Approx(per_block * 216'000));
    CHECK(std::abs(monthly - reference::kCentralizedMonthlyUsd) / reference::kCentralizedMonthlyUsd < 0.10);

    const auto g = BlobGeometry::mainnet();
    const double one_copy = producer_cost(146'800'640, m);
    CHECK(one_copy == Catch::Approx(0.1468006 * 0.0511).epsilon(1e-6));
    CHECK(copies_for_cost(reference::kGossipCostUsd, g, m) == Catch::Approx(4.0).epsilon(0.01));
    CHECK(producer_cost(4 * 146'800'640, m) == Catch::Approx(reference::kGossipCostUsd).epsilon(0.10));
}

TEST_CASE("cost is linear in bytes and price", "[metrics][cost][property]") {
    CostModel a, b;
    b.egress_price_per_gb = 3 * a.egress_price_per_gb;
    for (std::uint64_t bytes : {1ull, 1000ull, 123'456'789ull, 572'370'400'000ull}) {
        CHECK(producer_cost(2 * bytes, a) == Catch::Approx(2 * producer_cost(bytes, a)));
        CHECK(producer_cost(bytes, b) == Catch::Approx(3 * producer_cost(bytes, a)));
    }
    CostModel bad;
    bad.egress_price_per_gb = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("deadlines are strict", "[metrics][deadline]") {
    const auto sp = SlotParameters::mainnet();
    std::vector<SamplingVerdict> at_zero(5, done_at(0));
    CHECK(deadline_attainment(at_zero, sp.validator_deadline) == 1.0);
    CHECK(deadline_attainment(at_zero, sp.regular_deadline) == 1.0);
    std::vector<SamplingVerdict> late(5, done_at(4 * kSeconds + 1));
    CHECK(deadline_attainment(late, sp.validator_deadline) == 0.0);
    std::vector<SamplingVerdict> exact(5, done_at(4 * kSeconds));
    CHECK(deadline_attainment(exact, sp.validator_deadline) == 0.0);
}

TEST_CASE("role summaries count every node once", "[metrics]") {
    std::vector<SamplingVerdict> vs{done_at(100 * kMillis), done_at(5 * kSeconds), SamplingVerdict{}, done_at(300 * kMillis)};
    const auto s = summarize_role(vs, 4 * kSeconds);
    CHECK(s.consistent());
    CHECK(s.nodes == 4);
    CHECK(s.success == 3);
    CHECK(s.deadline_met == 2);
    CHECK(s.p50_ms == 300.0);
    CHECK(s.p99_ms == 5000.0);
    CHECK(std::isnan(summarize_role({}, 1).p50_ms));
}

TEST_CASE("nearest-rank percentiles", "[metrics]") {
    std::vector<double> v;
    for (int i = 1; i <= 100; ++i) v.push_back(i);
    CHECK(percentile(v, 50) == 50);
    CHECK(percentile(v, 90) == 90);
    CHECK(percentile(v, 99) == 99);
    CHECK(percentile({7.0}, 99) == 7.0);
}

TEST_CASE("reports derive rates, pooled percentiles and signaling fraction", "[metrics]") {
    std::vector<SamplingVerdict> v{done_at(1 * kSeconds), done_at(2 * kSeconds)};
    std::vector<SamplingVerdict> r{done_at(3 * kSeconds), SamplingVerdict{}};
    ReportInputs in;
    in.slot = 4;
    in.strategy = StrategyKind::GossipMesh;
    in.traffic.bytes_sent = {600, 300, 100};
    in.producer_egress = 200;
    in.validator_verdicts = v;
    in.regular_verdicts = r;
    const auto rep = make_report(in);
    CHECK(rep.total_bytes() == 1000);
    CHECK(rep.signaling_fraction() == Catch::Approx(0.3));
    CHECK(rep.validators.success_rate() == 1.0);
    CHECK(rep.regulars.success_rate() == 0.5);
    CHECK(rep.p50_ms == 2000.0);
    CHECK(rep.p99_ms == 3000.0);
}

TEST_CASE("CSV rows round-trip losslessly", "[metrics][csv][property]") {
    SlotReport a;
    a.slot = 7;
    a.strategy = StrategyKind::DhtCache;
    a.bytes = {123'456'789, 42, 90'000};
    a.producer_egress = 146'800'640;
    a.validators.nodes = 3;
    a.validators.success = 1;
    a.validators.deadline_met = 1;
    a.p50_ms = 0.1 + 0.2;
    a.p90_ms = 1.0 / 3.0;
    a.cost_usd = producer_cost(a.producer_egress);
    SlotReport b = a;
    b.slot = 8;
    b.strategy = StrategyKind::Centralized;
    b.p99_ms = std::numeric_limits<double>::quiet_NaN();

    std::vector<SlotReport> reports{a, b};
    std::stringstream ss;
    write_csv(ss, reports);
    const auto text = ss.str();
    CHECK(text.rfind(std::string(kCsvHeader) + "\n", 0) == 0);
    const auto back = read_csv(ss);
    REQUIRE(back.size() == 2);
    CHECK(back[0] == a.csv());
    CHECK(back[1] == b.csv());
    CHECK(back[0].p50_ms == 0.1 + 0.2);

    std::stringstream again;
    again << kCsvHeader << '\n' << to_csv_line(back[0]) << '\n' << to_csv_line(back[1]) << '\n';
    CHECK(again.str() == text);

    std::istringstream bad("slot,strategy\n");
    CHECK_THROWS_AS(read_csv(bad), Error);
    CHECK_THROWS_AS(parse_csv_line("1,x,2"), Error);
}

TEST_CASE("summary table has one line per report", "[metrics]") {
    std::vector<SlotReport> reports(3);
    const auto s = format_summary(reports);
    CHECK(std::count(s.begin(), s.end(), '\n') == 4);
}
