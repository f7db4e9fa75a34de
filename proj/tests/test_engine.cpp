#include <catch_amalgamated.hpp>

#include "dassim/engine.hpp"

#include <vector>

using namespace dassim;

TEST_CASE("equal fire times run in insertion order", "[engine]") {
    Engine eng(2, LatencyModel::fixed(kMillis));
    std::vector<int> order;
    for (int i = 0; i < 5; ++i) eng.schedule(10, EventKind::TimerExpiry, [&order, i] { order.push_back(i); });
    eng.run();
    CHECK(order == std::vector<int>{0, 1, 2, 3, 4});
    CHECK(eng.now() == 10);
}

TEST_CASE("empty queue returns immediately", "[engine]") {
    Engine eng(1, LatencyModel::fixed(kMillis));
    eng.run();
    CHECK(eng.now() == 0);
    CHECK(eng.processed_count() == 0);
    eng.run_until(5 * kSeconds);
    CHECK(eng.now() == 5 * kSeconds);
}

TEST_CASE("scheduling in the past is rejected", "[engine]") {
    Engine eng(1, LatencyModel::fixed(kMillis));
    eng.run_until(100);
    CHECK_THROWS_AS(eng.schedule(99, EventKind::TimerExpiry, [] {}), Error);
}

TEST_CASE("constant latency delivery time", "[engine]") {
    Engine eng(2, LatencyModel::fixed(100 * kMillis));
    eng.run_until(7 * kSeconds);
    Micros delivered = -1;
    const auto at = eng.send(0, 1, 560, TrafficClass::CellTransfer, [&] { delivered = eng.now(); });
    eng.run();
    CHECK(at == 7 * kSeconds + 100 * kMillis);
    CHECK(delivered == at);
    CHECK(eng.ledger().node(1).received(TrafficClass::CellTransfer) == 560);
}

TEST_CASE("uplink serialization precedes propagation", "[engine]") {
    Engine eng(2, LatencyModel::fixed(1));
    eng.set_bandwidth(0, {1'000'000, 0});
    const auto at = eng.send(0, 1, 1'144'640, TrafficClass::CellTransfer, {});
    CHECK(at == 1'144'640 + 1);  // 1.14464 s of serialization plus 1 us of latency
    // A second message queues behind the first on the same uplink.
    const auto second = eng.send(0, 1, 1'000'000, TrafficClass::CellTransfer, {});
    CHECK(second == 1'144'640 + 1'000'000 + 1);
    eng.run();
}

TEST_CASE("downlink serialization is applied at the receiver", "[engine]") {
    Engine eng(3, LatencyModel::fixed(10));
    eng.set_bandwidth(2, {0, 1000});
    const auto a = eng.send(0, 2, 1000, TrafficClass::Signaling, {});
    const auto b = eng.send(1, 2, 1000, TrafficClass::Signaling, {});
    CHECK(a == 10 + 1'000'000);
    CHECK(b == 10 + 2'000'000);
    eng.run();
}

TEST_CASE("a million random events are all processed in order", "[engine]") {
    Engine eng(1, LatencyModel::fixed(kMillis));
    DeterministicRng rng(5, streams::kEngine);
    Micros last = 0;
    bool monotone = true;
    for (int i = 0; i < 1'000'000; ++i)
        eng.schedule(static_cast<Micros>(rng.below(10'000'000)), EventKind::TimerExpiry, [&] {
            monotone = monotone && eng.now() >= last;
            last = eng.now();
        });
    eng.run();
    CHECK(monotone);
    CHECK(eng.processed_count() == 1'000'000);
    CHECK(eng.processed_count() == eng.scheduled_count());
}

TEST_CASE("sending to unknown or same node is an error", "[engine]") {
    Engine eng(2, LatencyModel::fixed(kMillis));
    CHECK_THROWS_AS(eng.send(0, 2, 1, TrafficClass::Signaling, {}), Error);
    CHECK_THROWS_AS(eng.send(5, 1, 1, TrafficClass::Signaling, {}), Error);
    CHECK_THROWS_AS(eng.send(1, 1, 1, TrafficClass::Signaling, {}), Error);
}

namespace {

std::uint64_t gossip_run(std::uint64_t seed, TrafficLedger* out = nullptr) {
    constexpr std::size_t kNodes = 50;
    Engine eng(kNodes, LatencyModel::uniform(40 * kMillis, 160 * kMillis, seed));
    DeterministicRng rng(seed, streams::kEngine);
    eng.set_link_filter([](NodeIndex from, NodeIndex to, TrafficClass) { return (from + to) % 7 == 0; });
    std::vector<bool> seen(kNodes, false);
    std::function<void(NodeIndex)> on_receive = [&](NodeIndex n) {
        if (seen[n]) return;
        seen[n] = true;
        for (int i = 0; i < 4; ++i) {
            auto peer = static_cast<NodeIndex>(rng.below(kNodes));
            if (peer == n) continue;
            eng.send(n, peer, 560, TrafficClass::CellTransfer, [&, peer] { on_receive(peer); });
        }
    };
    on_receive(0);
    eng.run();
    if (out) *out = eng.ledger();
    return eng.trace_hash();
}

}  // namespace

TEST_CASE("identical seeds give identical traces; drops are conserved", "[engine]") {
    TrafficLedger ledger;
    const auto a = gossip_run(1, &ledger);
    CHECK(a == gossip_run(1));
    CHECK(a != gossip_run(2));
    CHECK(ledger.conserved());
    CHECK(ledger.global().total_dropped() > 0);
    CHECK(ledger.global().total_sent() == ledger.global().total_received() + ledger.global().total_dropped());
}

TEST_CASE("uniform latency is per-link, symmetric and in range", "[engine]") {
    const auto m = LatencyModel::uniform(40 * kMillis, 160 * kMillis, 9);
    for (NodeIndex a = 0; a < 50; ++a) {
        for (NodeIndex b = a + 1; b < 50; ++b) {
            const auto l = m.latency(a, b);
            CHECK(l >= 40 * kMillis);
            CHECK(l <= 160 * kMillis);
            CHECK(l == m.latency(b, a));
        }
    }
}

TEST_CASE("latency model validation", "[engine]") {
    CHECK_THROWS_AS(LatencyModel::fixed(0).validate(), ConfigError);
    CHECK_THROWS_AS(LatencyModel::uniform(50, 10).validate(), ConfigError);
    CHECK_THROWS_AS(LatencyModel::regions({{10, 20}, {30, 10}}, {}).validate(), ConfigError);
    const auto ok = LatencyModel::regions({{10, 20}, {20, 10}}, {0, 1, 1});
    CHECK_NOTHROW(ok.validate());
    CHECK(ok.latency(0, 1) == 20);
    CHECK(ok.latency(1, 2) == 10);
}
