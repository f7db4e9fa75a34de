#include <catch_amalgamated.hpp>

#include "dassim/commitment.hpp"
#include "dassim/dht.hpp"
#include "dassim/population.hpp"
#include "net_fixture.hpp"

#include <cmath>
#include <memory>
#include <set>

using namespace dassim;
using namespace dassim::testing;

namespace {

NodeId id_with_top_byte(std::uint8_t b, std::uint8_t low = 0) {
    NodeId id;
    id.bytes[0] = b;
    id.bytes[31] = low;
    return id;
}

}  // namespace

TEST_CASE("xor distance basics", "[kademlia]") {
    DeterministicRng rng(1);
    const auto a = random_key(rng), b = random_key(rng);
    CHECK(xor_distance(a, a).is_zero());
    CHECK(xor_distance(a, b) == xor_distance(b, a));
    const auto d = xor_distance(id_with_top_byte(0x80), NodeId{});
    CHECK(d.leading_zero_bits() == 0);
    CHECK(d.bit(255));
    CHECK(d.trailing_zero_bits() == 255);  // exactly 2^255
    CHECK(bucket_index(NodeId{}, id_with_top_byte(0x80)) == 255);
    CHECK(bucket_index(NodeId{}, id_with_top_byte(0, 1)) == 0);
}

TEST_CASE("bucket admission rules", "[kademlia]") {
    RoutingTable t(NodeId{}, 4, 2);
    // Empty table accepts.
    CHECK(t.admit({id_with_top_byte(0x80, 1), 1, 7, 0}).result == AdmitResult::Admitted);
    CHECK(t.admit({id_with_top_byte(0x81, 1), 2, 7, 0}).result == AdmitResult::Admitted);
    // Third record from the same subnet in the same bucket.
    CHECK(t.admit({id_with_top_byte(0x82, 1), 3, 7, 0}).result == AdmitResult::RejectedSubnetLimit);
    // Same subnet in a different bucket is fine.
    CHECK(t.admit({id_with_top_byte(0x40, 1), 4, 7, 0}).result == AdmitResult::Admitted);
    CHECK(t.admit({id_with_top_byte(0x83, 1), 5, 8, 0}).result == AdmitResult::Admitted);
    CHECK(t.admit({id_with_top_byte(0x84, 1), 6, 9, 0}).result == AdmitResult::Admitted);
    // Full bucket with live residents.
    const auto full = t.admit({id_with_top_byte(0x85, 1), 7, 10, 0}, [](const NodeRecord&) { return true; });
    CHECK(full.result == AdmitResult::RejectedBucketFull);
    CHECK(full.pinged.has_value());
    // Full bucket whose oldest resident is gone.
    const auto ev = t.admit({id_with_top_byte(0x86, 1), 8, 11, 0}, [](const NodeRecord& r) { return r.address != 2; });
    CHECK(ev.result == AdmitResult::Evicted);
    REQUIRE(ev.evicted);
    CHECK(ev.evicted->address == 2);
    CHECK(t.admit({NodeId{}, 9, 1, 0}).result == AdmitResult::RejectedSelf);
    CHECK(t.bucket(255).size() == 4);
    CHECK(t.audit());
}

TEST_CASE("routing table invariants hold under random admission", "[kademlia][property]") {
    DeterministicRng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        RoutingTable t(random_key(rng), 8, 2);
        for (int i = 0; i < 2000; ++i) {
            NodeRecord r{random_key(rng), static_cast<NodeIndex>(i), static_cast<std::uint32_t>(rng.below(16)), i};
            if (rng.bernoulli(0.1)) r.id.bytes[0] = t.owner().bytes[0];  // populate deeper buckets
            t.admit(r, [&](const NodeRecord&) { return rng.bernoulli(0.5); });
            if (i % 97 == 0) REQUIRE(t.audit());
        }
        CHECK(t.audit());
        for (std::size_t b = 0; b < 256; ++b) CHECK(t.bucket(b).size() <= 8);
    }
}

TEST_CASE("pow identities carry the required trailing zeros", "[kademlia][pow]") {
    DeterministicRng rng(4, streams::kIdentity);
    CHECK(pow_node_id(rng, 0).attempts == 1);
    double total = 0;
    for (int i = 0; i < 100; ++i) {
        const auto p = pow_node_id(rng, 8);
        CHECK(p.id.trailing_zero_bits() >= 8);
        CHECK(p.id == derive_node_id(p.secret));
        total += static_cast<double>(p.attempts);
    }
    const double mean = total / 100;
    CHECK(mean >= 128);
    CHECK(mean <= 512);
    CHECK_THROWS_AS(pow_node_id(rng, 25), ConfigError);
    CHECK_THROWS_AS(pow_node_id(rng, 20, {}, 10), Error);
}

TEST_CASE("region membership", "[kademlia]") {
    const auto key = id_with_top_byte(0b1011'0000);
    const auto r = Region::of(key, 4);
    CHECK(r.contains(id_with_top_byte(0b1011'1111)));
    CHECK_FALSE(r.contains(id_with_top_byte(0b1010'1111)));
    CHECK(Region::of(key, 0).contains(NodeId{}));
    CHECK_THROWS_AS(Region::of(key, 25), ConfigError);
    CHECK(cell_key(1, {0, 0}) != cell_key(2, {0, 0}));
    CHECK(cell_key(1, {0, 1}) != cell_key(1, {1, 0}));
}

TEST_CASE("two-node lookup contacts the single peer", "[dht]") {
    auto net = make_net(2, 5);
    const auto r = run_lookup(net, 0, net.pop.nodes[1].node_id);
    CHECK(r.status == LookupStatus::Ok);
    CHECK(r.trace.contacted == 1);
    REQUIRE(r.closest.size() == 1);
    CHECK(r.closest[0].address == 1);
}

TEST_CASE("lookup with an empty table fails", "[dht]") {
    Engine eng(1, LatencyModel::fixed(kMillis));
    DhtNetwork dht(eng, {});
    dht.add_node(0, NodeId{}, 0);
    LookupResult out;
    dht.lookup(0, id_with_top_byte(1), [&](const LookupResult& r) { out = r; });
    eng.run();
    CHECK(out.status == LookupStatus::LookupFailed);
}

TEST_CASE("iterative lookups equal brute-force k-closest", "[dht][property]") {
    for (std::size_t n : {1000u, 2000u}) {
        auto net = make_net(n, 6 + n);
        DeterministicRng rng(7 + n);
        for (int t = 0; t < 100; ++t) {
            const auto target = random_key(rng);
            const auto origin = static_cast<NodeIndex>(rng.below(n));
            const auto r = run_lookup(net, origin, target);
            REQUIRE(r.status == LookupStatus::Ok);
            auto truth = net.dht->true_closest(target, 17);
            std::erase_if(truth, [&](const NodeRecord& x) { return x.address == origin; });
            truth.resize(16);
            CHECK(addresses(r.closest) == addresses(truth));
        }
        CHECK(net.dht->audit());
    }
}

TEST_CASE("hop counts are logarithmic and contacted counts scale sub-linearly", "[dht][property]") {
    auto mean_of = [](std::size_t n, double& hops) {
        auto net = make_net(n, 11 + n);
        DeterministicRng rng(12 + n);
        double contacted = 0;
        hops = 0;
        constexpr int kLookups = 300;
        for (int t = 0; t < kLookups; ++t) {
            const auto r = run_lookup(net, static_cast<NodeIndex>(rng.below(n)), random_key(rng));
            contacted += r.trace.contacted;
            hops += r.trace.hops;
        }
        hops /= kLookups;
        return contacted / kLookups;
    };
    double hops1 = 0, hops2 = 0;
    const double c1 = mean_of(1000, hops1);
    const double c2 = mean_of(2000, hops2);
    CHECK(hops1 >= std::log2(1000.0) / 2);
    CHECK(hops1 <= 2 * std::log2(1000.0));
    CHECK(c2 < 1.25 * c1);
    CHECK(c2 >= c1 * 0.9);
}

TEST_CASE("recursive lookups agree with iterative ones and use one round trip", "[dht]") {
    DhtConfig rc;
    rc.lookup.mode = LookupMode::Recursive;
    auto it_net = make_net(1000, 21);
    auto rc_net = make_net(1000, 21, rc);
    DeterministicRng rng(22);
    for (int t = 0; t < 50; ++t) {
        const auto target = random_key(rng);
        const auto origin = static_cast<NodeIndex>(rng.below(1000));
        const auto a = run_lookup(it_net, origin, target);
        const auto b = run_lookup(rc_net, origin, target);
        REQUIRE(b.status == LookupStatus::Ok);
        CHECK(addresses(a.closest) == addresses(b.closest));
        CHECK(b.trace.round_trips == 1);
        CHECK(b.trace.round_trips < a.trace.round_trips);
    }
}

TEST_CASE("a dropping intermediate stalls recursive but not iterative lookups", "[dht]") {
    DhtConfig rc;
    rc.lookup.mode = LookupMode::Recursive;
    auto it_net = make_net(300, 23);
    auto rc_net = make_net(300, 23, rc);
    DeterministicRng rng(24);
    const auto target = random_key(rng);
    // The origin's closest known peer is the first recursive hop.
    const auto first = rc_net.dht->node(0).table.closest(target, 1).at(0).address;
    it_net.dht->set_behavior(first, DhtBehavior::DropQueries);
    rc_net.dht->set_behavior(first, DhtBehavior::DropQueries);
    const auto a = run_lookup(it_net, 0, target);
    const auto b = run_lookup(rc_net, 0, target);
    CHECK(a.status == LookupStatus::Ok);
    CHECK(a.trace.failed >= 1);
    CHECK(b.status == LookupStatus::LookupFailed);
    REQUIRE(b.trace.dropped_by);
    CHECK(*b.trace.dropped_by == first);
}

TEST_CASE("put then get round-trips a verified cell", "[dht]") {
    auto net = make_net(100, 25);
    const auto g = BlobGeometry{2, 2, 512, 48};
    DeterministicRng rng(26, streams::kBlob);
    auto blob = extend_blob(SourceBlob::random(g, rng));
    const auto commitment = seal_blob(blob);
    const auto cell = blob.cell({1, 2});
    const auto key = cell_key(0, cell.coord);

    LookupResult put;
    net.dht->put(0, key, cell, [&](const LookupResult& r) { put = r; });
    net.engine->run();
    CHECK(put.status == LookupStatus::Ok);
    CHECK(put.stored_at.size() == 16);

    auto check = [&](const Cell& c) { return c.coord == cell.coord && verify_cell(commitment, c); };
    LookupResult got;
    net.dht->get(57, key, check, [&](const LookupResult& r) { got = r; });
    net.engine->run();
    REQUIRE(got.status == LookupStatus::Ok);
    CHECK(got.value->payload == cell.payload);
    CHECK(got.value->proof == cell.proof);

    LookupResult missing;
    net.dht->get(57, cell_key(0, {0, 0}), check, [&](const LookupResult& r) { missing = r; });
    net.engine->run();
    CHECK(missing.status == LookupStatus::NotFound);
    CHECK(net.engine->ledger().conserved());
}

TEST_CASE("disjoint paths resist query-dropping nodes", "[dht][property]") {
    auto success_rate = [](std::size_t paths) {
        DhtConfig cfg;
        cfg.lookup.mode = LookupMode::Recursive;
        cfg.lookup.disjoint_paths = paths;
        auto net = make_net(1000, 31, cfg);
        DeterministicRng rng(32);
        for (auto i : rng.sample_without_replacement(999, 100)) net.dht->set_behavior(static_cast<NodeIndex>(i + 1), DhtBehavior::DropQueries);
        int ok = 0;
        constexpr int kLookups = 200;
        for (int t = 0; t < kLookups; ++t) {
            NodeIndex origin = 0;
            const auto r = run_lookup(net, origin, random_key(rng));
            ok += r.status == LookupStatus::Ok ? 1 : 0;
        }
        return static_cast<double>(ok) / kLookups;
    };
    const double d1 = success_rate(1);
    const double d3 = success_rate(3);
    INFO("d=1 " << d1 << " d=3 " << d3);
    CHECK(d3 >= 2 * d1);
}

TEST_CASE("region enumeration finds every member", "[dht][region]") {
    auto net = make_net(1024, 41);
    DeterministicRng rng(42);
    const double mean = 1024.0 / 128, sigma = std::sqrt(1024.0 * (1.0 / 128) * (127.0 / 128));
    for (int t = 0; t < 20; ++t) {
        const auto key = random_key(rng);
        const auto region = Region::of(key, 7);
        std::set<NodeIndex> truth;
        for (const auto& p : net.pop.nodes)
            if (region.contains(p.node_id)) truth.insert(p.index);
        LookupResult r;
        net.dht->region_lookup(static_cast<NodeIndex>(rng.below(1024)), key, 7, [&](const LookupResult& x) { r = x; });
        net.engine->run();
        if (truth.empty()) {
            CHECK(r.status == LookupStatus::RegionEmpty);
            continue;
        }
        CHECK(r.status == LookupStatus::Ok);
        CHECK(addresses(r.closest) == truth);
        CHECK(std::abs(static_cast<double>(r.closest.size()) - mean) <= 3 * sigma);
    }
}

TEST_CASE("depth-zero regions enumerate the whole network", "[dht][region]") {
    auto net = make_net(64, 43);
    LookupResult r;
    net.dht->region_lookup(5, NodeId{}, 0, [&](const LookupResult& x) { r = x; });
    net.engine->run();
    CHECK(r.closest.size() == 64);

    auto big = make_net(1100, 44);
    CHECK_THROWS_AS(big.dht->region_lookup(0, NodeId{}, 0, {}), ConfigError);
}

TEST_CASE("region put stores on every member and region get returns it", "[dht][region]") {
    auto net = make_net(512, 45);
    const auto g = BlobGeometry{2, 2, 512, 48};
    DeterministicRng rng(46, streams::kBlob);
    auto blob = extend_blob(SourceBlob::random(g, rng));
    const auto commitment = seal_blob(blob);
    const auto cell = blob.cell({3, 3});
    const auto key = cell_key(9, cell.coord);
    LookupResult put;
    net.dht->region_put(0, key, 6, cell, [&](const LookupResult& r) { put = r; });
    net.engine->run();
    REQUIRE(put.status == LookupStatus::Ok);
    for (auto a : put.stored_at) CHECK(net.dht->node(a).store.count(key) == 1);

    LookupResult got;
    net.dht->region_get(300, key, 6, [&](const Cell& c) { return verify_cell(commitment, c); },
                        [&](const LookupResult& r) { got = r; });
    net.engine->run();
    REQUIRE(got.status == LookupStatus::Ok);
    CHECK(got.value->payload == cell.payload);
}

TEST_CASE("joining nodes become reachable", "[dht]") {
    auto net = make_net(200, 47);
    DeterministicRng rng(48, streams::kIdentity);
    const auto idx = net.engine->add_node();
    const auto id = random_node_id(rng);
    net.dht->add_node(idx, id, 123);
    LookupResult joined;
    net.dht->join(idx, 3, [&](const LookupResult& r) { joined = r; });
    net.engine->run();
    CHECK(joined.status == LookupStatus::Ok);
    CHECK(net.dht->node(idx).table.size() >= 16);
    const auto r = run_lookup(net, 17, id);
    CHECK(addresses(r.closest).count(idx) == 1);
}
