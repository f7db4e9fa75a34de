#pragma once

// Scenario description and the slot loop that drives a strategy.

#include "dassim/centralized.hpp"
#include "dassim/dht_strategy.hpp"
#include "dassim/gossip.hpp"

#include <future>
#include <memory>
#include <string>
#include <vector>

namespace dassim {

enum class RegularMode : std::uint8_t { Cells, KofN };

inline const char* to_string(RegularMode m) { return m == RegularMode::Cells ? "cells" : "k_of_n"; }

// Bytes per second; zero is unlimited.
struct BandwidthSpec {
    std::uint64_t producer_uplink = 0;
    std::uint64_t node_uplink = 0;
    std::uint64_t node_downlink = 0;
};

struct Scenario {
    std::string name = "scenario";
    std::uint64_t seed = 1;
    std::uint32_t validators = 100;
    std::uint32_t regulars = 0;
    BlobGeometry geometry = BlobGeometry::desk();
    SlotParameters slot_params = SlotParameters::mainnet();
    LatencyModel latency = LatencyModel::uniform(40 * kMillis, 160 * kMillis);
    BandwidthSpec bandwidth;
    StrategyConfig strategy;
    AdversarySpec adversary;
    std::uint32_t slots = 1;  // 0 runs nothing (arithmetic-only scenarios)
    bool header = true;
    std::uint32_t header_degree = 8;
    RegularMode regular_mode = RegularMode::Cells;
    std::uint32_t regular_samples = kRegularSampleSize;
    std::uint32_t k_of_n_requested = kDefaultKofNRequested;
    std::uint32_t k_of_n_required = kDefaultKofNRequired;
    CostModel cost;
    std::string output;  // CSV path; empty for none

    std::size_t network_size() const { return 1 + static_cast<std::size_t>(validators) + regulars; }

    void validate() const {
        if (validators + regulars < 1) throw ConfigError("validators + regulars must be >= 1");
        if (header && header_degree < 1) throw ConfigError("header_degree must be >= 1");
        geometry.validate();
        slot_params.validate();
        latency.validate();
        strategy.validate();
        cost.validate();
        adversary.validate(network_size());
        if (regular_samples < 1 || regular_samples > geometry.total_cells())
            throw ConfigError("regular_samples must be in [1, " + std::to_string(geometry.total_cells()) + "]");
        if (regular_mode == RegularMode::KofN) {
            if (k_of_n_requested <= kRegularSampleSize) throw ConfigError("k_of_n.n must be > 75");
            if (k_of_n_required > k_of_n_requested) throw ConfigError("k_of_n.k must be <= k_of_n.n");
            if (k_of_n_requested > geometry.total_cells()) throw ConfigError("k_of_n.n exceeds the cell count");
        }
        if (adversary.target_cell && !in_bounds(*adversary.target_cell, geometry))
            throw ConfigError("adversary.target_cell is outside the extended matrix");
        if (strategy.kind == StrategyKind::DhtCache && geometry.proof_bytes == 0)
            throw ConfigError("dht strategy needs geometry.proof_bytes > 0");
    }
};

struct RunResult {
    std::string name;
    StrategyKind strategy = StrategyKind::Centralized;
    std::vector<SlotReport> reports;
    std::uint64_t trace_hash = 0;
};

inline std::unique_ptr<Strategy> make_strategy(StrategyKind k) {
    switch (k) {
        case StrategyKind::Centralized: return std::make_unique<CentralizedStrategy>();
        case StrategyKind::GossipMesh: return std::make_unique<GossipStrategy>();
        case StrategyKind::DhtCache: return std::make_unique<DhtStrategy>();
    }
    throw ConfigError("unknown strategy");
}

// Random overlay of roughly `degree` links per node, used to flood headers.
inline std::vector<std::vector<NodeIndex>> random_overlay(std::size_t n, std::uint32_t degree, DeterministicRng& rng) {
    std::vector<std::vector<NodeIndex>> adj(n);
    if (n < 2) return adj;
    const auto half = std::max<std::uint32_t>(1, (degree + 1) / 2);
    for (NodeIndex u = 0; u < n; ++u) {
        for (std::uint32_t i = 0; i < half; ++i) {
            auto v = static_cast<NodeIndex>(rng.below(n - 1));
            if (v >= u) ++v;
            if (std::find(adj[u].begin(), adj[u].end(), v) != adj[u].end()) continue;
            adj[u].push_back(v);
            adj[v].push_back(u);
        }
    }
    for (auto& a : adj) std::sort(a.begin(), a.end());
    return adj;
}

class Simulation {
public:
    explicit Simulation(Scenario s)
        : scenario_((s.validate(), std::move(s))),
          pop_(make_population(scenario_.seed, scenario_.validators, scenario_.regulars)),
          engine_(pop_.size(), scenario_.latency),
          world_{pop_,
                 engine_,
                 scenario_.seed,
                 scenario_.strategy,
                 scenario_.adversary,
                 controlled_set(scenario_.adversary, pop_.size(), scenario_.seed),
                 scenario_.slot_params,
                 scenario_.geometry},
          strategy_(make_strategy(scenario_.strategy.kind)) {
        const auto& bw = scenario_.bandwidth;
        for (NodeIndex n = 0; n < pop_.size(); ++n)
            engine_.set_bandwidth(n, n == pop_.producer() ? BandwidthBudget{bw.producer_uplink, bw.node_downlink}
                                                           : BandwidthBudget{bw.node_uplink, bw.node_downlink});
        DeterministicRng overlay_rng(scenario_.seed, streams::kTopology);
        overlay_ = random_overlay(pop_.size(), scenario_.header_degree, overlay_rng);
        strategy_->setup(world_);
        engine_.run();
    }

    Simulation(const Simulation&) = delete;
    Simulation& operator=(const Simulation&) = delete;

    const Scenario& scenario() const { return scenario_; }
    const Population& population() const { return pop_; }
    Engine& engine() { return engine_; }
    World& world() { return world_; }
    Strategy& strategy() { return *strategy_; }
    const std::shared_ptr<SlotContext>& last_context() const { return ctx_; }
    const std::vector<SlotReport>& reports() const { return reports_; }

    SlotReport run_slot() {
        const auto slot = next_slot_++;
        const auto& sp = scenario_.slot_params;
        const Micros start = std::max<Micros>(static_cast<Micros>(slot) * sp.slot_duration, engine_.now());
        engine_.run_until(start);

        const auto before = engine_.ledger().global();
        const auto producer_before = engine_.ledger().node(pop_.producer()).sent(TrafficClass::CellTransfer);

        auto ctx = std::make_shared<SlotContext>();
        ctx->init(scenario_.geometry, pop_.size());
        ctx->slot = slot;
        ctx->start = start;
        ctx->end = start + sp.slot_duration;
        assign(*ctx);
        const auto withheld = withhold(*ctx);
        ctx->finalize_assignments();
        if (strategy_->needs_payloads()) materialize(*ctx);
        ctx_ = ctx;

        strategy_->begin_slot(world_, ctx);
        if (scenario_.header) {
            flood_header(ctx, pop_.producer(), pop_.producer());
        } else {
            for (NodeIndex n = 1; n < pop_.size(); ++n) {
                ctx->header_at[n] = 0;
                strategy_->on_header(world_, ctx, n);
            }
        }
        engine_.run_until(ctx->end);
        ctx->closed = true;

        SlotReport extras;
        strategy_->end_slot(world_, ctx, extras);

        TrafficCounters delta;
        const auto& after = engine_.ledger().global();
        for (std::size_t c = 0; c < kTrafficClasses; ++c) {
            delta.bytes_sent[c] = after.bytes_sent[c] - before.bytes_sent[c];
            delta.bytes_received[c] = after.bytes_received[c] - before.bytes_received[c];
            delta.bytes_dropped[c] = after.bytes_dropped[c] - before.bytes_dropped[c];
            delta.messages_sent[c] = after.messages_sent[c] - before.messages_sent[c];
        }

        std::vector<SamplingVerdict> validators, regulars;
        for (NodeIndex n = 1; n < pop_.size(); ++n) {
            if (world_.is_controlled(n)) continue;
            const auto role = pop_.nodes[n].role;
            const auto deadline = role == Role::Validator ? sp.validator_deadline : sp.regular_deadline;
            (role == Role::Validator ? validators : regulars).push_back(verdict_for(*ctx, n, deadline));
        }

        ReportInputs in;
        in.slot = slot;
        in.strategy = strategy_->kind();
        in.traffic = delta;
        in.producer_egress = engine_.ledger().node(pop_.producer()).sent(TrafficClass::CellTransfer) - producer_before;
        in.validator_verdicts = validators;
        in.regular_verdicts = regulars;
        in.slot_params = sp;
        in.cost = scenario_.cost;
        in.floor_bytes = assignment_floor(ctx->assignments, scenario_.geometry);
        auto report = make_report(in);
        report.withheld_cells = withheld;
        report.target_gets_ok = extras.target_gets_ok;
        report.target_gets_failed = extras.target_gets_failed;
        report.max_mesh_copies = extras.max_mesh_copies;
        reports_.push_back(report);
        return report;
    }

    RunResult run() {
        while (next_slot_ < scenario_.slots) run_slot();
        return {scenario_.name, strategy_->kind(), reports_, engine_.trace_hash()};
    }

private:
    void assign(SlotContext& ctx) const {
        const auto& g = scenario_.geometry;
        const std::uint64_t epoch_len =
            scenario_.strategy.kind == StrategyKind::GossipMesh ? scenario_.strategy.gossip.membership_epoch : 1;
        const auto epoch = ctx.slot / epoch_len;
        const DeterministicRng base(scenario_.seed, streams::kSampling);
        const auto vrng = base.fork(2 * epoch);
        const auto rrng = base.fork(2 * ctx.slot + 1);
        for (NodeIndex n = 1; n < pop_.size(); ++n) {
            auto& a = ctx.assignments[n];
            if (pop_.nodes[n].role == Role::Validator) {
                auto r = vrng.fork(n);
                a = select_validator_sample(r, g, n);
            } else {
                auto r = rrng.fork(n);
                a = scenario_.regular_mode == RegularMode::KofN
                        ? select_k_of_n_sample(r, g, scenario_.k_of_n_requested, scenario_.k_of_n_required, n)
                        : select_regular_sample(r, g, scenario_.regular_samples, n);
            }
        }
    }

    std::uint64_t withhold(SlotContext& ctx) const {
        const auto& adv = scenario_.adversary;
        const auto& g = scenario_.geometry;
        auto rng = DeterministicRng(scenario_.seed, streams::kAdversary).fork(ctx.slot);
        std::vector<std::uint64_t> cells;
        if (adv.kind == AdversaryKind::WithholdFraction) {
            cells = withheld_cells(g, adv.withhold_fraction, rng);
        } else if (adv.kind == AdversaryKind::WithholdRegularTargets) {
            cells = targeted_cells(ctx.assignments, adv.withhold_targets, g);
            // Behind the proxy the producer cannot tell whose requests are
            // whose, so it can only withhold as many cells at random.
            if (scenario_.strategy.unlinkability_proxy) {
                const auto count = cells.size();
                cells = rng.sample_without_replacement(g.total_cells(), count);
            }
        }
        for (auto i : cells) ctx.released[i] = 0;
        return cells.size();
    }

    void materialize(SlotContext& ctx) const {
        auto rng = DeterministicRng(scenario_.seed, streams::kBlob).fork(ctx.slot);
        auto blob = std::make_shared<BlobMatrix>(extend_blob(SourceBlob::random(scenario_.geometry, rng)));
        ctx.commitment = seal_blob(*blob);
        ctx.blob = std::move(blob);
    }

    void flood_header(const std::shared_ptr<SlotContext>& ctx, NodeIndex at, NodeIndex from) {
        if (ctx->closed) return;
        if (at != pop_.producer()) {
            if (ctx->header_at[at] >= 0) return;
            ctx->header_at[at] = engine_.now() - ctx->start;
            strategy_->on_header(world_, ctx, at);
        }
        for (auto p : overlay_[at]) {
            if (p == from || p == pop_.producer()) continue;
            engine_.send(at, p, kBlockHeaderBytes, TrafficClass::Header, [this, ctx, p, at] { flood_header(ctx, p, at); });
        }
    }

    Scenario scenario_;
    Population pop_;
    Engine engine_;
    World world_;
    std::unique_ptr<Strategy> strategy_;
    std::vector<std::vector<NodeIndex>> overlay_;
    std::shared_ptr<SlotContext> ctx_;
    std::vector<SlotReport> reports_;
    std::uint64_t next_slot_ = 0;
};

inline RunResult run_scenario(const Scenario& s) {
    Simulation sim(s);
    return sim.run();
}

// One run per strategy on otherwise identical scenarios, in parallel.
inline std::vector<RunResult> compare_strategies(const Scenario& base, const std::vector<StrategyKind>& kinds) {
    std::vector<std::future<RunResult>> jobs;
    for (auto k : kinds) {
        Scenario s = base;
        s.strategy.kind = k;
        jobs.push_back(std::async(std::launch::async, [s] { return run_scenario(s); }));
    }
    std::vector<RunResult> out;
    for (auto& j : jobs) out.push_back(j.get());
    return out;
}

}  // namespace dassim
