#pragma once

// Cells are stored in a Kademlia DHT under per-slot keys. The producer puts
// every released cell on the k closest nodes (or on a whole keyspace region)
// and samplers fetch each assigned cell with a verified get, retrying until
// the slot closes.

#include "dassim/strategy.hpp"

#include <cmath>
#include <memory>

namespace dassim {

inline std::uint32_t default_region_depth(std::size_t network_size) {
    if (network_size <= 8) return 0;
    const auto d = std::lround(std::log2(static_cast<double>(network_size) / 8.0));
    return static_cast<std::uint32_t>(std::clamp<long>(d, 0, 24));
}

class DhtStrategy final : public Strategy {
public:
    StrategyKind kind() const override { return StrategyKind::DhtCache; }
    bool needs_payloads() const override { return true; }

    void setup(World& w) override {
        auto cfg = w.config.dht.dht;
        if (w.config.unlinkability_proxy) cfg.origin_delay = w.config.proxy_delay;
        net_ = std::make_unique<DhtNetwork>(w.engine, cfg);
        populate_dht(*net_, w.pop, w.seed);
        depth_ = w.config.dht.region_depth.value_or(default_region_depth(w.pop.size()));

        if (w.adversary.kind == AdversaryKind::SybilDht) {
            auto spec = w.adversary.sybil;
            if (w.adversary.target_cell) spec.key = cell_key(0, *w.adversary.target_cell);
            DeterministicRng rng(w.seed, streams::kAdversary);
            sybils_ = spawn_sybils(*net_, spec, rng);
        }
        if (w.adversary.kind == AdversaryKind::SplitByIdentity) {
            net_->set_serve_filter([this, &w](NodeIndex holder, NodeIndex querier) {
                if (querier >= w.pop.size() || !w.is_controlled(holder)) return false;
                const auto seen = observed_origin(w.pop.nodes[querier], slot_, w.config.unlinkability_proxy, w.seed,
                                                  w.pop.size());
                return w.adversary.split.matches(seen);
            });
        }
    }

    void begin_slot(World& w, const std::shared_ptr<SlotContext>& ctx) override {
        slot_ = ctx->slot;
        const NodeIndex producer = w.pop.producer();
        const auto& g = ctx->geometry;
        for (std::uint32_t r = 0; r < g.extended_rows(); ++r)
            for (std::uint32_t c = 0; c < g.extended_cols(); ++c) {
                const CellCoordinate cc{r, c};
                if (!ctx->is_released(cc)) continue;
                const auto key = cell_key(ctx->slot, cc);
                if (w.config.dht.region) net_->region_put(producer, key, depth_, ctx->cell(cc), nullptr);
                else net_->put(producer, key, ctx->cell(cc), nullptr);
            }
    }

    void on_header(World& w, const std::shared_ptr<SlotContext>& ctx, NodeIndex n) override {
        for (const auto& c : ctx->assignments[n].cells) fetch(w, ctx, n, c);
    }

    void end_slot(World& w, const std::shared_ptr<SlotContext>& ctx, SlotReport& report) override {
        if (!w.adversary.target_cell) return;
        const auto target = *w.adversary.target_cell;
        for (NodeIndex n = 0; n < ctx->assignments.size(); ++n) {
            const auto& cells = ctx->assignments[n].cells;
            const auto it = std::lower_bound(cells.begin(), cells.end(), target);
            if (it == cells.end() || *it != target) continue;
            const bool ok = ctx->arrivals[n][static_cast<std::size_t>(it - cells.begin())] >= 0;
            (ok ? report.target_gets_ok : report.target_gets_failed) += 1;
        }
    }

    DhtNetwork& network() { return *net_; }
    const SybilDeployment& sybils() const { return sybils_; }
    std::uint32_t region_depth() const { return depth_; }

private:
    void fetch(World& w, const std::shared_ptr<SlotContext>& ctx, NodeIndex n, CellCoordinate c) {
        if (ctx->closed) return;
        const auto key = cell_key(ctx->slot, c);
        auto check = [ctx, c](const Cell& v) { return v.coord == c && verify_cell(ctx->commitment, v); };
        auto done = [this, &w, ctx, n, c](const LookupResult& r) {
            if (ctx->closed) return;
            if (r.status == LookupStatus::Ok && r.value) {
                ctx->deliver(n, c, w.engine.now());
                return;
            }
            w.engine.timer(w.config.dht.retry_interval, [this, &w, ctx, n, c] { fetch(w, ctx, n, c); });
        };
        if (w.config.dht.region) net_->region_get(n, key, depth_, check, done);
        else net_->get(n, key, check, done);
    }

    std::unique_ptr<DhtNetwork> net_;
    SybilDeployment sybils_;
    std::uint32_t depth_ = 0;
    std::uint64_t slot_ = 0;
};

}  // namespace dassim
