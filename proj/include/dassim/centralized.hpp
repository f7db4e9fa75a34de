#pragma once

// Every node asks the producer for its samples in one batched request; the
// producer answers each cell as its own message.

#include "dassim/strategy.hpp"

namespace dassim {

inline constexpr std::uint64_t kRequestBytesPerCell = 4;

class CentralizedStrategy final : public Strategy {
public:
    StrategyKind kind() const override { return StrategyKind::Centralized; }

    void begin_slot(World&, const std::shared_ptr<SlotContext>&) override {}

    void on_header(World& w, const std::shared_ptr<SlotContext>& ctx, NodeIndex n) override {
        const auto& a = ctx->assignments[n];
        if (a.cells.empty()) return;
        const NodeIndex producer = w.pop.producer();
        const Micros relay = w.config.unlinkability_proxy ? w.config.proxy_delay : 0;
        const auto bytes = kControlMessageBytes + kRequestBytesPerCell * a.cells.size();
        w.engine.send(n, producer, bytes, TrafficClass::Signaling, [&w, ctx, n, relay] { serve(w, ctx, n, relay); }, relay);
    }

private:
    static void serve(World& w, const std::shared_ptr<SlotContext>& ctx, NodeIndex n, Micros relay) {
        if (w.adversary.kind == AdversaryKind::SplitByIdentity) {
            const auto seen = observed_origin(w.pop.nodes[n], ctx->slot, w.config.unlinkability_proxy, w.seed, w.pop.size());
            if (w.adversary.split.matches(seen)) return;
        }
        const NodeIndex producer = w.pop.producer();
        const auto wire = ctx->geometry.cell_wire_bytes();
        for (const auto& c : ctx->assignments[n].cells) {
            if (!ctx->is_released(c)) continue;
            w.engine.send(
                producer, n, wire, TrafficClass::CellTransfer, [&w, ctx, n, c] { ctx->deliver(n, c, w.engine.now()); }, relay);
        }
    }
};

}  // namespace dassim
