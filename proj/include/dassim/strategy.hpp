#pragma once

// Common interface for dissemination strategies and the per-slot state they
// share with the simulation driver.

#include "dassim/adversary.hpp"
#include "dassim/blob.hpp"
#include "dassim/commitment.hpp"
#include "dassim/dht.hpp"
#include "dassim/engine.hpp"
#include "dassim/metrics.hpp"
#include "dassim/population.hpp"
#include "dassim/sampling.hpp"

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace dassim {

inline constexpr Micros kDefaultProxyDelay = 200 * kMillis;

struct ScoreParams {
    double delivery_credit = 1;
    double invalid_penalty = -10;
    double timeout_penalty = -1;
    double prune_threshold = -5;
    double cap = 100;
};

struct GossipConfig {
    std::uint32_t mesh_degree = 8;
    std::uint32_t membership_epoch = 1;  // slots a validator keeps its lines
    double stake_bias = 0.0;             // weight 1 + bias for staking peers
    bool per_cell_topics = false;
    std::uint32_t announce_peers = 50;   // peers told about each (un)subscription
    std::uint32_t directory_size = 3;
    Micros pull_timeout = 1 * kSeconds;
    ScoreParams score;

    void validate() const {
        if (mesh_degree < 1) throw ConfigError("strategy.gossip.mesh_degree must be >= 1");
        if (membership_epoch < 1) throw ConfigError("strategy.gossip.membership_epoch must be >= 1");
        if (!(stake_bias >= 0)) throw ConfigError("strategy.gossip.stake_bias must be >= 0");
        if (directory_size < 1) throw ConfigError("strategy.gossip.directory_size must be >= 1");
        if (pull_timeout <= 0) throw ConfigError("strategy.gossip.pull_timeout must be > 0");
        if (!(score.prune_threshold < 0)) throw ConfigError("strategy.gossip.score.prune_threshold must be < 0");
    }
};

struct DhtStrategyConfig {
    DhtConfig dht;
    bool region = false;
    std::optional<std::uint32_t> region_depth;  // default round(log2(N / 8))
    Micros retry_interval = 500 * kMillis;

    void validate() const {
        dht.validate();
        if (region_depth && *region_depth > 24) throw ConfigError("strategy.dht.region_depth must be <= 24");
        if (retry_interval <= 0) throw ConfigError("strategy.dht.retry_interval must be > 0");
    }
};

struct StrategyConfig {
    StrategyKind kind = StrategyKind::Centralized;
    bool unlinkability_proxy = false;
    Micros proxy_delay = kDefaultProxyDelay;
    std::uint32_t seed_copies = 1;
    GossipConfig gossip;
    DhtStrategyConfig dht;

    void validate() const {
        if (seed_copies < 1) throw ConfigError("strategy.seed_copies must be >= 1");
        if (proxy_delay < 0) throw ConfigError("strategy.proxy_delay must be >= 0");
        gossip.validate();
        dht.validate();
    }
};

// Run-wide state handed to strategies.
struct World {
    const Population& pop;
    Engine& engine;
    std::uint64_t seed = 0;
    StrategyConfig config;
    AdversarySpec adversary;
    std::vector<NodeIndex> controlled;  // sorted
    SlotParameters slot_params;
    BlobGeometry geometry;

    bool is_controlled(NodeIndex n) const { return std::binary_search(controlled.begin(), controlled.end(), n); }
};

class SlotContext {
public:
    std::uint64_t slot = 0;
    Micros start = 0;
    Micros end = 0;
    BlobGeometry geometry;
    std::shared_ptr<const BlobMatrix> blob;  // set only for strategies that carry payloads
    BlobCommitment commitment;
    std::vector<std::uint8_t> released;       // by flat cell index
    std::vector<SampleAssignment> assignments;  // by node; empty for the producer
    std::vector<std::vector<Micros>> arrivals;  // parallel to assignments[n].cells; -1 = missing
    std::vector<Micros> header_at;
    bool closed = false;

    void init(const BlobGeometry& g, std::size_t nodes) {
        geometry = g;
        released.assign(g.total_cells(), 1);
        assignments.resize(nodes);
        header_at.assign(nodes, -1);
    }

    void finalize_assignments() {
        arrivals.resize(assignments.size());
        for (std::size_t n = 0; n < assignments.size(); ++n) arrivals[n].assign(assignments[n].cells.size(), -1);
    }

    bool is_released(CellCoordinate c) const { return released[coordinate_index(c, geometry)] != 0; }
    std::uint64_t released_count() const {
        return static_cast<std::uint64_t>(std::count(released.begin(), released.end(), std::uint8_t{1}));
    }

    bool wants(NodeIndex n, CellCoordinate c) const { return n < assignments.size() && assignments[n].contains(c); }

    // Records the first arrival of an assigned cell while the slot is open.
    void deliver(NodeIndex n, CellCoordinate c, Micros at) {
        if (closed || n >= assignments.size()) return;
        const auto& cells = assignments[n].cells;
        const auto it = std::lower_bound(cells.begin(), cells.end(), c);
        if (it == cells.end() || *it != c) return;
        auto& slot_time = arrivals[n][static_cast<std::size_t>(it - cells.begin())];
        if (slot_time < 0) slot_time = at - start;
    }

    Cell cell(CellCoordinate c) const { return blob->cell(c); }
};

// Time (relative to slot start) at which the success condition first held.
inline std::optional<Micros> completion_time(const SampleAssignment& a, std::span<const Micros> arrivals,
                                             const BlobGeometry& g) {
    std::vector<Micros> got;
    switch (a.mode) {
        case SamplingMode::RegularCells:
        case SamplingMode::KofN: {
            for (auto t : arrivals)
                if (t >= 0) got.push_back(t);
            const std::size_t need = a.mode == SamplingMode::KofN ? a.k_required : a.cells.size();
            if (got.size() < need || need == 0) return need == 0 ? std::optional<Micros>(0) : std::nullopt;
            std::nth_element(got.begin(), got.begin() + static_cast<std::ptrdiff_t>(need - 1), got.end());
            return got[need - 1];
        }
        case SamplingMode::ValidatorLines: {
            Micros done = 0;
            auto line = [&](bool is_row, std::uint32_t index) -> bool {
                got.clear();
                for (std::size_t i = 0; i < a.cells.size(); ++i) {
                    const auto& c = a.cells[i];
                    if ((is_row ? c.row : c.col) == index && arrivals[i] >= 0) got.push_back(arrivals[i]);
                }
                const std::size_t need = (is_row ? g.extended_cols() : g.extended_rows()) / 2;
                if (got.size() < need) return false;
                std::nth_element(got.begin(), got.begin() + static_cast<std::ptrdiff_t>(need - 1), got.end());
                done = std::max(done, got[need - 1]);
                return true;
            };
            for (auto r : a.rows)
                if (!line(true, r)) return std::nullopt;
            for (auto c : a.cols)
                if (!line(false, c)) return std::nullopt;
            return done;
        }
    }
    return std::nullopt;
}

inline SamplingVerdict verdict_for(const SlotContext& ctx, NodeIndex n, Micros deadline) {
    const auto& a = ctx.assignments[n];
    const auto& arr = ctx.arrivals[n];
    std::vector<CellCoordinate> received;
    for (std::size_t i = 0; i < a.cells.size(); ++i)
        if (arr[i] >= 0) received.push_back(a.cells[i]);
    auto v = evaluate_sampling(a, received, ctx.geometry);
    v.completion_time = completion_time(a, arr, ctx.geometry);
    if (v.success != v.completion_time.has_value()) throw Error("verdict and completion time disagree");
    v.deadline_met = v.completion_time && *v.completion_time < deadline;
    v.bytes_downloaded = received.size() * ctx.geometry.cell_wire_bytes();
    return v;
}

class Strategy {
public:
    virtual ~Strategy() = default;

    virtual StrategyKind kind() const = 0;
    virtual bool needs_payloads() const { return false; }

    // Once, before slot 0.
    virtual void setup(World&) {}
    // At slot start: producer-side actions.
    virtual void begin_slot(World& w, const std::shared_ptr<SlotContext>& ctx) = 0;
    // When node `n` learns the block header and may start retrieving.
    virtual void on_header(World& w, const std::shared_ptr<SlotContext>& ctx, NodeIndex n) = 0;
    // After the slot closed; may update long-lived state and report fields.
    virtual void end_slot(World&, const std::shared_ptr<SlotContext>&, SlotReport&) {}
};

}  // namespace dassim
