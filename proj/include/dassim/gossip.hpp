#pragma once

// Topic-mesh dissemination. Validators subscribe to the row and column topics
// of their lines and receive cells by eager push inside each mesh. Regular
// nodes either pull from topic members found through a directory query or,
// with per-cell topics, subscribe to one topic per sampled cell.

#include "dassim/strategy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace dassim {

enum class TopicKind : std::uint8_t { Row, Column, Cell };

struct TopicId {
    TopicKind kind = TopicKind::Row;
    std::uint64_t index = 0;
    friend bool operator==(const TopicId&, const TopicId&) = default;
};

inline std::uint64_t topic_count(const BlobGeometry& g, bool per_cell_topics) {
    const std::uint64_t lines = static_cast<std::uint64_t>(g.extended_rows()) + g.extended_cols();
    return per_cell_topics ? lines + g.total_cells() : lines;
}

// Topics a node joins for an assignment. With per-cell topics every sampler
// joins one topic per assigned cell; otherwise validators join their lines
// and regular nodes join nothing.
inline std::vector<TopicId> subscriptions(const SampleAssignment& a, bool per_cell_topics, const BlobGeometry& g) {
    std::vector<TopicId> out;
    if (per_cell_topics) {
        for (const auto& c : a.cells) out.push_back({TopicKind::Cell, coordinate_index(c, g)});
    } else if (a.mode == SamplingMode::ValidatorLines) {
        for (auto r : a.rows) out.push_back({TopicKind::Row, r});
        for (auto c : a.cols) out.push_back({TopicKind::Column, c});
    }
    return out;
}

struct TopicMesh {
    TopicId id;
    std::vector<NodeIndex> members;               // sorted
    std::vector<std::vector<NodeIndex>> adjacency;  // parallel to members

    bool is_member(NodeIndex n) const { return std::binary_search(members.begin(), members.end(), n); }
    void set_members(std::vector<NodeIndex> m) {
        members = std::move(m);
        adjacency.assign(members.size(), {});
    }
    const std::vector<NodeIndex>& peers(NodeIndex n) const {
        static const std::vector<NodeIndex> kNone;
        const auto p = position(n);
        return p ? adjacency[*p] : kNone;
    }
    std::size_t degree(NodeIndex n) const { return peers(n).size(); }
    bool linked(NodeIndex a, NodeIndex b) const {
        const auto& p = peers(a);
        return std::find(p.begin(), p.end(), b) != p.end();
    }
    void link(NodeIndex a, NodeIndex b) {
        adjacency[*position(a)].push_back(b);
        adjacency[*position(b)].push_back(a);
    }
    void unlink(NodeIndex a, NodeIndex b) {
        std::erase(adjacency[*position(a)], b);
        std::erase(adjacency[*position(b)], a);
    }

private:
    std::optional<std::size_t> position(NodeIndex n) const {
        const auto it = std::lower_bound(members.begin(), members.end(), n);
        if (it == members.end() || *it != n) return std::nullopt;
        return static_cast<std::size_t>(it - members.begin());
    }
};

// Weighted sampling without replacement: weight 1 + beta for staking peers.
inline std::vector<NodeIndex> select_peers_stake_preferred(std::span<const NodeIndex> candidates,
                                                           std::span<const NodeProfile> profiles, DeterministicRng& rng,
                                                           std::size_t degree, double beta) {
    std::vector<NodeIndex> pool(candidates.begin(), candidates.end());
    if (degree >= pool.size()) return pool;
    std::vector<double> w;
    w.reserve(pool.size());
    double total = 0;
    for (auto c : pool) {
        w.push_back(1.0 + (profiles[c].is_staking() ? beta : 0.0));
        total += w.back();
    }
    std::vector<NodeIndex> out;
    out.reserve(degree);
    while (out.size() < degree) {
        double x = rng.uniform01() * total;
        std::size_t i = 0;
        while (i + 1 < pool.size() && x >= w[i]) x -= w[i++];
        out.push_back(pool[i]);
        total -= w[i];
        pool[i] = pool.back();
        w[i] = w.back();
        pool.pop_back();
        w.pop_back();
    }
    return out;
}

using LinkVeto = std::function<bool(NodeIndex, NodeIndex)>;

// Tops up every member to min(D, |members| - 1) links where candidates allow,
// never exceeding degree D.
inline void fill_mesh(TopicMesh& mesh, std::span<const NodeProfile> profiles, DeterministicRng& rng, std::size_t degree,
                      double beta, const LinkVeto& veto = {}, std::vector<std::pair<NodeIndex, NodeIndex>>* added = nullptr) {
    if (mesh.members.size() < 2) return;
    const std::size_t target = std::min(degree, mesh.members.size() - 1);
    // Members initiate links in a stake-weighted random order (exponential
    // keys), so staking nodes fill their slots before others can.
    std::vector<std::pair<double, NodeIndex>> keyed;
    keyed.reserve(mesh.members.size());
    for (auto u : mesh.members) {
        const double w = 1.0 + (profiles[u].is_staking() ? beta : 0.0);
        keyed.emplace_back(-std::log1p(-rng.uniform01()) / w, u);
    }
    std::sort(keyed.begin(), keyed.end());
    std::vector<NodeIndex> order;
    order.reserve(keyed.size());
    for (const auto& kv : keyed) order.push_back(kv.second);
    auto eligible = [&](NodeIndex u, NodeIndex v) {
        return v != u && mesh.degree(v) < degree && !mesh.linked(u, v) && !(veto && veto(u, v));
    };
    // Large meshes draw by rejection from the weighted member list, which
    // samples the eligible set with the same weights; a full scan is the
    // fallback once draws keep missing.
    const bool large = mesh.members.size() > 64;
    std::vector<double> cumulative;
    if (large) {
        double total = 0;
        for (auto v : mesh.members) cumulative.push_back(total += 1.0 + (profiles[v].is_staking() ? beta : 0.0));
    }
    std::vector<NodeIndex> cands;
    for (auto u : order) {
        if (mesh.degree(u) >= target) continue;
        for (std::size_t tries = 0; large && mesh.degree(u) < target && tries < 32 * degree; ++tries) {
            const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), rng.uniform01() * cumulative.back());
            const auto v = mesh.members[std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()),
                                                              mesh.members.size() - 1)];
            if (!eligible(u, v)) continue;
            mesh.link(u, v);
            if (added) added->emplace_back(u, v);
        }
        if (mesh.degree(u) >= target) continue;
        cands.clear();
        for (auto v : mesh.members)
            if (eligible(u, v)) cands.push_back(v);
        for (auto v : select_peers_stake_preferred(cands, profiles, rng, target - mesh.degree(u), beta)) {
            mesh.link(u, v);
            if (added) added->emplace_back(u, v);
        }
    }
}

inline TopicMesh build_mesh(TopicId id, std::vector<NodeIndex> members, std::span<const NodeProfile> profiles,
                            DeterministicRng& rng, std::size_t degree, double beta, const LinkVeto& veto = {}) {
    TopicMesh m;
    m.id = id;
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    m.set_members(std::move(members));
    fill_mesh(m, profiles, rng, degree, beta, veto);
    return m;
}

// Row topics first, then column topics.
inline std::vector<TopicMesh> build_line_meshes(std::span<const SampleAssignment> assignments,
                                                std::span<const NodeProfile> profiles, const BlobGeometry& g,
                                                const GossipConfig& cfg, DeterministicRng& rng) {
    const std::uint32_t rows = g.extended_rows();
    std::vector<std::vector<NodeIndex>> members(rows + g.extended_cols());
    for (const auto& a : assignments) {
        if (a.mode != SamplingMode::ValidatorLines) continue;
        for (auto r : a.rows) members[r].push_back(a.node);
        for (auto c : a.cols) members[rows + c].push_back(a.node);
    }
    std::vector<TopicMesh> out;
    out.reserve(members.size());
    for (std::uint32_t t = 0; t < members.size(); ++t) {
        const TopicId id = t < rows ? TopicId{TopicKind::Row, t} : TopicId{TopicKind::Column, t - rows};
        auto sub = rng.fork(t);
        out.push_back(build_mesh(id, std::move(members[t]), profiles, sub, cfg.mesh_degree, cfg.stake_bias));
    }
    return out;
}

enum class ScoreEvent : std::uint8_t { ValidDelivery, InvalidCell, Timeout };

inline double update_peer_score(double score, ScoreEvent e, const ScoreParams& p = {}) {
    switch (e) {
        case ScoreEvent::ValidDelivery: return std::min(p.cap, score + p.delivery_credit);
        case ScoreEvent::InvalidCell: return score + p.invalid_penalty;
        case ScoreEvent::Timeout: return score + p.timeout_penalty;
    }
    return score;
}

inline bool should_prune(double score, const ScoreParams& p = {}) { return score <= p.prune_threshold; }

class GossipStrategy final : public Strategy {
public:
    StrategyKind kind() const override { return StrategyKind::GossipMesh; }

    void setup(World& w) override {
        rows_ = w.geometry.extended_rows();
        cols_ = w.geometry.extended_cols();
        node_topics_.assign(w.pop.size(), {});
    }

    void begin_slot(World& w, const std::shared_ptr<SlotContext>& ctx) override {
        auto st = std::make_shared<SlotState>();
        st->nodes.resize(w.pop.size());
        state_ = st;
        refresh_lines(w, *ctx);
        if (w.config.gossip.per_cell_topics) build_cell_topics(w, *ctx);
        for (NodeIndex n = 0; n < w.pop.size(); ++n) index_node(*st, n);
        seed(w, ctx, st);
    }

    void on_header(World& w, const std::shared_ptr<SlotContext>& ctx, NodeIndex n) override {
        const auto& a = ctx->assignments[n];
        if (a.mode == SamplingMode::ValidatorLines || a.cells.empty() || w.config.gossip.per_cell_topics) return;
        for (const auto& c : a.cells) query_directory(w, ctx, state_, n, c);
    }

    void end_slot(World& w, const std::shared_ptr<SlotContext>& ctx, SlotReport& report) override {
        report.max_mesh_copies = state_->max_copies;
        score_silence(w, *ctx);
        prune_and_graft(w, *ctx);
    }

    const std::vector<TopicMesh>& line_meshes() const { return lines_; }
    std::size_t cell_topic_count() const { return cell_topics_.size(); }
    double score(NodeIndex u, NodeIndex v) const {
        auto it = scores_.find(pair_key(u, v));
        return it == scores_.end() ? 0.0 : it->second;
    }

private:
    static constexpr std::uint8_t kHeld = 0x80;
    static constexpr std::uint8_t kCopies = 0x7F;

    struct NodeState {
        std::vector<std::pair<std::uint32_t, std::vector<std::uint8_t>>> lines;  // line topic -> per-position flags
        std::unordered_map<std::uint64_t, std::uint8_t> other;
        std::unordered_map<std::uint64_t, std::vector<NodeIndex>> waiters;
    };

    struct SlotState {
        std::vector<NodeState> nodes;
        std::uint32_t max_copies = 0;
        std::map<std::uint64_t, std::uint32_t> direct;  // out-of-mesh pushes per (sender, receiver)
    };

    static std::uint64_t pair_key(NodeIndex u, NodeIndex v) { return (static_cast<std::uint64_t>(u) << 32) | v; }

    std::uint32_t row_topic(std::uint32_t r) const { return r; }
    std::uint32_t col_topic(std::uint32_t c) const { return rows_ + c; }

    static bool defecting(const World& w, const SlotContext& ctx, NodeIndex n) {
        return dassim::defecting(w.adversary, ctx.slot) && w.is_controlled(n);
    }

    bool vetoed(NodeIndex u, NodeIndex v) const { return refused_.count(pair_key(u, v)) || refused_.count(pair_key(v, u)); }

    // Pseudo-random but reproducible peers for ledger-only control messages.
    static NodeIndex control_peer(const World& w, NodeIndex n, std::uint64_t i) {
        const auto size = w.pop.size();
        auto p = static_cast<NodeIndex>(mix64(n, i) % size);
        return p == n ? static_cast<NodeIndex>((p + 1) % size) : p;
    }

    void announce(World& w, NodeIndex n, std::uint64_t salt) {
        for (std::uint32_t i = 0; i < w.config.gossip.announce_peers; ++i)
            w.engine.account(n, control_peer(w, n, salt * 131 + i), kControlMessageBytes, TrafficClass::Signaling);
    }

    void refresh_lines(World& w, const SlotContext& ctx) {
        std::vector<std::vector<NodeIndex>> members(rows_ + cols_);
        for (const auto& a : ctx.assignments) {
            if (a.mode != SamplingMode::ValidatorLines || w.config.gossip.per_cell_topics) continue;
            for (auto r : a.rows) members[row_topic(r)].push_back(a.node);
            for (auto c : a.cols) members[col_topic(c)].push_back(a.node);
        }
        if (lines_.empty()) lines_.resize(rows_ + cols_);
        for (std::uint32_t t = 0; t < members.size(); ++t) {
            auto& mesh = lines_[t];
            if (lines_built_ && members[t] == mesh.members) continue;
            // Leaving members announce and prune; joining members announce and graft.
            for (auto n : mesh.members)
                if (!std::binary_search(members[t].begin(), members[t].end(), n)) {
                    announce(w, n, t);
                    for (auto p : mesh.peers(n)) w.engine.account(n, p, kControlMessageBytes, TrafficClass::Signaling);
                    std::erase(node_topics_[n], t);
                }
            const auto old = mesh.members;
            const TopicId id = t < rows_ ? TopicId{TopicKind::Row, t} : TopicId{TopicKind::Column, t - rows_};
            auto rng = DeterministicRng(w.seed, streams::kTopology).fork(mix64(ctx.slot, t));
            mesh = build_mesh(id, members[t], w.pop.nodes, rng, w.config.gossip.mesh_degree, w.config.gossip.stake_bias,
                              [this](NodeIndex a, NodeIndex b) { return vetoed(a, b); });
            for (auto n : mesh.members) {
                if (!std::binary_search(old.begin(), old.end(), n)) {
                    announce(w, n, t);
                    node_topics_[n].push_back(t);
                }
                for (auto p : mesh.peers(n))
                    if (n < p) w.engine.account(n, p, kControlMessageBytes, TrafficClass::Signaling);
            }
        }
        lines_built_ = true;
    }

    void build_cell_topics(World& w, const SlotContext& ctx) {
        // Subscriptions last one slot: everyone who joined last slot leaves.
        for (const auto& [idx, mesh] : cell_topics_)
            for (auto n : mesh.members) announce(w, n, idx + 7);
        cell_topics_.clear();
        std::unordered_map<std::uint64_t, std::vector<NodeIndex>> members;
        for (const auto& a : ctx.assignments)
            for (const auto& c : a.cells) members[coordinate_index(c, w.geometry)].push_back(a.node);
        std::vector<std::uint64_t> keys;
        keys.reserve(members.size());
        for (const auto& kv : members) keys.push_back(kv.first);
        std::sort(keys.begin(), keys.end());
        for (auto idx : keys) {
            auto rng = DeterministicRng(w.seed, streams::kTopology).fork(mix64(ctx.slot, (1ull << 40) + idx));
            auto mesh = build_mesh({TopicKind::Cell, idx}, std::move(members[idx]), w.pop.nodes, rng,
                                   w.config.gossip.mesh_degree, w.config.gossip.stake_bias);
            for (auto n : mesh.members) {
                announce(w, n, idx + 7);
                for (auto p : mesh.peers(n))
                    if (n < p) w.engine.account(n, p, kControlMessageBytes, TrafficClass::Signaling);
            }
            cell_topics_.emplace(idx, std::move(mesh));
        }
    }

    void index_node(SlotState& st, NodeIndex n) {
        auto& ns = st.nodes[n];
        for (auto t : node_topics_[n]) ns.lines.emplace_back(t, std::vector<std::uint8_t>(t < rows_ ? cols_ : rows_, 0));
    }

    std::uint8_t* line_entry(NodeState& ns, std::uint32_t topic, CellCoordinate c) const {
        for (auto& [t, v] : ns.lines)
            if (t == topic) return &v[topic < rows_ ? c.col : c.row];
        return nullptr;
    }

    // Where the held flag of a cell lives for a node.
    std::uint8_t& canonical(NodeState& ns, CellCoordinate c, std::uint64_t idx) const {
        if (auto* e = line_entry(ns, row_topic(c.row), c)) return *e;
        if (auto* e = line_entry(ns, col_topic(c.col), c)) return *e;
        return ns.other[idx];
    }

    bool holds(SlotState& st, NodeIndex n, CellCoordinate c, std::uint64_t idx) const {
        auto& ns = st.nodes[n];
        if (auto* e = line_entry(ns, row_topic(c.row), c)) return *e & kHeld;
        if (auto* e = line_entry(ns, col_topic(c.col), c)) return *e & kHeld;
        auto it = ns.other.find(idx);
        return it != ns.other.end() && (it->second & kHeld);
    }

    const TopicMesh* mesh_of(std::uint64_t topic_key) const {
        if (topic_key < rows_ + cols_) return &lines_[topic_key];
        auto it = cell_topics_.find(topic_key - (rows_ + cols_));
        return it == cell_topics_.end() ? nullptr : &it->second;
    }

    // A member with mesh links if possible, else any member.
    static std::vector<NodeIndex> eligible(const TopicMesh& m) {
        std::vector<NodeIndex> linked;
        for (auto n : m.members)
            if (m.degree(n) > 0) linked.push_back(n);
        return linked.empty() ? m.members : linked;
    }

    // Members of `v` that `from` has not pruned, rotated to a reproducible start.
    std::vector<NodeIndex> trusted(const World& w, NodeIndex from, const std::vector<NodeIndex>& v,
                                   std::uint64_t salt) const {
        std::vector<NodeIndex> out;
        if (v.empty()) return out;
        const auto start = mix64(salt) % v.size();
        for (std::size_t i = 0; i < v.size(); ++i) {
            const auto n = v[(start + i) % v.size()];
            if (n != from && !should_prune(score(from, n), w.config.gossip.score)) out.push_back(n);
        }
        return out;
    }

    NodeIndex custodian(const World& w, const SlotContext& ctx, std::uint64_t idx) const {
        const auto n = w.pop.size();
        const NodeIndex producer = w.pop.producer();
        auto c = static_cast<NodeIndex>(1 + mix64(w.seed ^ ctx.slot, idx) % (n - 1));
        for (std::size_t i = 1; i < n && should_prune(score(producer, c), w.config.gossip.score); ++i)
            c = static_cast<NodeIndex>(1 + (c % (n - 1)));
        return c;
    }

    std::vector<std::uint64_t> covering_topics(const SlotContext& ctx, CellCoordinate c, std::uint64_t idx) const {
        std::vector<std::uint64_t> out{row_topic(c.row), col_topic(c.col)};
        if (cell_topics_.count(idx)) out.push_back(rows_ + cols_ + idx);
        (void)ctx;
        return out;
    }

    void seed(World& w, const std::shared_ptr<SlotContext>& ctx, const std::shared_ptr<SlotState>& st) {
        const auto& g = w.geometry;
        const NodeIndex producer = w.pop.producer();
        const auto wire = g.cell_wire_bytes();
        for (std::uint32_t r = 0; r < g.extended_rows(); ++r) {
            for (std::uint32_t c = 0; c < g.extended_cols(); ++c) {
                const CellCoordinate cc{r, c};
                if (!ctx->is_released(cc)) continue;
                const auto idx = coordinate_index(cc, g);
                std::vector<NodeIndex> targets;
                for (auto t : covering_topics(*ctx, cc, idx)) {
                    const auto* m = mesh_of(t);
                    if (!m || m->members.empty()) continue;
                    const auto el = trusted(w, producer, eligible(*m), mix64(w.seed ^ ctx->slot, idx));
                    for (std::size_t i = 0; i < el.size() && targets.size() < w.config.seed_copies; ++i)
                        targets.push_back(el[i]);
                    if (!targets.empty()) break;
                }
                if (targets.empty()) targets.push_back(custodian(w, *ctx, idx));
                for (auto t : targets) {
                    ++st->direct[pair_key(producer, t)];
                    w.engine.send(producer, t, wire, TrafficClass::CellTransfer,
                                  [this, &w, ctx, st, t, cc, idx, producer] { receive(w, ctx, st, t, cc, idx, producer, -1); });
                }
            }
        }
    }

    void receive(World& w, const std::shared_ptr<SlotContext>& ctx, const std::shared_ptr<SlotState>& st, NodeIndex n,
                 CellCoordinate c, std::uint64_t idx, NodeIndex from, std::int64_t via_topic) {
        if (ctx->closed) return;
        auto& ns = st->nodes[n];
        auto& flag = canonical(ns, c, idx);
        const bool first = !(flag & kHeld);
        if (via_topic >= 0) {
            std::uint8_t* counter = via_topic < rows_ + cols_ ? line_entry(ns, static_cast<std::uint32_t>(via_topic), c) : &flag;
            if (counter && (*counter & kCopies) < kCopies) {
                *counter = static_cast<std::uint8_t>(*counter + 1);
                st->max_copies = std::max<std::uint32_t>(st->max_copies, *counter & kCopies);
            }
            if (first) bump(n, from, ScoreEvent::ValidDelivery, w.config.gossip.score);
        }
        if (!first) return;
        flag |= kHeld;
        ctx->deliver(n, c, w.engine.now());
        if (defecting(w, *ctx, n)) return;
        const auto wire = ctx->geometry.cell_wire_bytes();
        if (auto it = ns.waiters.find(idx); it != ns.waiters.end()) {
            for (auto req : it->second) send_pulled(w, ctx, st, n, req, c);
            ns.waiters.erase(it);
        }
        const bool seeded = from == w.pop.producer() && via_topic < 0;
        for (auto t : covering_topics(*ctx, c, idx)) {
            const auto* m = mesh_of(t);
            if (!m || m->members.empty()) continue;
            if (m->is_member(n)) {
                for (auto p : m->peers(n)) {
                    if (p == from) continue;
                    w.engine.send(n, p, wire, TrafficClass::CellTransfer, [this, &w, ctx, st, p, c, idx, n, t] {
                        receive(w, ctx, st, p, c, idx, n, static_cast<std::int64_t>(t));
                    });
                }
            } else if (seeded) {
                // The producer's seed injects the cell into topics it is not part of.
                const auto el = trusted(w, n, eligible(*m), mix64(idx, t));
                if (el.empty()) continue;
                const auto to = el.front();
                ++st->direct[pair_key(n, to)];
                w.engine.send(n, to, wire, TrafficClass::CellTransfer,
                              [this, &w, ctx, st, to, c, idx, n] { receive(w, ctx, st, to, c, idx, n, -1); });
            }
        }
    }

    void bump(NodeIndex u, NodeIndex v, ScoreEvent e, const ScoreParams& p) {
        auto& s = scores_[pair_key(u, v)];
        s = update_peer_score(s, e, p);
    }

    // Up to directory_size holders: linked row members, then column members,
    // then the custodian. Skips peers the requester has given up on.
    std::vector<NodeIndex> holders(const World& w, const SlotContext& ctx, NodeIndex requester, CellCoordinate c,
                                   std::uint64_t idx) const {
        std::vector<NodeIndex> out;
        const auto want = w.config.gossip.directory_size;
        for (auto t : {row_topic(c.row), col_topic(c.col)}) {
            const auto el = eligible(lines_[t]);
            if (el.empty()) continue;
            const auto start = mix64(requester, idx) % el.size();
            for (std::size_t i = 0; i < el.size() && out.size() < want; ++i) {
                const auto h = el[(start + i) % el.size()];
                if (h != requester && !should_prune(score(requester, h), w.config.gossip.score)) out.push_back(h);
            }
            if (out.size() >= want) break;
        }
        if (out.empty()) out.push_back(custodian(w, ctx, idx));
        return out;
    }

    void query_directory(World& w, const std::shared_ptr<SlotContext>& ctx, const std::shared_ptr<SlotState>& st,
                         NodeIndex n, CellCoordinate c) {
        const auto idx = coordinate_index(c, w.geometry);
        const auto dir = control_peer(w, n, idx);
        const Micros relay = w.config.unlinkability_proxy ? w.config.proxy_delay : 0;
        w.engine.send(
            n, dir, kControlMessageBytes, TrafficClass::Signaling,
            [this, &w, ctx, st, n, c, idx, dir, relay] {
                if (ctx->closed) return;
                auto list = holders(w, *ctx, n, c, idx);
                const auto bytes = kControlMessageBytes + w.config.dht.dht.record_bytes * list.size();
                w.engine.send(
                    dir, n, bytes, TrafficClass::Signaling,
                    [this, &w, ctx, st, n, c, idx, list = std::move(list)] { pull(w, ctx, st, n, c, idx, list, 0); }, relay);
            },
            relay);
    }

    void pull(World& w, const std::shared_ptr<SlotContext>& ctx, const std::shared_ptr<SlotState>& st, NodeIndex n,
              CellCoordinate c, std::uint64_t idx, std::vector<NodeIndex> list, std::size_t attempt) {
        if (ctx->closed || holds(*st, n, c, idx)) return;
        const auto h = list[attempt % list.size()];
        const Micros relay = w.config.unlinkability_proxy ? w.config.proxy_delay : 0;
        if (h == n) return;
        w.engine.send(
            n, h, kControlMessageBytes, TrafficClass::Signaling,
            [this, &w, ctx, st, n, h, c, idx] {
                if (ctx->closed || defecting(w, *ctx, h)) return;
                if (holds(*st, h, c, idx)) send_pulled(w, ctx, st, h, n, c);
                else st->nodes[h].waiters[idx].push_back(n);
            },
            relay);
        w.engine.timer(w.config.gossip.pull_timeout + 2 * relay, [this, &w, ctx, st, n, h, c, idx, list, attempt] {
            if (ctx->closed || holds(*st, n, c, idx)) return;
            bump(n, h, ScoreEvent::Timeout, w.config.gossip.score);
            pull(w, ctx, st, n, c, idx, list, attempt + 1);
        });
    }

    void send_pulled(World& w, const std::shared_ptr<SlotContext>& ctx, const std::shared_ptr<SlotState>& st, NodeIndex holder,
                     NodeIndex to, CellCoordinate c) {
        const Micros relay = w.config.unlinkability_proxy ? w.config.proxy_delay : 0;
        const auto idx = coordinate_index(c, ctx->geometry);
        w.engine.send(
            holder, to, ctx->geometry.cell_wire_bytes(), TrafficClass::CellTransfer,
            [&w, ctx, st, to, c, idx, this] {
                if (ctx->closed) return;
                auto& flag = canonical(st->nodes[to], c, idx);
                if (flag & kHeld) return;
                flag |= kHeld;
                ctx->deliver(to, c, w.engine.now());
            },
            relay);
    }

    // Mesh peers exchange a per-slot holdings summary. A peer that sent
    // neither cells nor a summary loses one point per cell the observer
    // received in that topic. Receivers of out-of-mesh pushes owe the sender
    // a summary too and lose one point per pushed cell without it.
    void score_silence(World& w, const SlotContext& ctx) {
        for (const auto& [key, count] : state_->direct) {
            const auto u = static_cast<NodeIndex>(key >> 32), v = static_cast<NodeIndex>(key & 0xFFFFFFFFu);
            if (defecting(w, ctx, u)) continue;
            if (defecting(w, ctx, v)) scores_[key] -= count;
            else w.engine.account(v, u, kControlMessageBytes, TrafficClass::Signaling);
        }
        for (std::uint32_t t = 0; t < lines_.size(); ++t) {
            const auto& mesh = lines_[t];
            for (auto u : mesh.members) {
                if (defecting(w, ctx, u)) continue;
                std::int64_t got = 0;
                for (auto& [topic, v] : state_->nodes[u].lines)
                    if (topic == t)
                        for (auto f : v) got += (f & kCopies) ? 1 : 0;
                for (auto v : mesh.peers(u)) {
                    if (defecting(w, ctx, v)) {
                        auto& s = scores_[pair_key(u, v)];
                        s -= static_cast<double>(std::max<std::int64_t>(got, 1));
                    } else {
                        w.engine.account(v, u, kControlMessageBytes, TrafficClass::Signaling);
                    }
                }
            }
        }
    }

    void prune_and_graft(World& w, const SlotContext& ctx) {
        const auto& p = w.config.gossip.score;
        for (std::uint32_t t = 0; t < lines_.size(); ++t) {
            auto& mesh = lines_[t];
            bool changed = false;
            for (auto u : mesh.members) {
                const auto peers = mesh.peers(u);
                for (auto v : peers) {
                    if (!should_prune(score(u, v), p)) continue;
                    mesh.unlink(u, v);
                    refused_.insert(pair_key(u, v));
                    w.engine.account(u, v, kControlMessageBytes, TrafficClass::Signaling);
                    changed = true;
                }
            }
            if (!changed) continue;
            std::vector<std::pair<NodeIndex, NodeIndex>> added;
            auto rng = DeterministicRng(w.seed, streams::kTopology).fork(mix64(ctx.slot + (1ull << 32), t));
            fill_mesh(mesh, w.pop.nodes, rng, w.config.gossip.mesh_degree, w.config.gossip.stake_bias,
                      [this](NodeIndex a, NodeIndex b) { return vetoed(a, b); }, &added);
            for (auto [a, b] : added) w.engine.account(a, b, kControlMessageBytes, TrafficClass::Signaling);
        }
    }

    std::uint32_t rows_ = 0;
    std::uint32_t cols_ = 0;
    std::vector<TopicMesh> lines_;
    bool lines_built_ = false;
    std::vector<std::vector<std::uint32_t>> node_topics_;
    std::unordered_map<std::uint64_t, TopicMesh> cell_topics_;
    std::unordered_map<std::uint64_t, double> scores_;
    std::unordered_set<std::uint64_t> refused_;
    std::shared_ptr<SlotState> state_;
};

}  // namespace dassim
