#pragma once

// Simulated Kademlia network: per-node routing tables and stores, and
// engine-driven iterative, recursive, disjoint-path and region lookups.

#include "dassim/core.hpp"
#include "dassim/engine.hpp"
#include "dassim/kademlia.hpp"
#include "dassim/rng.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace dassim {

enum class DhtBehavior : std::uint8_t { Honest, DropQueries, SybilEclipse };
enum class LookupMode : std::uint8_t { Iterative, Recursive };
enum class LookupStatus : std::uint8_t { Ok, LookupFailed, NotFound, VerificationFailed, RegionEmpty };

inline const char* to_string(LookupMode m) { return m == LookupMode::Iterative ? "iterative" : "recursive"; }

inline const char* to_string(LookupStatus s) {
    switch (s) {
        case LookupStatus::Ok: return "ok";
        case LookupStatus::LookupFailed: return "lookup-failed";
        case LookupStatus::NotFound: return "not-found";
        case LookupStatus::VerificationFailed: return "verification-failed";
        case LookupStatus::RegionEmpty: return "region-empty";
    }
    return "?";
}

struct LookupConfig {
    LookupMode mode = LookupMode::Iterative;
    std::size_t alpha = 3;
    std::size_t k_closest = 16;
    std::size_t disjoint_paths = 1;
    Micros timeout = 1 * kSeconds;

    void validate() const {
        if (alpha < 1) throw ConfigError("lookup.alpha must be >= 1");
        if (k_closest < 1) throw ConfigError("lookup.k_closest must be >= 1");
        if (disjoint_paths < 1) throw ConfigError("lookup.disjoint_paths must be >= 1");
        if (disjoint_paths > alpha * k_closest) throw ConfigError("lookup.disjoint_paths must be <= alpha * k_closest");
        if (timeout <= 0) throw ConfigError("lookup.timeout must be > 0");
    }
};

struct DhtConfig {
    std::size_t bucket_capacity = 16;
    std::size_t subnet_limit = 2;
    LookupConfig lookup;
    bool admit_on_contact = true;
    std::uint64_t record_bytes = 40;       // id + endpoint in a response
    std::uint64_t value_wire_bytes = 560;  // one cell with its proof
    Micros origin_delay = 0;               // relay latency added to each origin leg

    void validate() const {
        if (bucket_capacity < 1) throw ConfigError("dht.bucket_capacity must be >= 1");
        if (subnet_limit < 1) throw ConfigError("dht.subnet_limit must be >= 1");
        lookup.validate();
    }
};

struct LookupTrace {
    std::uint32_t hops = 0;         // longest chain of dependent request/response exchanges
    std::uint32_t round_trips = 0;  // sequential round trips seen by the origin
    std::uint32_t contacted = 0;
    std::uint32_t failed = 0;
    std::uint32_t invalid_values = 0;
    std::uint32_t messages = 0;
    Micros started = 0;
    Micros finished = 0;
    std::vector<NodeIndex> contacted_nodes;
    std::optional<NodeIndex> dropped_by;  // recursive: intermediate that went silent

    Micros latency() const { return finished - started; }
};

struct LookupResult {
    LookupStatus status = LookupStatus::LookupFailed;
    std::vector<NodeRecord> closest;
    std::vector<NodeRecord> seen;  // every candidate learned while navigating
    LookupTrace trace;
    std::optional<Cell> value;
    std::vector<NodeIndex> stored_at;  // put operations
};

using ValueCheck = std::function<bool(const Cell&)>;
// Returns true if `holder` refuses to serve a value to `querier`.
using ServeFilter = std::function<bool(NodeIndex holder, NodeIndex querier)>;
using LookupCallback = std::function<void(const LookupResult&)>;

class DhtNetwork {
public:
    struct Node {
        NodeRecord self;
        DhtBehavior behavior = DhtBehavior::Honest;
        bool online = true;
        RoutingTable table;
        std::unordered_map<NodeId, Cell, NodeIdHash> store;
    };

    DhtNetwork(Engine& engine, DhtConfig cfg) : engine_(engine), cfg_(std::move(cfg)) { cfg_.validate(); }

    DhtNetwork(const DhtNetwork&) = delete;
    DhtNetwork& operator=(const DhtNetwork&) = delete;

    Engine& engine() { return engine_; }
    const DhtConfig& config() const { return cfg_; }
    DhtConfig& mutable_config() { return cfg_; }
    std::size_t size() const { return nodes_.size(); }

    // Nodes are added in engine index order.
    NodeIndex add_node(NodeIndex address, const NodeId& id, std::uint32_t subnet,
                       DhtBehavior behavior = DhtBehavior::Honest) {
        if (address != nodes_.size()) throw Error("dht nodes must be added in address order");
        if (address >= engine_.node_count()) throw Error("dht node has no engine address");
        Node n{NodeRecord{id, address, subnet, 0}, behavior, true, RoutingTable(id, cfg_.bucket_capacity, cfg_.subnet_limit), {}};
        nodes_.push_back(std::move(n));
        if (behavior == DhtBehavior::SybilEclipse) sybils_.push_back(nodes_.back().self);
        return address;
    }

    const Node& node(NodeIndex i) const { return nodes_.at(i); }
    Node& mutable_node(NodeIndex i) { return nodes_.at(i); }
    bool online(NodeIndex i) const { return nodes_.at(i).online; }
    void set_online(NodeIndex i, bool v) { nodes_.at(i).online = v; }

    void set_behavior(NodeIndex i, DhtBehavior b) {
        auto& n = nodes_.at(i);
        if (n.behavior == DhtBehavior::SybilEclipse)
            std::erase_if(sybils_, [&](const NodeRecord& r) { return r.address == i; });
        n.behavior = b;
        if (b == DhtBehavior::SybilEclipse) sybils_.push_back(n.self);
    }

    // Fills every online node's table as if the network had run long enough
    // to learn the whole keyspace. Candidates per bucket are offered in random
    // order through the normal admission rule.
    void build_converged(DeterministicRng& rng) {
        std::vector<NodeIndex> order;
        for (const auto& n : nodes_)
            if (n.online) order.push_back(n.self.address);
        std::sort(order.begin(), order.end(), [&](NodeIndex a, NodeIndex b) { return nodes_[a].self.id < nodes_[b].self.id; });
        std::vector<NodeId> ids;
        ids.reserve(order.size());
        for (auto i : order) ids.push_back(nodes_[i].self.id);

        const std::size_t cap = cfg_.bucket_capacity;
        for (auto xi : order) {
            auto& x = nodes_[xi];
            x.table = RoutingTable(x.self.id, cap, cfg_.subnet_limit);
            for (std::size_t cpl = 0; cpl < NodeId::kBits; ++cpl) {
                NodeId sibling = x.self.id;
                sibling.set_bit(255 - cpl, !x.self.id.prefix_bit(cpl));
                const auto [lo, hi] = prefix_range(ids, sibling, cpl + 1);
                const std::size_t count = hi - lo;
                if (count > 0) {
                    const std::size_t tries = std::min(count, 4 * cap);
                    for (auto off : rng.sample_without_replacement(count, tries)) {
                        x.table.admit(nodes_[order[lo + off]].self);
                        if (x.table.bucket(255 - cpl).size() >= cap) break;
                    }
                }
                const auto [olo, ohi] = prefix_range(ids, x.self.id, cpl + 1);
                if (ohi - olo <= 1) break;
            }
        }
    }

    // `to` learns about `from` (contact-driven admission). Eviction pings are
    // ledgered as signaling.
    AdmitOutcome contact(NodeIndex from, NodeIndex to) {
        auto& target = nodes_.at(to);
        NodeRecord rec = nodes_.at(from).self;
        rec.last_seen = engine_.now();
        auto out = target.table.admit(rec, [this](const NodeRecord& r) { return nodes_[r.address].online; });
        if (out.pinged && *out.pinged != to)
            engine_.account(to, *out.pinged, kControlMessageBytes, TrafficClass::Signaling);
        return out;
    }

    void set_serve_filter(ServeFilter f) { serve_filter_ = std::move(f); }

    bool audit() const {
        return std::all_of(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.table.audit(); });
    }

    // Ground truth: the k online nodes closest to `target` by global sort.
    std::vector<NodeRecord> true_closest(const NodeId& target, std::size_t k, bool honest_only = false) const {
        std::vector<NodeRecord> all;
        for (const auto& n : nodes_)
            if (n.online && (!honest_only || n.behavior == DhtBehavior::Honest)) all.push_back(n.self);
        auto cmp = [&](const NodeRecord& a, const NodeRecord& b) { return closer_to(target, a.id, b.id); };
        if (all.size() > k) {
            std::nth_element(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), cmp);
            all.resize(k);
        }
        std::sort(all.begin(), all.end(), cmp);
        return all;
    }

    void lookup(NodeIndex origin, const NodeId& target, LookupCallback cb) {
        start_lookup(origin, target, nullptr, false, std::move(cb));
    }

    void get(NodeIndex origin, const NodeId& key, ValueCheck check, LookupCallback cb) {
        start_lookup(origin, key, std::move(check), false, std::move(cb));
    }

    // Stores on the k closest nodes found by a lookup; the callback runs once
    // every STORE has been delivered or dropped.
    void put(NodeIndex origin, const NodeId& key, const Cell& value, LookupCallback cb) {
        lookup(origin, key, [this, origin, key, value, cb = std::move(cb)](const LookupResult& found) {
            LookupResult r = found;
            std::vector<NodeIndex> targets;
            for (const auto& rec : found.closest) targets.push_back(rec.address);
            if (found.status != LookupStatus::Ok) {
                if (cb) cb(r);
                return;
            }
            store_on(origin, key, value, targets, std::move(r), cb);
        });
    }

    // Joins through `bootstrap`: a self-lookup during which every responder
    // learns the newcomer and the newcomer learns every responder.
    void join(NodeIndex n, NodeIndex bootstrap, LookupCallback cb) {
        auto& me = nodes_.at(n);
        me.table.admit(nodes_.at(bootstrap).self);
        start_lookup(n, me.self.id, nullptr, true, std::move(cb));
    }

    // Region operations: navigate toward `key`, then enumerate every member
    // of the depth-p prefix region.
    void region_lookup(NodeIndex origin, const NodeId& key, std::uint32_t depth, LookupCallback cb) {
        start_region(origin, key, depth, nullptr, std::move(cb));
    }

    void region_get(NodeIndex origin, const NodeId& key, std::uint32_t depth, ValueCheck check, LookupCallback cb) {
        start_region(origin, key, depth, std::move(check), std::move(cb));
    }

    void region_put(NodeIndex origin, const NodeId& key, std::uint32_t depth, const Cell& value, LookupCallback cb) {
        region_lookup(origin, key, depth, [this, origin, key, value, cb = std::move(cb)](const LookupResult& found) {
            LookupResult r = found;
            if (found.status != LookupStatus::Ok) {
                if (cb) cb(r);
                return;
            }
            std::vector<NodeIndex> targets;
            for (const auto& rec : found.closest) targets.push_back(rec.address);
            store_on(origin, key, value, targets, std::move(r), cb);
        });
    }

private:
    struct Response {
        std::vector<NodeRecord> records;
        std::optional<Cell> value;
    };

    class IterativeLookup;
    class RecursiveLookup;
    class RegionLookup;

    static std::pair<std::size_t, std::size_t> prefix_range(const std::vector<NodeId>& sorted, const NodeId& key,
                                                            std::size_t bits) {
        NodeId lo = key, hi = key;
        for (std::size_t i = bits; i < NodeId::kBits; ++i) {
            lo.set_bit(255 - i, false);
            hi.set_bit(255 - i, true);
        }
        const auto a = std::lower_bound(sorted.begin(), sorted.end(), lo);
        const auto b = std::upper_bound(a, sorted.end(), hi);
        return {static_cast<std::size_t>(a - sorted.begin()), static_cast<std::size_t>(b - sorted.begin())};
    }

    std::uint64_t records_bytes(std::size_t n) const { return kControlMessageBytes + n * cfg_.record_bytes; }

    std::vector<NodeRecord> sybil_closest(const NodeId& target, std::size_t k, NodeIndex exclude) const {
        std::vector<NodeRecord> out;
        for (const auto& s : sybils_)
            if (s.address != exclude && nodes_[s.address].online) out.push_back(s);
        auto cmp = [&](const NodeRecord& a, const NodeRecord& b) { return closer_to(target, a.id, b.id); };
        if (out.size() > k) {
            std::nth_element(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(k), out.end(), cmp);
            out.resize(k);
        }
        std::sort(out.begin(), out.end(), cmp);
        return out;
    }

    Cell garbage_cell(NodeIndex sybil, const NodeId& key) const {
        Cell c;
        const auto payload_bytes = cfg_.value_wire_bytes > 48 ? cfg_.value_wire_bytes - 48 : cfg_.value_wire_bytes;
        c.payload.resize(payload_bytes);
        DeterministicRng rng(mix64(key.prefix64(), sybil), streams::kAdversary);
        rng.fill(c.payload);
        c.proof.assign(cfg_.value_wire_bytes - payload_bytes, 0);
        return c;
    }

    // What `responder` answers to a FIND_NODE / FIND_VALUE, or nullopt if it
    // stays silent.
    std::optional<Response> answer_find(NodeIndex responder, NodeIndex querier, const NodeId& target, bool want_value,
                                        bool admit) {
        auto& n = nodes_[responder];
        if (!n.online || n.behavior == DhtBehavior::DropQueries) return std::nullopt;
        Response r;
        if (n.behavior == DhtBehavior::SybilEclipse) {
            if (want_value) r.value = garbage_cell(responder, target);
            else r.records = sybil_closest(target, cfg_.lookup.k_closest, responder);
            return r;
        }
        if (admit) contact(querier, responder);
        if (want_value && !(serve_filter_ && serve_filter_(responder, querier))) {
            auto it = n.store.find(target);
            if (it != n.store.end()) {
                r.value = it->second;
                return r;
            }
        }
        r.records = n.table.closest(target, cfg_.lookup.k_closest);
        return r;
    }

    std::optional<Response> answer_region(NodeIndex responder, NodeIndex querier, const Region& region, const NodeId& key,
                                          bool want_value) {
        auto& n = nodes_[responder];
        if (!n.online || n.behavior == DhtBehavior::DropQueries) return std::nullopt;
        Response r;
        if (n.behavior == DhtBehavior::SybilEclipse) {
            for (const auto& s : sybils_)
                if (s.address != responder && region.contains(s.id) && nodes_[s.address].online) r.records.push_back(s);
            if (want_value) r.value = garbage_cell(responder, key);
            return r;
        }
        n.table.for_each([&](const NodeRecord& rec) {
            if (region.contains(rec.id)) r.records.push_back(rec);
        });
        if (want_value && !(serve_filter_ && serve_filter_(responder, querier))) {
            auto it = n.store.find(key);
            if (it != n.store.end()) r.value = it->second;
        }
        return r;
    }

    void send_response(NodeIndex from, NodeIndex to, const Response& r, std::function<void()> on_delivery) {
        if (r.value)
            engine_.send(from, to, cfg_.value_wire_bytes, TrafficClass::CellTransfer, std::move(on_delivery), cfg_.origin_delay);
        else
            engine_.send(from, to, records_bytes(r.records.size()), TrafficClass::Signaling, std::move(on_delivery),
                         cfg_.origin_delay);
    }

    void accept_store(NodeIndex at, const NodeId& key, const Cell& value) {
        auto& n = nodes_[at];
        if (!n.online || n.behavior != DhtBehavior::Honest) return;
        n.store[key] = value;
    }

    void store_on(NodeIndex origin, const NodeId& key, const Cell& value, const std::vector<NodeIndex>& targets,
                  LookupResult r, const LookupCallback& cb) {
        auto pending = std::make_shared<std::size_t>(targets.size() + 1);
        auto result = std::make_shared<LookupResult>(std::move(r));
        auto done = [pending, result, cb] {
            if (--*pending == 0 && cb) cb(*result);
        };
        for (auto t : targets) {
            result->stored_at.push_back(t);
            if (t == origin) {
                accept_store(t, key, value);
                done();
                continue;
            }
            const auto when = engine_.send(origin, t, cfg_.value_wire_bytes, TrafficClass::CellTransfer, [this, t, key, value, done] {
                accept_store(t, key, value);
                done();
            });
            if (when < 0) done();
        }
        done();
    }

    void start_lookup(NodeIndex origin, const NodeId& target, ValueCheck check, bool force_admit, LookupCallback cb);
    void start_region(NodeIndex origin, const NodeId& key, std::uint32_t depth, ValueCheck check, LookupCallback cb);

    Engine& engine_;
    DhtConfig cfg_;
    std::vector<Node> nodes_;
    std::vector<NodeRecord> sybils_;
    ServeFilter serve_filter_;
};

// ---------------------------------------------------------------------------
// Iterative lookup, optionally over d disjoint paths sharing a claimed set.

class DhtNetwork::IterativeLookup : public std::enable_shared_from_this<DhtNetwork::IterativeLookup> {
public:
    enum class St : std::uint8_t { Fresh, InFlight, Responded, Failed };
    struct Cand {
        NodeRecord rec;
        St st = St::Fresh;
    };
    struct Path {
        std::vector<Cand> list;  // sorted by distance to target
        std::unordered_set<NodeIndex> seen;
        std::size_t in_flight = 0;
        bool done = false;
    };

    IterativeLookup(DhtNetwork& net, NodeIndex origin, NodeId target, ValueCheck check, bool admit, LookupCallback cb)
        : net_(net), origin_(origin), target_(target), check_(std::move(check)), admit_(admit), cb_(std::move(cb)) {}

    void start(std::vector<NodeRecord> seeds = {}) {
        const auto& lc = net_.cfg_.lookup;
        trace_.started = net_.engine_.now();
        paths_.resize(lc.disjoint_paths);
        if (seeds.empty()) seeds = net_.nodes_[origin_].table.closest(target_, lc.k_closest * lc.disjoint_paths);
        std::size_t i = 0;
        for (const auto& s : seeds) {
            if (s.address == origin_) continue;
            insert(paths_[i % paths_.size()], s);
            ++i;
        }
        if (i == 0) {
            auto self = shared_from_this();
            net_.engine_.timer(0, [self] { self->finish(); });
            return;
        }
        for (std::size_t p = 0; p < paths_.size(); ++p) pump(p, 0);
    }

private:
    void insert(Path& path, const NodeRecord& rec) {
        if (!path.seen.insert(rec.address).second) return;
        auto pos = std::lower_bound(path.list.begin(), path.list.end(), rec.id,
                                    [&](const Cand& c, const NodeId& id) { return closer_to(target_, c.rec.id, id); });
        path.list.insert(pos, Cand{rec, St::Fresh});
    }

    bool claimed_elsewhere(NodeIndex a, std::size_t p) const {
        auto it = claimed_.find(a);
        return it != claimed_.end() && it->second != p;
    }

    void pump(std::size_t p, std::uint32_t depth) {
        if (finished_) return;
        auto& path = paths_[p];
        if (path.done) return;
        const auto& lc = net_.cfg_.lookup;
        while (path.in_flight < lc.alpha) {
            std::size_t eligible = 0;
            Cand* next = nullptr;
            for (auto& c : path.list) {
                if (c.st == St::Failed || claimed_elsewhere(c.rec.address, p)) continue;
                if (++eligible > lc.k_closest) break;
                if (c.st == St::Fresh) {
                    next = &c;
                    break;
                }
            }
            if (!next) break;
            query(p, *next, depth + 1);
        }
        if (path.in_flight == 0) {
            path.done = true;
            if (std::all_of(paths_.begin(), paths_.end(), [](const Path& x) { return x.done; })) finish();
        }
    }

    void query(std::size_t p, Cand& c, std::uint32_t depth) {
        c.st = St::InFlight;
        claimed_[c.rec.address] = p;
        ++paths_[p].in_flight;
        ++trace_.contacted;
        ++trace_.messages;
        trace_.contacted_nodes.push_back(c.rec.address);
        const NodeIndex peer = c.rec.address;
        auto self = shared_from_this();
        auto& eng = net_.engine_;
        eng.send(
            origin_, peer, kControlMessageBytes, TrafficClass::Signaling,
            [self, p, peer, depth] {
                auto resp =
                    self->net_.answer_find(peer, self->origin_, self->target_, static_cast<bool>(self->check_), self->admit_);
                if (!resp || self->finished_) return;
                ++self->trace_.messages;
                auto r = std::make_shared<Response>(std::move(*resp));
                self->net_.send_response(peer, self->origin_, *r,
                                         [self, p, peer, depth, r] { self->on_response(p, peer, *r, depth); });
            },
            net_.cfg_.origin_delay);
        eng.timer(net_.cfg_.lookup.timeout + 2 * net_.cfg_.origin_delay, [self, p, peer, depth] {
            auto* c = self->find(p, peer);
            if (!c || c->st != St::InFlight || self->finished_) return;
            c->st = St::Failed;
            ++self->trace_.failed;
            --self->paths_[p].in_flight;
            self->pump(p, depth);
        });
    }

    Cand* find(std::size_t p, NodeIndex a) {
        for (auto& c : paths_[p].list)
            if (c.rec.address == a) return &c;
        return nullptr;
    }

    void on_response(std::size_t p, NodeIndex peer, const Response& r, std::uint32_t depth) {
        if (finished_) return;
        auto* c = find(p, peer);
        if (!c || c->st != St::InFlight) return;
        c->st = St::Responded;
        --paths_[p].in_flight;
        trace_.hops = std::max(trace_.hops, depth);
        if (admit_) net_.contact(peer, origin_);
        if (check_ && r.value) {
            if (check_(*r.value)) {
                value_ = *r.value;
                finish();
                return;
            }
            ++trace_.invalid_values;
        }
        for (const auto& rec : r.records)
            if (rec.address != origin_) insert(paths_[p], rec);
        pump(p, depth);
    }

    void finish() {
        if (finished_) return;
        finished_ = true;
        LookupResult res;
        trace_.finished = net_.engine_.now();
        trace_.round_trips = trace_.hops;
        std::vector<NodeRecord> responded;
        std::unordered_set<NodeIndex> uniq;
        for (const auto& path : paths_)
            for (const auto& c : path.list)
                if (c.st == St::Responded && uniq.insert(c.rec.address).second) responded.push_back(c.rec);
        std::sort(responded.begin(), responded.end(),
                  [&](const NodeRecord& a, const NodeRecord& b) { return closer_to(target_, a.id, b.id); });
        if (responded.size() > net_.cfg_.lookup.k_closest) responded.resize(net_.cfg_.lookup.k_closest);
        res.closest = std::move(responded);
        uniq.clear();
        for (const auto& path : paths_)
            for (const auto& c : path.list)
                if (uniq.insert(c.rec.address).second) res.seen.push_back(c.rec);
        res.value = value_;
        if (value_) res.status = LookupStatus::Ok;
        else if (res.closest.empty() && trace_.invalid_values == 0) res.status = LookupStatus::LookupFailed;
        else if (!check_) res.status = LookupStatus::Ok;
        else res.status = trace_.invalid_values > 0 ? LookupStatus::VerificationFailed : LookupStatus::NotFound;
        res.trace = std::move(trace_);
        if (cb_) cb_(res);
        cb_ = nullptr;
    }

    DhtNetwork& net_;
    NodeIndex origin_;
    NodeId target_;
    ValueCheck check_;
    bool admit_;
    LookupCallback cb_;
    std::vector<Path> paths_;
    std::unordered_map<NodeIndex, std::size_t> claimed_;
    LookupTrace trace_;
    std::optional<Cell> value_;
    bool finished_ = false;
};

// ---------------------------------------------------------------------------
// Recursive lookup: each of d chains walks the best-k set on the origin's
// behalf, reporting progress to the origin at every hop. A hop that stays
// silent past the timeout kills its chain.

class DhtNetwork::RecursiveLookup : public std::enable_shared_from_this<DhtNetwork::RecursiveLookup> {
public:
    struct Carried {
        NodeRecord rec;
        bool visited = false;
    };
    struct Chain {
        std::vector<Carried> carried;  // best-k, sorted by distance
        std::uint32_t hops = 0;
        std::uint64_t generation = 0;
        NodeIndex awaiting = 0;        // node expected to report next
        bool done = false;
        bool ok = false;
    };

    RecursiveLookup(DhtNetwork& net, NodeIndex origin, NodeId target, ValueCheck check, LookupCallback cb)
        : net_(net), origin_(origin), target_(target), check_(std::move(check)), cb_(std::move(cb)) {}

    void start() {
        const auto& lc = net_.cfg_.lookup;
        trace_.started = net_.engine_.now();
        auto seeds = net_.nodes_[origin_].table.closest(target_, lc.k_closest);
        chains_.resize(std::min(lc.disjoint_paths, std::max<std::size_t>(seeds.size(), 1)));
        for (std::size_t i = 0; i < seeds.size(); ++i) merge(chains_[i % chains_.size()], {seeds[i]});
        auto self = shared_from_this();
        if (seeds.empty()) {
            net_.engine_.timer(0, [self] { self->finish(); });
            return;
        }
        for (std::size_t c = 0; c < chains_.size(); ++c) advance(c, origin_);
    }

private:
    void merge(Chain& ch, const std::vector<NodeRecord>& recs) {
        for (const auto& r : recs) {
            if (r.address == origin_) continue;
            if (std::any_of(ch.carried.begin(), ch.carried.end(), [&](const Carried& x) { return x.rec.address == r.address; }))
                continue;
            auto pos = std::lower_bound(ch.carried.begin(), ch.carried.end(), r.id,
                                        [&](const Carried& x, const NodeId& id) { return closer_to(target_, x.rec.id, id); });
            ch.carried.insert(pos, Carried{r, false});
        }
        if (ch.carried.size() > net_.cfg_.lookup.k_closest) ch.carried.resize(net_.cfg_.lookup.k_closest);
    }

    // `at` holds the chain and picks the next hop, or replies to the origin.
    void advance(std::size_t c, NodeIndex at) {
        auto& ch = chains_[c];
        Carried* next = nullptr;
        for (auto& x : ch.carried) {
            if (x.visited) continue;
            auto it = claimed_.find(x.rec.address);
            if (it != claimed_.end() && it->second != c) continue;
            next = &x;
            break;
        }
        auto self = shared_from_this();
        auto& eng = net_.engine_;
        if (!next) {
            // Terminal: the carried best-k has been walked.
            if (at == origin_) {
                complete(c, std::nullopt);
                return;
            }
            ++trace_.messages;
            eng.send(at, origin_, net_.records_bytes(ch.carried.size()), TrafficClass::Signaling,
                     [self, c] { self->complete(c, std::nullopt); });
            return;
        }
        next->visited = true;
        claimed_[next->rec.address] = c;
        const NodeIndex to = next->rec.address;
        ++trace_.contacted;
        ++trace_.messages;
        trace_.contacted_nodes.push_back(to);
        ch.awaiting = to;
        const auto gen = ++ch.generation;
        eng.send(at, to, net_.records_bytes(ch.carried.size()), TrafficClass::Signaling, [self, c, to] { self->arrive(c, to); });
        arm(c, gen, to);
    }

    void arm(std::size_t c, std::uint64_t gen, NodeIndex suspect) {
        auto self = shared_from_this();
        net_.engine_.timer(net_.cfg_.lookup.timeout, [self, c, gen, suspect] {
            auto& ch = self->chains_[c];
            if (self->finished_ || ch.done || ch.generation != gen) return;
            ch.done = true;
            ++self->trace_.failed;
            if (!self->trace_.dropped_by) self->trace_.dropped_by = suspect;
            self->check_all();
        });
    }

    void arrive(std::size_t c, NodeIndex at) {
        if (finished_ || chains_[c].done) return;
        auto& n = net_.nodes_[at];
        if (!n.online || n.behavior == DhtBehavior::DropQueries) return;
        auto& ch = chains_[c];
        ch.hops += 1;
        auto self = shared_from_this();
        // Progress report to the origin re-arms its watchdog.
        ++trace_.messages;
        const auto gen = ch.generation;
        net_.engine_.send(at, origin_, kControlMessageBytes, TrafficClass::Signaling, [self, c, gen, at] {
            auto& chain = self->chains_[c];
            if (self->finished_ || chain.done || chain.generation != gen) return;
            self->arm(c, gen, at);
        });
        if (n.behavior == DhtBehavior::SybilEclipse) {
            if (check_) {
                reply_value(c, at, net_.garbage_cell(at, target_));
                return;
            }
            merge(ch, net_.sybil_closest(target_, net_.cfg_.lookup.k_closest, at));
        } else {
            if (check_) {
                auto it = n.store.find(target_);
                if (it != n.store.end()) {
                    reply_value(c, at, it->second);
                    return;
                }
            }
            merge(ch, n.table.closest(target_, net_.cfg_.lookup.k_closest));
        }
        advance(c, at);
    }

    void reply_value(std::size_t c, NodeIndex at, const Cell& v) {
        auto self = shared_from_this();
        ++trace_.messages;
        net_.engine_.send(at, origin_, net_.cfg_.value_wire_bytes, TrafficClass::CellTransfer,
                          [self, c, v] { self->complete(c, v); });
    }

    void complete(std::size_t c, std::optional<Cell> value) {
        auto& ch = chains_[c];
        if (finished_ || ch.done) return;
        ch.done = true;
        trace_.hops = std::max(trace_.hops, ch.hops + 1);
        if (value) {
            if (check_ && check_(*value)) {
                value_ = std::move(value);
                ch.ok = true;
                finish();
                return;
            }
            ++trace_.invalid_values;
        } else {
            ch.ok = true;
        }
        check_all();
    }

    void check_all() {
        if (std::all_of(chains_.begin(), chains_.end(), [](const Chain& c) { return c.done; })) finish();
    }

    void finish() {
        if (finished_) return;
        finished_ = true;
        LookupResult res;
        trace_.finished = net_.engine_.now();
        const bool any_ok = std::any_of(chains_.begin(), chains_.end(), [](const Chain& c) { return c.ok; });
        trace_.round_trips = any_ok ? 1 : 0;
        std::vector<NodeRecord> merged;
        std::unordered_set<NodeIndex> uniq;
        for (const auto& ch : chains_)
            if (ch.ok)
                for (const auto& x : ch.carried)
                    if (x.visited && uniq.insert(x.rec.address).second) merged.push_back(x.rec);
        std::sort(merged.begin(), merged.end(),
                  [&](const NodeRecord& a, const NodeRecord& b) { return closer_to(target_, a.id, b.id); });
        if (merged.size() > net_.cfg_.lookup.k_closest) merged.resize(net_.cfg_.lookup.k_closest);
        res.closest = std::move(merged);
        res.value = value_;
        if (value_) res.status = LookupStatus::Ok;
        else if (!any_ok && trace_.invalid_values == 0) res.status = LookupStatus::LookupFailed;
        else if (!check_) res.status = LookupStatus::Ok;
        else res.status = trace_.invalid_values > 0 ? LookupStatus::VerificationFailed : LookupStatus::NotFound;
        res.trace = std::move(trace_);
        if (cb_) cb_(res);
        cb_ = nullptr;
    }

    DhtNetwork& net_;
    NodeIndex origin_;
    NodeId target_;
    ValueCheck check_;
    LookupCallback cb_;
    std::vector<Chain> chains_;
    std::unordered_map<NodeIndex, std::size_t> claimed_;
    LookupTrace trace_;
    std::optional<Cell> value_;
    bool finished_ = false;
};

// ---------------------------------------------------------------------------
// Region enumeration: members reply with every record they know inside the
// prefix (and the value, for gets). Rounds continue until two consecutive
// rounds reveal nobody new.

class DhtNetwork::RegionLookup : public std::enable_shared_from_this<DhtNetwork::RegionLookup> {
public:
    RegionLookup(DhtNetwork& net, NodeIndex origin, NodeId key, std::uint32_t depth, ValueCheck check, LookupCallback cb)
        : net_(net), origin_(origin), key_(key), region_(Region::of(key, depth)), check_(std::move(check)), cb_(std::move(cb)) {}

    void start(const LookupResult& nav) {
        trace_ = nav.trace;
        trace_.round_trips = nav.trace.round_trips;
        const auto& me = net_.nodes_[origin_];
        if (region_.contains(me.self.id)) {
            known_.insert(origin_);
            members_.push_back(me.self);
            if (check_) {
                auto it = me.store.find(key_);
                if (it != me.store.end() && check_(it->second)) value_ = it->second;
            }
        }
        if (value_) {
            finish();
            return;
        }
        for (const auto& r : nav.closest) offer(r);
        for (const auto& r : nav.seen) offer(r);
        me.table.for_each([&](const NodeRecord& r) { offer(r); });
        round();
    }

private:
    void offer(const NodeRecord& r) {
        if (!region_.contains(r.id) || !known_.insert(r.address).second) return;
        pending_.push_back(r);
        ++discovered_this_round_;
    }

    void round() {
        if (finished_) return;
        std::vector<NodeRecord> batch;
        batch.swap(pending_);
        discovered_this_round_ = 0;
        if (batch.empty()) {
            // Quiet round: re-ask the members closest to the key.
            std::vector<NodeRecord> m = members_;
            std::erase_if(m, [&](const NodeRecord& r) { return r.address == origin_; });
            std::sort(m.begin(), m.end(), [&](const NodeRecord& a, const NodeRecord& b) { return closer_to(key_, a.id, b.id); });
            if (m.size() > net_.cfg_.lookup.alpha) m.resize(net_.cfg_.lookup.alpha);
            batch = std::move(m);
        }
        ++trace_.round_trips;
        if (batch.empty()) {
            end_round();
            return;
        }
        outstanding_ = batch.size();
        auto self = shared_from_this();
        const auto round_id = ++round_id_;
        for (const auto& r : batch) {
            const bool fresh = std::none_of(members_.begin(), members_.end(), [&](const NodeRecord& m) { return m.address == r.address; });
            if (fresh) {
                ++trace_.contacted;
                trace_.contacted_nodes.push_back(r.address);
            }
            ++trace_.messages;
            auto answered = std::make_shared<bool>(false);
            net_.engine_.send(origin_, r.address, kControlMessageBytes, TrafficClass::Signaling, [self, r, answered, round_id] {
                auto resp = self->net_.answer_region(r.address, self->origin_, self->region_, self->key_,
                                                     static_cast<bool>(self->check_));
                if (!resp || self->finished_) return;
                ++self->trace_.messages;
                auto rp = std::make_shared<Response>(std::move(*resp));
                // Region replies carry both the listing and, when held, the value.
                const auto bytes = self->net_.records_bytes(rp->records.size()) + (rp->value ? self->net_.cfg_.value_wire_bytes : 0);
                const auto cls = rp->value ? TrafficClass::CellTransfer : TrafficClass::Signaling;
                self->net_.engine_.send(
                    r.address, self->origin_, bytes, cls,
                    [self, r, rp, answered, round_id] {
                        if (*answered || self->round_id_ != round_id) return;
                        *answered = true;
                        self->on_reply(r, *rp);
                    },
                    self->net_.cfg_.origin_delay);
            }, net_.cfg_.origin_delay);
            net_.engine_.timer(net_.cfg_.lookup.timeout + 2 * net_.cfg_.origin_delay, [self, answered, round_id] {
                if (*answered || self->round_id_ != round_id) return;
                *answered = true;
                ++self->trace_.failed;
                self->settle();
            });
        }
    }

    void on_reply(const NodeRecord& from, const Response& r) {
        if (finished_) return;
        if (std::none_of(members_.begin(), members_.end(), [&](const NodeRecord& m) { return m.address == from.address; }))
            members_.push_back(from);
        if (check_ && r.value) {
            if (check_(*r.value)) {
                value_ = *r.value;
                finish();
                return;
            }
            ++trace_.invalid_values;
        }
        for (const auto& rec : r.records) offer(rec);
        settle();
    }

    void settle() {
        if (finished_ || --outstanding_ > 0) return;
        end_round();
    }

    void end_round() {
        quiet_rounds_ = discovered_this_round_ == 0 ? quiet_rounds_ + 1 : 0;
        if (quiet_rounds_ >= 2 && pending_.empty()) {
            finish();
            return;
        }
        round();
    }

    void finish() {
        if (finished_) return;
        finished_ = true;
        LookupResult res;
        trace_.finished = net_.engine_.now();
        trace_.hops = trace_.round_trips;
        std::sort(members_.begin(), members_.end(), [&](const NodeRecord& a, const NodeRecord& b) { return closer_to(key_, a.id, b.id); });
        res.closest = members_;
        res.value = value_;
        if (value_) res.status = LookupStatus::Ok;
        else if (members_.empty()) res.status = LookupStatus::RegionEmpty;
        else if (!check_) res.status = LookupStatus::Ok;
        else res.status = trace_.invalid_values > 0 ? LookupStatus::VerificationFailed : LookupStatus::NotFound;
        res.trace = std::move(trace_);
        if (cb_) cb_(res);
        cb_ = nullptr;
    }

    DhtNetwork& net_;
    NodeIndex origin_;
    NodeId key_;
    Region region_;
    ValueCheck check_;
    LookupCallback cb_;
    std::unordered_set<NodeIndex> known_;
    std::vector<NodeRecord> pending_;
    std::vector<NodeRecord> members_;
    std::size_t discovered_this_round_ = 0;
    std::size_t outstanding_ = 0;
    std::uint64_t round_id_ = 0;
    int quiet_rounds_ = 0;
    LookupTrace trace_;
    std::optional<Cell> value_;
    bool finished_ = false;
};

inline void DhtNetwork::start_lookup(NodeIndex origin, const NodeId& target, ValueCheck check, bool force_admit,
                                     LookupCallback cb) {
    if (origin >= nodes_.size()) throw Error("lookup origin is not a dht node");
    if (cfg_.lookup.mode == LookupMode::Recursive && !force_admit) {
        std::make_shared<RecursiveLookup>(*this, origin, target, std::move(check), std::move(cb))->start();
        return;
    }
    std::make_shared<IterativeLookup>(*this, origin, target, std::move(check), force_admit || cfg_.admit_on_contact,
                                      std::move(cb))
        ->start();
}

inline void DhtNetwork::start_region(NodeIndex origin, const NodeId& key, std::uint32_t depth, ValueCheck check,
                                     LookupCallback cb) {
    if (origin >= nodes_.size()) throw Error("region lookup origin is not a dht node");
    if (depth == 0 && nodes_.size() > 1024) throw ConfigError("region depth 0 is only valid for <= 1024 nodes");
    auto region = std::make_shared<RegionLookup>(*this, origin, key, depth, std::move(check), std::move(cb));
    std::make_shared<IterativeLookup>(*this, origin, key, nullptr, cfg_.admit_on_contact,
                                      [region](const LookupResult& nav) { region->start(nav); })
        ->start();
}

}  // namespace dassim
