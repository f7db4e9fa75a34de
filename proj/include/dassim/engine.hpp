#pragma once

// Single-threaded discrete-event kernel: virtual clock, (time, sequence)
// ordered event heap, per-node link serialization and traffic accounting.

#include "dassim/core.hpp"
#include "dassim/rng.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <queue>
#include <string>
#include <vector>

namespace dassim {

enum class TrafficClass : std::uint8_t { CellTransfer = 0, Signaling = 1, Header = 2 };
inline constexpr std::size_t kTrafficClasses = 3;

inline const char* to_string(TrafficClass c) {
    switch (c) {
        case TrafficClass::CellTransfer: return "cell";
        case TrafficClass::Signaling: return "signaling";
        case TrafficClass::Header: return "header";
    }
    return "?";
}

enum class EventKind : std::uint8_t { MessageDelivery, TimerExpiry, SlotBoundary };

// Nominal size of a control message (request, ack, ping, subscription).
inline constexpr std::uint64_t kControlMessageBytes = 100;

struct LatencyModel {
    enum class Kind : std::uint8_t { Constant, UniformRange, RegionMatrix };

    Kind kind = Kind::UniformRange;
    Micros constant = 100 * kMillis;
    Micros min = 40 * kMillis;
    Micros max = 160 * kMillis;
    std::vector<std::vector<Micros>> matrix;  // region x region
    std::vector<std::uint32_t> node_region;   // indexed by NodeIndex; missing entries map to region 0
    std::uint64_t seed = 0;                   // UniformRange per-link draw

    static LatencyModel fixed(Micros value) {
        LatencyModel m;
        m.kind = Kind::Constant;
        m.constant = value;
        return m;
    }
    static LatencyModel uniform(Micros lo, Micros hi, std::uint64_t seed = 0) {
        LatencyModel m;
        m.kind = Kind::UniformRange;
        m.min = lo;
        m.max = hi;
        m.seed = seed;
        return m;
    }
    static LatencyModel regions(std::vector<std::vector<Micros>> matrix, std::vector<std::uint32_t> node_region) {
        LatencyModel m;
        m.kind = Kind::RegionMatrix;
        m.matrix = std::move(matrix);
        m.node_region = std::move(node_region);
        return m;
    }

    void validate() const {
        switch (kind) {
            case Kind::Constant:
                if (constant <= 0) throw ConfigError("latency.constant must be > 0");
                break;
            case Kind::UniformRange:
                if (min <= 0 || max < min) throw ConfigError("latency range must satisfy 0 < min <= max");
                break;
            case Kind::RegionMatrix:
                if (matrix.empty()) throw ConfigError("latency.matrix must not be empty");
                for (std::size_t i = 0; i < matrix.size(); ++i) {
                    if (matrix[i].size() != matrix.size()) throw ConfigError("latency.matrix must be square");
                    for (std::size_t j = 0; j < matrix.size(); ++j) {
                        if (matrix[i][j] <= 0) throw ConfigError("latency.matrix entries must be > 0");
                        if (matrix[i][j] != matrix[j][i]) throw ConfigError("latency.matrix must be symmetric");
                    }
                }
                for (auto r : node_region)
                    if (r >= matrix.size()) throw ConfigError("latency.node_region references unknown region");
                break;
        }
    }

    // One-way latency; symmetric and fixed per unordered node pair.
    Micros latency(NodeIndex a, NodeIndex b) const {
        switch (kind) {
            case Kind::Constant: return constant;
            case Kind::UniformRange: {
                const std::uint64_t lo = std::min(a, b), hi = std::max(a, b);
                const std::uint64_t h = mix64(seed ^ 0x6c61'7465'6e63'7921ULL, (lo << 32) | hi);
                const auto span = static_cast<std::uint64_t>(max - min) + 1;
                return min + static_cast<Micros>(h % span);
            }
            case Kind::RegionMatrix: {
                auto region = [&](NodeIndex n) { return n < node_region.size() ? node_region[n] : 0u; };
                return matrix[region(a)][region(b)];
            }
        }
        return constant;
    }

    Micros mean_latency() const {
        switch (kind) {
            case Kind::Constant: return constant;
            case Kind::UniformRange: return (min + max) / 2;
            case Kind::RegionMatrix: {
                Micros sum = 0;
                for (const auto& row : matrix)
                    for (auto v : row) sum += v;
                return sum / static_cast<Micros>(matrix.size() * matrix.size());
            }
        }
        return constant;
    }
};

// Zero means unlimited.
struct BandwidthBudget {
    std::uint64_t uplink_bytes_per_sec = 0;
    std::uint64_t downlink_bytes_per_sec = 0;
};

inline Micros serialization_delay(std::uint64_t bytes, std::uint64_t rate) {
    if (rate == 0 || bytes == 0) return 0;
    const auto num = static_cast<unsigned __int128>(bytes) * 1'000'000u;
    return static_cast<Micros>((num + rate - 1) / rate);
}

struct TrafficCounters {
    std::array<std::uint64_t, kTrafficClasses> bytes_sent{};
    std::array<std::uint64_t, kTrafficClasses> bytes_received{};
    std::array<std::uint64_t, kTrafficClasses> bytes_dropped{};
    std::array<std::uint64_t, kTrafficClasses> messages_sent{};

    static std::uint64_t sum(const std::array<std::uint64_t, kTrafficClasses>& a) { return a[0] + a[1] + a[2]; }
    std::uint64_t total_sent() const { return sum(bytes_sent); }
    std::uint64_t total_received() const { return sum(bytes_received); }
    std::uint64_t total_dropped() const { return sum(bytes_dropped); }
    std::uint64_t sent(TrafficClass c) const { return bytes_sent[static_cast<std::size_t>(c)]; }
    std::uint64_t received(TrafficClass c) const { return bytes_received[static_cast<std::size_t>(c)]; }
};

class TrafficLedger {
public:
    explicit TrafficLedger(std::size_t nodes = 0) : nodes_(nodes) {}

    void resize(std::size_t nodes) { nodes_.resize(nodes); }
    std::size_t node_count() const { return nodes_.size(); }

    void record_send(NodeIndex from, std::uint64_t bytes, TrafficClass c) {
        const auto i = static_cast<std::size_t>(c);
        nodes_.at(from).bytes_sent[i] += bytes;
        nodes_[from].messages_sent[i] += 1;
        global_.bytes_sent[i] += bytes;
        global_.messages_sent[i] += 1;
    }
    void record_receive(NodeIndex to, std::uint64_t bytes, TrafficClass c) {
        const auto i = static_cast<std::size_t>(c);
        nodes_.at(to).bytes_received[i] += bytes;
        global_.bytes_received[i] += bytes;
    }
    void record_drop(NodeIndex from, std::uint64_t bytes, TrafficClass c) {
        const auto i = static_cast<std::size_t>(c);
        nodes_.at(from).bytes_dropped[i] += bytes;
        global_.bytes_dropped[i] += bytes;
    }

    const TrafficCounters& node(NodeIndex n) const { return nodes_.at(n); }
    const TrafficCounters& global() const { return global_; }

    // Sent = received + dropped once no message is in flight.
    bool conserved() const { return global_.total_sent() == global_.total_received() + global_.total_dropped(); }

private:
    std::vector<TrafficCounters> nodes_;
    TrafficCounters global_;
};

class Engine {
public:
    using Handler = std::function<void()>;
    // Returns true if the message should be dropped.
    using LinkFilter = std::function<bool(NodeIndex from, NodeIndex to, TrafficClass)>;

    Engine(std::size_t node_count, LatencyModel latency)
        : latency_(std::move(latency)), ledger_(node_count), budgets_(node_count), uplink_free_(node_count, 0),
          downlink_free_(node_count, 0) {
        latency_.validate();
    }

    std::size_t node_count() const { return budgets_.size(); }

    NodeIndex add_node() {
        budgets_.emplace_back();
        uplink_free_.push_back(0);
        downlink_free_.push_back(0);
        ledger_.resize(budgets_.size());
        return static_cast<NodeIndex>(budgets_.size() - 1);
    }

    Micros now() const { return now_; }
    const LatencyModel& latency_model() const { return latency_; }
    Micros latency(NodeIndex a, NodeIndex b) const { return latency_.latency(a, b); }

    void set_bandwidth(NodeIndex n, BandwidthBudget b) { budgets_.at(n) = b; }
    const BandwidthBudget& bandwidth(NodeIndex n) const { return budgets_.at(n); }
    void set_link_filter(LinkFilter f) { filter_ = std::move(f); }

    void schedule(Micros at, EventKind kind, Handler fn) {
        if (at < now_) throw Error("cannot schedule an event in the past");
        push(Event{at, next_seq_++, kind, 0, 0, 0, std::move(fn)});
    }
    void schedule_after(Micros delay, EventKind kind, Handler fn) { schedule(now_ + delay, kind, std::move(fn)); }
    void timer(Micros delay, Handler fn) { schedule_after(delay, EventKind::TimerExpiry, std::move(fn)); }

    // Sends an atomic message. Uplink and downlink serialize back to back;
    // propagation latency sits between them. Returns the delivery time, or -1
    // if the link filter dropped it. `extra_delay` models relays that add
    // latency without carrying bandwidth.
    Micros send(NodeIndex from, NodeIndex to, std::uint64_t bytes, TrafficClass cls, Handler on_delivery,
                Micros extra_delay = 0) {
        check_node(from);
        check_node(to);
        if (from == to) throw Error("send: source and destination are the same node");
        ledger_.record_send(from, bytes, cls);
        if (filter_ && filter_(from, to, cls)) {
            ledger_.record_drop(from, bytes, cls);
            ++dropped_;
            return -1;
        }
        const Micros up_start = std::max(now_, uplink_free_[from]);
        const Micros up_done = up_start + serialization_delay(bytes, budgets_[from].uplink_bytes_per_sec);
        uplink_free_[from] = up_done;
        const Micros arrival = up_done + latency_.latency(from, to) + extra_delay;
        const Micros down_start = std::max(arrival, downlink_free_[to]);
        const Micros delivered = down_start + serialization_delay(bytes, budgets_[to].downlink_bytes_per_sec);
        downlink_free_[to] = delivered;
        push(Event{delivered, next_seq_++, EventKind::MessageDelivery, from, to, bytes,
                   [this, to, bytes, cls, fn = std::move(on_delivery)] {
                       ledger_.record_receive(to, bytes, cls);
                       if (fn) fn();
                   }});
        return delivered;
    }

    // Ledger-only transfer for zero-latency control exchanges (eviction pings).
    void account(NodeIndex from, NodeIndex to, std::uint64_t bytes, TrafficClass cls) {
        check_node(from);
        check_node(to);
        ledger_.record_send(from, bytes, cls);
        ledger_.record_receive(to, bytes, cls);
    }

    // Processes every event with fire time <= t, then advances the clock to t.
    void run_until(Micros t) {
        while (!queue_.empty() && queue_.top().time <= t) step();
        if (t > now_) now_ = t;
    }

    // Runs to quiescence.
    void run() {
        while (!queue_.empty()) step();
    }

    bool idle() const { return queue_.empty(); }
    std::size_t pending() const { return queue_.size(); }
    std::uint64_t scheduled_count() const { return next_seq_; }
    std::uint64_t processed_count() const { return processed_; }
    std::uint64_t dropped_count() const { return dropped_; }
    std::uint64_t trace_hash() const { return trace_hash_; }
    const TrafficLedger& ledger() const { return ledger_; }

private:
    struct Event {
        Micros time;
        std::uint64_t seq;
        EventKind kind;
        NodeIndex from;
        NodeIndex to;
        std::uint64_t bytes;
        Handler fn;
    };
    struct Later {
        bool operator()(const Event& a, const Event& b) const {
            return a.time != b.time ? a.time > b.time : a.seq > b.seq;
        }
    };

    void check_node(NodeIndex n) const {
        if (n >= budgets_.size()) throw Error("unknown node " + std::to_string(n));
    }

    void push(Event e) { queue_.push(std::move(e)); }

    void step() {
        // priority_queue::top is const; the handler is moved out before pop.
        Event e = std::move(const_cast<Event&>(queue_.top()));
        queue_.pop();
        now_ = e.time;
        ++processed_;
        hash_value(static_cast<std::uint64_t>(e.time));
        hash_value(e.seq);
        hash_value(static_cast<std::uint64_t>(e.kind));
        hash_value((static_cast<std::uint64_t>(e.from) << 32) | e.to);
        hash_value(e.bytes);
        if (e.fn) e.fn();
    }

    void hash_value(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            trace_hash_ ^= (v >> (8 * i)) & 0xff;
            trace_hash_ *= 0x100000001b3ULL;
        }
    }

    LatencyModel latency_;
    TrafficLedger ledger_;
    std::vector<BandwidthBudget> budgets_;
    std::vector<Micros> uplink_free_;
    std::vector<Micros> downlink_free_;
    LinkFilter filter_;
    std::priority_queue<Event, std::vector<Event>, Later> queue_;
    Micros now_ = 0;
    std::uint64_t next_seq_ = 0;
    std::uint64_t processed_ = 0;
    std::uint64_t dropped_ = 0;
    std::uint64_t trace_hash_ = 0xcbf29ce484222325ULL;
};

}  // namespace dassim
