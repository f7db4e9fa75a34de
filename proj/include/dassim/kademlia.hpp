#pragma once

// XOR metric, k-bucket routing tables with subnet-aware admission, regions,
// proof-of-work identities and cell keys.

#include "dassim/core.hpp"
#include "dassim/digest.hpp"
#include "dassim/rng.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace dassim {

inline NodeId xor_distance(const NodeId& a, const NodeId& b) {
    NodeId d;
    for (std::size_t i = 0; i < d.bytes.size(); ++i) d.bytes[i] = static_cast<std::uint8_t>(a.bytes[i] ^ b.bytes[i]);
    return d;
}

inline std::size_t common_prefix_length(const NodeId& a, const NodeId& b) {
    return xor_distance(a, b).leading_zero_bits();
}

// Position of the highest set bit of d(a, b); undefined for a == b.
inline std::size_t bucket_index(const NodeId& owner, const NodeId& id) {
    const auto cpl = common_prefix_length(owner, id);
    if (cpl == NodeId::kBits) throw std::invalid_argument("bucket_index: id equals owner");
    return NodeId::kBits - 1 - cpl;
}

// True if d(a, target) < d(b, target).
inline bool closer_to(const NodeId& target, const NodeId& a, const NodeId& b) {
    for (std::size_t i = 0; i < a.bytes.size(); ++i) {
        const auto x = static_cast<std::uint8_t>(a.bytes[i] ^ target.bytes[i]);
        const auto y = static_cast<std::uint8_t>(b.bytes[i] ^ target.bytes[i]);
        if (x != y) return x < y;
    }
    return false;
}

struct NodeRecord {
    NodeId id;
    NodeIndex address = 0;
    std::uint32_t subnet = 0;  // /24 tag
    Micros last_seen = 0;
};

enum class AdmitResult : std::uint8_t { Admitted, Refreshed, Evicted, RejectedSubnetLimit, RejectedBucketFull, RejectedSelf };

inline const char* to_string(AdmitResult r) {
    switch (r) {
        case AdmitResult::Admitted: return "admitted";
        case AdmitResult::Refreshed: return "refreshed";
        case AdmitResult::Evicted: return "evicted";
        case AdmitResult::RejectedSubnetLimit: return "subnet-limit";
        case AdmitResult::RejectedBucketFull: return "bucket-full";
        case AdmitResult::RejectedSelf: return "self";
    }
    return "?";
}

struct AdmitOutcome {
    AdmitResult result = AdmitResult::Admitted;
    std::optional<NodeIndex> pinged;     // resident that received an eviction check
    std::optional<NodeRecord> evicted;   // set when result == Evicted

    bool admitted() const {
        return result == AdmitResult::Admitted || result == AdmitResult::Refreshed || result == AdmitResult::Evicted;
    }
};

class RoutingTable {
public:
    using Reachable = std::function<bool(const NodeRecord&)>;

    explicit RoutingTable(NodeId owner = {}, std::size_t capacity = 16, std::size_t subnet_limit = 2)
        : owner_(owner), capacity_(capacity), subnet_limit_(subnet_limit) {
        if (capacity_ == 0) throw ConfigError("bucket capacity must be >= 1");
        if (subnet_limit_ == 0) throw ConfigError("subnet limit must be >= 1");
    }

    const NodeId& owner() const { return owner_; }
    std::size_t capacity() const { return capacity_; }
    std::size_t subnet_limit() const { return subnet_limit_; }

    // Buckets are kept in least-recently-seen-first order. A full bucket
    // pings its oldest entry through `reachable` and evicts it if it is gone.
    AdmitOutcome admit(const NodeRecord& rec, const Reachable& reachable = {}) {
        if (rec.id == owner_) return {AdmitResult::RejectedSelf, std::nullopt, std::nullopt};
        auto& bucket = slot(common_prefix_length(owner_, rec.id));
        auto it = std::find_if(bucket.begin(), bucket.end(), [&](const NodeRecord& r) { return r.id == rec.id; });
        if (it != bucket.end()) {
            NodeRecord updated = *it;
            updated.last_seen = std::max(updated.last_seen, rec.last_seen);
            bucket.erase(it);
            bucket.push_back(updated);
            return {AdmitResult::Refreshed, std::nullopt, std::nullopt};
        }
        const auto same_subnet = static_cast<std::size_t>(
            std::count_if(bucket.begin(), bucket.end(), [&](const NodeRecord& r) { return r.subnet == rec.subnet; }));
        if (same_subnet >= subnet_limit_) return {AdmitResult::RejectedSubnetLimit, std::nullopt, std::nullopt};
        if (bucket.size() < capacity_) {
            bucket.push_back(rec);
            ++size_;
            return {AdmitResult::Admitted, std::nullopt, std::nullopt};
        }
        const NodeRecord oldest = bucket.front();
        AdmitOutcome out{AdmitResult::RejectedBucketFull, oldest.address, std::nullopt};
        if (reachable && !reachable(oldest)) {
            bucket.erase(bucket.begin());
            bucket.push_back(rec);
            out.result = AdmitResult::Evicted;
            out.evicted = oldest;
        } else {
            bucket.erase(bucket.begin());
            bucket.push_back(oldest);  // answered the ping
        }
        return out;
    }

    bool remove(const NodeId& id) {
        if (id == owner_) return false;
        const auto cpl = common_prefix_length(owner_, id);
        if (cpl >= by_cpl_.size()) return false;
        auto& bucket = by_cpl_[cpl];
        auto it = std::find_if(bucket.begin(), bucket.end(), [&](const NodeRecord& r) { return r.id == id; });
        if (it == bucket.end()) return false;
        bucket.erase(it);
        --size_;
        return true;
    }

    bool contains(const NodeId& id) const { return find(id) != nullptr; }

    const NodeRecord* find(const NodeId& id) const {
        if (id == owner_) return nullptr;
        const auto cpl = common_prefix_length(owner_, id);
        if (cpl >= by_cpl_.size()) return nullptr;
        for (const auto& r : by_cpl_[cpl])
            if (r.id == id) return &r;
        return nullptr;
    }

    // Bucket i holds peers whose distance to the owner has highest set bit i.
    const std::vector<NodeRecord>& bucket(std::size_t i) const {
        static const std::vector<NodeRecord> kEmpty;
        if (i >= NodeId::kBits) throw std::out_of_range("bucket index");
        const auto cpl = NodeId::kBits - 1 - i;
        return cpl < by_cpl_.size() ? by_cpl_[cpl] : kEmpty;
    }
    std::size_t bucket_count_nonempty() const {
        return static_cast<std::size_t>(std::count_if(by_cpl_.begin(), by_cpl_.end(), [](const auto& b) { return !b.empty(); }));
    }
    std::size_t size() const { return size_; }

    template <class F>
    void for_each(F&& f) const {
        for (const auto& b : by_cpl_)
            for (const auto& r : b) f(r);
    }

    // Up to `count` records ordered by distance to `target`.
    std::vector<NodeRecord> closest(const NodeId& target, std::size_t count) const {
        std::vector<NodeRecord> all;
        all.reserve(size_);
        for_each([&](const NodeRecord& r) { all.push_back(r); });
        auto cmp = [&](const NodeRecord& a, const NodeRecord& b) { return closer_to(target, a.id, b.id); };
        if (all.size() > count) {
            std::nth_element(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(count), all.end(), cmp);
            all.resize(count);
        }
        std::sort(all.begin(), all.end(), cmp);
        return all;
    }

    // Checks capacity, subnet and placement invariants.
    bool audit() const {
        std::size_t n = 0;
        for (std::size_t cpl = 0; cpl < by_cpl_.size(); ++cpl) {
            const auto& b = by_cpl_[cpl];
            if (b.size() > capacity_) return false;
            for (const auto& r : b) {
                if (r.id == owner_ || common_prefix_length(owner_, r.id) != cpl) return false;
                const auto same = std::count_if(b.begin(), b.end(), [&](const NodeRecord& o) { return o.subnet == r.subnet; });
                if (static_cast<std::size_t>(same) > subnet_limit_) return false;
            }
            n += b.size();
        }
        return n == size_;
    }

private:
    std::vector<NodeRecord>& slot(std::size_t cpl) {
        if (cpl >= by_cpl_.size()) by_cpl_.resize(cpl + 1);
        return by_cpl_[cpl];
    }

    NodeId owner_;
    std::size_t capacity_;
    std::size_t subnet_limit_;
    std::vector<std::vector<NodeRecord>> by_cpl_;  // indexed by common prefix length
    std::size_t size_ = 0;
};

// Keyspace region: all ids whose leading `depth` bits equal those of `prefix`.
struct Region {
    NodeId prefix;
    std::uint32_t depth = 0;

    static Region of(const NodeId& key, std::uint32_t depth) {
        if (depth > 24) throw ConfigError("region depth must be <= 24");
        Region r;
        r.depth = depth;
        for (std::uint32_t i = 0; i < depth; ++i) r.prefix.set_bit(255 - i, key.prefix_bit(i));
        return r;
    }

    bool contains(const NodeId& id) const { return common_prefix_length(prefix, id) >= depth; }
};

// Key under which a cell of a given slot is stored.
inline NodeId cell_key(std::uint64_t slot, CellCoordinate coord) {
    Sha256 h;
    h.update("dassim/cell-key").update_u64(slot).update_u64(coord.row).update_u64(coord.col);
    return NodeId{h.finish()};
}

struct PowIdentity {
    std::array<std::uint8_t, kPublicKeyBytes> secret{};
    NodeId id;
    std::uint64_t attempts = 0;
};

inline constexpr std::uint32_t kMaxPowDifficulty = 24;

// Brute-forces a key whose derived id has >= difficulty trailing zero bits
// and satisfies `accept`. Throws after `max_attempts` failures.
inline PowIdentity pow_node_id(DeterministicRng& rng, std::uint32_t difficulty,
                               const std::function<bool(const NodeId&)>& accept = {},
                               std::uint64_t max_attempts = std::uint64_t{1} << 40) {
    if (difficulty > kMaxPowDifficulty) throw ConfigError("pow difficulty must be <= 24");
    PowIdentity out;
    while (out.attempts < max_attempts) {
        rng.fill(out.secret);
        ++out.attempts;
        out.id = derive_node_id(out.secret);
        if (out.id.trailing_zero_bits() >= difficulty && (!accept || accept(out.id))) return out;
    }
    throw Error("identity placement infeasible after " + std::to_string(out.attempts) + " attempts");
}

}  // namespace dassim
