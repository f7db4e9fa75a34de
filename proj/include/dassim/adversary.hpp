#pragma once

// Attack models: withholding, network split by requester identity, Sybil
// placement in the DHT, eclipse pressure on one routing table, and late
// defection of gossip peers.

#include "dassim/blob.hpp"
#include "dassim/core.hpp"
#include "dassim/dht.hpp"
#include "dassim/kademlia.hpp"
#include "dassim/rng.hpp"
#include "dassim/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dassim {

enum class AdversaryKind : std::uint8_t {
    None,
    WithholdFraction,
    WithholdRegularTargets,
    SplitByIdentity,
    SybilDht,
    LateDefection,
};

enum class SybilPlacement : std::uint8_t { UniformIds, NearKey, InRegion };

enum class SplitPredicateKind : std::uint8_t { None, IdEven, IdOdd, TargetSet };

inline const char* to_string(AdversaryKind k) {
    switch (k) {
        case AdversaryKind::None: return "none";
        case AdversaryKind::WithholdFraction: return "withhold-fraction";
        case AdversaryKind::WithholdRegularTargets: return "withhold-regular-targets";
        case AdversaryKind::SplitByIdentity: return "split-by-identity";
        case AdversaryKind::SybilDht: return "sybil-dht";
        case AdversaryKind::LateDefection: return "late-defection";
    }
    return "?";
}

inline const char* to_string(SybilPlacement p) {
    switch (p) {
        case SybilPlacement::UniformIds: return "uniform";
        case SybilPlacement::NearKey: return "near-key";
        case SybilPlacement::InRegion: return "in-region";
    }
    return "?";
}

inline const char* to_string(SplitPredicateKind k) {
    switch (k) {
        case SplitPredicateKind::None: return "none";
        case SplitPredicateKind::IdEven: return "id-even";
        case SplitPredicateKind::IdOdd: return "id-odd";
        case SplitPredicateKind::TargetSet: return "target-set";
    }
    return "?";
}

// What the adversary can observe about a requester.
struct RequestOrigin {
    NodeId id;
    NodeIndex index = 0;
};

struct SplitPredicate {
    SplitPredicateKind kind = SplitPredicateKind::None;
    std::vector<NodeIndex> targets;  // sorted; TargetSet only

    bool matches(const RequestOrigin& o) const {
        switch (kind) {
            case SplitPredicateKind::None: return false;
            case SplitPredicateKind::IdEven: return !o.id.bit(0);
            case SplitPredicateKind::IdOdd: return o.id.bit(0);
            case SplitPredicateKind::TargetSet: return std::binary_search(targets.begin(), targets.end(), o.index);
        }
        return false;
    }
};

struct SybilSpec {
    std::uint32_t count = 0;
    SybilPlacement placement = SybilPlacement::UniformIds;
    NodeId key;                      // NearKey / InRegion anchor
    std::uint32_t region_depth = 0;  // InRegion
    std::uint32_t pow_difficulty = 0;
    std::uint32_t subnets = 0;  // distinct /24 tags shared by the Sybils; 0 = one each
    double max_fraction = 0.2;  // budget relative to the honest network
    std::uint64_t attempt_budget = std::uint64_t{1} << 32;
};

struct AdversarySpec {
    AdversaryKind kind = AdversaryKind::None;
    double withhold_fraction = 0.0;
    std::vector<NodeIndex> withhold_targets;
    SplitPredicate split;
    SybilSpec sybil;
    std::uint64_t defect_slot = 0;
    std::vector<NodeIndex> controlled_nodes;
    double controlled_fraction = 0.0;  // used when controlled_nodes is empty
    std::optional<CellCoordinate> target_cell;  // cell whose fetches are tracked

    void validate(std::size_t network_size) const {
        if (!(withhold_fraction >= 0.0 && withhold_fraction <= 1.0))
            throw ConfigError("adversary.withhold_fraction must be in [0, 1]");
        if (!(controlled_fraction >= 0.0 && controlled_fraction <= 1.0))
            throw ConfigError("adversary.controlled_fraction must be in [0, 1]");
        if (!(sybil.max_fraction >= 0.0)) throw ConfigError("adversary.sybil.max_fraction must be >= 0");
        if (kind == AdversaryKind::SybilDht) {
            const auto budget = static_cast<std::uint64_t>(std::floor(sybil.max_fraction * static_cast<double>(network_size)));
            if (sybil.count > budget)
                throw ConfigError("adversary.sybil.count " + std::to_string(sybil.count) + " exceeds budget " +
                                  std::to_string(budget));
            if (sybil.pow_difficulty > kMaxPowDifficulty) throw ConfigError("adversary.sybil.pow_difficulty must be <= 24");
            if (sybil.placement == SybilPlacement::InRegion && sybil.region_depth > 24)
                throw ConfigError("adversary.sybil.region_depth must be <= 24");
        }
        for (auto n : controlled_nodes)
            if (n >= network_size) throw ConfigError("adversary.controlled_nodes: index out of range");
        for (auto n : withhold_targets)
            if (n >= network_size) throw ConfigError("adversary.withhold_targets: index out of range");
    }
};

// --- withholding -----------------------------------------------------------

// A uniformly random ceil(f * N)-cell subset, as sorted flat indices.
inline std::vector<std::uint64_t> withheld_cells(const BlobGeometry& g, double f, DeterministicRng& rng) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("withhold fraction must be in [0, 1]");
    const auto n = g.total_cells();
    auto picked = rng.sample_without_replacement(n, withheld_cell_count(f, n));
    std::sort(picked.begin(), picked.end());
    return picked;
}

// The part of `blob` the producer releases.
inline BlobMatrix apply_withholding(const BlobMatrix& blob, double f, DeterministicRng& rng) {
    const auto& g = blob.geometry();
    const auto withheld = withheld_cells(g, f, rng);
    return blob.filtered([&](CellCoordinate c) {
        return !std::binary_search(withheld.begin(), withheld.end(), coordinate_index(c, g));
    });
}

// Cells of the targeted nodes' assignments, sorted and deduplicated.
inline std::vector<std::uint64_t> targeted_cells(std::span<const SampleAssignment> assignments,
                                                 std::span<const NodeIndex> targets, const BlobGeometry& g) {
    std::vector<std::uint64_t> out;
    for (const auto& a : assignments)
        if (std::find(targets.begin(), targets.end(), a.node) != targets.end())
            for (const auto& c : a.cells) out.push_back(coordinate_index(c, g));
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// --- network split ---------------------------------------------------------

// Per-(node, slot) identity that an anonymizing relay presents in place of
// the real origin. Unlinkable across slots and unrelated to the node id.
inline RequestOrigin proxy_pseudonym(std::uint64_t seed, NodeIndex node, std::uint64_t slot, std::size_t network_size) {
    Sha256 h;
    h.update("dassim/proxy").update_u64(seed).update_u64(node).update_u64(slot);
    RequestOrigin o;
    o.id = NodeId{h.finish()};
    o.index = static_cast<NodeIndex>(o.id.prefix64() % std::max<std::size_t>(network_size, 1));
    return o;
}

inline RequestOrigin observed_origin(const NodeProfile& requester, std::uint64_t slot, bool proxy, std::uint64_t seed,
                                     std::size_t network_size) {
    if (proxy) return proxy_pseudonym(seed, requester.index, slot, network_size);
    return {requester.node_id, requester.index};
}

struct SampleRequest {
    NodeIndex requester = 0;
    RequestOrigin origin;  // as seen by the responder
    CellCoordinate coord;
};

inline std::vector<SampleRequest> apply_split(std::vector<SampleRequest> requests, const SplitPredicate& predicate) {
    std::erase_if(requests, [&](const SampleRequest& r) { return predicate.matches(r.origin); });
    return requests;
}

// --- Sybils ----------------------------------------------------------------

struct SybilDeployment {
    std::vector<NodeIndex> nodes;
    std::vector<std::uint64_t> attempts;  // per Sybil
    std::uint64_t total_attempts = 0;
};

// Crafts identities, registers them with the engine and the DHT, and joins
// each through a random honest bootstrap. The engine is run until the joins
// settle.
inline SybilDeployment spawn_sybils(DhtNetwork& net, const SybilSpec& spec, DeterministicRng& rng) {
    SybilDeployment out;
    if (spec.count == 0) return out;
    std::vector<NodeIndex> honest;
    for (NodeIndex i = 0; i < net.size(); ++i)
        if (net.node(i).behavior == DhtBehavior::Honest && net.online(i)) honest.push_back(i);
    if (honest.empty()) throw Error("spawn_sybils: no honest bootstrap node");
    const auto budget = static_cast<std::uint64_t>(std::floor(spec.max_fraction * static_cast<double>(honest.size())));
    if (spec.count > budget)
        throw ConfigError("sybil count " + std::to_string(spec.count) + " exceeds budget " + std::to_string(budget));

    std::function<bool(const NodeId&)> accept;
    if (spec.placement == SybilPlacement::NearKey) {
        const auto nearest = net.true_closest(spec.key, 1, true);
        const NodeId bound = nearest.empty() ? NodeId{} : nearest.front().id;
        const bool any = nearest.empty();
        accept = [key = spec.key, bound, any](const NodeId& id) { return any || closer_to(key, id, bound); };
    } else if (spec.placement == SybilPlacement::InRegion) {
        accept = [r = Region::of(spec.key, spec.region_depth)](const NodeId& id) { return r.contains(id); };
    }

    std::vector<std::uint32_t> pool;
    for (std::uint32_t i = 0; i < spec.subnets; ++i) pool.push_back(static_cast<std::uint32_t>(rng.below(1u << 24)));

    auto& engine = net.engine();
    std::uint64_t remaining = spec.attempt_budget;
    for (std::uint32_t s = 0; s < spec.count; ++s) {
        PowIdentity ident;
        try {
            ident = pow_node_id(rng, spec.pow_difficulty, accept, remaining);
        } catch (const Error&) {
            throw Error("sybil placement infeasible after " + std::to_string(out.total_attempts + remaining) +
                        " attempts (" + std::to_string(s) + " of " + std::to_string(spec.count) + " placed)");
        }
        remaining -= ident.attempts;
        out.total_attempts += ident.attempts;
        out.attempts.push_back(ident.attempts);
        const auto subnet = pool.empty() ? static_cast<std::uint32_t>(rng.below(1u << 24)) : pool[s % pool.size()];
        const auto addr = engine.add_node();
        net.add_node(addr, ident.id, subnet, DhtBehavior::SybilEclipse);
        out.nodes.push_back(addr);
    }
    for (auto addr : out.nodes) net.join(addr, honest[rng.below(honest.size())], {});
    engine.run();
    return out;
}

// --- eclipse pressure ------------------------------------------------------

struct PollutionSample {
    std::uint64_t slot = 0;
    double total = 0.0;       // Sybil records / all records
    double worst_bucket = 0.0;  // max over buckets of Sybil records / capacity
};

inline PollutionSample measure_pollution(const DhtNetwork& net, NodeIndex target, std::uint64_t slot = 0) {
    const auto& table = net.node(target).table;
    PollutionSample p;
    p.slot = slot;
    std::size_t sybil = 0;
    for (std::size_t b = 0; b < NodeId::kBits; ++b) {
        std::size_t in_bucket = 0;
        for (const auto& r : table.bucket(b)) in_bucket += net.node(r.address).behavior == DhtBehavior::SybilEclipse;
        sybil += in_bucket;
        p.worst_bucket = std::max(p.worst_bucket, static_cast<double>(in_bucket) / static_cast<double>(table.capacity()));
    }
    p.total = table.size() == 0 ? 0.0 : static_cast<double>(sybil) / static_cast<double>(table.size());
    return p;
}

// Each slot a `churn` fraction of the honest entries in the target's table
// goes offline, every Sybil contacts the target (`contacts_per_slot` times),
// then the churned peers return and re-contact the target.
inline std::vector<PollutionSample> eclipse_pressure(DhtNetwork& net, NodeIndex target, std::span<const NodeIndex> sybils,
                                                     std::uint64_t slots, double churn, DeterministicRng& rng,
                                                     std::uint32_t contacts_per_slot = 1) {
    std::vector<PollutionSample> out;
    for (std::uint64_t s = 0; s < slots; ++s) {
        std::vector<NodeIndex> away;
        net.node(target).table.for_each([&](const NodeRecord& r) {
            if (net.node(r.address).behavior == DhtBehavior::Honest && rng.bernoulli(churn)) away.push_back(r.address);
        });
        for (auto n : away) net.set_online(n, false);
        for (std::uint32_t k = 0; k < contacts_per_slot; ++k)
            for (auto sy : sybils) net.contact(sy, target);
        for (auto n : away) {
            net.set_online(n, true);
            net.contact(n, target);
        }
        out.push_back(measure_pollution(net, target, s));
    }
    return out;
}

// --- late defection --------------------------------------------------------

// Nodes under adversary control: the explicit list, else a seeded fraction
// of the non-producer population. Sorted.
inline std::vector<NodeIndex> controlled_set(const AdversarySpec& spec, std::size_t network_size, std::uint64_t seed) {
    std::vector<NodeIndex> out = spec.controlled_nodes;
    if (out.empty() && spec.controlled_fraction > 0.0 && network_size > 1) {
        DeterministicRng rng(seed, streams::kAdversary);
        const auto n = static_cast<std::uint64_t>(std::llround(spec.controlled_fraction * static_cast<double>(network_size - 1)));
        for (auto i : rng.sample_without_replacement(network_size - 1, n)) out.push_back(static_cast<NodeIndex>(i + 1));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

inline bool defecting(const AdversarySpec& spec, std::uint64_t slot) {
    return spec.kind == AdversaryKind::LateDefection && slot >= spec.defect_slot;
}

}  // namespace dassim
