#pragma once

// Node population for one simulation: producer at index 0, then validators,
// then regular nodes. Identities are derived from random public keys.

#include "dassim/core.hpp"
#include "dassim/dht.hpp"
#include "dassim/rng.hpp"

#include <cstdint>
#include <vector>

namespace dassim {

struct Population {
    std::vector<NodeProfile> nodes;

    NodeIndex producer() const { return 0; }
    std::size_t size() const { return nodes.size(); }

    std::size_t count(Role r) const {
        std::size_t n = 0;
        for (const auto& p : nodes) n += p.role == r ? 1 : 0;
        return n;
    }
    std::vector<NodeIndex> members(Role r) const {
        std::vector<NodeIndex> out;
        for (const auto& p : nodes)
            if (p.role == r) out.push_back(p.index);
        return out;
    }

    NodeIndex add(Role role, const NodeId& id, std::uint32_t subnet, std::uint64_t stake, bool honest) {
        NodeProfile p;
        p.index = static_cast<NodeIndex>(nodes.size());
        p.node_id = id;
        p.role = role;
        p.stake = stake;
        p.subnet = subnet & 0xFFFFFFu;
        p.honest = honest;
        p.validate();
        nodes.push_back(p);
        return p.index;
    }
};

inline NodeId random_node_id(DeterministicRng& rng) {
    std::array<std::uint8_t, kPublicKeyBytes> key{};
    rng.fill(key);
    return derive_node_id(key);
}

inline Population make_population(std::uint64_t seed, std::uint32_t validators, std::uint32_t regulars) {
    DeterministicRng rng(seed, streams::kIdentity);
    Population pop;
    pop.nodes.reserve(1 + validators + regulars);
    pop.add(Role::Producer, random_node_id(rng), static_cast<std::uint32_t>(rng.below(1u << 24)), kValidatorMinStake, true);
    for (std::uint32_t i = 0; i < validators; ++i)
        pop.add(Role::Validator, random_node_id(rng), static_cast<std::uint32_t>(rng.below(1u << 24)), kValidatorMinStake, true);
    for (std::uint32_t i = 0; i < regulars; ++i)
        pop.add(Role::Regular, random_node_id(rng), static_cast<std::uint32_t>(rng.below(1u << 24)), 0, true);
    return pop;
}

// Registers every profile with the DHT (in index order) and converges tables.
inline void populate_dht(DhtNetwork& net, const Population& pop, std::uint64_t seed) {
    for (const auto& p : pop.nodes) net.add_node(p.index, p.node_id, p.subnet);
    DeterministicRng rng(seed, streams::kTopology);
    net.build_converged(rng);
}

}  // namespace dassim
