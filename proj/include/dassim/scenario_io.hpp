#pragma once

// JSON scenario files. Unknown keys are rejected and every error names the
// offending field by its dotted path. Durations are written in milliseconds.

#include "dassim/simulation.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

namespace dassim {

using Json = nlohmann::ordered_json;

namespace io {

template <class E>
E parse_enum(const std::string& path, const std::string& s, std::initializer_list<E> values) {
    std::string names;
    for (auto v : values) {
        if (s == to_string(v)) return v;
        names += names.empty() ? "" : ", ";
        names += to_string(v);
    }
    throw ConfigError(path + ": unknown value '" + s + "' (expected " + names + ")");
}

// Reads one JSON object, remembering which keys were consumed.
class Fields {
public:
    Fields(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(label() + ": expected an object");
    }

    std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(const std::string& key) const { return j_.contains(key); }

    const Json& raw(const std::string& key) {
        used_.push_back(key);
        return j_.at(key);
    }

    Fields object(const std::string& key) { return Fields(raw(key), at(key)); }

    template <class T>
    void optional(const std::string& key, T& out) {
        if (has(key)) out = convert<T>(raw(key), at(key));
    }
    template <class T>
    void required(const std::string& key, T& out) {
        if (!has(key)) throw ConfigError(at(key) + ": required field missing");
        out = convert<T>(raw(key), at(key));
    }
    void optional_ms(const std::string& key, Micros& out) {
        if (!has(key)) return;
        const double ms = convert<double>(raw(key), at(key));
        out = static_cast<Micros>(std::llround(ms * 1000.0));
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (std::find(used_.begin(), used_.end(), it.key()) == used_.end())
                throw ConfigError(at(it.key()) + ": unknown field");
    }

    template <class T>
    static T convert(const Json& v, const std::string& path) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(path + ": expected true or false");
            return v.get<bool>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError(path + ": expected an integer");
            if (v.is_number_unsigned()) {
                const auto u = v.get<std::uint64_t>();
                if (u > static_cast<std::uint64_t>(std::numeric_limits<T>::max()))
                    throw ConfigError(path + ": value out of range");
                return static_cast<T>(u);
            }
            const auto s = v.get<std::int64_t>();
            if (std::is_unsigned_v<T> && s < 0) throw ConfigError(path + ": must be >= 0");
            return static_cast<T>(s);
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(path + ": expected a number");
            return v.get<T>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(path + ": expected a string");
            return v.get<std::string>();
        } else {
            if (!v.is_array()) throw ConfigError(path + ": expected an array");
            T out;
            for (std::size_t i = 0; i < v.size(); ++i)
                out.push_back(convert<typename T::value_type>(v[i], path + "[" + std::to_string(i) + "]"));
            return out;
        }
    }

private:
    std::string label() const { return path_.empty() ? "scenario" : path_; }

    const Json& j_;
    std::string path_;
    std::vector<std::string> used_;
};

inline double ms(Micros t) { return static_cast<double>(t) / 1000.0; }

inline BlobGeometry read_geometry(Fields& f) {
    if (!f.has("geometry")) return BlobGeometry::desk();
    const auto& v = f.raw("geometry");
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "mainnet") return BlobGeometry::mainnet();
        if (s == "desk") return BlobGeometry::desk();
        throw ConfigError("geometry: unknown preset '" + s + "' (expected mainnet, desk or an object)");
    }
    Fields g(v, "geometry");
    BlobGeometry out = BlobGeometry::desk();
    g.required("source_rows", out.source_rows);
    g.required("source_cols", out.source_cols);
    g.optional("cell_payload_bytes", out.cell_payload_bytes);
    g.optional("proof_bytes", out.proof_bytes);
    g.finish();
    return out;
}

inline Json write_geometry(const BlobGeometry& g) {
    if (g == BlobGeometry::mainnet()) return "mainnet";
    if (g == BlobGeometry::desk()) return "desk";
    return Json{{"source_rows", g.source_rows},
                {"source_cols", g.source_cols},
                {"cell_payload_bytes", g.cell_payload_bytes},
                {"proof_bytes", g.proof_bytes}};
}

inline LatencyModel read_latency(Fields f) {
    std::string model = "uniform";
    f.optional("model", model);
    LatencyModel m;
    if (model == "constant") {
        m.kind = LatencyModel::Kind::Constant;
        f.optional_ms("ms", m.constant);
    } else if (model == "uniform") {
        m.kind = LatencyModel::Kind::UniformRange;
        f.optional_ms("min_ms", m.min);
        f.optional_ms("max_ms", m.max);
        f.optional("seed", m.seed);
    } else if (model == "regions") {
        m.kind = LatencyModel::Kind::RegionMatrix;
        std::vector<std::vector<double>> matrix;
        f.required("matrix_ms", matrix);
        for (const auto& row : matrix) {
            m.matrix.emplace_back();
            for (auto v : row) m.matrix.back().push_back(static_cast<Micros>(std::llround(v * 1000.0)));
        }
        f.optional("node_region", m.node_region);
    } else {
        throw ConfigError(f.at("model") + ": unknown value '" + model + "' (expected constant, uniform or regions)");
    }
    f.finish();
    return m;
}

inline Json write_latency(const LatencyModel& m) {
    switch (m.kind) {
        case LatencyModel::Kind::Constant: return Json{{"model", "constant"}, {"ms", ms(m.constant)}};
        case LatencyModel::Kind::UniformRange:
            return Json{{"model", "uniform"}, {"min_ms", ms(m.min)}, {"max_ms", ms(m.max)}, {"seed", m.seed}};
        case LatencyModel::Kind::RegionMatrix: {
            Json matrix = Json::array();
            for (const auto& row : m.matrix) {
                Json r = Json::array();
                for (auto v : row) r.push_back(ms(v));
                matrix.push_back(r);
            }
            return Json{{"model", "regions"}, {"matrix_ms", matrix}, {"node_region", m.node_region}};
        }
    }
    return Json::object();
}

inline void read_strategy(Fields f, StrategyConfig& s) {
    std::string kind = to_string(s.kind);
    f.optional("kind", kind);
    try {
        s.kind = parse_strategy_kind(kind);
    } catch (const ConfigError& e) {
        throw ConfigError(f.at("kind") + ": " + e.what());
    }
    f.optional("unlinkability_proxy", s.unlinkability_proxy);
    f.optional_ms("proxy_delay_ms", s.proxy_delay);
    f.optional("seed_copies", s.seed_copies);
    if (f.has("gossip")) {
        auto g = f.object("gossip");
        auto& c = s.gossip;
        g.optional("mesh_degree", c.mesh_degree);
        g.optional("membership_epoch", c.membership_epoch);
        g.optional("stake_bias", c.stake_bias);
        g.optional("per_cell_topics", c.per_cell_topics);
        g.optional("announce_peers", c.announce_peers);
        g.optional("directory_size", c.directory_size);
        g.optional_ms("pull_timeout_ms", c.pull_timeout);
        if (g.has("score")) {
            auto sc = g.object("score");
            sc.optional("delivery_credit", c.score.delivery_credit);
            sc.optional("invalid_penalty", c.score.invalid_penalty);
            sc.optional("timeout_penalty", c.score.timeout_penalty);
            sc.optional("prune_threshold", c.score.prune_threshold);
            sc.optional("cap", c.score.cap);
            sc.finish();
        }
        g.finish();
    }
    if (f.has("dht")) {
        auto d = f.object("dht");
        auto& c = s.dht;
        d.optional("bucket_capacity", c.dht.bucket_capacity);
        d.optional("subnet_limit", c.dht.subnet_limit);
        d.optional("admit_on_contact", c.dht.admit_on_contact);
        if (d.has("lookup_mode")) {
            std::string mode;
            d.optional("lookup_mode", mode);
            c.dht.lookup.mode = parse_enum(d.at("lookup_mode"), mode, {LookupMode::Iterative, LookupMode::Recursive});
        }
        d.optional("alpha", c.dht.lookup.alpha);
        d.optional("k_closest", c.dht.lookup.k_closest);
        d.optional("disjoint_paths", c.dht.lookup.disjoint_paths);
        d.optional_ms("timeout_ms", c.dht.lookup.timeout);
        d.optional("region", c.region);
        if (d.has("region_depth")) {
            const auto& v = d.raw("region_depth");
            if (v.is_null()) c.region_depth.reset();
            else c.region_depth = Fields::convert<std::uint32_t>(v, d.at("region_depth"));
        }
        d.optional_ms("retry_interval_ms", c.retry_interval);
        d.finish();
    }
    f.finish();
}

inline Json write_strategy(const StrategyConfig& s) {
    const auto& g = s.gossip;
    const auto& d = s.dht;
    return Json{{"kind", to_string(s.kind)},
                {"unlinkability_proxy", s.unlinkability_proxy},
                {"proxy_delay_ms", ms(s.proxy_delay)},
                {"seed_copies", s.seed_copies},
                {"gossip",
                 {{"mesh_degree", g.mesh_degree},
                  {"membership_epoch", g.membership_epoch},
                  {"stake_bias", g.stake_bias},
                  {"per_cell_topics", g.per_cell_topics},
                  {"announce_peers", g.announce_peers},
                  {"directory_size", g.directory_size},
                  {"pull_timeout_ms", ms(g.pull_timeout)},
                  {"score",
                   {{"delivery_credit", g.score.delivery_credit},
                    {"invalid_penalty", g.score.invalid_penalty},
                    {"timeout_penalty", g.score.timeout_penalty},
                    {"prune_threshold", g.score.prune_threshold},
                    {"cap", g.score.cap}}}}},
                {"dht",
                 {{"bucket_capacity", d.dht.bucket_capacity},
                  {"subnet_limit", d.dht.subnet_limit},
                  {"admit_on_contact", d.dht.admit_on_contact},
                  {"lookup_mode", to_string(d.dht.lookup.mode)},
                  {"alpha", d.dht.lookup.alpha},
                  {"k_closest", d.dht.lookup.k_closest},
                  {"disjoint_paths", d.dht.lookup.disjoint_paths},
                  {"timeout_ms", ms(d.dht.lookup.timeout)},
                  {"region", d.region},
                  {"region_depth", d.region_depth ? Json(*d.region_depth) : Json(nullptr)},
                  {"retry_interval_ms", ms(d.retry_interval)}}}};
}

inline void read_adversary(Fields f, AdversarySpec& a) {
    std::string kind = to_string(a.kind);
    f.optional("kind", kind);
    a.kind = parse_enum(f.at("kind"), kind,
                        {AdversaryKind::None, AdversaryKind::WithholdFraction, AdversaryKind::WithholdRegularTargets,
                         AdversaryKind::SplitByIdentity, AdversaryKind::SybilDht, AdversaryKind::LateDefection});
    f.optional("withhold_fraction", a.withhold_fraction);
    f.optional("withhold_targets", a.withhold_targets);
    if (f.has("split")) {
        auto s = f.object("split");
        std::string pred = to_string(a.split.kind);
        s.optional("predicate", pred);
        a.split.kind = parse_enum(s.at("predicate"), pred,
                                  {SplitPredicateKind::None, SplitPredicateKind::IdEven, SplitPredicateKind::IdOdd,
                                   SplitPredicateKind::TargetSet});
        s.optional("targets", a.split.targets);
        std::sort(a.split.targets.begin(), a.split.targets.end());
        s.finish();
    }
    if (f.has("sybil")) {
        auto s = f.object("sybil");
        auto& y = a.sybil;
        s.optional("count", y.count);
        std::string placement = to_string(y.placement);
        s.optional("placement", placement);
        y.placement = parse_enum(s.at("placement"), placement,
                                 {SybilPlacement::UniformIds, SybilPlacement::NearKey, SybilPlacement::InRegion});
        if (s.has("key")) {
            std::string hex;
            s.optional("key", hex);
            try {
                y.key = NodeId::from_hex(hex);
            } catch (const std::exception& e) {
                throw ConfigError(s.at("key") + ": " + e.what());
            }
        }
        s.optional("region_depth", y.region_depth);
        s.optional("pow_difficulty", y.pow_difficulty);
        s.optional("subnets", y.subnets);
        s.optional("max_fraction", y.max_fraction);
        s.optional("attempt_budget", y.attempt_budget);
        s.finish();
    }
    f.optional("defect_slot", a.defect_slot);
    f.optional("controlled_nodes", a.controlled_nodes);
    f.optional("controlled_fraction", a.controlled_fraction);
    if (f.has("target_cell")) {
        const auto& v = f.raw("target_cell");
        if (v.is_null()) {
            a.target_cell.reset();
        } else {
            const auto rc = Fields::convert<std::vector<std::uint32_t>>(v, f.at("target_cell"));
            if (rc.size() != 2) throw ConfigError(f.at("target_cell") + ": expected [row, col]");
            a.target_cell = CellCoordinate{rc[0], rc[1]};
        }
    }
    f.finish();
}

inline Json write_adversary(const AdversarySpec& a) {
    const auto& y = a.sybil;
    return Json{{"kind", to_string(a.kind)},
                {"withhold_fraction", a.withhold_fraction},
                {"withhold_targets", a.withhold_targets},
                {"split", {{"predicate", to_string(a.split.kind)}, {"targets", a.split.targets}}},
                {"sybil",
                 {{"count", y.count},
                  {"placement", to_string(y.placement)},
                  {"key", y.key.hex()},
                  {"region_depth", y.region_depth},
                  {"pow_difficulty", y.pow_difficulty},
                  {"subnets", y.subnets},
                  {"max_fraction", y.max_fraction},
                  {"attempt_budget", y.attempt_budget}}},
                {"defect_slot", a.defect_slot},
                {"controlled_nodes", a.controlled_nodes},
                {"controlled_fraction", a.controlled_fraction},
                {"target_cell", a.target_cell ? Json{a.target_cell->row, a.target_cell->col} : Json(nullptr)}};
}

}  // namespace io

// Parses and validates. The seed is mandatory so that no run depends on
// wall-clock state.
inline Scenario scenario_from_json(const Json& j) {
    using io::Fields;
    Scenario s;
    Fields f(j, "");
    f.optional("name", s.name);
    f.required("seed", s.seed);
    if (f.has("nodes")) {
        auto n = f.object("nodes");
        n.optional("validators", s.validators);
        n.optional("regulars", s.regulars);
        n.finish();
    }
    s.geometry = io::read_geometry(f);
    if (f.has("slot_params")) {
        auto p = f.object("slot_params");
        p.optional_ms("slot_duration_ms", s.slot_params.slot_duration);
        p.optional_ms("validator_deadline_ms", s.slot_params.validator_deadline);
        p.optional_ms("regular_deadline_ms", s.slot_params.regular_deadline);
        p.optional("slots_per_epoch", s.slot_params.slots_per_epoch);
        p.finish();
    }
    if (f.has("latency")) s.latency = io::read_latency(f.object("latency"));
    if (f.has("bandwidth")) {
        auto b = f.object("bandwidth");
        b.optional("producer_uplink_bytes_per_sec", s.bandwidth.producer_uplink);
        b.optional("node_uplink_bytes_per_sec", s.bandwidth.node_uplink);
        b.optional("node_downlink_bytes_per_sec", s.bandwidth.node_downlink);
        b.finish();
    }
    if (f.has("strategy")) io::read_strategy(f.object("strategy"), s.strategy);
    if (f.has("adversary")) io::read_adversary(f.object("adversary"), s.adversary);
    f.optional("slots", s.slots);
    if (f.has("header")) {
        auto h = f.object("header");
        h.optional("enabled", s.header);
        h.optional("degree", s.header_degree);
        h.finish();
    }
    if (f.has("regular_sampling")) {
        auto r = f.object("regular_sampling");
        std::string mode = to_string(s.regular_mode);
        r.optional("mode", mode);
        s.regular_mode = io::parse_enum(r.at("mode"), mode, {RegularMode::Cells, RegularMode::KofN});
        r.optional("samples", s.regular_samples);
        r.optional("k_of_n_requested", s.k_of_n_requested);
        r.optional("k_of_n_required", s.k_of_n_required);
        r.finish();
    }
    if (f.has("cost")) {
        auto c = f.object("cost");
        c.optional("egress_price_per_gb", s.cost.egress_price_per_gb);
        c.optional("slots_per_month", s.cost.slots_per_month);
        c.finish();
    }
    f.optional("output", s.output);
    f.finish();
    s.validate();
    return s;
}

inline Json scenario_to_json(const Scenario& s) {
    const auto& sp = s.slot_params;
    return Json{{"name", s.name},
                {"seed", s.seed},
                {"nodes", {{"validators", s.validators}, {"regulars", s.regulars}}},
                {"geometry", io::write_geometry(s.geometry)},
                {"slot_params",
                 {{"slot_duration_ms", io::ms(sp.slot_duration)},
                  {"validator_deadline_ms", io::ms(sp.validator_deadline)},
                  {"regular_deadline_ms", io::ms(sp.regular_deadline)},
                  {"slots_per_epoch", sp.slots_per_epoch}}},
                {"latency", io::write_latency(s.latency)},
                {"bandwidth",
                 {{"producer_uplink_bytes_per_sec", s.bandwidth.producer_uplink},
                  {"node_uplink_bytes_per_sec", s.bandwidth.node_uplink},
                  {"node_downlink_bytes_per_sec", s.bandwidth.node_downlink}}},
                {"strategy", io::write_strategy(s.strategy)},
                {"adversary", io::write_adversary(s.adversary)},
                {"slots", s.slots},
                {"header", {{"enabled", s.header}, {"degree", s.header_degree}}},
                {"regular_sampling",
                 {{"mode", to_string(s.regular_mode)},
                  {"samples", s.regular_samples},
                  {"k_of_n_requested", s.k_of_n_requested},
                  {"k_of_n_required", s.k_of_n_required}}},
                {"cost", {{"egress_price_per_gb", s.cost.egress_price_per_gb}, {"slots_per_month", s.cost.slots_per_month}}},
                {"output", s.output}};
}

inline Scenario parse_scenario(std::string_view text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError(std::string("scenario is not valid JSON: ") + e.what());
    }
    return scenario_from_json(j);
}

inline std::string serialize_scenario(const Scenario& s) { return scenario_to_json(s).dump(2) + "\n"; }

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str());
}

}  // namespace dassim
