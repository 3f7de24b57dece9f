#pragma once

// Experiment configuration: the JSON schema, strict loading and the echo of
// the effective values.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "uwauth/auth.hpp"
#include "uwauth/channel.hpp"
#include "uwauth/errors.hpp"

namespace uwauth {

enum class AttackerPlacement { random, last };
enum class ThresholdMode { trained, knee, fixed };

inline const char* to_string(AttackerPlacement p) { return p == AttackerPlacement::random ? "random" : "last"; }

inline const char* to_string(ThresholdMode m) {
    switch (m) {
        case ThresholdMode::trained: return "trained";
        case ThresholdMode::knee: return "knee";
        case ThresholdMode::fixed: return "fixed";
    }
    return "?";
}

struct ScheduleConfig {
    int legitimate_packets = 6;  // including the first, trusted packet
    int attacker_packets = 1;
    AttackerPlacement placement = AttackerPlacement::random;
    int symbols = 100;
    double packet_gap = 1.0;  // s
};

struct DecisionConfig {
    ThresholdMode mode = ThresholdMode::trained;
    double lambda = 0.0;  // used by the fixed mode
    double target_fa = 0.1;
    double target_tp = 0.98;
};

struct ExperimentConfig {
    ScenarioConfig scenario;
    AttackerConfig attacker;
    ScheduleConfig schedule;
    NodeConfig node;
    FusionConfig fusion;
    DecisionConfig decision;
    int runs = 0;
    std::uint64_t master_seed = 0;
    int threads = 1;
};

inline void validate(const ExperimentConfig& c) {
    validate(c.scenario);
    validate(c.attacker, static_cast<std::size_t>(c.scenario.num_trusted));
    validate(c.node);
    const auto& s = c.schedule;
    if (s.legitimate_packets < 2) throw ConfigError("must be at least 2", "schedule.legitimate_packets");
    if (s.attacker_packets < 0) throw ConfigError("must be non-negative", "schedule.attacker_packets");
    if (s.symbols < 2) throw ConfigError("must be at least 2", "schedule.symbols");
    if (!(s.packet_gap >= 0.0) || !std::isfinite(s.packet_gap))
        throw ConfigError("must be finite and non-negative", "schedule.packet_gap");
    const auto& d = c.decision;
    if (!std::isfinite(d.lambda)) throw ConfigError("must be finite", "decision.lambda");
    if (!(d.target_fa >= 0.0 && d.target_fa <= 1.0)) throw ConfigError("must be in [0, 1]", "decision.target_fa");
    if (!(d.target_tp >= 0.0 && d.target_tp <= 1.0)) throw ConfigError("must be in [0, 1]", "decision.target_tp");
    if (c.runs < 1) throw ConfigError("must be at least 1", "runs");
    if (c.threads < 1) throw ConfigError("must be at least 1", "threads");
}

namespace detail {

using nlohmann::json;

/// Reads the members of one JSON object, remembering which keys were used
/// so that leftovers can be reported as unknown.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError("expected an object", path_.empty() ? "(root)" : path_);
    }

    std::string key(const std::string& name) const { return path_.empty() ? name : path_ + "." + name; }

    const json* member(const std::string& name) {
        seen_.insert(name);
        auto it = j_.find(name);
        return it == j_.end() ? nullptr : &*it;
    }

    void number(const std::string& name, double& out) {
        if (const json* v = member(name)) {
            if (!v->is_number()) throw ConfigError("expected a number", key(name));
            out = v->get<double>();
        }
    }

    template <class Int>
    void integer(const std::string& name, Int& out, bool required = false) {
        const json* v = member(name);
        if (!v) {
            if (required) throw ConfigError("missing required key", key(name));
            return;
        }
        if (v->is_number_unsigned()) {
            const auto u = v->get<std::uint64_t>();
            if (u > static_cast<std::uint64_t>(std::numeric_limits<Int>::max()))
                throw ConfigError("out of range", key(name));
            out = static_cast<Int>(u);
        } else if (v->is_number_integer()) {
            const auto i = v->get<std::int64_t>();
            if constexpr (std::is_unsigned_v<Int>) {
                if (i < 0) throw ConfigError("must be non-negative", key(name));
            }
            if (i < static_cast<std::int64_t>(std::numeric_limits<Int>::min()) ||
                (i > 0 && static_cast<std::uint64_t>(i) > static_cast<std::uint64_t>(std::numeric_limits<Int>::max())))
                throw ConfigError("out of range", key(name));
            out = static_cast<Int>(i);
        } else {
            throw ConfigError("expected an integer", key(name));
        }
    }

    void boolean(const std::string& name, bool& out) {
        if (const json* v = member(name)) {
            if (!v->is_boolean()) throw ConfigError("expected true or false", key(name));
            out = v->get<bool>();
        }
    }

    void string(const std::string& name, std::string& out) {
        if (const json* v = member(name)) {
            if (!v->is_string()) throw ConfigError("expected a string", key(name));
            out = v->get<std::string>();
        }
    }

    void position(const std::string& name, Position& out) {
        if (const json* v = member(name)) {
            if (!v->is_array() || v->size() != 3) throw ConfigError("expected [easting, northing, depth]", key(name));
            for (const auto& x : *v)
                if (!x.is_number()) throw ConfigError("expected numbers", key(name));
            out = {(*v)[0].get<double>(), (*v)[1].get<double>(), (*v)[2].get<double>()};
        }
    }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.count(k)) throw ConfigError("unknown key", key(k));
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline void read_model(ObjectReader& r, ChannelModel& m) {
    r.number("taps_at_1km", m.taps_at_1km);
    r.number("taps_range_exponent", m.taps_range_exponent);
    r.number("spread_at_1km", m.spread_at_1km);
    r.number("spread_range_exponent", m.spread_range_exponent);
    r.number("power_at_1km", m.power_at_1km);
    r.number("power_range_exponent", m.power_range_exponent);
    r.number("depth_effect", m.depth_effect);
    r.number("cv_min", m.cv_min);
    r.number("cv_max", m.cv_max);
    r.number("beta_low", m.beta_low);
    r.number("beta_high", m.beta_high);
    r.number("link_jitter", m.link_jitter);
    r.number("min_log_separation", m.min_log_separation);
    r.finish();
}

inline void read_scenario(ObjectReader& r, ScenarioConfig& s) {
    r.number("area_width", s.area_width);
    r.number("area_height", s.area_height);
    r.number("depth_min", s.depth_min);
    r.number("depth_max", s.depth_max);
    r.integer("num_trusted", s.num_trusted);
    r.position("legitimate_position", s.legitimate);
    r.position("attacker_position", s.attacker);
    r.position("sink_position", s.sink);
    r.number("separation", s.separation);
    r.number("noise_floor", s.noise_floor);
    r.number("false_alarm", s.false_alarm);
    r.integer("calibration_samples", s.calibration_samples);
    r.number("symbol_period", s.symbol_period);
    r.number("symbol_correlation", s.symbol_correlation);
    if (const json* m = r.member("model")) {
        ObjectReader mr(*m, r.key("model"));
        read_model(mr, s.model);
    }
    r.finish();
}

inline void read_attacker(ObjectReader& r, AttackerConfig& a) {
    std::string mode = to_string(a.mode);
    r.string("mode", mode);
    if (mode == "naive") a.mode = AttackMode::naive;
    else if (mode == "tn_x") a.mode = AttackMode::tn_x;
    else throw ConfigError("expected \"naive\" or \"tn_x\"", r.key("mode"));
    r.integer("x", a.x);
    r.number("estimation_error", a.estimation_error);
    r.finish();
}

inline void read_schedule(ObjectReader& r, ScheduleConfig& s) {
    r.integer("legitimate_packets", s.legitimate_packets);
    r.integer("attacker_packets", s.attacker_packets);
    std::string placement = to_string(s.placement);
    r.string("attacker_placement", placement);
    if (placement == "random") s.placement = AttackerPlacement::random;
    else if (placement == "last") s.placement = AttackerPlacement::last;
    else throw ConfigError("expected \"random\" or \"last\"", r.key("attacker_placement"));
    r.integer("symbols", s.symbols);
    r.number("packet_gap", s.packet_gap);
    r.finish();
}

inline void read_features(ObjectReader& r, NodeConfig& n) {
    if (const json* v = r.member("set")) {
        if (!v->is_array()) throw ConfigError("expected a list of feature ids", r.key("set"));
        n.features.clear();
        for (const auto& x : *v) {
            if (!x.is_number_integer()) throw ConfigError("expected integer feature ids", r.key("set"));
            n.features.push_back(feature_from_id(x.get<int>()));
        }
    }
    r.number("alpha", n.alpha);
    r.finish();
}

inline void read_em(ObjectReader& r, NodeConfig& n) {
    r.number("tolerance", n.em.tolerance);
    r.integer("max_iterations", n.em.max_iterations);
    r.number("mass_floor", n.em.mass_floor);
    r.boolean("warm_start", n.warm_start);
    r.integer("max_restarts", n.max_restarts);
    r.finish();
}

inline void read_fusion(ObjectReader& r, FusionConfig& f) {
    r.boolean("weights", f.use_weights);
    r.boolean("zeta", f.use_zeta);
    r.finish();
}

inline void read_decision(ObjectReader& r, DecisionConfig& d) {
    std::string mode = to_string(d.mode);
    r.string("mode", mode);
    if (mode == "trained") d.mode = ThresholdMode::trained;
    else if (mode == "knee") d.mode = ThresholdMode::knee;
    else if (mode == "fixed") d.mode = ThresholdMode::fixed;
    else throw ConfigError("expected \"trained\", \"knee\" or \"fixed\"", r.key("mode"));
    r.number("lambda", d.lambda);
    r.number("target_fa", d.target_fa);
    r.number("target_tp", d.target_tp);
    r.finish();
}

template <class Fn>
void read_block(ObjectReader& root, const std::string& name, Fn&& fn) {
    if (const json* v = root.member(name)) {
        ObjectReader r(*v, root.key(name));
        fn(r);
    }
}

}  // namespace detail

/// Parses and validates a configuration document. Unknown keys, wrong types,
/// missing required keys and out-of-range values raise ConfigError naming
/// the key.
inline ExperimentConfig parse_config(const nlohmann::json& j) {
    ExperimentConfig c;
    detail::ObjectReader root(j, "");
    detail::read_block(root, "scenario", [&](auto& r) { detail::read_scenario(r, c.scenario); });
    detail::read_block(root, "attacker", [&](auto& r) { detail::read_attacker(r, c.attacker); });
    detail::read_block(root, "schedule", [&](auto& r) { detail::read_schedule(r, c.schedule); });
    detail::read_block(root, "features", [&](auto& r) { detail::read_features(r, c.node); });
    detail::read_block(root, "em", [&](auto& r) { detail::read_em(r, c.node); });
    detail::read_block(root, "fusion", [&](auto& r) { detail::read_fusion(r, c.fusion); });
    detail::read_block(root, "decision", [&](auto& r) { detail::read_decision(r, c.decision); });
    root.integer("runs", c.runs, true);
    root.integer("master_seed", c.master_seed, true);
    root.integer("threads", c.threads);
    root.finish();
    validate(c);
    return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what(), "(document)");
    }
    return parse_config(j);
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path, "(file)");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

/// The effective configuration, every key included.
inline nlohmann::json to_json(const ExperimentConfig& c) {
    using nlohmann::json;
    auto pos = [](const Position& p) { return json::array({p.easting, p.northing, p.depth}); };
    const auto& s = c.scenario;
    const auto& m = s.model;
    json features = json::array();
    for (Feature f : c.node.features) features.push_back(static_cast<int>(f));
    return json{
        {"scenario",
         {{"area_width", s.area_width},
          {"area_height", s.area_height},
          {"depth_min", s.depth_min},
          {"depth_max", s.depth_max},
          {"num_trusted", s.num_trusted},
          {"legitimate_position", pos(s.legitimate)},
          {"attacker_position", pos(s.attacker)},
          {"sink_position", pos(s.sink)},
          {"separation", s.separation},
          {"noise_floor", s.noise_floor},
          {"false_alarm", s.false_alarm},
          {"calibration_samples", s.calibration_samples},
          {"symbol_period", s.symbol_period},
          {"symbol_correlation", s.symbol_correlation},
          {"model",
           {{"taps_at_1km", m.taps_at_1km},
            {"taps_range_exponent", m.taps_range_exponent},
            {"spread_at_1km", m.spread_at_1km},
            {"spread_range_exponent", m.spread_range_exponent},
            {"power_at_1km", m.power_at_1km},
            {"power_range_exponent", m.power_range_exponent},
            {"depth_effect", m.depth_effect},
            {"cv_min", m.cv_min},
            {"cv_max", m.cv_max},
            {"beta_low", m.beta_low},
            {"beta_high", m.beta_high},
            {"link_jitter", m.link_jitter},
            {"min_log_separation", m.min_log_separation}}}}},
        {"attacker",
         {{"mode", to_string(c.attacker.mode)}, {"x", c.attacker.x}, {"estimation_error", c.attacker.estimation_error}}},
        {"schedule",
         {{"legitimate_packets", c.schedule.legitimate_packets},
          {"attacker_packets", c.schedule.attacker_packets},
          {"attacker_placement", to_string(c.schedule.placement)},
          {"symbols", c.schedule.symbols},
          {"packet_gap", c.schedule.packet_gap}}},
        {"features", {{"set", features}, {"alpha", c.node.alpha}}},
        {"em",
         {{"tolerance", c.node.em.tolerance},
          {"max_iterations", c.node.em.max_iterations},
          {"mass_floor", c.node.em.mass_floor},
          {"warm_start", c.node.warm_start},
          {"max_restarts", c.node.max_restarts}}},
        {"fusion", {{"weights", c.fusion.use_weights}, {"zeta", c.fusion.use_zeta}}},
        {"decision",
         {{"mode", to_string(c.decision.mode)},
          {"lambda", c.decision.lambda},
          {"target_fa", c.decision.target_fa},
          {"target_tp", c.decision.target_tp}}},
        {"runs", c.runs},
        {"master_seed", c.master_seed},
        {"threads", c.threads},
    };
}

}  // namespace uwauth
