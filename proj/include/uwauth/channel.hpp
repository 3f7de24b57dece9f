#pragma once

// Synthetic underwater scenario: topology, per-link ground-truth feature
// statistics, power-delay profile sampling and attacker behavior.
//
// Each (source, trusted node) link carries GG laws for three quantities the
// generator controls directly: the number of taps, the RMS delay spread
// relative to the first arrival, and the total received power. A sampled
// profile realizes one draw of each, so the features extracted from it follow
// the link's laws exactly (up to integer rounding of the tap count).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "uwauth/errors.hpp"
#include "uwauth/ggmix.hpp"
#include "uwauth/pdp.hpp"
#include "uwauth/random.hpp"

namespace uwauth {

enum class Role { legitimate, attacker, trusted, sink };

inline const char* to_string(Role r) {
    switch (r) {
        case Role::legitimate: return "legitimate";
        case Role::attacker: return "attacker";
        case Role::trusted: return "trusted";
        case Role::sink: return "sink";
    }
    return "?";
}

struct Position {
    double easting = 0.0;   // m
    double northing = 0.0;  // m
    double depth = 0.0;     // m

    friend bool operator==(const Position&, const Position&) = default;
};

inline double distance(const Position& a, const Position& b) {
    const double dx = a.easting - b.easting;
    const double dy = a.northing - b.northing;
    const double dz = a.depth - b.depth;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

struct NodeInfo {
    int id = 0;
    Role role = Role::trusted;
    Position position;

    friend bool operator==(const NodeInfo&, const NodeInfo&) = default;
};

struct Topology {
    std::vector<NodeInfo> nodes;

    const NodeInfo& only(Role role) const {
        const NodeInfo* found = nullptr;
        for (const auto& n : nodes) {
            if (n.role != role) continue;
            if (found) throw ConfigError("topology has more than one " + std::string(to_string(role)), "topology");
            found = &n;
        }
        if (!found) throw ConfigError("topology has no " + std::string(to_string(role)), "topology");
        return *found;
    }
    const NodeInfo& legitimate() const { return only(Role::legitimate); }
    const NodeInfo& attacker() const { return only(Role::attacker); }
    const NodeInfo& sink() const { return only(Role::sink); }

    /// Trusted nodes in id order.
    std::vector<NodeInfo> trusted() const {
        std::vector<NodeInfo> out;
        for (const auto& n : nodes)
            if (n.role == Role::trusted) out.push_back(n);
        std::sort(out.begin(), out.end(), [](const NodeInfo& a, const NodeInfo& b) { return a.id < b.id; });
        return out;
    }

    const NodeInfo* find(int id) const {
        for (const auto& n : nodes)
            if (n.id == id) return &n;
        return nullptr;
    }

    void validate() const {
        (void)legitimate();
        (void)attacker();
        (void)sink();
        if (trusted().empty()) throw ConfigError("topology needs at least one trusted node", "topology");
        for (const auto& n : nodes) {
            const auto& p = n.position;
            if (!std::isfinite(p.easting) || !std::isfinite(p.northing) || !std::isfinite(p.depth))
                throw ConfigError("non-finite position for node " + std::to_string(n.id), "topology");
        }
    }
};

/// Ground truth of one (source, trusted node) link.
struct LinkStats {
    GGParams num_taps;      // taps per symbol
    GGParams delay_spread;  // s, RMS relative to the first arrival
    GGParams power;         // linear, sum of tap magnitudes
    int max_taps = 400;
    double first_arrival = 0.0;  // s
    double noise_floor = 0.0;
    double symbol_correlation = 0.0;  // AR(1) coefficient between consecutive symbols

    double delay_spread_scale_ms() const { return delay_spread.mu * 1e3; }
    double mean_power_db() const { return 10.0 * std::log10(std::max(power.mu, 1e-300)); }

    friend bool operator==(const LinkStats&, const LinkStats&) = default;
};

inline void validate(const LinkStats& l) {
    validate(l.num_taps);
    validate(l.delay_spread);
    validate(l.power);
    if (!(l.delay_spread.mu > 0.0)) throw ParameterDomainError("delay-spread scale must be positive");
    if (l.max_taps < 1) throw ParameterDomainError("max_taps must be at least 1");
    if (!(std::abs(l.symbol_correlation) < 1.0)) throw ParameterDomainError("symbol correlation must be in (-1, 1)");
}

/// Smooth range/depth laws the link statistics are built from.
struct ChannelModel {
    double taps_at_1km = 25.0;
    double taps_range_exponent = 0.35;
    double spread_at_1km = 0.030;  // s
    double spread_range_exponent = 0.5;
    double power_at_1km = 1.0;
    double power_range_exponent = -1.5;
    double depth_effect = 0.4;   // relative change from surface to the deepest allowed depth
    double cv_min = 0.50;        // coefficient of variation (std / mean) range
    double cv_max = 0.60;
    double beta_low = 1.3;
    double beta_high = 3.5;
    double link_jitter = 0.45;        // log-normal spread of per-link means
    double min_log_separation = 0.35;  // |log(mean_attacker / mean_legit)| floor per feature
};

struct ScenarioConfig {
    double area_width = 2000.0;  // m
    double area_height = 2000.0;
    double depth_min = 10.0;
    double depth_max = 100.0;
    int num_trusted = 4;
    Position legitimate{500.0, 500.0, 40.0};
    Position attacker{1700.0, 1400.0, 40.0};
    Position sink{1000.0, 1000.0, 10.0};
    double separation = 1.0;
    double noise_floor = 1e-5;
    double false_alarm = 1e-4;
    std::uint64_t calibration_samples = 10'000'000;
    double symbol_period = 0.05;  // s
    double symbol_correlation = 0.0;
    ChannelModel model;
};

inline void validate(const ScenarioConfig& c) {
    if (!(c.area_width > 0.0)) throw ConfigError("must be positive", "scenario.area_width");
    if (!(c.area_height > 0.0)) throw ConfigError("must be positive", "scenario.area_height");
    if (!(c.depth_min >= 0.0) || !(c.depth_max >= c.depth_min))
        throw ConfigError("need 0 <= depth_min <= depth_max", "scenario.depth_max");
    if (c.num_trusted < 1) throw ConfigError("must be at least 1", "scenario.num_trusted");
    if (!(c.separation >= 0.0) || !std::isfinite(c.separation))
        throw ConfigError("must be finite and non-negative", "scenario.separation");
    if (!(c.noise_floor >= 0.0) || !std::isfinite(c.noise_floor))
        throw ConfigError("must be finite and non-negative", "scenario.noise_floor");
    if (!(c.false_alarm > 0.0 && c.false_alarm < 1.0)) throw ConfigError("must be in (0, 1)", "scenario.false_alarm");
    if (c.calibration_samples < 1000) throw ConfigError("must be at least 1000", "scenario.calibration_samples");
    if (!(c.symbol_period > 0.0)) throw ConfigError("must be positive", "scenario.symbol_period");
    if (!(std::abs(c.symbol_correlation) < 1.0))
        throw ConfigError("must be in (-1, 1)", "scenario.symbol_correlation");
    const auto& m = c.model;
    if (!(m.cv_min > 0.0 && m.cv_max >= m.cv_min)) throw ConfigError("need 0 < cv_min <= cv_max", "scenario.model.cv_max");
    if (!(m.beta_low >= beta_min && m.beta_high <= beta_max && m.beta_low <= m.beta_high))
        throw ConfigError("shape range must lie in [0.3, 10]", "scenario.model.beta_high");
    if (!(m.taps_at_1km > 0.0 && m.spread_at_1km > 0.0 && m.power_at_1km > 0.0))
        throw ConfigError("feature scales must be positive", "scenario.model");
    if (!(m.link_jitter >= 0.0) || !(m.min_log_separation >= 0.0))
        throw ConfigError("jitter and separation floor must be non-negative", "scenario.model");
}

/// Detection threshold giving the requested per-tap false-alarm rate on
/// noise-only taps (exponentially distributed magnitudes with mean
/// noise_floor), estimated as the empirical (1 - pfa) quantile.
inline double calibrate_threshold(double noise_floor, double pfa, std::uint64_t samples, std::uint64_t seed) {
    if (noise_floor <= 0.0) return std::numeric_limits<double>::min();
    const auto keep = static_cast<std::size_t>(std::floor(pfa * static_cast<double>(samples))) + 1;
    std::priority_queue<double, std::vector<double>, std::greater<>> top;
    Rng rng(seed);
    for (std::uint64_t i = 0; i < samples; ++i) {
        const double v = rng.exponential(noise_floor);
        if (top.size() < keep) {
            top.push(v);
        } else if (v > top.top()) {
            top.pop();
            top.push(v);
        }
    }
    return top.top();
}

/// One noise-only profile of `bins` taps on the 100 us grid.
inline PowerDelayProfile sample_noise_profile(double noise_floor, std::size_t bins, double symbol_time, Rng& rng) {
    PowerDelayProfile p{symbol_time, {}, noise_floor};
    p.taps.reserve(bins);
    for (std::size_t k = 0; k < bins; ++k) {
        p.taps.push_back({static_cast<double>(k) * min_tap_separation, rng.exponential(noise_floor)});
    }
    return p;
}

struct Scenario {
    ScenarioConfig config;
    Topology topology;
    std::vector<LinkStats> legitimate_links;  // indexed like topology.trusted()
    std::vector<LinkStats> attacker_links;
    double threshold = 0.0;

    std::size_t num_trusted() const { return legitimate_links.size(); }
};

namespace detail {

inline double depth_factor(const ScenarioConfig& c, double depth_a, double depth_b) {
    const double span = std::max(c.depth_max, 1.0);
    const double mean_depth = 0.5 * (depth_a + depth_b);
    return 1.0 + c.model.depth_effect * (0.5 - mean_depth / span);
}

inline GGParams gg_from_mean(double mean, double cv, double beta) {
    // std = cv * mean; sigma from the variance identity.
    const double sd = cv * mean;
    const double sigma = sd * std::exp(0.5 * (log_gamma(1.0 / beta) - log_gamma(3.0 / beta)));
    return {mean, sigma, beta};
}

struct RawLink {
    double mean[3];
    double cv[3];
    double beta[3];
};

inline RawLink raw_link(const ScenarioConfig& c, const Position& tx, const Position& rx, Rng& rng) {
    const auto& m = c.model;
    const double r_km = std::max(distance(tx, rx), 50.0) / 1000.0;
    const double df = depth_factor(c, tx.depth, rx.depth);
    RawLink out{};
    out.mean[0] = m.taps_at_1km * std::pow(r_km, m.taps_range_exponent) * df;
    out.mean[1] = m.spread_at_1km * std::pow(r_km, m.spread_range_exponent) * df;
    out.mean[2] = m.power_at_1km * std::pow(r_km, m.power_range_exponent);
    for (int f = 0; f < 3; ++f) {
        out.mean[f] *= std::exp(m.link_jitter * rng.normal());
        out.cv[f] = rng.uniform(m.cv_min, m.cv_max);
        out.beta[f] = std::exp(rng.uniform(std::log(m.beta_low), std::log(m.beta_high)));
    }
    return out;
}

inline LinkStats link_from_raw(const RawLink& raw, const ScenarioConfig& c, const Position& tx, const Position& rx) {
    LinkStats l;
    l.num_taps = gg_from_mean(raw.mean[0], raw.cv[0], raw.beta[0]);
    l.delay_spread = gg_from_mean(raw.mean[1], raw.cv[1], raw.beta[1]);
    l.power = gg_from_mean(raw.mean[2], raw.cv[2], raw.beta[2]);
    l.max_taps = std::max(4, static_cast<int>(std::ceil(raw.mean[0] * 8.0)));
    l.first_arrival = distance(tx, rx) / 1500.0;
    l.noise_floor = c.noise_floor;
    l.symbol_correlation = c.symbol_correlation;
    return l;
}

inline GGParams blend(const GGParams& a, const GGParams& b, double s) {
    GGParams out{a.mu + s * (b.mu - a.mu), a.sigma + s * (b.sigma - a.sigma), a.beta + s * (b.beta - a.beta)};
    out.sigma = std::max(out.sigma, 1e-12 * std::max(1.0, std::abs(out.mu)));
    out.beta = std::clamp(out.beta, beta_min, beta_max);
    return out;
}

}  // namespace detail

/// Builds topology and ground-truth link statistics. `threshold` is the
/// detection threshold to store; pass a cached value to avoid recalibrating.
inline Scenario build_scenario(const ScenarioConfig& config, std::uint64_t seed, std::optional<double> threshold = {}) {
    validate(config);
    Scenario sc;
    sc.config = config;
    Rng rng(derive_seed(seed, {0}));

    auto& nodes = sc.topology.nodes;
    nodes.push_back({0, Role::sink, config.sink});
    nodes.push_back({1, Role::legitimate, config.legitimate});
    nodes.push_back({2, Role::attacker, config.attacker});
    for (int n = 0; n < config.num_trusted; ++n) {
        Position p{rng.uniform(0.0, config.area_width), rng.uniform(0.0, config.area_height),
                   rng.uniform(config.depth_min, config.depth_max)};
        nodes.push_back({100 + n, Role::trusted, p});
    }
    sc.topology.validate();

    const auto& m = config.model;
    for (const auto& node : sc.topology.trusted()) {
        Rng link_rng(derive_seed(seed, {1, static_cast<std::uint64_t>(node.id)}));
        const auto legit_raw = detail::raw_link(config, config.legitimate, node.position, link_rng);
        auto attack_raw = detail::raw_link(config, config.attacker, node.position, link_rng);
        for (int f = 0; f < 3; ++f) {
            const double d = std::log(attack_raw.mean[f] / legit_raw.mean[f]);
            if (std::abs(d) < m.min_log_separation) {
                attack_raw.mean[f] = legit_raw.mean[f] * std::exp(d >= 0.0 ? m.min_log_separation : -m.min_log_separation);
            }
        }
        const auto legit = detail::link_from_raw(legit_raw, config, config.legitimate, node.position);
        const auto raw_attack = detail::link_from_raw(attack_raw, config, config.attacker, node.position);
        LinkStats attack = legit;
        attack.num_taps = detail::blend(legit.num_taps, raw_attack.num_taps, config.separation);
        attack.delay_spread = detail::blend(legit.delay_spread, raw_attack.delay_spread, config.separation);
        attack.power = detail::blend(legit.power, raw_attack.power, config.separation);
        attack.max_taps = std::max(legit.max_taps, raw_attack.max_taps);
        attack.first_arrival = legit.first_arrival + config.separation * (raw_attack.first_arrival - legit.first_arrival);
        sc.legitimate_links.push_back(legit);
        sc.attacker_links.push_back(attack);
    }
    sc.threshold = threshold ? *threshold
                             : calibrate_threshold(config.noise_floor, config.false_alarm, config.calibration_samples,
                                                   derive_seed(seed, {2}));
    return sc;
}

/// Per-symbol state of the optional AR(1) symbol correlation (one latent
/// Gaussian per controlled quantity).
struct SymbolState {
    bool started = false;
    double z[3] = {0.0, 0.0, 0.0};
};

namespace detail {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline double draw_quantity(const GGParams& p, int k, double rho, SymbolState* state, Rng& rng) {
    if (!state || rho == 0.0) return sample_gg(p, rng);
    const double e = rng.normal();
    state->z[k] = state->started ? rho * state->z[k] + std::sqrt(1.0 - rho * rho) * e : e;
    const double u = std::clamp(normal_cdf(state->z[k]), 1e-300, 1.0 - 1e-16);
    return gg_quantile(u, p);
}

}  // namespace detail

/// Draws one power-delay profile. Tap count, RMS delay spread and total power
/// are GG draws from the link; gaps are 100 us plus scaled exponentials with
/// the scale solved so that the RMS delay spread matches the draw exactly.
/// Every tap magnitude exceeds twice `threshold`.
inline PowerDelayProfile sample_pdp(const LinkStats& link, Rng& rng, double threshold = 0.0, double symbol_time = 0.0,
                                    SymbolState* state = nullptr) {
    const double rho = link.symbol_correlation;
    const double n_draw = detail::draw_quantity(link.num_taps, 0, rho, state, rng);
    const double d_draw = detail::draw_quantity(link.delay_spread, 1, rho, state, rng);
    const double q_draw = detail::draw_quantity(link.power, 2, rho, state, rng);
    if (state) state->started = true;

    const int n = std::clamp(static_cast<int>(std::lround(n_draw)), 1, link.max_taps);
    PowerDelayProfile p{symbol_time, {}, link.noise_floor};
    p.taps.resize(static_cast<std::size_t>(n));

    // Offsets: o_k = k * g0 + s * C_k with C_k cumulative Exp(1) sums.
    const double g0 = min_tap_separation * (1.0 + 1e-5);
    std::vector<double> cum(static_cast<std::size_t>(n), 0.0);
    for (int k = 1; k < n; ++k) cum[k] = cum[k - 1] + rng.exponential();
    double s = 0.0;
    if (n >= 2) {
        double a = 0.0, b = 0.0, c = 0.0;
        for (int k = 1; k < n; ++k) {
            const double lin = k * g0;
            a += lin * lin;
            b += lin * cum[k];
            c += cum[k] * cum[k];
        }
        const double m = static_cast<double>(n - 1);
        a /= m;
        b /= m;
        c /= m;
        const double target = d_draw * d_draw;
        if (d_draw > 0.0 && target > a && c > 0.0) {
            // c s^2 + 2 b s + (a - target) = 0, positive root.
            s = (-b + std::sqrt(b * b - c * (a - target))) / c;
        }
    }

    // Magnitudes: a floor above the threshold plus exponentially decaying weights.
    const double floor = 2.0 * threshold;
    std::vector<double> w(static_cast<std::size_t>(n));
    double wsum = 0.0;
    for (int k = 0; k < n; ++k) {
        w[k] = std::exp(-2.0 * k / n) * rng.uniform(0.5, 1.5);
        wsum += w[k];
    }
    double q = q_draw;
    const double min_q = n * floor * 1.01;
    if (!(q > min_q)) q = std::max(min_q, std::numeric_limits<double>::min() * n * 4.0);
    const double spare = q - n * floor;
    for (int k = 0; k < n; ++k) {
        p.taps[k].delay = link.first_arrival + k * g0 + s * cum[k];
        p.taps[k].magnitude = floor + spare * w[k] / wsum;
    }
    return p;
}

enum class AttackMode { naive, tn_x };

inline const char* to_string(AttackMode m) { return m == AttackMode::naive ? "naive" : "tn_x"; }

struct AttackerConfig {
    AttackMode mode = AttackMode::naive;
    int x = 0;
    double estimation_error = 0.1;
};

inline void validate(const AttackerConfig& a, std::size_t num_trusted) {
    if (a.mode == AttackMode::naive && a.x != 0) throw ConfigError("naive mode requires x = 0", "attacker.x");
    if (a.mode == AttackMode::tn_x && a.x < 0) throw ConfigError("must be non-negative", "attacker.x");
    if (static_cast<std::size_t>(std::max(a.x, 0)) > num_trusted)
        throw ConfigError("exceeds the number of trusted nodes", "attacker.x");
    if (!(a.estimation_error >= 0.0) || !std::isfinite(a.estimation_error))
        throw ConfigError("must be finite and non-negative", "attacker.estimation_error");
}

/// The attacker's effective link statistics toward each trusted node.
struct AttackPlan {
    std::vector<LinkStats> links;
    std::vector<bool> targeted;
};

inline GGParams perturb(const GGParams& p, double e, Rng& rng) {
    GGParams out = p;
    out.mu = p.mu * (1.0 + e * rng.uniform(-1.0, 1.0));
    out.sigma = p.sigma * (1.0 + e * rng.uniform(-1.0, 1.0));
    out.beta = std::clamp(p.beta * (1.0 + e * rng.uniform(-1.0, 1.0)), beta_min, beta_max);
    out.sigma = std::max(out.sigma, 1e-12 * std::max(1.0, std::abs(out.mu)));
    return out;
}

/// TN-x targets the x trusted nodes nearest the attacker and reproduces the
/// legitimate statistics toward them up to the estimation error.
inline AttackPlan plan_attack(const Scenario& sc, const AttackerConfig& cfg, std::uint64_t seed) {
    validate(cfg, sc.num_trusted());
    AttackPlan plan{sc.attacker_links, std::vector<bool>(sc.num_trusted(), false)};
    if (cfg.mode == AttackMode::naive || cfg.x == 0) return plan;

    const auto trusted = sc.topology.trusted();
    const auto& apos = sc.topology.attacker().position;
    std::vector<std::size_t> order(trusted.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return distance(trusted[a].position, apos) < distance(trusted[b].position, apos);
    });
    Rng rng(seed);
    for (int j = 0; j < cfg.x; ++j) {
        const auto n = order[static_cast<std::size_t>(j)];
        plan.targeted[n] = true;
        auto& l = plan.links[n];
        const auto& legit = sc.legitimate_links[n];
        l = legit;
        l.num_taps = perturb(legit.num_taps, cfg.estimation_error, rng);
        l.delay_spread = perturb(legit.delay_spread, cfg.estimation_error, rng);
        l.power = perturb(legit.power, cfg.estimation_error, rng);
    }
    return plan;
}

enum class Source { legitimate, attacker };

inline const char* to_string(Source s) { return s == Source::legitimate ? "legitimate" : "attacker"; }

struct PacketTransmission {
    std::uint64_t packet_id = 0;
    Source true_source = Source::legitimate;
    std::vector<std::vector<PowerDelayProfile>> profiles;  // [trusted node][symbol]
};

/// Profiles seen by every trusted node for one packet of T symbols. Each
/// node draws from its own child stream, so nodes can be sampled in any order.
inline PacketTransmission transmit_packet(Source source, const Scenario& sc, const AttackPlan& plan,
                                          std::uint64_t packet_id, int symbols, double start_time,
                                          std::uint64_t seed) {
    if (symbols < 1) throw ConfigError("must be at least 1", "schedule.symbols");
    if (plan.links.size() != sc.num_trusted()) throw ConfigError("attack plan does not match scenario", "attacker");
    PacketTransmission tx{packet_id, source, {}};
    tx.profiles.resize(sc.num_trusted());
    for (std::size_t n = 0; n < sc.num_trusted(); ++n) {
        const LinkStats& link = source == Source::legitimate ? sc.legitimate_links[n] : plan.links[n];
        Rng rng(derive_seed(seed, {packet_id, n}));
        SymbolState state;
        auto& out = tx.profiles[n];
        out.reserve(static_cast<std::size_t>(symbols));
        for (int t = 0; t < symbols; ++t) {
            out.push_back(sample_pdp(link, rng, sc.threshold, start_time + t * sc.config.symbol_period, &state));
        }
    }
    return tx;
}

}  // namespace uwauth
