#pragma once

// Cooperative authentication: each trusted node fits a two-component GG
// mixture per feature, aligns the components with the hypotheses using the
// first (trusted) packet, and reports R = Psi0 - Psi1 for the current packet.
// The sink corrects signs by majority, weights the reports and thresholds.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "uwauth/analysis.hpp"
#include "uwauth/channel.hpp"
#include "uwauth/features.hpp"
#include "uwauth/ggmix.hpp"

namespace uwauth {

struct NodeConfig {
    std::vector<Feature> features{Feature::num_taps, Feature::rms_delay_spread, Feature::smoothed_power};
    double alpha = 0.5;  // smoothing of the received power
    EmConfig em;
    bool warm_start = true;
    int max_restarts = 3;
};

inline void validate(const NodeConfig& c) {
    if (c.features.empty()) throw ConfigError("feature set must not be empty", "features.set");
    for (std::size_t i = 0; i < c.features.size(); ++i) {
        (void)feature_from_id(static_cast<int>(c.features[i]));
        for (std::size_t j = 0; j < i; ++j)
            if (c.features[i] == c.features[j]) throw ConfigError("duplicate feature id", "features.set");
    }
    if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) throw ConfigError("must be in [0, 1]", "features.alpha");
    if (!(c.em.tolerance > 0.0)) throw ConfigError("must be positive", "em.tolerance");
    if (c.em.max_iterations < 1) throw ConfigError("must be at least 1", "em.max_iterations");
    if (!(c.em.mass_floor >= 0.0 && c.em.mass_floor < 0.5)) throw ConfigError("must be in [0, 0.5)", "em.mass_floor");
    if (c.max_restarts < 0) throw ConfigError("must be non-negative", "em.max_restarts");
}

/// The report a trusted node sends to the sink.
struct Belief {
    std::uint64_t packet_id = 0;
    int node_id = 0;
    double r_value = 0.0;
    double mean_proximity = 0.0;
};

/// Mixture components assigned to the hypotheses.
struct Association {
    GGParams h0;
    GGParams h1;
    bool swapped = false;  // component 1 was assigned to H0
};

/// Component m is H0 if the reference packet is at least as likely under it.
inline Association associate(const MixtureParams& mixture, std::span<const double> reference) {
    const double l0 = packet_log_likelihood(reference, mixture[0].omega);
    const double l1 = packet_log_likelihood(reference, mixture[1].omega);
    if (l0 >= l1) return {mixture[0].omega, mixture[1].omega, false};
    return {mixture[1].omega, mixture[0].omega, true};
}

/// Psi0 - Psi1 contributed by one feature's samples.
inline double llr_contribution(std::span<const double> samples, const Association& a) {
    if (a.h0 == a.h1) return 0.0;
    return packet_log_likelihood(samples, a.h0) - packet_log_likelihood(samples, a.h1);
}

struct FeatureDiagnostic {
    Feature feature = Feature::num_taps;
    std::string reason;
};

struct NodeReport {
    std::optional<Belief> belief;  // empty when the node abstains
    std::vector<FeatureDiagnostic> dropped;
    std::map<Feature, Association> associations;
    std::map<Feature, int> em_iterations;
};

/// Per-node state across the packets of one run. Processing is sequential.
class NodeState {
public:
    NodeState(int node_id, double threshold, NodeConfig config, std::uint64_t seed)
        : node_id_(node_id), config_(std::move(config)), extractor_(threshold, config_.alpha), seed_(seed) {
        validate(config_);
    }

    int node_id() const { return node_id_; }
    const NodeConfig& config() const { return config_; }
    const std::vector<PacketSamples>& history(Feature f) const { return history_.at(f); }
    const PacketSamples& reference(Feature f) const { return reference_.at(f); }
    std::optional<MixtureParams> estimate(Feature f) const {
        if (auto it = estimate_.find(f); it != estimate_.end()) return it->second;
        return std::nullopt;
    }
    bool has_reference() const { return !reference_.empty(); }

    /// Extracts features from the received profiles and processes them.
    NodeReport process_profiles(std::uint64_t packet_id, std::span<const PowerDelayProfile> profiles) {
        const bool coherence = std::find(config_.features.begin(), config_.features.end(),
                                         Feature::coherence_time) != config_.features.end();
        return process_packet(packet_id, extractor_.extract(profiles, coherence));
    }

    /// Appends the packet's samples, refits each feature's mixture, associates
    /// its components with the hypotheses and returns the node's belief.
    NodeReport process_packet(std::uint64_t packet_id, const PacketFeatures& features) {
        NodeReport report;
        if (!history_.empty() && packet_id <= last_packet_)
            throw ConfigError("packet ids must be strictly increasing", "schedule");
        last_packet_ = packet_id;

        const bool first = reference_.empty();
        double r = 0.0;
        int used = 0;
        for (Feature f : config_.features) {
            auto it = features.find(f);
            if (it == features.end() || it->second.empty()) {
                report.dropped.push_back({f, "no samples"});
                continue;
            }
            PacketSamples packet{packet_id, values_of(it->second)};
            auto& hist = history_[f];
            hist.push_back(packet);
            if (first) reference_[f] = packet;
            const auto ref_it = reference_.find(f);
            if (ref_it == reference_.end()) {
                report.dropped.push_back({f, "no reference samples"});
                continue;
            }

            auto fit = fit_feature(f, packet_id, report);
            if (!fit) continue;
            const Association a = associate(*fit, ref_it->second.values);
            report.associations[f] = a;
            r += llr_contribution(packet.values, a);
            ++used;
        }

        std::optional<double> proximity;
        if (auto it = features.find(Feature::smoothed_power); it != features.end() && !it->second.empty()) {
            double s = 0.0;
            for (const auto& x : it->second) s += x.value;
            proximity = s / static_cast<double>(it->second.size());
        }
        if (used > 0 && proximity && *proximity > 0.0) report.belief = Belief{packet_id, node_id_, r, *proximity};
        return report;
    }

private:
    std::optional<MixtureParams> fit_feature(Feature f, std::uint64_t packet_id, NodeReport& report) {
        const auto& hist = history_[f];
        const auto fseed = derive_seed(seed_, {static_cast<std::uint64_t>(f), packet_id});
        if (hist.size() == 1) {
            // A single packet: split it into two clusters and use that directly.
            try {
                auto m = kmeans_init(hist, fseed, 0);
                estimate_[f] = m;
                return m;
            } catch (const DegenerateSampleError& e) {
                report.dropped.push_back({f, e.what()});
                return std::nullopt;
            }
        }

        auto prev = estimate_.find(f);
        const bool warm = config_.warm_start && prev != estimate_.end();
        std::string last_error;
        for (int attempt = 0; attempt <= config_.max_restarts; ++attempt) {
            MixtureParams start;
            if (warm && attempt == 0) {
                start = prev->second;
            } else {
                try {
                    // Packet-mean clustering first: the mixture is over packets.
                    start = kmeans_init(hist, fseed, warm ? attempt : attempt + 1);
                } catch (const DegenerateSampleError& e) {
                    last_error = e.what();
                    continue;
                }
            }
            try {
                auto est = em_fit(hist, start, config_.em);
                report.em_iterations[f] = est.iterations;
                estimate_[f] = est.components;
                return est.components;
            } catch (const ComponentCollapseError& e) {
                last_error = e.what();
            } catch (const NumericError& e) {
                last_error = e.what();
            }
        }
        report.dropped.push_back({f, last_error.empty() ? "EM failed" : last_error});
        return std::nullopt;
    }

    int node_id_;
    NodeConfig config_;
    FeatureExtractor extractor_;
    std::uint64_t seed_;
    std::uint64_t last_packet_ = 0;
    std::map<Feature, std::vector<PacketSamples>> history_;
    std::map<Feature, PacketSamples> reference_;
    std::map<Feature, MixtureParams> estimate_;
};

struct FusionConfig {
    bool use_weights = true;  // proximity weighting; unit weights otherwise
    bool use_zeta = false;    // spatial-distribution term of the weights
};

struct FusionResult {
    std::uint64_t packet_id = 0;
    double psi = 0.0;
    std::vector<int> node_ids;
    std::vector<double> weights;
    std::vector<int> signs;
    int majority_sign = 1;
};

inline int sign_of(double r) { return r < 0.0 ? -1 : 1; }

/// Sign of the majority of the reports. A tie goes to the sign of their sum,
/// and to +1 if that is zero.
inline int majority_sign(std::span<const double> r) {
    int pos = 0, neg = 0;
    double sum = 0.0;
    for (double v : r) {
        if (v > 0.0) ++pos;
        else if (v < 0.0) ++neg;
        sum += v;
    }
    if (pos != neg) return pos > neg ? 1 : -1;
    return sum < 0.0 ? -1 : 1;
}

/// zeta_n = sum over k != n of zeta_{n,k}, with
/// zeta_{n,k} = (1 / sum_j xbar_j) * sum_j (1 / xbar_j) (1 - (p_k - p_n).(p_j - p_n) / (xbar_n xbar_k)),
/// j ranging over nodes other than n and k. Positions are (easting, northing).
inline std::vector<double> zeta_terms(std::span<const double> xbar, std::span<const Position> pos) {
    const std::size_t n_nodes = xbar.size();
    std::vector<double> zeta(n_nodes, 0.0);
    for (std::size_t n = 0; n < n_nodes; ++n) {
        for (std::size_t k = 0; k < n_nodes; ++k) {
            if (k == n) continue;
            double denom = 0.0, acc = 0.0;
            for (std::size_t j = 0; j < n_nodes; ++j) {
                if (j == n || j == k) continue;
                denom += xbar[j];
                const double dot = (pos[k].easting - pos[n].easting) * (pos[j].easting - pos[n].easting) +
                                   (pos[k].northing - pos[n].northing) * (pos[j].northing - pos[n].northing);
                acc += (1.0 - dot / (xbar[n] * xbar[k])) / xbar[j];
            }
            if (denom > 0.0) zeta[n] += acc / denom;
        }
    }
    return zeta;
}

/// Weighted, sign-corrected sum of the beliefs for one packet.
inline FusionResult sink_fuse(std::span<const Belief> beliefs, const Topology& topology, const FusionConfig& cfg = {}) {
    if (beliefs.empty()) throw ParameterDomainError("sink_fuse needs at least one belief");
    FusionResult out;
    out.packet_id = beliefs.front().packet_id;
    std::vector<double> r, xbar;
    std::vector<Position> pos;
    for (const auto& b : beliefs) {
        const NodeInfo* node = topology.find(b.node_id);
        if (!node || node->role != Role::trusted)
            throw ConfigError("no trusted node with id " + std::to_string(b.node_id), "topology");
        if (!(b.mean_proximity > 0.0)) throw ParameterDomainError("mean proximity must be positive");
        if (!std::isfinite(b.r_value)) throw NumericError("non-finite belief from node " + std::to_string(b.node_id));
        out.node_ids.push_back(b.node_id);
        r.push_back(b.r_value);
        xbar.push_back(b.mean_proximity);
        pos.push_back(node->position);
    }
    const std::size_t n_nodes = r.size();
    out.majority_sign = majority_sign(r);
    out.signs.resize(n_nodes);
    for (std::size_t n = 0; n < n_nodes; ++n) out.signs[n] = sign_of(r[n]) * out.majority_sign;

    out.weights.assign(n_nodes, 1.0);
    if (cfg.use_weights && n_nodes > 1) {
        const double top = *std::max_element(xbar.begin(), xbar.end());
        std::vector<double> zeta(n_nodes, 0.0);
        if (cfg.use_zeta) zeta = zeta_terms(xbar, pos);
        for (std::size_t n = 0; n < n_nodes; ++n) {
            const double ratio = xbar[n] / top;
            out.weights[n] = std::max(1.0 + zeta[n], 1e-12) / (ratio * ratio);
        }
    }
    for (std::size_t n = 0; n < n_nodes; ++n) out.psi += out.weights[n] * out.signs[n] * r[n];
    return out;
}

/// One scheduled packet's end-to-end outcome.
struct PacketOutcome {
    std::uint64_t packet_id = 0;
    Source true_source = Source::legitimate;
    std::vector<std::optional<Belief>> beliefs;  // per trusted node, in topology order
    std::optional<FusionResult> fusion;          // empty when every node abstained
    double psi = 0.0;
    Verdict verdict = Verdict::authentic;
};

struct ProtocolConfig {
    int symbols = 100;
    double packet_gap = 1.0;  // s between the end of one packet and the next
    NodeConfig node;
    FusionConfig fusion;
};

/// Runs the cooperative protocol over a packet schedule for one scenario.
inline std::vector<PacketOutcome> run_protocol(const Scenario& sc, std::span<const Source> schedule,
                                               const AttackPlan& plan, double lambda, std::uint64_t seed,
                                               const ProtocolConfig& cfg = {},
                                               const std::function<void(const PacketTransmission&)>& on_packet = {}) {
    if (schedule.empty() || schedule.front() != Source::legitimate)
        throw ConfigError("the first packet must come from the legitimate node", "schedule");
    const auto trusted = sc.topology.trusted();
    std::vector<NodeState> nodes;
    nodes.reserve(trusted.size());
    for (std::size_t n = 0; n < trusted.size(); ++n) {
        nodes.emplace_back(trusted[n].id, sc.threshold, cfg.node,
                           derive_seed(seed, {1, static_cast<std::uint64_t>(trusted[n].id)}));
    }
    const double packet_span = cfg.symbols * sc.config.symbol_period + cfg.packet_gap;
    std::vector<PacketOutcome> out;
    out.reserve(schedule.size());
    for (std::size_t phi = 0; phi < schedule.size(); ++phi) {
        const auto tx = transmit_packet(schedule[phi], sc, plan, phi, cfg.symbols, phi * packet_span,
                                        derive_seed(seed, {0}));
        if (on_packet) on_packet(tx);
        PacketOutcome o;
        o.packet_id = phi;
        o.true_source = schedule[phi];
        std::vector<Belief> beliefs;
        for (std::size_t n = 0; n < nodes.size(); ++n) {
            auto rep = nodes[n].process_profiles(phi, tx.profiles[n]);
            o.beliefs.push_back(rep.belief);
            if (rep.belief) beliefs.push_back(*rep.belief);
        }
        if (!beliefs.empty()) {
            o.fusion = sink_fuse(beliefs, sc.topology, cfg.fusion);
            o.psi = o.fusion->psi;
        }
        o.verdict = decide(o.psi, lambda);
        out.push_back(std::move(o));
    }
    return out;
}

}  // namespace uwauth
