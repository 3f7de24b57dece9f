#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "uwauth/auth.hpp"

using namespace uwauth;

namespace {

// GG log density written out independently of ggmix.
double oracle_log_pdf(double x, const GGParams& p) {
    return std::log(p.beta / (2.0 * p.sigma)) - std::lgamma(1.0 / p.beta) - std::pow(std::abs(x - p.mu) / p.sigma, p.beta);
}

Topology line_topology(int n) {
    Topology t;
    t.nodes.push_back({0, Role::sink, {0, 0, 10}});
    t.nodes.push_back({1, Role::legitimate, {0, 0, 40}});
    t.nodes.push_back({2, Role::attacker, {5, 5, 40}});
    for (int i = 0; i < n; ++i) t.nodes.push_back({100 + i, Role::trusted, {100.0 * i, 50.0, 30.0}});
    return t;
}

PacketFeatures packet(Rng& rng, const std::vector<GGParams>& laws, std::size_t samples) {
    const std::array<Feature, 3> fs{Feature::num_taps, Feature::rms_delay_spread, Feature::smoothed_power};
    PacketFeatures out;
    for (std::size_t i = 0; i < fs.size(); ++i) {
        for (std::size_t t = 0; t < samples; ++t) out[fs[i]].push_back({0.01 * t, sample_gg(laws[i], rng)});
    }
    return out;
}

}  // namespace

TEST(Associate, ReferenceDecidesHypothesis) {
    MixtureParams m;
    m[0] = {{0.0, 1.0, 2.0}, 0.5};
    m[1] = {{5.0, 1.0, 2.0}, 0.5};
    const std::vector<double> near_one{4.8, 5.1, 5.3};
    const auto a = associate(m, near_one);
    EXPECT_TRUE(a.swapped);
    EXPECT_EQ(a.h0, m[1].omega);
    const std::vector<double> x{0.5};
    EXPECT_NEAR(llr_contribution(x, a), oracle_log_pdf(0.5, m[1].omega) - oracle_log_pdf(0.5, m[0].omega), 1e-12);
    const Association same{m[0].omega, m[0].omega, false};
    EXPECT_EQ(llr_contribution(x, same), 0.0);
}

TEST(SplitExactness, PooledLlrEqualsSumOfBeliefs) {
    Rng rng(5);
    for (int c = 0; c < 50; ++c) {
        const int n_nodes = 2 + static_cast<int>(rng.index(5));
        NodeConfig cfg;
        cfg.features = {Feature::num_taps, Feature::rms_delay_spread, Feature::smoothed_power};
        std::vector<NodeState> nodes;
        std::vector<std::vector<GGParams>> legit, fake;
        for (int n = 0; n < n_nodes; ++n) {
            nodes.emplace_back(100 + n, 1.0, cfg, derive_seed(c, {static_cast<std::uint64_t>(n)}));
            std::vector<GGParams> l, f;
            for (int k = 0; k < 3; ++k) {
                const double mu = rng.uniform(5.0, 20.0), s = rng.uniform(0.5, 2.0);
                l.push_back({mu, s, rng.uniform(1.2, 3.0)});
                f.push_back({mu + rng.uniform(3.0, 6.0) * s, s, rng.uniform(1.2, 3.0)});
            }
            legit.push_back(l);
            fake.push_back(f);
        }
        const int packets = 4 + static_cast<int>(rng.index(4));
        for (int phi = 0; phi < packets; ++phi) {
            const bool attacker = phi > 0 && rng.uniform() < 0.4;
            double pooled = 0.0, split = 0.0;
            bool all_reported = true;
            for (int n = 0; n < n_nodes; ++n) {
                const auto feats = packet(rng, attacker ? fake[n] : legit[n], 30);
                const auto rep = nodes[n].process_packet(static_cast<std::uint64_t>(phi), feats);
                if (!rep.belief) {
                    all_reported = false;
                    continue;
                }
                split += rep.belief->r_value;
                for (const auto& [f, a] : rep.associations)
                    for (const auto& s : feats.at(f)) pooled += oracle_log_pdf(s.value, a.h0) - oracle_log_pdf(s.value, a.h1);
            }
            ASSERT_TRUE(all_reported);
            EXPECT_NEAR(pooled, split, 1e-9 * std::max(1.0, std::abs(pooled))) << "case " << c << " packet " << phi;
        }
    }
}

TEST(MajoritySign, CountsThenSum) {
    EXPECT_EQ(majority_sign(std::vector<double>{1.0, 2.0, -5.0}), 1);
    EXPECT_EQ(majority_sign(std::vector<double>{-1.0, -2.0, 5.0}), -1);
    EXPECT_EQ(majority_sign(std::vector<double>{1.0, -2.0}), -1);
    EXPECT_EQ(majority_sign(std::vector<double>{2.0, -1.0}), 1);
    EXPECT_EQ(majority_sign(std::vector<double>{1.0, -1.0}), 1);
    EXPECT_EQ(majority_sign(std::vector<double>{}), 1);
}

TEST(SinkFuse, UnitWeightsSumBeliefs) {
    const auto topo = line_topology(3);
    const std::vector<Belief> b{{4, 100, 2.0, 1.0}, {4, 101, 3.0, 2.0}, {4, 102, -0.5, 3.0}};
    const auto r = sink_fuse(b, topo, {false, false});
    EXPECT_EQ(r.majority_sign, 1);
    EXPECT_EQ(r.signs, (std::vector<int>{1, 1, -1}));
    EXPECT_DOUBLE_EQ(r.psi, 2.0 + 3.0 + 0.5);
    EXPECT_EQ(r.packet_id, 4u);
}

TEST(SinkFuse, ProximityWeights) {
    const auto topo = line_topology(2);
    const std::vector<Belief> b{{0, 100, -1.0, 1.0}, {0, 101, -4.0, 2.0}};
    const auto r = sink_fuse(b, topo);
    // Weights (max proximity / proximity)^2. Both reports agree with the
    // negative majority, so psi = -(4 * 1 + 1 * 4).
    EXPECT_DOUBLE_EQ(r.weights[0], 4.0);
    EXPECT_DOUBLE_EQ(r.weights[1], 1.0);
    EXPECT_EQ(r.majority_sign, -1);
    EXPECT_DOUBLE_EQ(r.psi, -8.0);
}

TEST(SinkFuse, RejectsUnknownNodesAndBadValues) {
    const auto topo = line_topology(2);
    EXPECT_THROW(sink_fuse(std::vector<Belief>{{0, 2, 1.0, 1.0}}, topo), ConfigError);
    EXPECT_THROW(sink_fuse(std::vector<Belief>{{0, 100, NAN, 1.0}}, topo), NumericError);
    EXPECT_THROW(sink_fuse(std::vector<Belief>{{0, 100, 1.0, 0.0}}, topo), ParameterDomainError);
    EXPECT_THROW(sink_fuse(std::vector<Belief>{}, topo), ParameterDomainError);
}

TEST(Zeta, SymmetricTriangle) {
    const std::vector<Position> pos{{0, 0, 0}, {1, 0, 0}, {0.5, std::sqrt(3.0) / 2.0, 0}};
    const std::vector<double> xbar{1.0, 1.0, 1.0};
    const auto z = zeta_terms(xbar, pos);
    // For each (n, k) the single j gives (1 - cos 60 deg) = 0.5; two k per n.
    for (double v : z) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(NodeState, FirstPacketIsReferenceAndIdsIncrease) {
    NodeConfig cfg;
    cfg.features = {Feature::num_taps};
    NodeState node(100, 1.0, cfg, 1);
    Rng rng(2);
    const std::vector<GGParams> laws(3, GGParams{10.0, 1.0, 2.0});
    const auto rep = node.process_packet(0, packet(rng, laws, 20));
    EXPECT_TRUE(node.has_reference());
    ASSERT_TRUE(rep.belief);
    EXPECT_EQ(node.reference(Feature::num_taps).packet_id, 0u);
    EXPECT_THROW(node.process_packet(0, packet(rng, laws, 20)), ConfigError);
}

TEST(NodeState, DropsFeaturesWithoutSamples) {
    NodeConfig cfg;
    cfg.features = {Feature::num_taps, Feature::coherence_time};
    NodeState node(100, 1.0, cfg, 1);
    Rng rng(3);
    const auto rep = node.process_packet(0, packet(rng, std::vector<GGParams>(3, GGParams{10.0, 1.0, 2.0}), 20));
    ASSERT_EQ(rep.dropped.size(), 1u);
    EXPECT_EQ(rep.dropped[0].feature, Feature::coherence_time);
}

TEST(NodeConfig, ValidationNamesKeys) {
    NodeConfig cfg;
    cfg.alpha = 2.0;
    try {
        validate(cfg);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.key, "features.alpha");
    }
}
