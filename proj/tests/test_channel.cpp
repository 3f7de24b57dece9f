#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "uwauth/analysis.hpp"
#include "uwauth/channel.hpp"
#include "uwauth/features.hpp"

using namespace uwauth;

namespace {

ScenarioConfig small_config() {
    ScenarioConfig c;
    c.calibration_samples = 100000;
    return c;
}

double link_kl(const LinkStats& a, const LinkStats& b) {
    return std::max({kl_gg_numeric(a.num_taps, b.num_taps), kl_gg_numeric(a.delay_spread, b.delay_spread),
                     kl_gg_numeric(a.power, b.power)});
}

LinkStats simple_link() {
    LinkStats l;
    l.num_taps = {12.0, 3.0, 2.0};
    l.delay_spread = {4e-3, 1e-3, 2.0};
    l.power = {1.0, 0.3, 2.0};
    l.first_arrival = 0.5;
    l.noise_floor = 1e-5;
    return l;
}

}  // namespace

TEST(Calibration, MatchesExponentialQuantile) {
    // Noise magnitudes are Exp(mean n0), so the (1 - pfa) quantile is n0 ln(1 / pfa).
    const double n0 = 2e-5, pfa = 1e-2;
    const double th = calibrate_threshold(n0, pfa, 1000000, 5);
    EXPECT_NEAR(th / (n0 * std::log(1.0 / pfa)), 1.0, 0.03);
}

TEST(Calibration, ReproducesFalseAlarmRateOnFreshNoise) {
    const double n0 = 1e-5, pfa = 1e-3;
    const double th = calibrate_threshold(n0, pfa, 1000000, 7);
    Rng rng(8);
    std::size_t above = 0;
    const std::size_t total = 1000000;
    for (std::size_t i = 0; i < total; ++i) above += rng.exponential(n0) > th;
    EXPECT_NEAR(static_cast<double>(above) / total, pfa, 0.2 * pfa);
}

TEST(Calibration, NoiseProfileDetectsRarely) {
    Rng rng(2);
    const auto p = sample_noise_profile(1e-5, 1000, 0.0, rng);
    validate(p);
    const double th = 1e-5 * std::log(1.0 / 1e-4);
    std::size_t hits = 0;
    for (const auto& t : p.taps) hits += t.magnitude > th;
    EXPECT_LE(hits, 3u);
}

TEST(SamplePdp, SeparationFloorAndMagnitudes) {
    Rng rng(1);
    const auto link = simple_link();
    for (int i = 0; i < 2000; ++i) {
        const auto p = sample_pdp(link, rng, 1e-4, 0.0);
        validate(p);
        ASSERT_GE(p.taps.size(), 1u);
        EXPECT_DOUBLE_EQ(p.taps.front().delay, link.first_arrival);
        for (std::size_t k = 1; k < p.taps.size(); ++k)
            EXPECT_GE(p.taps[k].delay - p.taps[k - 1].delay, min_tap_separation);
        for (const auto& t : p.taps) EXPECT_GT(t.magnitude, 2e-4);
    }
}

TEST(SamplePdp, FeatureMeansFollowLink) {
    Rng rng(4);
    const auto link = simple_link();
    const int n = 20000;
    double taps = 0, spread = 0, power = 0;
    for (int i = 0; i < n; ++i) {
        const auto s = *detect_taps(sample_pdp(link, rng, 1e-6, 0.0), 1e-6);
        taps += num_taps(s);
        spread += rms_delay_spread(s).value_or(0.0);
        power += received_power(s);
    }
    // Standard errors are about 0.02, 1e-5 and 0.002; the tolerances allow for rounding of the tap count.
    EXPECT_NEAR(taps / n, link.num_taps.mu, 0.1);
    EXPECT_NEAR(spread / n, link.delay_spread.mu, 5e-5);
    EXPECT_NEAR(power / n, link.power.mu, 0.01);
}

TEST(SamplePdp, SymbolCorrelationCarriesOver) {
    auto link = simple_link();
    link.symbol_correlation = 0.95;
    Rng rng(9);
    SymbolState st;
    double prev = 0.0, sxy = 0.0, sxx = 0.0, sum = 0.0;
    const int n = 5000;
    std::vector<double> x;
    for (int i = 0; i < n; ++i) x.push_back(received_power(*detect_taps(sample_pdp(link, rng, 1e-6, 0.0, &st), 1e-6)));
    for (double v : x) sum += v;
    const double mean = sum / n;
    for (int i = 1; i < n; ++i) {
        prev = x[i - 1] - mean;
        sxy += prev * (x[i] - mean);
        sxx += prev * prev;
    }
    EXPECT_GT(sxy / sxx, 0.8);
}

TEST(Scenario, DeterministicAndValid) {
    const auto c = small_config();
    const auto a = build_scenario(c, 42);
    const auto b = build_scenario(c, 42);
    const auto d = build_scenario(c, 43);
    EXPECT_EQ(a.topology.nodes, b.topology.nodes);
    EXPECT_EQ(a.legitimate_links, b.legitimate_links);
    EXPECT_EQ(a.attacker_links, b.attacker_links);
    EXPECT_NE(a.legitimate_links, d.legitimate_links);
    EXPECT_EQ(a.num_trusted(), 4u);
    EXPECT_EQ(a.topology.trusted().size(), 4u);
    for (const auto& l : a.legitimate_links) validate(l);
    for (const auto& l : a.attacker_links) validate(l);
}

TEST(Scenario, ZeroSeparationMakesAttackerIdentical) {
    auto c = small_config();
    c.separation = 0.0;
    const auto sc = build_scenario(c, 5, 1e-4);
    for (std::size_t n = 0; n < sc.num_trusted(); ++n) {
        EXPECT_EQ(sc.attacker_links[n].num_taps, sc.legitimate_links[n].num_taps);
        EXPECT_EQ(sc.attacker_links[n].power, sc.legitimate_links[n].power);
        EXPECT_EQ(sc.attacker_links[n].delay_spread, sc.legitimate_links[n].delay_spread);
    }
    EXPECT_EQ(sc.threshold, 1e-4);
}

TEST(Scenario, RejectsBadConfig) {
    auto c = small_config();
    c.num_trusted = 0;
    try {
        build_scenario(c, 1);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.key, "scenario.num_trusted");
    }
}

TEST(AttackPlan, TnxMimicsExactlyXNodes) {
    auto c = small_config();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto sc = build_scenario(c, seed, 1e-4);
        for (int x = 0; x <= 4; ++x) {
            const auto plan = plan_attack(sc, {AttackMode::tn_x, x, 0.1}, derive_seed(seed, {9}));
            int close = 0;
            for (std::size_t n = 0; n < sc.num_trusted(); ++n) {
                const double kl = link_kl(plan.links[n], sc.legitimate_links[n]);
                close += kl < 0.05;
                EXPECT_EQ(plan.targeted[n], kl < 0.05);
            }
            EXPECT_EQ(close, x) << "seed " << seed;
        }
    }
}

TEST(AttackPlan, TargetsNearestWithinEstimationError) {
    const auto sc = build_scenario(small_config(), 3, 1e-4);
    const auto plan = plan_attack(sc, {AttackMode::tn_x, 1, 0.1}, 17);
    const auto trusted = sc.topology.trusted();
    const auto apos = sc.topology.attacker().position;
    std::size_t nearest = 0;
    for (std::size_t n = 1; n < trusted.size(); ++n)
        if (distance(trusted[n].position, apos) < distance(trusted[nearest].position, apos)) nearest = n;
    for (std::size_t n = 0; n < trusted.size(); ++n) EXPECT_EQ(plan.targeted[n], n == nearest);
    auto within = [](const GGParams& a, const GGParams& b) {
        return std::abs(a.mu / b.mu - 1.0) <= 0.1 + 1e-12 && std::abs(a.sigma / b.sigma - 1.0) <= 0.1 + 1e-12 &&
               std::abs(a.beta / b.beta - 1.0) <= 0.1 + 1e-12;
    };
    const auto& l = sc.legitimate_links[nearest];
    const auto& a = plan.links[nearest];
    EXPECT_TRUE(within(a.num_taps, l.num_taps));
    EXPECT_TRUE(within(a.delay_spread, l.delay_spread));
    EXPECT_TRUE(within(a.power, l.power));
}

TEST(AttackPlan, NaiveKeepsAttackerLinksAndValidates) {
    const auto sc = build_scenario(small_config(), 3, 1e-4);
    const auto plan = plan_attack(sc, {}, 1);
    EXPECT_EQ(plan.links, sc.attacker_links);
    EXPECT_THROW(plan_attack(sc, {AttackMode::tn_x, 5, 0.1}, 1), ConfigError);
    EXPECT_THROW(plan_attack(sc, {AttackMode::naive, 1, 0.1}, 1), ConfigError);
}

TEST(TransmitPacket, DeterministicPerNodeStreams) {
    const auto sc = build_scenario(small_config(), 6, 1e-4);
    const auto plan = plan_attack(sc, {}, 1);
    const auto a = transmit_packet(Source::legitimate, sc, plan, 3, 10, 2.0, 77);
    const auto b = transmit_packet(Source::legitimate, sc, plan, 3, 10, 2.0, 77);
    ASSERT_EQ(a.profiles.size(), sc.num_trusted());
    for (std::size_t n = 0; n < a.profiles.size(); ++n) {
        ASSERT_EQ(a.profiles[n].size(), 10u);
        for (std::size_t t = 0; t < 10; ++t) {
            EXPECT_EQ(a.profiles[n][t].taps, b.profiles[n][t].taps);
            EXPECT_DOUBLE_EQ(a.profiles[n][t].symbol_time, 2.0 + static_cast<double>(t) * sc.config.symbol_period);
        }
    }
    EXPECT_THROW(transmit_packet(Source::legitimate, sc, plan, 0, 0, 0.0, 1), ConfigError);
}
