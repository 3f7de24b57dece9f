#pragma once

// Recovery benchmark for the packet-level GG mixture EM: draw seeded
// two-component mixtures, fit them and compare against the truth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "uwauth/ggmix.hpp"
#include "uwauth/random.hpp"

namespace uwauth {

struct EmBenchConfig {
    int cases = 20;
    int packets = 40;
    int samples = 50;              // per packet
    double min_separation = 4.0;   // |mu0 - mu1| in units of the larger scale
    double max_relative_error = 0.1;
    double min_posterior_accuracy = 0.95;
    std::uint64_t seed = 1;
    EmConfig em;
};

struct EmBenchCase {
    std::uint64_t seed = 0;
    MixtureParams truth;
    MixtureParams estimate;
    double max_relative_error = 0.0;  // over mu, sigma, beta and k of both components
    double posterior_accuracy = 0.0;  // packets whose posterior picks the true component
    bool monotone = false;
    int iterations = 0;
    bool recovered = false;
    std::string error;
};

struct EmBenchReport {
    std::vector<EmBenchCase> cases;
    int recovered = 0;
    bool all_monotone = true;
    double median_iterations = 0.0;
};

/// Truth for one case: means in [5, 15], scales in [0.5, 1.5], shapes in
/// [1.5, 3], exact packet counts from a prior in [0.3, 0.7].
inline MixtureParams bench_truth(const EmBenchConfig& c, Rng& rng) {
    MixtureParams m;
    const double s0 = rng.uniform(0.5, 1.5);
    const double s1 = rng.uniform(0.5, 1.5);
    const double mu0 = rng.uniform(5.0, 10.0);
    const double gap = c.min_separation * std::max(s0, s1) * rng.uniform(1.0, 1.5);
    m[0] = {{mu0, s0, rng.uniform(1.5, 3.0)}, 0.0};
    m[1] = {{mu0 + gap, s1, rng.uniform(1.5, 3.0)}, 0.0};
    const auto n0 = static_cast<int>(std::lround(rng.uniform(0.3, 0.7) * c.packets));
    m[0].k = static_cast<double>(n0) / c.packets;
    m[1].k = 1.0 - m[0].k;
    return m;
}

inline EmBenchCase run_bench_case(const EmBenchConfig& c, std::uint64_t seed) {
    EmBenchCase out;
    out.seed = seed;
    Rng rng(seed);
    out.truth = bench_truth(c, rng);
    const auto n0 = static_cast<std::size_t>(std::lround(out.truth[0].k * c.packets));
    std::vector<int> labels(static_cast<std::size_t>(c.packets), 1);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n0), 0);
    for (std::size_t i = labels.size(); i > 1; --i) std::swap(labels[i - 1], labels[rng.index(i)]);

    std::vector<PacketSamples> history;
    for (std::size_t f = 0; f < labels.size(); ++f) {
        history.push_back({f, sample_gg(out.truth[static_cast<std::size_t>(labels[f])].omega,
                                        static_cast<std::size_t>(c.samples), rng)});
    }
    try {
        const auto est = em_fit(history, kmeans_init(history, derive_seed(seed, {1})), c.em);
        out.iterations = est.iterations;
        out.monotone = true;
        for (std::size_t i = 1; i < est.log_likelihood_trace.size(); ++i) {
            const double prev = est.log_likelihood_trace[i - 1];
            if (est.log_likelihood_trace[i] < prev - 1e-9 * std::max(1.0, std::abs(prev))) out.monotone = false;
        }
        // Match components to the truth by location.
        const bool swap = est.components[0].omega.mu > est.components[1].omega.mu;
        out.estimate = est.components;
        if (swap) std::swap(out.estimate[0], out.estimate[1]);
        auto rel = [](double a, double b) { return std::abs(a - b) / std::abs(b); };
        for (int m = 0; m < 2; ++m) {
            const auto& t = out.truth[static_cast<std::size_t>(m)];
            const auto& e = out.estimate[static_cast<std::size_t>(m)];
            out.max_relative_error = std::max({out.max_relative_error, rel(e.omega.mu, t.omega.mu),
                                               rel(e.omega.sigma, t.omega.sigma), rel(e.omega.beta, t.omega.beta),
                                               rel(e.k, t.k)});
        }
        std::size_t correct = 0;
        for (std::size_t f = 0; f < labels.size(); ++f) {
            const double p0 = swap ? 1.0 - est.posteriors[f] : est.posteriors[f];
            correct += (p0 >= 0.5) == (labels[f] == 0);
        }
        out.posterior_accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
        out.recovered = out.max_relative_error <= c.max_relative_error &&
                        out.posterior_accuracy >= c.min_posterior_accuracy;
    } catch (const Error& e) {
        out.error = e.what();
    }
    return out;
}

inline EmBenchReport run_em_bench(const EmBenchConfig& c) {
    EmBenchReport rep;
    std::vector<int> iters;
    for (int i = 0; i < c.cases; ++i) {
        auto k = run_bench_case(c, derive_seed(c.seed, {static_cast<std::uint64_t>(i)}));
        rep.recovered += k.recovered;
        if (k.error.empty()) {
            rep.all_monotone = rep.all_monotone && k.monotone;
            iters.push_back(k.iterations);
        }
        rep.cases.push_back(std::move(k));
    }
    if (!iters.empty()) {
        std::sort(iters.begin(), iters.end());
        const auto n = iters.size();
        rep.median_iterations = n % 2 ? iters[n / 2] : 0.5 * (iters[n / 2 - 1] + iters[n / 2]);
    }
    return rep;
}

}  // namespace uwauth
