#pragma once

// Generalized-Gaussian (GG) primitives and the two-component, packet-grouped
// EM estimator used by every trusted node.
//
// A GG variable with parameters (mu, sigma, beta) has density
//   beta / (2 sigma Gamma(1/beta)) * exp(-(|x - mu| / sigma)^beta)
// and variance sigma^2 Gamma(3/beta) / Gamma(1/beta). sigma is a scale, not a
// standard deviation (for beta = 2 the standard deviation is sigma / sqrt 2).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/minima.hpp>

#include "uwauth/errors.hpp"
#include "uwauth/numeric.hpp"
#include "uwauth/random.hpp"

namespace uwauth {

inline constexpr double beta_min = 0.3;
inline constexpr double beta_max = 10.0;

struct GGParams {
    double mu = 0.0;
    double sigma = 1.0;
    double beta = 2.0;

    friend bool operator==(const GGParams&, const GGParams&) = default;
};

inline bool is_valid(const GGParams& p) noexcept {
    return std::isfinite(p.mu) && std::isfinite(p.sigma) && p.sigma > 0.0 && p.beta >= beta_min &&
           p.beta <= beta_max;
}

inline void validate(const GGParams& p) {
    if (!is_valid(p)) {
        throw ParameterDomainError("invalid GG parameters (mu=" + std::to_string(p.mu) +
                                   ", sigma=" + std::to_string(p.sigma) +
                                   ", beta=" + std::to_string(p.beta) + ")");
    }
}

inline double log_gamma(double x) { return boost::math::lgamma(x); }

/// log(beta / (2 sigma Gamma(1/beta))), the log of the peak density.
inline double gg_log_norm(const GGParams& p) {
    return std::log(p.beta) - std::log(2.0 * p.sigma) - log_gamma(1.0 / p.beta);
}

inline double gg_log_pdf(double x, const GGParams& p) {
    validate(p);
    return gg_log_norm(p) - std::pow(std::abs(x - p.mu) / p.sigma, p.beta);
}

inline double gg_pdf(double x, const GGParams& p) { return std::exp(gg_log_pdf(x, p)); }

inline double gg_variance(const GGParams& p) {
    return p.sigma * p.sigma * std::exp(log_gamma(3.0 / p.beta) - log_gamma(1.0 / p.beta));
}

inline double gg_stddev(const GGParams& p) { return std::sqrt(gg_variance(p)); }

/// Excess kurtosis Gamma(5/b) Gamma(1/b) / Gamma(3/b)^2 - 3; strictly decreasing in b.
inline double gg_excess_kurtosis(double beta) {
    return std::exp(log_gamma(5.0 / beta) + log_gamma(1.0 / beta) - 2.0 * log_gamma(3.0 / beta)) - 3.0;
}

/// Inverts gg_excess_kurtosis by bisection, clamping to [beta_min, beta_max].
inline double shape_from_excess_kurtosis(double excess) {
    if (!std::isfinite(excess)) throw DegenerateSampleError("non-finite kurtosis");
    if (excess >= gg_excess_kurtosis(beta_min)) return beta_min;
    if (excess <= gg_excess_kurtosis(beta_max)) return beta_max;
    return numeric::bisect([excess](double b) { return gg_excess_kurtosis(b) - excess; }, beta_min,
                           beta_max, 1e-13);
}

/// P(X <= x). Uses |X - mu|/sigma)^beta ~ Gamma(1/beta, 1).
inline double gg_cdf(double x, const GGParams& p) {
    const double z = std::abs(x - p.mu) / p.sigma;
    const double half = 0.5 * boost::math::gamma_p(1.0 / p.beta, std::pow(z, p.beta));
    return x < p.mu ? 0.5 - half : 0.5 + half;
}

inline double gg_quantile(double u, const GGParams& p) {
    if (u <= 0.0) return -std::numeric_limits<double>::infinity();
    if (u >= 1.0) return std::numeric_limits<double>::infinity();
    const double c = std::abs(2.0 * u - 1.0);
    if (c == 0.0) return p.mu;
    const double g = boost::math::gamma_p_inv(1.0 / p.beta, c);
    const double r = p.sigma * std::pow(g, 1.0 / p.beta);
    return u < 0.5 ? p.mu - r : p.mu + r;
}

/// Half-width w such that P(|X - mu| > w) = tail_mass.
inline double gg_support_halfwidth(const GGParams& p, double tail_mass) {
    const double g = boost::math::gamma_q_inv(1.0 / p.beta, tail_mass);
    return p.sigma * std::pow(g, 1.0 / p.beta);
}

inline double sample_gg(const GGParams& p, Rng& rng) {
    const double g = rng.gamma(1.0 / p.beta);
    const double r = p.sigma * std::pow(g, 1.0 / p.beta);
    return (rng.uniform() < 0.5) ? p.mu - r : p.mu + r;
}

inline std::vector<double> sample_gg(const GGParams& p, std::size_t n, Rng& rng) {
    std::vector<double> out(n);
    for (auto& v : out) v = sample_gg(p, rng);
    return out;
}

/// Moment-matching estimate: mean, variance identity, and the excess-kurtosis
/// equation solved for the shape.
inline GGParams moment_init(std::span<const double> samples) {
    if (samples.size() < 8) throw DegenerateSampleError("moment_init needs at least 8 samples");
    const double n = static_cast<double>(samples.size());
    const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
    double m2 = 0.0, m4 = 0.0;
    for (double x : samples) {
        const double d = (x - mean) * (x - mean);
        m2 += d;
        m4 += d * d;
    }
    m2 /= n;
    m4 /= n;
    if (!(m2 > 0.0)) throw DegenerateSampleError("moment_init: zero sample variance");
    const double beta = shape_from_excess_kurtosis(m4 / (m2 * m2) - 3.0);
    const double sigma = std::sqrt(m2 * std::exp(log_gamma(1.0 / beta) - log_gamma(3.0 / beta)));
    return {mean, sigma, beta};
}

struct TwoClusters {
    std::vector<std::size_t> first;   // indices of the smaller-centroid cluster
    std::vector<std::size_t> second;
    double first_centroid = 0.0;
    double second_centroid = 0.0;
};

/// 1-D k-means with k = 2: k-means++ seeding then Lloyd iterations.
inline TwoClusters kmeans_two(std::span<const double> samples, std::uint64_t seed) {
    if (samples.empty()) throw DegenerateSampleError("kmeans_two: no samples");
    const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
    if (*mn == *mx) throw DegenerateSampleError("kmeans_two: all samples identical");

    Rng rng(seed);
    double c0 = samples[rng.index(samples.size())];
    // Second seed drawn proportionally to squared distance from the first.
    double total = 0.0;
    for (double x : samples) total += (x - c0) * (x - c0);
    double target = rng.uniform() * total;
    double c1 = c0;
    for (double x : samples) {
        target -= (x - c0) * (x - c0);
        if (target < 0.0 && x != c0) {
            c1 = x;
            break;
        }
    }
    if (c1 == c0) c1 = (c0 == *mx) ? *mn : *mx;

    std::vector<unsigned char> label(samples.size(), 0);
    for (int it = 0; it < 200; ++it) {
        bool changed = (it == 0);
        double s0 = 0.0, s1 = 0.0;
        std::size_t n0 = 0, n1 = 0;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const unsigned char l = std::abs(samples[i] - c1) < std::abs(samples[i] - c0) ? 1 : 0;
            if (l != label[i]) changed = true;
            label[i] = l;
            if (l) {
                s1 += samples[i];
                ++n1;
            } else {
                s0 += samples[i];
                ++n0;
            }
        }
        if (n0 == 0 || n1 == 0) {
            // Empty cluster: reseed at the extremes.
            c0 = *mn;
            c1 = *mx;
            continue;
        }
        c0 = s0 / static_cast<double>(n0);
        c1 = s1 / static_cast<double>(n1);
        if (!changed) break;
    }

    TwoClusters out;
    const bool swap = c1 < c0;
    out.first_centroid = swap ? c1 : c0;
    out.second_centroid = swap ? c0 : c1;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const bool in_first = (label[i] == 0) != swap;
        (in_first ? out.first : out.second).push_back(i);
    }
    return out;
}

struct PacketSamples {
    std::uint64_t packet_id = 0;
    std::vector<double> values;
};

struct HypothesisParams {
    GGParams omega;
    double k = 0.5;
};

using MixtureParams = std::array<HypothesisParams, 2>;

struct EmConfig {
    double tolerance = 1e-6;     // relative log-likelihood change
    int max_iterations = 100;
    double mass_floor = 1e-3;    // per packet; total floor is mass_floor * packets
};

struct MixtureEstimate {
    MixtureParams components;
    std::vector<std::uint64_t> packet_ids;
    std::vector<double> posteriors;  // P(y = 0 | packet), aligned with packet_ids
    std::vector<double> log_likelihood_trace;
    int iterations = 0;

    double posterior(std::uint64_t packet_id) const {
        for (std::size_t i = 0; i < packet_ids.size(); ++i) {
            if (packet_ids[i] == packet_id) return posteriors[i];
        }
        throw std::out_of_range("no posterior for packet " + std::to_string(packet_id));
    }
};

/// Sum of log densities of one packet's samples.
inline double packet_log_likelihood(std::span<const double> values, const GGParams& p) {
    validate(p);
    const double norm = gg_log_norm(p);
    double acc = 0.0;
    for (double x : values) acc -= std::pow(std::abs(x - p.mu) / p.sigma, p.beta);
    return acc + norm * static_cast<double>(values.size());
}

inline void validate(const MixtureParams& m) {
    for (const auto& c : m) {
        validate(c.omega);
        if (!(c.k >= 0.0 && c.k <= 1.0)) throw ParameterDomainError("mixture prior outside [0, 1]");
    }
    if (std::abs(m[0].k + m[1].k - 1.0) > 1e-9) throw ParameterDomainError("mixture priors must sum to 1");
}

namespace detail {

inline double log_or_ninf(double k) {
    return k > 0.0 ? std::log(k) : -std::numeric_limits<double>::infinity();
}

/// Posterior of component 0 from per-component packet log-likelihoods.
inline double posterior0(double ll0, double ll1, double k0, double k1) {
    const double a0 = log_or_ninf(k0) + ll0;
    const double a1 = log_or_ninf(k1) + ll1;
    if (a1 == -std::numeric_limits<double>::infinity()) return 1.0;
    if (a0 == -std::numeric_limits<double>::infinity()) return 0.0;
    return 1.0 / (1.0 + std::exp(a1 - a0));
}

}  // namespace detail

/// P(y = 0 | packet, mixture), evaluated in the log domain.
inline double packet_posterior(const PacketSamples& packet, const MixtureParams& mixture) {
    if (packet.values.empty()) throw DegenerateSampleError("packet_posterior: empty packet");
    validate(mixture);
    return detail::posterior0(packet_log_likelihood(packet.values, mixture[0].omega),
                              packet_log_likelihood(packet.values, mixture[1].omega), mixture[0].k,
                              mixture[1].k);
}

/// Moment estimate that tolerates tiny or constant groups by falling back to
/// a Gaussian shape with a floored scale.
inline GGParams robust_moment_init(std::span<const double> samples, double scale_floor) {
    if (samples.size() >= 8) {
        try {
            GGParams p = moment_init(samples);
            p.sigma = std::max(p.sigma, scale_floor);
            return p;
        } catch (const DegenerateSampleError&) {
        }
    }
    const double n = static_cast<double>(samples.size());
    const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
    double var = 0.0;
    for (double x : samples) var += (x - mean) * (x - mean);
    var /= n;
    return {mean, std::max(std::sqrt(2.0 * var), scale_floor), 2.0};
}

inline double history_spread(std::span<const PacketSamples> history) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& p : history) {
        for (double x : p.values) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
    }
    return hi > lo ? hi - lo : 1.0;
}

/// EM initialization. Attempt 0 clusters the pooled samples with k-means;
/// later attempts alternate between sample-level and packet-mean clustering,
/// each with a fresh seed.
inline MixtureParams kmeans_init(std::span<const PacketSamples> history, std::uint64_t seed,
                                 int attempt = 0) {
    if (history.empty()) throw DegenerateSampleError("kmeans_init: empty history");
    const double floor = 1e-6 * history_spread(history);
    std::vector<double> pooled;
    for (const auto& p : history) pooled.insert(pooled.end(), p.values.begin(), p.values.end());

    std::vector<double> g0, g1;
    if (attempt % 2 == 1 && history.size() >= 2) {
        std::vector<double> means;
        for (const auto& p : history) {
            means.push_back(std::accumulate(p.values.begin(), p.values.end(), 0.0) /
                            static_cast<double>(p.values.size()));
        }
        const auto cl = kmeans_two(means, derive_seed(seed, {static_cast<std::uint64_t>(attempt)}));
        for (auto i : cl.first) g0.insert(g0.end(), history[i].values.begin(), history[i].values.end());
        for (auto i : cl.second) g1.insert(g1.end(), history[i].values.begin(), history[i].values.end());
    } else {
        const auto cl = kmeans_two(pooled, derive_seed(seed, {static_cast<std::uint64_t>(attempt)}));
        for (auto i : cl.first) g0.push_back(pooled[i]);
        for (auto i : cl.second) g1.push_back(pooled[i]);
    }
    const double total = static_cast<double>(g0.size() + g1.size());
    MixtureParams m;
    m[0] = {robust_moment_init(g0, floor), static_cast<double>(g0.size()) / total};
    m[1] = {robust_moment_init(g1, floor), 1.0 - m[0].k};
    for (auto& c : m) c.omega.beta = std::clamp(c.omega.beta, beta_min, beta_max);
    return m;
}

namespace detail {

struct WeightedSet {
    std::vector<double> x;
    std::vector<double> w;
    double weight = 0.0;  // sum of sample weights
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
};

inline double weighted_objective(const WeightedSet& s, const GGParams& p) {
    double acc = 0.0;
    for (std::size_t j = 0; j < s.x.size(); ++j) {
        acc += s.w[j] * std::pow(std::abs(s.x[j] - p.mu) / p.sigma, p.beta);
    }
    return s.weight * gg_log_norm(p) - acc;
}

// Location step: root of sum w (x - mu) |x - mu|^(beta - 2) over [lo, hi].
// Points within 1e-12 sigma of mu contribute nothing (removable singularity
// for beta < 1).
inline double solve_location(const WeightedSet& s, const GGParams& p) {
    if (p.beta == 2.0) {
        double num = 0.0;
        for (std::size_t j = 0; j < s.x.size(); ++j) num += s.w[j] * s.x[j];
        return num / s.weight;
    }
    const double eps = 1e-12 * p.sigma;
    const double e = p.beta - 1.0;
    auto score = [&](double mu) {
        double acc = 0.0, slope = 0.0;
        for (std::size_t j = 0; j < s.x.size(); ++j) {
            const double d = s.x[j] - mu;
            const double a = std::abs(d);
            if (a <= eps) continue;
            const double t = s.w[j] * std::pow(a, e);
            acc += d > 0.0 ? t : -t;
            slope -= e * t / a;
        }
        return std::pair{acc, slope};
    };
    if (!(s.hi > s.lo)) return s.lo;
    // The score is non-negative at the smallest sample and non-positive at
    // the largest.
    return numeric::newton_in_bracket(score, s.lo, s.hi, p.mu, 1e-9 * p.sigma, false);
}

// Scale step: the scale score has the unique root
// sigma^beta = beta * sum w |x - mu|^beta / sum w.
inline double solve_scale(const WeightedSet& s, const GGParams& p, double floor) {
    double acc = 0.0;
    for (std::size_t j = 0; j < s.x.size(); ++j) acc += s.w[j] * std::pow(std::abs(s.x[j] - p.mu), p.beta);
    const double sig = std::pow(p.beta * acc / s.weight, 1.0 / p.beta);
    return std::isfinite(sig) ? std::max(sig, floor) : floor;
}

// Shape and scale step: for a fixed shape the scale has the closed form
// above, so the weighted log-likelihood reduces to a function of beta alone,
//   W (log beta - log 2 - log sigma(beta) - lgamma(1/beta) - 1/beta),
// which is maximized over [beta_min, beta_max] with Brent's method.
inline GGParams solve_shape_scale(const WeightedSet& s, const GGParams& p, double floor) {
    std::vector<double> lz;
    std::vector<double> wz;
    lz.reserve(s.x.size());
    wz.reserve(s.x.size());
    for (std::size_t j = 0; j < s.x.size(); ++j) {
        const double a = std::abs(s.x[j] - p.mu);
        if (a > 0.0) {
            lz.push_back(std::log(a));
            wz.push_back(s.w[j]);
        }
    }
    if (lz.empty()) return {p.mu, floor, p.beta};
    const double top = *std::max_element(lz.begin(), lz.end());
    const double log_w = std::log(s.weight);
    // log sigma(beta), with the sum scaled by the largest deviation.
    auto log_sigma = [&](double b) {
        double acc = 0.0;
        for (std::size_t j = 0; j < lz.size(); ++j) acc += wz[j] * std::exp(b * (lz[j] - top));
        return top + (std::log(b) - log_w + std::log(acc)) / b;
    };
    auto neg_profile = [&](double b) {
        return -(std::log(b) - log_sigma(b) - log_gamma(1.0 / b) - 1.0 / b);
    };
    const auto [b, value] = boost::math::tools::brent_find_minima(neg_profile, beta_min, beta_max, 30);
    (void)value;
    return {p.mu, std::max(std::exp(log_sigma(b)), floor), b};
}

/// One guarded M-step for component m: location, scale, then shape with
/// its matching scale; each kept only if it does not lower the weighted
/// log-likelihood.
inline GGParams m_step(std::span<const PacketSamples> history, std::span<const double> posteriors, int m,
                       GGParams cur, double floor) {
    constexpr double weight_cut = 1e-15;
    std::vector<std::pair<double, double>> pts;
    for (std::size_t f = 0; f < history.size(); ++f) {
        const double w = m == 0 ? posteriors[f] : 1.0 - posteriors[f];
        if (w < weight_cut) continue;
        for (double x : history[f].values) pts.emplace_back(x, w);
    }
    if (pts.empty()) return cur;
    // Repeated values (integer features) are merged into one weighted point.
    std::sort(pts.begin(), pts.end());
    WeightedSet set;
    for (const auto& [x, w] : pts) {
        if (!set.x.empty() && set.x.back() == x) {
            set.w.back() += w;
        } else {
            set.x.push_back(x);
            set.w.push_back(w);
        }
        set.weight += w;
    }
    set.lo = set.x.front();
    set.hi = set.x.back();
    double q = weighted_objective(set, cur);
    auto try_update = [&](GGParams cand) {
        if (!is_valid(cand)) return;
        const double qc = weighted_objective(set, cand);
        if (qc >= q) {
            cur = cand;
            q = qc;
        }
    };
    GGParams cand = cur;
    cand.mu = solve_location(set, cur);
    try_update(cand);
    cand = cur;
    cand.sigma = solve_scale(set, cur, floor);
    try_update(cand);
    try_update(solve_shape_scale(set, cur, floor));
    return cur;
}

}  // namespace detail

/// Two-component EM with packet-level labels: every sample of a packet shares
/// one hypothesis. The M-step updates location, scale and shape in turn; each
/// update is kept only if it does not lower the weighted log-likelihood, so
/// the trace is non-decreasing.
///
/// Throws ComponentCollapseError when a component's responsibility mass drops
/// below config.mass_floor * history.size().
inline MixtureEstimate em_fit(std::span<const PacketSamples> history, const MixtureParams& init,
                              const EmConfig& config = {}) {
    if (history.empty()) throw DegenerateSampleError("em_fit: empty history");
    for (const auto& p : history) {
        if (p.values.empty()) throw DegenerateSampleError("em_fit: empty packet " + std::to_string(p.packet_id));
    }
    validate(init);

    const std::size_t F = history.size();
    const double floor = 1e-6 * history_spread(history);
    const double mass_floor = config.mass_floor * static_cast<double>(F);

    MixtureEstimate est;
    est.components = init;
    est.packet_ids.reserve(F);
    for (const auto& p : history) est.packet_ids.push_back(p.packet_id);
    est.posteriors.assign(F, 0.5);

    std::vector<double> ll0(F), ll1(F);
    for (int iter = 0;; ++iter) {
        auto& c = est.components;
        // E-step
        double loglik = 0.0;
        double mass0 = 0.0;
        for (std::size_t f = 0; f < F; ++f) {
            ll0[f] = packet_log_likelihood(history[f].values, c[0].omega);
            ll1[f] = packet_log_likelihood(history[f].values, c[1].omega);
            const double a0 = detail::log_or_ninf(c[0].k) + ll0[f];
            const double a1 = detail::log_or_ninf(c[1].k) + ll1[f];
            loglik += numeric::log_sum_exp(a0, a1);
            est.posteriors[f] = detail::posterior0(ll0[f], ll1[f], c[0].k, c[1].k);
            mass0 += est.posteriors[f];
        }
        const double mass1 = static_cast<double>(F) - mass0;
        est.log_likelihood_trace.push_back(loglik);
        if (mass0 < mass_floor) throw ComponentCollapseError(0, mass0);
        if (mass1 < mass_floor) throw ComponentCollapseError(1, mass1);

        const auto& trace = est.log_likelihood_trace;
        if (trace.size() >= 2) {
            const double prev = trace[trace.size() - 2];
            if (std::abs(loglik - prev) <= config.tolerance * std::max(1.0, std::abs(prev))) break;
        }
        if (iter >= config.max_iterations) break;

        // M-step
        c[0].k = mass0 / static_cast<double>(F);
        c[1].k = 1.0 - c[0].k;
        for (int m = 0; m < 2; ++m) c[m].omega = detail::m_step(history, est.posteriors, m, c[m].omega, floor);
        ++est.iterations;
    }
    return est;
}

}  // namespace uwauth
