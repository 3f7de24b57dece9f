#pragma once

// KL divergences between GG laws, the FA/MD bound they imply, Chernoff-Stein
// exponents, empirical ROC curves and threshold selection.
//
// Orientation used throughout: a packet is declared authentic iff psi >= lambda.
// FA is the fraction of authentic packets declared fake, TP the fraction of
// attacker packets declared fake.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "uwauth/errors.hpp"
#include "uwauth/ggmix.hpp"
#include "uwauth/numeric.hpp"

namespace uwauth {

struct KlOptions {
    double tail_mass = 1e-10;
    double abs_tol = 1e-8;
    int max_intervals = 4000;
};

/// KL(p0 || p1) in nats by adaptive Gauss-Kronrod quadrature, split at both
/// means, over the central 1 - tail_mass of p0's mass, then extended outward
/// while the tails still contribute.
inline double kl_gg_numeric(const GGParams& w0, const GGParams& w1, const KlOptions& opt = {}) {
    validate(w0);
    validate(w1);
    if (w0 == w1) return 0.0;
    const double norm0 = gg_log_norm(w0);
    const double norm1 = gg_log_norm(w1);
    auto integrand = [&](double x) {
        const double e0 = std::pow(std::abs(x - w0.mu) / w0.sigma, w0.beta);
        const double e1 = std::pow(std::abs(x - w1.mu) / w1.sigma, w1.beta);
        const double lp0 = norm0 - e0;
        if (lp0 < -745.0) return 0.0;
        return std::exp(lp0) * (norm0 - e0 - norm1 + e1);
    };

    const double half = gg_support_halfwidth(w0, opt.tail_mass);
    double lo = w0.mu - half;
    double hi = w0.mu + half;
    std::vector<double> cuts{lo, w0.mu, hi};
    if (w1.mu > lo && w1.mu < hi && w1.mu != w0.mu) cuts.push_back(w1.mu);
    std::sort(cuts.begin(), cuts.end());

    double total = 0.0;
    const double seg_tol = opt.abs_tol / 8.0;
    auto add = [&](double a, double b) {
        const auto r = numeric::integrate(integrand, a, b, seg_tol, 0.0, opt.max_intervals);
        if (!r.converged) {
            throw NumericError("kl_gg_numeric: quadrature did not converge on [" + std::to_string(a) + ", " +
                               std::to_string(b) + "], error estimate " + std::to_string(r.error));
        }
        total += r.value;
        return r.value;
    };
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) add(cuts[k], cuts[k + 1]);

    // Tails: keep doubling outward while a segment still matters.
    for (int side = -1; side <= 1; side += 2) {
        double inner = side < 0 ? lo : hi;
        double width = half;
        for (int k = 0; k < 60; ++k) {
            const double outer = inner + side * width;
            const double v = side < 0 ? add(outer, inner) : add(inner, outer);
            if (std::abs(v) < seg_tol * 1e-2) break;
            inner = outer;
            width *= 2.0;
        }
    }
    return std::max(total, 0.0);
}

/// Closed-form KL between the Gaussians implied by two GG laws with shape 2
/// (standard deviation sigma / sqrt 2).
inline double kl_gaussian_closed(const GGParams& w0, const GGParams& w1) {
    validate(w0);
    validate(w1);
    if (w0.beta != 2.0 || w1.beta != 2.0) throw ParameterDomainError("kl_gaussian_closed needs beta = 2 for both laws");
    const double s0 = w0.sigma / std::sqrt(2.0);
    const double s1 = w1.sigma / std::sqrt(2.0);
    const double d = w0.mu - w1.mu;
    return std::log(s1 / s0) + (s0 * s0 + d * d) / (2.0 * s1 * s1) - 0.5;
}

/// Closed-form KL for two GG laws sharing the same mean.
inline double kl_equal_mean_closed(const GGParams& w0, const GGParams& w1) {
    validate(w0);
    validate(w1);
    if (w0.mu != w1.mu) throw ParameterDomainError("kl_equal_mean_closed needs equal means");
    const double b0 = w0.beta, b1 = w1.beta;
    const double lead = std::log(b0 * w1.sigma / (b1 * w0.sigma)) + log_gamma(1.0 / b1) - log_gamma(1.0 / b0);
    const double ratio = std::exp(log_gamma((b1 + 1.0) / b0) - log_gamma(1.0 / b0) + b1 * std::log(w0.sigma / w1.sigma));
    return lead + ratio - 1.0 / b0;
}

/// The equal-mean expression with Gamma(beta1 / beta0) in the last term, as
/// it appears in print. Kept only so reports can show how far it is from the
/// exact value; it is not a divergence in general.
inline double kl_equal_mean_printed(const GGParams& w0, const GGParams& w1) {
    validate(w0);
    validate(w1);
    if (w0.mu != w1.mu) throw ParameterDomainError("kl_equal_mean_printed needs equal means");
    const double b0 = w0.beta, b1 = w1.beta;
    const double lead = std::log(b0 * w1.sigma / (b1 * w0.sigma)) + log_gamma(1.0 / b1) - log_gamma(1.0 / b0);
    const double ratio = std::exp(log_gamma(b1 / b0) - log_gamma(1.0 / b0) + b1 * std::log(w0.sigma / w1.sigma));
    return lead + ratio - 1.0 / b0;
}

namespace detail {

inline double xlogy_ratio(double a, double b) {
    if (a == 0.0) return 0.0;
    if (b == 0.0) return std::numeric_limits<double>::infinity();
    return a * std::log(a / b);
}

}  // namespace detail

/// f(P_MD, P_FA) = P_MD log(P_MD / (1 - P_FA)) + (1 - P_MD) log((1 - P_MD) / P_FA),
/// the binary divergence between the detection and false-alarm rates.
inline double fa_md_divergence(double p_md, double p_fa) {
    return detail::xlogy_ratio(p_md, 1.0 - p_fa) + detail::xlogy_ratio(1.0 - p_md, p_fa);
}

struct BoundPoint {
    double p_fa = 0.0;
    double p_tp = 0.0;
};

struct BoundCurve {
    double kl = 0.0;
    std::vector<BoundPoint> points;
};

/// Largest TP = 1 - P_MD with f(P_MD, P_FA) <= kl.
inline double max_tp_for(double kl, double p_fa) {
    if (!(kl >= 0.0)) throw ParameterDomainError("kl must be non-negative");
    if (!(p_fa >= 0.0 && p_fa <= 1.0)) throw ParameterDomainError("p_fa must be in [0, 1]");
    if (p_fa >= 1.0) return 1.0;
    if (p_fa <= 0.0) return 0.0;
    if (fa_md_divergence(0.0, p_fa) <= kl) return 1.0;
    // On TP in [p_fa, 1] the divergence rises from 0 to -log(p_fa).
    double lo = p_fa, hi = 1.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (fa_md_divergence(1.0 - mid, p_fa) <= kl) lo = mid;
        else hi = mid;
    }
    return lo;
}

inline BoundCurve fa_md_bound(double kl, std::span<const double> fa_grid) {
    BoundCurve c{kl, {}};
    c.points.reserve(fa_grid.size());
    for (double fa : fa_grid) c.points.push_back({fa, max_tp_for(kl, fa)});
    return c;
}

/// (law under H0, law under H1) for one (feature, node).
using LawPair = std::pair<GGParams, GGParams>;

inline double total_divergence(std::span<const LawPair> pairs, std::size_t samples_per_packet,
                               const KlOptions& opt = {}) {
    if (pairs.empty()) throw ParameterDomainError("total_divergence needs at least one pair");
    double sum = 0.0;
    for (const auto& [a, b] : pairs) sum += kl_gg_numeric(a, b, opt);
    return static_cast<double>(samples_per_packet) * sum;
}

struct ChernoffExponents {
    double association = 0.0;  // per-sample exponent of the association error
    double sign_error = 0.0;   // per-sample exponent of the sign-correction error
    double p_es = 0.0;         // probability that at least one node's sign is wrong
};

inline double sign_error_probability(std::span<const double> pi) {
    double keep = 1.0;
    for (double p : pi) {
        if (!(p >= 0.0 && p <= 1.0)) throw ParameterDomainError("per-node error probabilities must be in [0, 1]");
        keep *= 1.0 - p;
    }
    return 1.0 - keep;
}

/// `per_node[n]` holds node n's per-feature law pairs; `pi[n]` its sign-error
/// probability (may be empty).
inline ChernoffExponents chernoff_exponents(const std::vector<std::vector<LawPair>>& per_node,
                                            std::span<const double> pi = {}, const KlOptions& opt = {}) {
    if (per_node.empty()) throw ParameterDomainError("chernoff_exponents needs at least one node");
    ChernoffExponents out;
    out.sign_error = std::numeric_limits<double>::infinity();
    for (const auto& node : per_node) {
        if (node.empty()) throw ParameterDomainError("chernoff_exponents needs at least one feature per node");
        double sum = 0.0;
        for (const auto& [a, b] : node) sum += kl_gg_numeric(a, b, opt);
        out.association += sum;
        out.sign_error = std::min(out.sign_error, sum);
    }
    out.p_es = sign_error_probability(pi);
    return out;
}

enum class Verdict { authentic, fake };

inline const char* to_string(Verdict v) { return v == Verdict::authentic ? "authentic" : "fake"; }

inline Verdict decide(double psi, double lambda) { return psi >= lambda ? Verdict::authentic : Verdict::fake; }

struct Score {
    double psi = 0.0;
    bool authentic = true;  // ground truth
};

struct RocPoint {
    double lambda = 0.0;
    double p_fa = 0.0;
    double p_tp = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points;  // sorted by lambda
};

/// Midpoints between consecutive distinct scores plus the two infinite sentinels.
inline std::vector<double> midpoint_grid(std::span<const Score> scores) {
    std::vector<double> v;
    v.reserve(scores.size());
    for (const auto& s : scores) v.push_back(s.psi);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    std::vector<double> grid;
    grid.reserve(v.size() + 1);
    grid.push_back(-std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i + 1 < v.size(); ++i) grid.push_back(v[i] + 0.5 * (v[i + 1] - v[i]));
    grid.push_back(std::numeric_limits<double>::infinity());
    return grid;
}

inline RocCurve roc_from_scores(std::span<const Score> scores, std::vector<double> grid = {}) {
    std::vector<double> authentic, fake;
    for (const auto& s : scores) (s.authentic ? authentic : fake).push_back(s.psi);
    if (authentic.empty() || fake.empty()) throw DegenerateSampleError("ROC needs both authentic and attacker scores");
    if (grid.empty()) grid = midpoint_grid(scores);
    std::sort(grid.begin(), grid.end());
    std::sort(authentic.begin(), authentic.end());
    std::sort(fake.begin(), fake.end());
    RocCurve c;
    c.points.reserve(grid.size());
    for (double lambda : grid) {
        // Declared fake iff psi < lambda.
        const auto fa = std::lower_bound(authentic.begin(), authentic.end(), lambda) - authentic.begin();
        const auto tp = std::lower_bound(fake.begin(), fake.end(), lambda) - fake.begin();
        c.points.push_back({lambda, static_cast<double>(fa) / static_cast<double>(authentic.size()),
                            static_cast<double>(tp) / static_cast<double>(fake.size())});
    }
    return c;
}

/// Interpolated TP of the empirical curve at a given FA (upper envelope of
/// the points with p_fa <= fa).
inline double roc_tp_at(const RocCurve& c, double fa) {
    double best = 0.0;
    for (const auto& p : c.points)
        if (p.p_fa <= fa + 1e-15) best = std::max(best, p.p_tp);
    return best;
}

/// Curve point nearest to (target_fa, target_tp); ties go to the smaller FA,
/// then the smaller lambda.
inline double select_threshold_knee(const RocCurve& c, double target_fa = 0.1, double target_tp = 0.98) {
    if (c.points.empty()) throw DegenerateSampleError("knee selection needs a non-empty ROC");
    const RocPoint* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& p : c.points) {
        const double d = std::hypot(p.p_fa - target_fa, p.p_tp - target_tp);
        if (!best || d < best_d || (d == best_d && p.p_fa < best->p_fa)) {
            best = &p;
            best_d = d;
        }
    }
    return best->lambda;
}

struct TrainedThreshold {
    double lambda = 0.0;
    double training_accuracy = 0.0;
};

inline double accuracy_at(std::span<const Score> scores, double lambda) {
    if (scores.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& s : scores) correct += (decide(s.psi, lambda) == Verdict::authentic) == s.authentic;
    return static_cast<double>(correct) / static_cast<double>(scores.size());
}

/// Exhaustive scan for the training-accuracy-maximizing threshold. Ties go to
/// the candidate farthest from the nearer class mean. The result is then
/// moved up to just above the largest training score still declared fake,
/// so the boundary sits at the edge of the attacker class.
inline TrainedThreshold select_threshold_trained(std::span<const Score> scores) {
    double sum_a = 0.0, sum_f = 0.0;
    std::size_t n_a = 0, n_f = 0;
    for (const auto& s : scores) {
        if (s.authentic) {
            sum_a += s.psi;
            ++n_a;
        } else {
            sum_f += s.psi;
            ++n_f;
        }
    }
    if (n_a == 0 || n_f == 0) throw DegenerateSampleError("threshold training needs both classes");
    const double mean_a = sum_a / static_cast<double>(n_a);
    const double mean_f = sum_f / static_cast<double>(n_f);

    std::vector<Score> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end(), [](const Score& a, const Score& b) { return a.psi < b.psi; });
    // Running counts: below the candidate, fakes are correct; at or above, authentics are.
    std::size_t correct_below_f = 0, authentic_below = 0;
    double best_acc = -1.0, best_margin = -1.0, best_lambda = -std::numeric_limits<double>::infinity();
    auto consider = [&](double lambda) {
        const double acc = static_cast<double>(correct_below_f + (n_a - authentic_below)) /
                           static_cast<double>(scores.size());
        const double margin = std::isfinite(lambda) ? std::min(std::abs(lambda - mean_a), std::abs(lambda - mean_f))
                                                    : -std::numeric_limits<double>::infinity();
        if (acc > best_acc + 1e-15 || (std::abs(acc - best_acc) <= 1e-15 && margin > best_margin)) {
            best_acc = acc;
            best_margin = margin;
            best_lambda = lambda;
        }
    };
    consider(-std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j].psi == sorted[i].psi) {
            if (sorted[j].authentic) ++authentic_below;
            else ++correct_below_f;
            ++j;
        }
        if (j < sorted.size()) {
            consider(sorted[i].psi + 0.5 * (sorted[j].psi - sorted[i].psi));
        } else {
            consider(std::numeric_limits<double>::infinity());
        }
        i = j;
    }

    double lambda = best_lambda;
    double highest_fake = -std::numeric_limits<double>::infinity();
    for (const auto& s : scores)
        if (decide(s.psi, lambda) == Verdict::fake) highest_fake = std::max(highest_fake, s.psi);
    if (std::isfinite(highest_fake)) lambda = std::nextafter(highest_fake, std::numeric_limits<double>::infinity());
    return {lambda, accuracy_at(scores, lambda)};
}

}  // namespace uwauth
