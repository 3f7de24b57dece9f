#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "uwauth/errors.hpp"

namespace uwauth::numeric {

inline double log_sum_exp(double a, double b) noexcept {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::abs(a - b)));
}

/// Root of a continuous f on [lo, hi] given f(lo) and f(hi) of opposite sign
/// (or zero). Secant (regula falsi, Illinois variant) steps are kept inside the
/// bracket; a bisection step is forced whenever the bracket fails to halve.
template <class F>
double solve_bracketed(F&& f, double lo, double hi, double xtol, int max_iter = 200) {
    double flo = f(lo);
    double fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0.0) == (fhi > 0.0)) throw NumericError("solve_bracketed: root not bracketed");
    int side = 0;
    double width = 2.0 * (hi - lo);
    for (int it = 0; it < max_iter; ++it) {
        if (hi - lo <= xtol) break;
        double x = (lo * fhi - hi * flo) / (fhi - flo);
        if (!(x > lo && x < hi) || (hi - lo) > 0.5 * width) {
            x = 0.5 * (lo + hi);
        }
        width = hi - lo;
        const double fx = f(x);
        if (fx == 0.0) return x;
        if ((fx > 0.0) == (flo > 0.0)) {
            lo = x;
            flo = fx;
            if (side == -1) fhi *= 0.5;
            side = -1;
        } else {
            hi = x;
            fhi = fx;
            if (side == 1) flo *= 0.5;
            side = 1;
        }
    }
    return std::abs(flo) < std::abs(fhi) ? lo : hi;
}

/// Safeguarded Newton iteration for a root in [lo, hi], where f is known to
/// change sign from negative to positive if `rising` and the other way round
/// otherwise. fdf(x) returns {f(x), f'(x)}. Steps that leave the bracket or
/// fail to shrink it fast enough fall back to bisection.
template <class FdF>
double newton_in_bracket(FdF&& fdf, double lo, double hi, double x0, double xtol, bool rising,
                         int max_iter = 100) {
    double x = (x0 > lo && x0 < hi) ? x0 : 0.5 * (lo + hi);
    double prev_step = hi - lo;
    for (int it = 0; it < max_iter; ++it) {
        const auto [f, df] = fdf(x);
        if (f == 0.0) return x;
        if ((f < 0.0) == rising) {
            lo = x;
        } else {
            hi = x;
        }
        double next = x - f / df;
        const double step = std::abs(next - x);
        if (!(next > lo && next < hi) || !std::isfinite(next) || step > 0.5 * prev_step) {
            next = 0.5 * (lo + hi);
        }
        prev_step = std::abs(next - x);
        x = next;
        if (prev_step <= xtol || hi - lo <= xtol) return x;
    }
    return x;
}

/// newton_in_bracket with the sign change checked at the ends.
template <class FdF>
double newton_bracketed(FdF&& fdf, double lo, double hi, double x0, double xtol, int max_iter = 100) {
    const double flo = fdf(lo).first;
    const double fhi = fdf(hi).first;
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0.0) == (fhi > 0.0)) throw NumericError("newton_bracketed: root not bracketed");
    return newton_in_bracket(fdf, lo, hi, x0, xtol, flo < 0.0, max_iter);
}

/// Bisection on a sign change, for when the caller needs a strict halving rate.
template <class F>
double bisect(F&& f, double lo, double hi, double xtol, int max_iter = 200) {
    double flo = f(lo);
    for (int it = 0; it < max_iter && hi - lo > xtol; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (fm == 0.0) return mid;
        if ((fm > 0.0) == (flo > 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
    int intervals = 0;
    bool converged = true;
};

namespace detail {

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
inline constexpr std::array<double, 8> kronrod_x{
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kronrod_w{
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> gauss_w{
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <class F>
std::pair<double, double> gk15(F& f, double a, double b) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const double fc = f(c);
    double kronrod = fc * kronrod_w[7];
    double gauss = fc * gauss_w[3];
    for (int j = 0; j < 7; ++j) {
        const double dx = h * kronrod_x[j];
        const double s = f(c - dx) + f(c + dx);
        kronrod += kronrod_w[j] * s;
        if (j % 2 == 1) gauss += gauss_w[j / 2] * s;
    }
    return {kronrod * h, std::abs((kronrod - gauss) * h)};
}

}  // namespace detail

/// Globally adaptive Gauss-Kronrod 7/15 quadrature of f over [a, b].
/// Bisects the interval with the largest error estimate until the summed
/// estimate falls below max(abs_tol, rel_tol * |I|).
template <class F>
QuadratureResult integrate(F&& f, double a, double b, double abs_tol, double rel_tol = 0.0,
                           int max_intervals = 2000) {
    struct Piece {
        double a, b, value, error;
    };
    QuadratureResult out;
    if (a == b) return out;
    std::vector<Piece> pieces;
    auto [v0, e0] = detail::gk15(f, a, b);
    pieces.push_back({a, b, v0, e0});
    double total = v0;
    double error = e0;
    while (error > std::max(abs_tol, rel_tol * std::abs(total))) {
        if (static_cast<int>(pieces.size()) >= max_intervals) {
            out.converged = false;
            break;
        }
        auto worst = std::max_element(pieces.begin(), pieces.end(),
                                      [](const Piece& l, const Piece& r) { return l.error < r.error; });
        const Piece p = *worst;
        const double mid = 0.5 * (p.a + p.b);
        if (!(mid > p.a && mid < p.b)) {
            out.converged = false;
            break;
        }
        auto [vl, el] = detail::gk15(f, p.a, mid);
        auto [vr, er] = detail::gk15(f, mid, p.b);
        *worst = {p.a, mid, vl, el};
        pieces.push_back({mid, p.b, vr, er});
        total = 0.0;
        error = 0.0;
        for (const auto& q : pieces) {
            total += q.value;
            error += q.error;
        }
    }
    out.value = total;
    out.error = error;
    out.intervals = static_cast<int>(pieces.size());
    return out;
}

}  // namespace uwauth::numeric
