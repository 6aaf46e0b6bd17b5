#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "gkdv/errors.hpp"

namespace gkdv {

/// Hi_γ(x) = (1/π) ∫_0^∞ σ^γ exp(-σ³/3 + σx) dσ
struct ScorerQuery {
    double gamma = 0.0;
    double x = 0.0;

    ScorerQuery() = default;
    ScorerQuery(double g, double xx) : gamma(g), x(xx) {
        if (!(g > -1.0)) throw DomainError("ScorerQuery: need gamma > -1");
        if (!std::isfinite(xx)) throw DomainError("ScorerQuery: x must be finite");
    }
};

/// Argument beyond which the asymptotic branch replaces quadrature.
inline constexpr double kScorerSwitch = 10.0;

/// log Hi_γ(x) by adaptive Gauss–Kronrod quadrature. For x > 0 the saddle
/// value exp((2/3)x^{3/2}) is factored out so the integrand stays O(1).
inline double scorer_log_quadrature(const ScorerQuery& q) {
    using boost::math::quadrature::gauss_kronrod;
    const double g = q.gamma, x = q.x;
    const double sstar = x > 0.0 ? std::sqrt(x) : 0.0;
    const double shift = x > 0.0 ? 2.0 / 3.0 * x * sstar : 0.0;
    auto phase = [&](double s) { return -s * s * s / 3.0 + s * x - shift; };

    // upper cut where the integrand is below e^{-60} of its peak
    double smax = sstar + 1.0;
    while (phase(smax) + g * std::log(smax) > -60.0) smax = sstar + 2.0 * (smax - sstar);

    // geometric breakpoints around the dominant region
    std::vector<double> pts{0.0};
    const double s0 = x < -1.0 ? 1.0 / (-x) : (sstar > 0.0 ? std::min(1.0, 0.5 * sstar) : 0.5);
    if (sstar > 2.0 * s0) {
        for (double s = s0; s < sstar; s *= 2.0) pts.push_back(s);
        pts.push_back(sstar);
    }
    double w = 1.0 / std::sqrt(2.0 * sstar + 1.0);
    for (double s = std::max(pts.back(), s0) + w; s < smax; s = pts.back() + w, w *= 2.0) pts.push_back(s);
    pts.push_back(smax);

    const bool subst = g < 0.0;
    const double e = 1.0 + g;
    double total = 0.0, err_total = 0.0;
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        double a = pts[k], b = pts[k + 1];
        if (!(b > a)) continue;
        double err = 0.0, val = 0.0;
        if (subst) {
            // σ = u^{1/(1+γ)} removes the σ^γ singularity at the origin
            auto f = [&](double u) {
                double s = std::pow(u, 1.0 / e);
                return std::exp(phase(s)) / e;
            };
            val = gauss_kronrod<double, 31>::integrate(f, std::pow(a, e), std::pow(b, e), 15, 1e-13, &err);
        } else {
            auto f = [&](double s) {
                double ls = g == 0.0 ? 0.0 : g * std::log(s);
                return s > 0.0 || g == 0.0 ? std::exp(ls + phase(s)) : 0.0;
            };
            if (k == 0 && g != std::floor(g)) {
                // algebraic endpoint behaviour σ^γ: double-exponential rule
                boost::math::quadrature::tanh_sinh<double> ts;
                double l1 = 0.0;
                val = ts.integrate(f, a, b, 1e-14, &err, &l1);
            } else {
                val = gauss_kronrod<double, 31>::integrate(f, a, b, 15, 1e-13, &err);
            }
        }
        total += val;
        err_total += err;
    }
    if (!(total > 0.0) || !std::isfinite(total) || err_total > 1e-9 * total)
        throw ConvergenceError("scorer quadrature did not converge");
    return std::log(total / std::numbers::pi) + shift;
}

/// Hi_γ(x) by quadrature. Throws if the value overflows a double.
inline double scorer_eval(const ScorerQuery& q) {
    double l = scorer_log_quadrature(q);
    if (l > 700.0) throw ConvergenceError("scorer_eval: x too large for the quadrature branch");
    return std::exp(l);
}

/// log of the leading asymptotic term π^{-1/2} x^{-1/4+γ/2} e^{(2/3)x^{3/2}}.
inline double scorer_asymptotic_log(const ScorerQuery& q) {
    if (!(q.x > 0.0)) throw DomainError("scorer_asymptotic: need x > 0");
    return -0.5 * std::log(std::numbers::pi) + (-0.25 + 0.5 * q.gamma) * std::log(q.x) +
           2.0 / 3.0 * std::pow(q.x, 1.5);
}

/// Leading asymptotic term (overflows to +inf for x ≳ 90).
inline double scorer_asymptotic(const ScorerQuery& q) { return std::exp(scorer_asymptotic_log(q)); }

/// Leading term times the first saddle correction 1 + (γ²/4 - γ/2 + 5/48) x^{-3/2}.
inline double scorer_asymptotic_corrected_log(const ScorerQuery& q) {
    const double g = q.gamma;
    const double c1 = 0.25 * g * g - 0.5 * g + 5.0 / 48.0;
    return scorer_asymptotic_log(q) + std::log1p(c1 * std::pow(q.x, -1.5));
}

/// log Hi_γ(x): quadrature up to the switch, corrected asymptotics beyond.
inline double scorer_log(double gamma, double x) {
    ScorerQuery q(gamma, x);
    return x <= kScorerSwitch ? scorer_log_quadrature(q) : scorer_asymptotic_corrected_log(q);
}

/// Hi_γ(b^{-2/3}(1 - b y)) / Hi_γ(b^{-2/3}), combined in log space.
inline double scorer_ratio(double gamma, double b, double y) {
    if (!(b > 0.0 && b < 1.0)) throw DomainError("scorer_ratio: need 0 < b < 1");
    if (!(y >= 0.0 && y <= 1.0 / b)) throw DomainError("scorer_ratio: need 0 <= y <= 1/b");
    if (y == 0.0) return 1.0;
    const double x0 = std::pow(b, -2.0 / 3.0);
    const double x1 = x0 * (1.0 - b * y);
    double lr = scorer_log(gamma, x1) - scorer_log(gamma, x0);
    double r = std::exp(lr);
    if (!std::isfinite(r)) throw ConvergenceError("scorer_ratio: overflow");
    return std::min(r, 1.0);
}

}  // namespace gkdv
