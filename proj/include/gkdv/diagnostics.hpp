#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "gkdv/localized.hpp"
#include "gkdv/smooth.hpp"

namespace gkdv {

/// Weight functions and their B-scaled versions. All plateaus are exact.
class WeightSet {
public:
    WeightSet() = default;

    WeightSet(double kappa, double b_c) : kappa_(kappa), b_c_(b_c) {
        if (!(kappa > 0.0 && kappa < 0.5)) throw DomainError("build_weights: need 0 < kappa < 1/2");
        if (!(b_c > 0.0 && b_c < 1.0)) throw DomainError("build_weights: need 0 < b_c < 1");
        B_ = std::pow(b_c, -1.0 / 20.0);
        using boost::math::quadrature::gauss_kronrod;
        inner_mass_ = gauss_kronrod<double, 31>::integrate([](double y) { return std::exp(-theta_g(y)); }, -1.0, 1.0);
        K_ = 2.0 * std::exp(-1.0) + inner_mass_;
    }

    double kappa() const { return kappa_; }
    double b_c() const { return b_c_; }
    double B() const { return B_; }
    double K() const { return K_; }

    // φ: e^y (y<-1), blend, 1+y on [-2κ, κ], blend, 3 (y>1)
    double phi(double y) const {
        if (y <= -1.0) return std::exp(y);
        if (y < -2.0 * kappa_) {
            double s = smoothstep7((y + 1.0) / (1.0 - 2.0 * kappa_));
            return (1.0 - s) * std::exp(y) + s * (1.0 + y);
        }
        if (y <= kappa_) return 1.0 + y;
        if (y < 1.0) {
            double s = smoothstep7((y - kappa_) / (1.0 - kappa_));
            return (1.0 - s) * (1.0 + y) + 3.0 * s;
        }
        return 3.0;
    }
    double dphi(double y) const {
        if (y <= -1.0) return std::exp(y);
        if (y < -2.0 * kappa_) {
            const double L = 1.0 - 2.0 * kappa_;
            double t = (y + 1.0) / L, s = smoothstep7(t), ds = smoothstep7_derivative(t) / L;
            return (1.0 - s) * std::exp(y) + s + ds * ((1.0 + y) - std::exp(y));
        }
        if (y <= kappa_) return 1.0;
        if (y < 1.0) {
            const double L = 1.0 - kappa_;
            double t = (y - kappa_) / L, s = smoothstep7(t), ds = smoothstep7_derivative(t) / L;
            return (1.0 - s) + ds * (2.0 - y);
        }
        return 0.0;
    }

    // ψ: φ for y ≤ -2κ, (1+y) + (-y)S((y+2κ)/κ) on [-2κ,-κ], 1 for y ≥ -κ
    double psi(double y) const {
        if (y <= -2.0 * kappa_) return phi(y);
        if (y < -kappa_) return (1.0 + y) - y * smoothstep7((y + 2.0 * kappa_) / kappa_);
        return 1.0;
    }
    double dpsi(double y) const {
        if (y <= -2.0 * kappa_) return dphi(y);
        if (y < -kappa_) {
            double t = (y + 2.0 * kappa_) / kappa_;
            return 1.0 - smoothstep7(t) - y * smoothstep7_derivative(t) / kappa_;
        }
        return 0.0;
    }

    // η: 1 for y < 1, 0 for y > 2
    double eta(double y) const { return 1.0 - smoothstep7(y - 1.0); }
    double deta(double y) const { return -smoothstep7_derivative(y - 1.0); }

    // θ: e^{-|y|} for |y| > 1, e^{-(3 + 6y² - y⁴)/8} inside (C², ≥ 1/e)
    static double theta_g(double y) { return (3.0 + 6.0 * y * y - y * y * y * y) / 8.0; }
    double theta(double y) const { return std::abs(y) > 1.0 ? std::exp(-std::abs(y)) : std::exp(-theta_g(y)); }

    /// Θ(y) = (1/K)∫_{-∞}^y θ
    double Theta(double y) const {
        using boost::math::quadrature::gauss_kronrod;
        if (y <= -1.0) return std::exp(y) / K_;
        if (y >= 1.0) return 1.0 - std::exp(-y) / K_;
        double part = gauss_kronrod<double, 31>::integrate([](double z) { return std::exp(-theta_g(z)); }, -1.0, y);
        return (std::exp(-1.0) + part) / K_;
    }

    // η₀: 1 for y < κ, e^{-y} for y > 1
    double eta0(double y) const {
        if (y <= kappa_) return 1.0;
        if (y >= 1.0) return std::exp(-y);
        double s = smoothstep7((y - kappa_) / (1.0 - kappa_));
        return (1.0 - s) + s * std::exp(-y);
    }

    double phi_B(double y) const { return phi(y / B_); }
    double dphi_B(double y) const { return dphi(y / B_) / B_; }
    double psi_B(double y) const { return psi(y / B_); }
    double eta_B(double y) const { return eta(y / (B_ * B_)); }
    double zeta_B(double y) const { return phi_B(y) * eta_B(y); }
    double Psi_B(double y) const { return psi_B(y) * eta0(y / B_); }

    /// Worst (APOW) slack over dense samples of [-20B, -κB] (negative = violated).
    double apow_slack(std::size_t samples = 20001) const {
        double worst = std::numeric_limits<double>::infinity();
        const double lo = -20.0 * B_, hi = -kappa_ * B_;
        for (std::size_t k = 0; k < samples; ++k) {
            double y = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(samples - 1);
            double f = phi_B(y), s = psi_B(y);
            worst = std::min({worst, s - f, (1.0 + 3.0 * kappa_) * f - s});
        }
        return worst;
    }

    /// Smallest φ' over dense samples of the blend regions [-1, 1] (negative = φ not monotone).
    double min_dphi(std::size_t samples = 20001) const {
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < samples; ++k)
            m = std::min(m, dphi(-1.0 + 2.0 * static_cast<double>(k) / static_cast<double>(samples - 1)));
        return m;
    }

private:
    double kappa_ = 0.1, b_c_ = 0.0, B_ = 1.0, K_ = 1.0, inner_mass_ = 0.0;
};

inline WeightSet build_weights(double kappa, double b_c) {
    WeightSet W(kappa, b_c);
    if (W.apow_slack() < 0.0) throw ConstructionError("build_weights: (APOW) violated");
    if (W.min_dphi() < 0.0) throw ConstructionError("build_weights: phi not monotone for this kappa");
    return W;
}

/// N = B ∫(ε² + ε_y²) φ_B'.
inline double local_norm_N(const GridFunction& eps, const WeightSet& W) {
    const Grid& g = eps.grid();
    GridFunction d = derivative(eps, 1);
    std::vector<double> f(g.n);
    for (std::size_t i = 0; i < g.n; ++i) f[i] = (eps[i] * eps[i] + d[i] * d[i]) * W.dphi_B(g.node(i));
    return W.B() * integrate(f, g);
}

/// |Q+ε|^{p+1} - |Q|^{p+1} - (p+1)ε Q|Q|^{p-1}, cancellation-free for |ε| ≪ |Q|.
inline double potential_remainder(double Q, double e, double p) {
    if (Q != 0.0 && std::abs(e) < 0.5 * std::abs(Q)) {
        const double r = e / Q;
        return std::pow(std::abs(Q), p + 1.0) * (std::expm1((p + 1.0) * std::log1p(r)) - (p + 1.0) * r);
    }
    return std::pow(std::abs(Q + e), p + 1.0) - std::pow(std::abs(Q), p + 1.0) -
           (p + 1.0) * e * Q * std::pow(std::abs(Q), p - 1.0);
}

/// F = ∫[ε_y²ψ_B + ε²ζ_B - (2/(p+1))(|ε+Q_b|^{p+1} - Q_b^{p+1} - (p+1)εQ_b^p)ψ_B].
inline double lyapunov_F(const GridFunction& eps, const GridFunction& Qb, double p, const WeightSet& W) {
    eps.same_grid(Qb);
    const Grid& g = eps.grid();
    GridFunction d = derivative(eps, 1);
    std::vector<double> f(g.n);
    for (std::size_t i = 0; i < g.n; ++i) {
        double y = g.node(i), ps = W.psi_B(y);
        f[i] = d[i] * d[i] * ps + eps[i] * eps[i] * W.zeta_B(y) -
               2.0 / (p + 1.0) * potential_remainder(Qb[i], eps[i], p) * ps;
    }
    return integrate(f, g);
}

inline double lyapunov_F(const GridFunction& eps, const LocalizedProfile& lp, const WeightSet& W) {
    return lyapunov_F(eps, lp.Qb, lp.p, W);
}

/// Quadratic part ∫(ε_y²ψ_B + ε²ζ_B - pψ_B Q_b^{p-1}ε²).
inline double lyapunov_F_quadratic(const GridFunction& eps, const GridFunction& Qb, double p, const WeightSet& W) {
    const Grid& g = eps.grid();
    GridFunction d = derivative(eps, 1);
    std::vector<double> f(g.n);
    for (std::size_t i = 0; i < g.n; ++i) {
        double y = g.node(i), ps = W.psi_B(y);
        f[i] = d[i] * d[i] * ps + eps[i] * eps[i] * W.zeta_B(y) -
               p * ps * std::pow(std::abs(Qb[i]), p - 1.0) * eps[i] * eps[i];
    }
    return integrate(f, g);
}

/// Ẽ = ∫(½u_x² - |u|^{p+1}/(p+1)) Θ(x̃), x̃ = ((x - x_t)/λ - κB)/√B.
/// A null `W` pointer replaces Θ by 1.
inline double localized_energy(const GridFunction& u, double x_t, double lambda, const WeightSet* W, double p) {
    const Grid& g = u.grid();
    GridFunction d = derivative(u, 1);
    std::vector<double> f(g.n);
    for (std::size_t i = 0; i < g.n; ++i) {
        double e = 0.5 * d[i] * d[i] - std::pow(std::abs(u[i]), p + 1.0) / (p + 1.0);
        double wgt = 1.0;
        if (W) {
            double xt = ((g.node(i) - x_t) / lambda - W->kappa() * W->B()) / std::sqrt(W->B());
            wgt = W->Theta(xt);
        }
        f[i] = e * wgt;
    }
    return integrate(f, g);
}

inline double localized_energy(const GridFunction& u, double x_t, double lambda, const WeightSet& W, double p) {
    return localized_energy(u, x_t, lambda, &W, p);
}

/// λ^{2(1-σ_c)}Ẽ evaluated directly on the rescaled field w(y).
inline double localized_energy_rescaled(const GridFunction& w, const WeightSet& W, double p) {
    return localized_energy(w, 0.0, 1.0, &W, p);
}

// Bootstrap bounds

struct BootstrapThresholds {
    double nu = 1.0 / 1000.0;
    double b_c = 0.0;

    // a-priori bounds
    double bs_b_tilde() const { return std::pow(b_c, 1.5 + nu); }
    double bs_N() const { return std::pow(b_c, 3.0 + 6.0 * nu); }
    double bs_eps_Lp0() const { return std::pow(b_c, 23.0 / 50.0); }
    double bs_eps_dy() const { return std::pow(b_c, 2.0 / 3.0); }
    // improved bounds
    double bb_b_tilde() const { return std::pow(b_c, 1.5 + 2.0 * nu); }
    double bb_N() const { return std::pow(b_c, 3.0 + 8.0 * nu); }
    double bb_eps_Lp0() const { return std::pow(b_c, 13.0 / 28.0); }
    double bb_eps_dy() const { return std::pow(b_c, 3.0 / 4.0); }

    /// Every improved bound is strictly below its a-priori counterpart.
    bool improved_stronger() const {
        return bb_b_tilde() < bs_b_tilde() && bb_N() < bs_N() && bb_eps_Lp0() < bs_eps_Lp0() &&
               bb_eps_dy() < bs_eps_dy();
    }
};

inline constexpr double kLp0 = 2.5;

struct DiagnosticsRecord {
    double s = 0.0, t = 0.0;
    double lambda = 1.0, x = 0.0, b = 0.0;
    double N = 0.0;
    double F = 0.0;
    double E_tilde = 0.0;       // λ^{2(1-σ_c)}Ẽ in rescaled variables
    double eps_Lp0 = 0.0;
    double eps_dy_L2 = 0.0;
    double eps_L2 = 0.0;
    double b_tilde = 0.0;
    double rate_ratio = std::numeric_limits<double>::quiet_NaN();
    double dissipation = 0.0;   // ∫(ε_y² + ε²)φ_B'
    double mass_window = 0.0;   // conserved mass audit value
    std::array<double, 3> mod_res{std::numeric_limits<double>::quiet_NaN(),
                                  std::numeric_limits<double>::quiet_NaN(),
                                  std::numeric_limits<double>::quiet_NaN()};
    std::map<std::string, double> margins;  // bound/value slack per improved bound
};

/// Fills the ε-dependent fields of a record.
inline void fill_record(DiagnosticsRecord& r, const GridFunction& eps, const GridFunction& Qb, const GridFunction& w,
                        double p, double b_c, const WeightSet& W, const BootstrapThresholds& th) {
    r.N = local_norm_N(eps, W);
    r.dissipation = r.N / W.B();
    r.F = lyapunov_F(eps, Qb, p, W);
    r.E_tilde = localized_energy_rescaled(w, W, p);
    r.eps_Lp0 = norm_lq(eps, kLp0);
    r.eps_dy_L2 = norm_l2(derivative(eps, 1));
    r.eps_L2 = norm_l2(eps);
    r.b_tilde = r.b - b_c;
    r.margins["b_tilde"] = th.bb_b_tilde() - std::abs(r.b_tilde);
    r.margins["N"] = th.bb_N() - r.N;
    r.margins["eps_Lp0"] = th.bb_eps_Lp0() - r.eps_Lp0;
    r.margins["eps_dy_L2"] = th.bb_eps_dy() - r.eps_dy_L2;
}

struct BoundReport {
    bool passed = true;           // value ≤ bound at every record
    double worst_margin = 0.0;    // min over records of (bound - value)
    double fitted_constant = 0.0; // max over records of value / bound
};

struct BootstrapReport {
    std::map<std::string, BoundReport> bounds;
    bool trapped = true;
    double max_fitted_constant = 0.0;
};

inline BootstrapReport bootstrap_audit(const std::vector<DiagnosticsRecord>& series, const BootstrapThresholds& th) {
    BootstrapReport rep;
    const std::map<std::string, std::function<std::pair<double, double>(const DiagnosticsRecord&)>> checks{
        {"b_tilde", [&](const DiagnosticsRecord& r) { return std::make_pair(std::abs(r.b_tilde), th.bb_b_tilde()); }},
        {"N", [&](const DiagnosticsRecord& r) { return std::make_pair(r.N, th.bb_N()); }},
        {"eps_Lp0", [&](const DiagnosticsRecord& r) { return std::make_pair(r.eps_Lp0, th.bb_eps_Lp0()); }},
        {"eps_dy_L2", [&](const DiagnosticsRecord& r) { return std::make_pair(r.eps_dy_L2, th.bb_eps_dy()); }},
    };
    for (const auto& [name, fn] : checks) {
        BoundReport b;
        b.worst_margin = std::numeric_limits<double>::infinity();
        for (const auto& r : series) {
            auto [v, bound] = fn(r);
            if (!std::isfinite(v) || v > bound) b.passed = false;
            b.worst_margin = std::min(b.worst_margin, bound - v);
            b.fitted_constant = std::max(b.fitted_constant, std::isfinite(v) ? v / bound : HUGE_VAL);
        }
        rep.trapped = rep.trapped && b.passed;
        rep.max_fitted_constant = std::max(rep.max_fitted_constant, b.fitted_constant);
        rep.bounds[name] = b;
    }
    if (series.empty()) rep.trapped = false;
    return rep;
}

// Monotonicity audits

struct MonotonicityReport {
    double mu = 0.0;
    double C_cap = 100.0;
    double fraction_passed = 0.0;   // with (mu, C_cap)
    double worst_violation = 0.0;   // max of (lhs - C_cap b_c^{7/2}) / b_c^{7/2}, ≤ 0 when all pass
    double C_fit = 0.0;             // smallest C with ≥ 95% passing at mu
    double mu_fit = 0.0;            // largest mu with ≥ 95% passing at C_cap
    std::size_t steps = 0;
    std::size_t violations = 0;
    // localized-energy audit
    double E_C_fit = 0.0;           // max of dẼ/dt · λ^{3+2(1-σ_c)} / b_c⁹
    double E_rescaled_C_fit = 0.0;  // max of Δ(λ^{2(1-σ_c)}Ẽ)/Δt · λ^{3+2(1-σ_c)} / b_c⁹
};

/// lhs_k = ΔF/Δs + μ·(average dissipation) per step.
inline std::vector<double> monotonicity_lhs(const std::vector<DiagnosticsRecord>& series, double mu) {
    std::vector<double> out;
    for (std::size_t k = 0; k + 1 < series.size(); ++k) {
        double ds = series[k + 1].s - series[k].s;
        if (!(ds > 0.0)) throw DomainError("monotonicity_audit: s must increase");
        out.push_back((series[k + 1].F - series[k].F) / ds +
                      mu * 0.5 * (series[k].dissipation + series[k + 1].dissipation));
    }
    return out;
}

inline double fraction_below(const std::vector<double>& lhs, double bound) {
    if (lhs.empty()) return 1.0;
    std::size_t ok = 0;
    for (double v : lhs) ok += (v <= bound) ? 1 : 0;
    return static_cast<double>(ok) / static_cast<double>(lhs.size());
}

inline MonotonicityReport monotonicity_audit(const std::vector<DiagnosticsRecord>& series, double b_c, double p,
                                             double mu_fit_in = -1.0, double C_cap = 100.0) {
    if (series.size() < 2) throw DomainError("monotonicity_audit: need at least 2 records");
    MonotonicityReport rep;
    rep.C_cap = C_cap;
    const double unit = std::pow(b_c, 3.5);
    // μ: largest value on a bisection in [0, 10] keeping ≥ 95% of steps below C_cap·b_c^{7/2}
    auto frac = [&](double mu) { return fraction_below(monotonicity_lhs(series, mu), C_cap * unit); };
    double lo = 0.0, hi = 10.0;
    if (frac(0.0) < 0.95) {
        rep.mu_fit = 0.0;
    } else if (frac(hi) >= 0.95) {
        rep.mu_fit = hi;
    } else {
        for (int it = 0; it < 60; ++it) {
            double mid = 0.5 * (lo + hi);
            (frac(mid) >= 0.95 ? lo : hi) = mid;
        }
        rep.mu_fit = lo;
    }
    rep.mu = mu_fit_in >= 0.0 ? mu_fit_in : rep.mu_fit;
    auto lhs = monotonicity_lhs(series, rep.mu);
    rep.steps = lhs.size();
    rep.fraction_passed = fraction_below(lhs, C_cap * unit);
    rep.violations = static_cast<std::size_t>(std::llround((1.0 - rep.fraction_passed) * static_cast<double>(lhs.size())));
    rep.worst_violation = -std::numeric_limits<double>::infinity();
    for (double v : lhs) rep.worst_violation = std::max(rep.worst_violation, v / unit - C_cap);
    std::vector<double> sorted = lhs;
    std::sort(sorted.begin(), sorted.end());
    std::size_t q = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(sorted.size()))) - 1;
    rep.C_fit = std::max(0.0, sorted[std::min(q, sorted.size() - 1)] / unit);

    // Ẽ audit in physical time
    const double sc = scaling_index(p);
    const double ex = 3.0 + 2.0 * (1.0 - sc);
    const double b9 = std::pow(b_c, 9.0);
    for (std::size_t k = 0; k + 1 < series.size(); ++k) {
        const auto& a = series[k];
        const auto& b = series[k + 1];
        double dt = b.t - a.t;
        if (!(dt > 0.0)) continue;
        double lam = 0.5 * (a.lambda + b.lambda);
        double Ea = a.E_tilde * std::pow(a.lambda, -2.0 * (1.0 - sc));
        double Eb = b.E_tilde * std::pow(b.lambda, -2.0 * (1.0 - sc));
        rep.E_C_fit = std::max(rep.E_C_fit, (Eb - Ea) / dt * std::pow(lam, ex) / b9);
        rep.E_rescaled_C_fit = std::max(rep.E_rescaled_C_fit, (b.E_tilde - a.E_tilde) / dt * std::pow(lam, ex) / b9);
    }
    return rep;
}

/// Fitted K in ∫ε²e^{-|y|/2} ≤ K(N + e^{-κB/2}‖ε‖²_∞).
inline double local_decay_constant(const GridFunction& eps, const WeightSet& W) {
    const Grid& g = eps.grid();
    std::vector<double> f(g.n);
    for (std::size_t i = 0; i < g.n; ++i) f[i] = eps[i] * eps[i] * std::exp(-0.5 * std::abs(g.node(i)));
    double lhs = integrate(f, g);
    double m = eps.max_abs();
    double rhs = local_norm_N(eps, W) + std::exp(-0.5 * W.kappa() * W.B()) * m * m;
    return rhs > 0.0 ? lhs / rhs : 0.0;
}

}  // namespace gkdv
