#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>
#include <boost/numeric/odeint.hpp>

#include "gkdv/ground_state.hpp"
#include "gkdv/localized.hpp"

namespace gkdv {

struct ModulationState {
    double lambda = 1.0;
    double x_c = 0.0;
    double b = 0.0;
    double s = 0.0;
    double t = 0.0;
};

struct ModulationConstants {
    double c_p = 2.0;
    double c_tilde_p = 0.125;
    double T_pred = 0.0;
};

/// Blow-up time λ₀³/(3b₀) of the unperturbed law.
inline double blowup_time(double lambda0, double b0) {
    if (!(lambda0 > 0.0 && b0 > 0.0)) throw DomainError("blowup_time: need lambda0 > 0, b0 > 0");
    return lambda0 * lambda0 * lambda0 / (3.0 * b0);
}

/// Closed-form state of λ_s/λ = -b₀, x_s/λ = 1, b_s = 0, t_s = λ³ at rescaled time s.
inline ModulationState exact_state(double lambda0, double b0, double s, double x0 = 0.0) {
    if (!(lambda0 > 0.0)) throw DomainError("exact_law: need lambda0 > 0");
    ModulationState m;
    m.s = s;
    m.b = b0;
    m.lambda = lambda0 * std::exp(-b0 * s);
    // x = x0 + λ₀(1 - e^{-b₀s})/b₀ and t = λ₀³(1 - e^{-3b₀s})/(3b₀), b₀ → 0 safe
    m.x_c = x0 + (b0 != 0.0 ? -lambda0 * std::expm1(-b0 * s) / b0 : lambda0 * s);
    const double l3 = lambda0 * lambda0 * lambda0;
    m.t = b0 != 0.0 ? -l3 * std::expm1(-3.0 * b0 * s) / (3.0 * b0) : l3 * s;
    return m;
}

/// Trajectory sampled at s = 0, ds, 2ds, ... ≤ horizon.
inline std::vector<ModulationState> exact_law(double lambda0, double b0, double horizon, double ds,
                                              double x0 = 0.0) {
    if (!(b0 >= 0.0)) throw DomainError("exact_law: need b0 >= 0");
    if (!(ds > 0.0 && horizon >= 0.0)) throw DomainError("exact_law: need ds > 0, horizon >= 0");
    std::vector<ModulationState> out;
    const auto steps = static_cast<std::size_t>(std::floor(horizon / ds + 1e-9));
    out.reserve(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k) out.push_back(exact_state(lambda0, b0, ds * static_cast<double>(k), x0));
    return out;
}

/// Residuals (r₁, r₂, r₃) added to the right sides of λ_s/λ, x_s/λ, b_s.
using Forcing = std::function<std::array<double, 3>(double s, const ModulationState&)>;

struct PerturbedLawResult {
    std::vector<ModulationState> trajectory;
    bool trapped = true;          // |b̃| ≤ b_c^{3/2+2ν} at every sample
    bool blowup_reached = false;  // λ fell below lambda_floor
    double max_b_tilde = 0.0;
    double tube = 0.0;            // b_c^{3/2+2ν}
};

inline constexpr double kNu = 1.0 / 1000.0;

/// Integrates λ_s/λ = -b + r₁, x_s/λ = 1 + r₂, b_s = -c_p b̃ b_c + r₃, t_s = λ³.
inline PerturbedLawResult perturbed_law(const ModulationState& state0, const Forcing& forcing, double b_c, double c_p,
                                        double horizon, double ds, double nu = kNu, double lambda_floor = 1e-6) {
    if (!(state0.lambda > 0.0)) throw DomainError("perturbed_law: need lambda > 0");
    if (!(ds > 0.0 && horizon > 0.0)) throw DomainError("perturbed_law: need ds, horizon > 0");
    using Vec = std::array<double, 4>;  // log λ, x, b, t
    auto unpack = [](const Vec& v, double s) {
        ModulationState m;
        m.lambda = std::exp(v[0]);
        m.x_c = v[1];
        m.b = v[2];
        m.t = v[3];
        m.s = s;
        return m;
    };
    auto rhs = [&](const Vec& v, Vec& dv, double s) {
        ModulationState m = unpack(v, s);
        auto r = forcing ? forcing(s, m) : std::array<double, 3>{0.0, 0.0, 0.0};
        dv[0] = -m.b + r[0];
        dv[1] = m.lambda * (1.0 + r[1]);
        dv[2] = -c_p * (m.b - b_c) * b_c + r[2];
        dv[3] = m.lambda * m.lambda * m.lambda;
    };
    namespace ode = boost::numeric::odeint;
    auto stepper = ode::make_dense_output(1e-12, 1e-12, ode::runge_kutta_dopri5<Vec>());
    PerturbedLawResult res;
    res.tube = std::pow(b_c, 1.5 + 2.0 * nu);
    Vec v{std::log(state0.lambda), state0.x_c, state0.b, state0.t};
    double s = state0.s;
    const double s_end = state0.s + horizon;
    auto record = [&](const Vec& x, double ss) {
        for (double c : x)
            if (!std::isfinite(c)) throw NonFiniteError("perturbed_law: non-finite state");
        ModulationState m = unpack(x, ss);
        res.trajectory.push_back(m);
        double bt = std::abs(m.b - b_c);
        res.max_b_tilde = std::max(res.max_b_tilde, bt);
        if (bt > res.tube) res.trapped = false;
        if (m.lambda < lambda_floor) res.blowup_reached = true;
    };
    record(v, s);
    stepper.initialize(v, s, ds);
    std::size_t k = 1;
    while (!res.blowup_reached) {
        double target = state0.s + ds * static_cast<double>(k);
        if (target > s_end + 1e-12 * ds) break;
        while (stepper.current_time() < target) stepper.do_step(rhs);
        Vec x;
        stepper.calc_state(target, x);
        record(x, target);
        ++k;
    }
    return res;
}

struct DecompositionResult {
    ModulationState state;
    GridFunction eps;
    std::array<double, 3> ortho{};  // (ε,Q), (ε,ΛQ), (ε,yΛQ)
    int newton_iters = 0;
};

struct DecomposeOptions {
    int max_iter = 40;
    double rel_tol = 1e-9;  // per orthogonality condition, relative to ‖ε‖
    double abs_tol = 1e-12;
    int interp_width = 8;
};

/// Resampled field λ^α w(λy + x) and its y-derivative on `target`.
inline void resample(const GridFunction& w, const GridFunction& dw, const Interpolator& I, const Grid& target,
                     double alpha, double lambda, double x, std::vector<double>& f, std::vector<double>& fy) {
    const double la = std::pow(lambda, alpha);
    f.resize(target.n);
    fy.resize(target.n);
    for (std::size_t i = 0; i < target.n; ++i) {
        double z = lambda * target.node(i) + x;
        f[i] = la * I(w.values(), z);
        fy[i] = la * lambda * I(dw.values(), z);
    }
}

/// (λ, x, b) with ε = λ^α w(λy + x) - Q_b orthogonal to Q, ΛQ, yΛQ.
inline DecompositionResult decompose(const GridFunction& w, const GroundStateContext& ctx, const ProfileFamily& family,
                                     const ModulationState& guess, DecomposeOptions opt = {}) {
    const Grid& G = family.grid();
    if (!(ctx.grid() == G)) throw GridMismatch("decompose: context and family grids differ");
    const double alpha = scaling_alpha(ctx.p);
    const std::array<const GridFunction*, 3> f{&ctx.Qp, &ctx.LambdaQ, &ctx.yLambdaQ};
    const auto wq = quadrature_weights(G);
    auto dot = [&](const std::vector<double>& a, const GridFunction& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < G.n; ++i) s += wq[i] * a[i] * b[i];
        return s;
    };
    Interpolator I(w.grid(), opt.interp_width);
    GridFunction dw = derivative(w, 1);

    double lam = guess.lambda, x = guess.x_c, b = guess.b;
    std::vector<double> fv, fy, eps(G.n);
    auto evaluate = [&](double l, double xx, double bb, Eigen::Vector3d& F, double& enorm) {
        resample(w, dw, I, G, alpha, l, xx, fv, fy);
        GridFunction Qb = family.Q(bb);
        for (std::size_t i = 0; i < G.n; ++i) eps[i] = fv[i] - Qb[i];
        for (int k = 0; k < 3; ++k) F[k] = dot(eps, *f[k]);
        double e2 = 0.0;
        for (std::size_t i = 0; i < G.n; ++i) e2 += wq[i] * eps[i] * eps[i];
        enorm = std::sqrt(std::max(0.0, e2));
    };
    auto converged = [&](const Eigen::Vector3d& F, double enorm) {
        return F.cwiseAbs().maxCoeff() < opt.rel_tol * enorm + opt.abs_tol;
    };

    Eigen::Vector3d F;
    double enorm = 0.0;
    if (!family.contains(b)) throw ConvergenceError("decompose: b outside the profile family");

    // Damped Newton from the current (lam, x, b); columns ∂ε/∂λ = Λf/λ, ∂ε/∂x = f_y/λ, ∂ε/∂b = -P_b.
    int it = 0;
    auto newton = [&]() {
        evaluate(lam, x, b, F, enorm);
        for (; it < opt.max_iter && !converged(F, enorm); ++it) {
            GridFunction Pb = family.P(b);
            std::vector<double> cl(G.n), cx(G.n);
            for (std::size_t i = 0; i < G.n; ++i) {
                cl[i] = (alpha * fv[i] + G.node(i) * fy[i]) / lam;
                cx[i] = fy[i] / lam;
            }
            Eigen::Matrix3d J;
            for (int k = 0; k < 3; ++k) {
                J(k, 0) = dot(cl, *f[k]);
                J(k, 1) = dot(cx, *f[k]);
                J(k, 2) = -inner(Pb, *f[k]);
            }
            Eigen::Vector3d d = J.fullPivLu().solve(-F);
            if (!d.allFinite()) throw ConvergenceError("decompose: singular Jacobian");
            double step = 1.0;
            const double f0 = F.norm();
            bool accepted = false;
            for (int k = 0; k < 12; ++k, step *= 0.5) {
                double ln = lam + step * d[0], xn = x + step * d[1], bn = b + step * d[2];
                if (!(ln > 0.0) || !family.contains(bn)) continue;
                Eigen::Vector3d Fn;
                double en = 0.0;
                evaluate(ln, xn, bn, Fn, en);
                if (Fn.norm() < f0 || converged(Fn, en)) {
                    lam = ln;
                    x = xn;
                    b = bn;
                    F = Fn;
                    enorm = en;
                    accepted = true;
                    break;
                }
            }
            if (!accepted) break;
            if (!(lam >= 1e-6 && lam <= 1e6)) throw ConvergenceError("decompose: lambda outside [1e-6, 1e6]");
        }
        return converged(F, enorm);
    };

    if (!newton()) {
        // Outside the Newton basin: align the core by a local least-squares scan, then retry.
        it = 0;
        lam = guess.lambda;
        x = guess.x_c;
        b = guess.b;
        GridFunction Qb = family.Q(b);
        auto mismatch = [&](double l, double xx) {
            resample(w, dw, I, G, alpha, l, xx, fv, fy);
            double s = 0.0;
            for (std::size_t i = 0; i < G.n; ++i) {
                double e = fv[i] - Qb[i];
                s += wq[i] * e * e * std::exp(-0.5 * std::abs(G.node(i)));
            }
            return s;
        };
        for (int pass = 0; pass < 2; ++pass) {
            double best = mismatch(lam, x), bx = x, bl = lam;
            for (int k = -60; k <= 60; ++k) {
                double xx = x + lam * 0.025 * k;
                double m = mismatch(lam, xx);
                if (m < best) best = m, bx = xx;
            }
            x = bx;
            for (int k = -40; k <= 40; ++k) {
                double l = lam * std::exp(0.01 * k);
                double m = mismatch(l, x);
                if (m < best) best = m, bl = l;
            }
            lam = bl;
        }
        if (!newton()) throw ConvergenceError("decompose: orthogonality conditions not reached");
    }
    DecompositionResult r;
    r.state = guess;
    r.state.lambda = lam;
    r.state.x_c = x;
    r.state.b = b;
    r.eps = GridFunction(G, eps);
    for (int k = 0; k < 3; ++k) r.ortho[k] = F[k];
    r.newton_iters = it;
    return r;
}

/// Forward synthesis λ^{-α} Q_b((x - x_c)/λ) on `target`.
inline GridFunction synthesize(const GridFunction& Qb, double p, double lambda, double x_c, const Grid& target) {
    const double alpha = scaling_alpha(p);
    Interpolator I(Qb.grid(), 8);
    const double la = std::pow(lambda, -alpha);
    return GridFunction::from(target, [&](double x) { return la * I(Qb.values(), (x - x_c) / lambda); });
}

struct ModulationResiduals {
    std::vector<std::size_t> index;            // sample index of each residual
    std::vector<std::array<double, 3>> r;      // λ_s/λ + b, x_s/λ - 1, b_s + c_p b̃ b_c
    std::vector<double> r1_bc;                 // λ_s/λ + b_c
    std::vector<double> b_s;                   // raw b_s estimates
};

/// Central differences at uniform s (five-point where the stencil fits,
/// three-point only when fewer than five samples exist).
inline ModulationResiduals modulation_residuals(const std::vector<ModulationState>& series, double b_c, double c_p) {
    const std::size_t n = series.size();
    if (n < 3) throw DomainError("modulation_residuals: need at least 3 samples");
    const double ds = series[1].s - series[0].s;
    if (!(ds > 0.0)) throw DomainError("modulation_residuals: s must increase");
    for (std::size_t k = 1; k < n; ++k)
        if (std::abs(series[k].s - series[k - 1].s - ds) > 1e-8 * ds)
            throw DomainError("modulation_residuals: non-uniform s sampling");
    auto deriv = [&](auto get, std::size_t k) {
        if (n >= 5)
            return (-get(series[k + 2]) + 8.0 * get(series[k + 1]) - 8.0 * get(series[k - 1]) + get(series[k - 2])) /
                   (12.0 * ds);
        return (get(series[k + 1]) - get(series[k - 1])) / (2.0 * ds);
    };
    const std::size_t lo = n >= 5 ? 2 : 1;
    ModulationResiduals out;
    for (std::size_t k = lo; k + lo < n; ++k) {
        const auto& m = series[k];
        double ll = deriv([](const ModulationState& q) { return std::log(q.lambda); }, k);
        double xs = deriv([](const ModulationState& q) { return q.x_c; }, k);
        double bs = deriv([](const ModulationState& q) { return q.b; }, k);
        out.index.push_back(k);
        out.r.push_back({ll + m.b, xs / m.lambda - 1.0, bs + c_p * (m.b - b_c) * b_c});
        out.r1_bc.push_back(ll + b_c);
        out.b_s.push_back(bs);
    }
    return out;
}

struct CpFit {
    double c_p = 0.0;            // through the origin: b_s ≈ -c_p b̃ b_c
    double c_p_affine = 0.0;     // with intercept
    double intercept = 0.0;
    double r2 = 0.0;
    std::size_t samples = 0;
};

/// Least-squares fit of b_s against -b̃ b_c.
inline CpFit fit_c_p(const std::vector<ModulationState>& series, const ModulationResiduals& res, double b_c) {
    CpFit f;
    const std::size_t m = res.index.size();
    if (m < 2) throw DomainError("fit_c_p: need at least two residual samples");
    std::vector<double> X(m), Y(m);
    for (std::size_t k = 0; k < m; ++k) {
        X[k] = -(series[res.index[k]].b - b_c) * b_c;
        Y[k] = res.b_s[k];
    }
    double sxx = 0.0, sxy = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        sxx += X[k] * X[k];
        sxy += X[k] * Y[k];
        sx += X[k];
        sy += Y[k];
    }
    if (!(sxx > 0.0)) throw DomainError("fit_c_p: b is constant (b_tilde = 0 throughout)");
    f.c_p = sxy / sxx;
    const double md = static_cast<double>(m);
    const double den = md * sxx - sx * sx;
    f.c_p_affine = den != 0.0 ? (md * sxy - sx * sy) / den : f.c_p;
    f.intercept = (sy - f.c_p_affine * sx) / md;
    double ss_res = 0.0, ss_tot = 0.0, my = sy / md;
    for (std::size_t k = 0; k < m; ++k) {
        double e = Y[k] - (f.c_p_affine * X[k] + f.intercept);
        ss_res += e * e;
        ss_tot += (Y[k] - my) * (Y[k] - my);
    }
    f.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    f.samples = m;
    return f;
}

}  // namespace gkdv
