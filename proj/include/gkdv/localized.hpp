#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "gkdv/profile.hpp"
#include "gkdv/smooth.hpp"

namespace gkdv {

/// χ(y) = χ₀(scale·y) with χ₀ = 1 on |y| < inner and 0 on |y| > outer.
struct CutoffSpec {
    double scale = 0.0;
    double inner = 1.0;
    double outer = 2.0;
    std::string shape = "smoothstep7";

    double operator()(double y) const { return cutoff_chi0(scale * y); }
};

struct LocalizedProfile {
    double p = 5.0;
    double b = 0.0;
    double b_c = 0.0;
    double b_tilde = 0.0;
    double gamma = 0.0;
    GridFunction Qb;
    GridFunction Pb;    // ∂Q_b/∂b (empty until attached)
    GridFunction Phib;  // -Φ_b = bΛQ_b + (Q_b'' - Q_b + Q_b|Q_b|^{p-1})'
    double C_p = std::numeric_limits<double>::quiet_NaN();  // dγ/db at b_c
    double energy_Qb = 0.0;
    CutoffSpec chi;
    std::map<std::string, double> fitted;  // fitted constants of the ≲ bounds

    const Grid& grid() const { return Qb.grid(); }
};

/// Φ_b by grid calculus: -(bΛQ + Q''' - Q' + (Q|Q|^{p-1})').
inline GridFunction profile_error(const GridFunction& Q, double b, double p) {
    const Grid& g = Q.grid();
    const std::size_t n = g.n;
    const double h = g.h(), a = scaling_alpha(p);
    std::vector<double> d1(n), d3(n), nl(n), dnl(n);
    stencil(1).apply(Q.values(), d1, h);
    stencil(3).apply(Q.values(), d3, h);
    for (std::size_t i = 0; i < n; ++i) nl[i] = Q[i] * std::pow(std::abs(Q[i]), p - 1.0);
    stencil(1).apply(nl, dnl, h);
    GridFunction out(g);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = -(b * (a * Q[i] + g.node(i) * d1[i]) + d3[i] - d1[i] + dnl[i]);
    return out;
}

inline GridFunction profile_error(const LocalizedProfile& lp) { return profile_error(lp.Qb, lp.b, lp.p); }

/// Q_b = v·χ₀(b_c y); its size bounds are recorded as fitted constants.
inline LocalizedProfile localize_profile(const ProfileSolution& sol, double b_c) {
    if (!(b_c > 0.0)) throw DomainError("localize_profile: need b_c > 0");
    if (std::abs(sol.b - b_c) > std::pow(b_c, 1.5) * (1.0 + 1e-12))
        throw DomainError("localize_profile: |b - b_c| exceeds b_c^{3/2}");
    const Grid& g = sol.v.grid();
    if (g.y_min > -2.0 / b_c - 1.0)
        throw DomainError("localize_profile: grid does not cover the cutoff support");
    LocalizedProfile lp;
    lp.p = sol.p;
    lp.b = sol.b;
    lp.b_c = b_c;
    lp.b_tilde = sol.b - b_c;
    lp.gamma = sol.gamma;
    lp.chi.scale = b_c;
    lp.Qb = GridFunction(g);
    for (std::size_t i = 0; i < g.n; ++i) lp.Qb[i] = sol.v[i] * lp.chi(g.node(i));
    lp.Phib = profile_error(lp);
    lp.energy_Qb = energy(lp.Qb, lp.p);

    GridFunction Qp = GridFunction::from(g, [p = lp.p](double y) { return ground_state_value(p, y); });
    GridFunction d = lp.Qb - Qp;
    GridFunction dd = derivative(d, 1);
    lp.fitted["Linf_over_bc"] = d.max_abs() / b_c;
    lp.fitted["L2_over_bc_half"] = norm_l2(d) / std::sqrt(b_c);
    lp.fitted["dy_L2_over_bc"] = norm_l2(dd) / b_c;
    double kd = 0.0;
    GridFunction q1 = derivative(lp.Qb, 1), q2 = derivative(lp.Qb, 2);
    for (std::size_t i = 0; i < g.n; ++i) {
        double y = g.node(i);
        if (y < 0.0) continue;
        double m = std::max({std::abs(lp.Qb[i]), std::abs(q1[i]), std::abs(q2[i])});
        kd = std::max(kd, m * std::exp(y / 10.0));
    }
    lp.fitted["derivative_decay"] = kd;
    return lp;
}

/// P_b = χ·(v(b+δ) - v(b-δ))/(2δ) from two extra profile solves.
inline GridFunction b_derivative(const ProfileSolver& solver, const ProfileSolution& at_b, double b_c,
                                 double delta) {
    if (!(delta > 0.0 && delta <= b_c / 20.0 * (1.0 + 1e-12)))
        throw DomainError("b_derivative: need 0 < delta <= b_c/20");
    auto sp = solver.solve(at_b.b + delta, &at_b);
    auto sm = solver.solve(at_b.b - delta, &at_b);
    const Grid& g = solver.grid();
    GridFunction P(g);
    for (std::size_t i = 0; i < g.n; ++i)
        P[i] = cutoff_chi0(b_c * g.node(i)) * (sp.v[i] - sm.v[i]) / (2.0 * delta);
    return P;
}

inline GridFunction b_derivative(double p, double b, double delta, double b_c, ProfileOptions opt = {}) {
    ProfileSolver solver(p, opt);
    auto path = solver.continuation(b);
    return b_derivative(solver, path.back(), b_c, delta);
}

/// Fitted constant K in |P_b| ≤ K(e^{-y/10} 1_{y>0} + 1_{[-2/b_c, 0]}).
inline double b_derivative_decay_constant(const GridFunction& P, double b_c) {
    const Grid& g = P.grid();
    double k = 0.0;
    for (std::size_t i = 0; i < g.n; ++i) {
        double y = g.node(i);
        double env = y > 0.0 ? std::exp(-y / 10.0) : (y >= -2.0 / b_c ? 1.0 : 0.0);
        if (env == 0.0) {
            if (P[i] != 0.0) return std::numeric_limits<double>::infinity();
            continue;
        }
        k = std::max(k, std::abs(P[i]) / env);
    }
    return k;
}

/// Localized profile at b with P_b and C_p attached.
inline LocalizedProfile build_localized(const ProfileSolver& solver, const ProfileSolution& at_b, double b_c,
                                        double C_p, double delta) {
    LocalizedProfile lp = localize_profile(at_b, b_c);
    lp.Pb = b_derivative(solver, at_b, b_c, delta);
    lp.C_p = C_p;
    return lp;
}

/// Projection structure of Φ_b: core coefficient against C_p b̃ b_c and shell magnitudes.
struct AppReport {
    double projection_core = 0.0;  // (Φ_b 1_{|y|<1/b_c}, Q_b)/(Q_b, Q_b)
    double expected = 0.0;         // C_p b̃ b_c
    double core_residual = 0.0;    // sup_{|y|<1/b_c} |Φ_b - C_p b̃ b_c Q_b|
    double left_shell = 0.0;       // sup over b_c y ∈ [-2,-1]
    double right_shell = 0.0;      // sup over b_c y ∈ [1,2] (0 if outside the domain)
    double inner_Phi_Qp = 0.0;     // (Φ_b, Q_p)
    double l2_norm = 0.0;          // ‖Φ_b‖_{L²}
};

inline AppReport app_report(const LocalizedProfile& lp) {
    if (!std::isfinite(lp.C_p)) throw DomainError("app_report: C_p not attached");
    const Grid& g = lp.grid();
    const GridFunction& Phi = lp.Phib;
    AppReport r;
    r.expected = lp.C_p * lp.b_tilde * lp.b_c;
    GridFunction core(g);
    for (std::size_t i = 0; i < g.n; ++i) {
        double z = lp.b_c * g.node(i);
        if (std::abs(z) < 1.0) {
            core[i] = Phi[i];
            r.core_residual = std::max(r.core_residual, std::abs(Phi[i] - r.expected * lp.Qb[i]));
        } else if (z <= -1.0 && z >= -2.0) {
            r.left_shell = std::max(r.left_shell, std::abs(Phi[i]));
        } else if (z >= 1.0 && z <= 2.0) {
            r.right_shell = std::max(r.right_shell, std::abs(Phi[i]));
        }
    }
    r.projection_core = inner(core, lp.Qb) / inner(lp.Qb, lp.Qb);
    GridFunction Qp = GridFunction::from(g, [p = lp.p](double y) { return ground_state_value(p, y); });
    r.inner_Phi_Qp = inner(Phi, Qp);
    r.l2_norm = norm_l2(Phi);
    return r;
}

/// Tabulated family b ↦ (Q_b, P_b, γ(b)) on uniform b-nodes, interpolated by
/// 4-point Lagrange in b. P_b is the derivative of the interpolant.
class ProfileFamily {
public:
    ProfileFamily() = default;

    /// Nodes b_c + jδ, δ = step·b_c, covering [lo·b_c, hi·b_c].
    ProfileFamily(const ProfileSolver& solver, const ProfileSolution& at_bc, double b_c, double lo = 0.8,
                  double hi = 2.2, double step = 1.0 / 40.0)
        : p_(solver.p()), b_c_(b_c), db_(step * b_c), grid_(solver.grid()) {
        if (!(lo < 1.0 && hi > 1.0)) throw DomainError("ProfileFamily: need lo < 1 < hi");
        const int jlo = -static_cast<int>(std::ceil((1.0 - lo) / step)) - 1;
        const int jhi = static_cast<int>(std::ceil((hi - 1.0) / step)) + 1;
        j0_ = jlo;
        const std::size_t count = static_cast<std::size_t>(jhi - jlo + 1);
        Q_.resize(count);
        gamma_.resize(count);
        auto store = [&](int j, const ProfileSolution& s) {
            auto k = static_cast<std::size_t>(j - jlo);
            Q_[k].resize(grid_.n);
            for (std::size_t i = 0; i < grid_.n; ++i) Q_[k][i] = s.v[i] * cutoff_chi0(b_c * grid_.node(i));
            gamma_[k] = s.gamma;
        };
        store(0, at_bc);
        ProfileSolution prev = at_bc;
        for (int j = 1; j <= jhi; ++j) {
            prev = solver.solve(b_c + j * db_, &prev);
            store(j, prev);
        }
        prev = at_bc;
        for (int j = -1; j >= jlo; --j) {
            prev = solver.solve(b_c + j * db_, &prev);
            store(j, prev);
        }
        Qp_ = GridFunction::from(grid_, [p = p_](double y) { return ground_state_value(p, y); });
    }

    double p() const { return p_; }
    double b_c() const { return b_c_; }
    const Grid& grid() const { return grid_; }
    double b_lo() const { return b_c_ + (j0_ + 1) * db_; }
    double b_hi() const { return b_c_ + (j0_ + static_cast<int>(Q_.size()) - 2) * db_; }
    bool contains(double b) const { return b >= b_lo() && b <= b_hi(); }

    GridFunction Q(double b) const { return combine(b, false); }
    GridFunction P(double b) const { return combine(b, true); }
    double gamma(double b) const {
        auto [k, w, dw] = weights(b);
        double s = 0.0;
        for (int m = 0; m < 4; ++m) s += w[m] * gamma_[k + m];
        return s;
    }
    /// dγ/db of the interpolant.
    double dgamma_db(double b) const {
        auto [k, w, dw] = weights(b);
        double s = 0.0;
        for (int m = 0; m < 4; ++m) s += dw[m] * gamma_[k + m];
        return s;
    }

private:
    double p_ = 5.0, b_c_ = 0.0, db_ = 0.0;
    int j0_ = 0;
    Grid grid_{};
    std::vector<std::vector<double>> Q_;
    std::vector<double> gamma_;
    GridFunction Qp_;

    struct W {
        std::size_t k;
        std::array<double, 4> w, dw;
    };

    W weights(double b) const {
        if (!contains(b)) throw DomainError("ProfileFamily: b outside the tabulated range");
        const double t = (b - b_c_) / db_ - j0_;  // position in node units
        int k = static_cast<int>(std::floor(t)) - 1;
        k = std::clamp(k, 0, static_cast<int>(Q_.size()) - 4);
        const double u = t - k;  // nodes at 0,1,2,3
        W r{static_cast<std::size_t>(k), {}, {}};
        for (int m = 0; m < 4; ++m) {
            double num = 1.0, den = 1.0, dnum = 0.0;
            for (int q = 0; q < 4; ++q) {
                if (q == m) continue;
                den *= (m - q);
                double prod = 1.0;
                for (int r2 = 0; r2 < 4; ++r2)
                    if (r2 != m && r2 != q) prod *= (u - r2);
                dnum += prod;
                num *= (u - q);
            }
            r.w[m] = num / den;
            r.dw[m] = dnum / den / db_;
        }
        return r;
    }

    GridFunction combine(double b, bool deriv) const {
        auto [k, w, dw] = weights(b);
        const auto& c = deriv ? dw : w;
        std::vector<double> out(grid_.n, 0.0);
        for (int m = 0; m < 4; ++m)
            for (std::size_t i = 0; i < grid_.n; ++i) out[i] += c[m] * Q_[k + m][i];
        return GridFunction(grid_, std::move(out));
    }
};

/// Projection estimate c_p = -(Φ_b, Q_p)/(b_c b̃ (P_b, Q_p)) of the b-law coefficient.
inline double c_p_projection(const LocalizedProfile& lp) {
    if (lp.Pb.size() == 0) throw DomainError("c_p_projection: P_b not attached");
    if (lp.b_tilde == 0.0) throw DomainError("c_p_projection: need b != b_c");
    GridFunction Qp = GridFunction::from(lp.grid(), [p = lp.p](double y) { return ground_state_value(p, y); });
    return -inner(lp.Phib, Qp) / (lp.b_c * lp.b_tilde * inner(lp.Pb, Qp));
}

}  // namespace gkdv
