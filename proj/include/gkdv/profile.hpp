#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "gkdv/ground_state.hpp"
#include "gkdv/scorer.hpp"

namespace gkdv {

/// Validated range of the nonlinearity exponent for profile solves.
inline constexpr double kProfilePMax = 5.3;

struct ProfileOptions {
    double h_target = 0.026;   // grid spacing
    double y_max = 40.0;       // right end of the domain
    double left_scale = 4.0;   // left end = -left_scale / b_c estimate
    double newton_tol = 1e-9;  // sup-norm of the collocated residual
    int max_newton = 40;
    double step_fraction = 1.0 / 40.0;  // continuation step relative to the b_c estimate
};

/// Quadrature value of ‖Q_p‖²_{L²} / ‖Q_p‖²_{L¹}.
inline double slope_constant(double p) {
    Grid g(-40.0, 40.0, 8001);
    auto Q = GridFunction::from(g, [p](double y) { return ground_state_value(p, y); });
    double l1 = integrate(Q);
    return inner(Q, Q) / (l1 * l1);
}

/// Leading-order estimate b_c ≈ (‖Q‖²_{L²}/‖Q‖²_{L¹})(p - 5).
inline double critical_b_estimate(double p) { return slope_constant(p) * (p - 5.0); }

/// Largest b accepted by solve_profile.
inline double b_max(double p) { return 2.2 * slope_constant(p) * (p - 5.0); }

/// Critical value γ_c = -1 + 2/(p-1).
inline double gamma_critical(double p) { return -1.0 + 2.0 / (p - 1.0); }

struct ProfileSolution {
    double p = 5.0;
    double b = 0.0;
    double gamma = -0.5;
    GridFunction v;
    GridFunction w;              // v - Q_p
    double ode_residual = 0.0;   // sup-norm of the self-similar residual
    double ortho_residual = 0.0; // |(v, Q_p')|
    double tail_amplitude = 0.0; // c in v ≈ c (1 - b y)^{-1-γ} at the left end
    int newton_iters = 0;
};

/// E(u) = (1/2)∫u_y² - (1/(p+1))∫|u|^{p+1}
inline double energy(const GridFunction& u, double p) {
    GridFunction du = derivative(u, 1);
    std::vector<double> e(u.size());
    for (std::size_t i = 0; i < e.size(); ++i)
        e[i] = 0.5 * du[i] * du[i] - std::pow(std::abs(u[i]), p + 1.0) / (p + 1.0);
    return integrate(e, u.grid());
}

/// M(u) = ∫u²
inline double mass(const GridFunction& u) { return inner(u, u); }

namespace detail {

/// Real roots of r³ - a r + c0 = 0.
inline std::vector<double> cubic_real_roots(double a, double c0) {
    // Eigen's companion-matrix solver would do; the depressed cubic has a closed form.
    std::vector<double> roots;
    const double P = -a, Qc = c0;
    const double disc = -(4.0 * P * P * P + 27.0 * Qc * Qc);
    if (disc > 0.0) {
        const double m = 2.0 * std::sqrt(-P / 3.0);
        const double th = std::acos(3.0 * Qc / (P * m)) / 3.0;
        for (int k = 0; k < 3; ++k) roots.push_back(m * std::cos(th - 2.0 * M_PI * k / 3.0));
    } else {
        const double s = std::sqrt(std::max(0.0, Qc * Qc / 4.0 + P * P * P / 27.0));
        roots.push_back(std::cbrt(-Qc / 2.0 + s) + std::cbrt(-Qc / 2.0 - s));
    }
    std::sort(roots.begin(), roots.end());
    return roots;
}

}  // namespace detail

/// Newton–collocation solver of the self-similar equation
///   b((1+γ)v + y v') + (v'' - v + v|v|^{p-1})' = 0,  (v, Q_p') = 0,
/// on [y_min, y_max] with far-field closures:
///   left:  (v, v', v'') in the span of the algebraic tail (1-by)^{-1-γ} and the
///          exponential mode decaying towards -∞;
///   right: only the mode decaying towards +∞.
class ProfileSolver {
public:
    explicit ProfileSolver(double p, ProfileOptions opt = {}) : p_(p), opt_(opt) {
        if (!(p >= 5.0 && p <= kProfilePMax))
            throw DomainError("profile: p outside the validated range [5, 5.3]");
        b_est_ = critical_b_estimate(p);
        double left = p > 5.0 ? -opt_.left_scale / b_est_ : -opt_.y_max;
        left = std::min(left, -opt_.y_max);
        grid_ = Grid::with_spacing(left, opt_.y_max, opt_.h_target);
        init_operators();
    }

    /// Solver on an explicitly given grid.
    ProfileSolver(double p, const Grid& grid, ProfileOptions opt = {}) : p_(p), opt_(opt), grid_(grid) {
        if (!(p >= 5.0 && p <= kProfilePMax))
            throw DomainError("profile: p outside the validated range [5, 5.3]");
        b_est_ = critical_b_estimate(p);
        init_operators();
    }

    double p() const { return p_; }
    const Grid& grid() const { return grid_; }
    double b_estimate() const { return b_est_; }
    const GridFunction& Q() const { return Q_; }
    const GridFunction& dQ() const { return dQ_; }
    const ProfileOptions& options() const { return opt_; }

    /// The b = 0 solution: v = Q_p, γ = -1/2 (limit value as b → 0⁺).
    ProfileSolution ground() const {
        ProfileSolution s;
        s.p = p_;
        s.b = 0.0;
        s.gamma = -0.5;
        s.v = Q_;
        s.w = GridFunction(grid_);
        // closed form: residual measured with the high-order check stencils
        GridFunction d1 = derivative(Q_, 1, kResidualCheckAccuracy), d3 = derivative(Q_, 3, kResidualCheckAccuracy);
        for (std::size_t i = 0; i < Q_.size(); ++i)
            s.ode_residual = std::max(s.ode_residual, std::abs(d3[i] - d1[i] + p_ * std::pow(Q_[i], p_ - 1.0) * d1[i]));
        s.ortho_residual = std::abs(inner(Q_, dQ_));
        return s;
    }

    /// Newton solve at b starting from init (or from Q_p when absent).
    ProfileSolution solve(double b, const ProfileSolution* init = nullptr) const {
        if (!(b >= 0.0 && b <= b_max(std::max(p_, 5.0 + 1e-12)) + 1e-15))
            throw DomainError("profile: b outside [0, b_max(p)]");
        if (b == 0.0) return ground();
        const std::size_t n = grid_.n;
        Eigen::VectorXd x(n + 1);
        if (init) {
            init->v.same_grid(Q_);
            for (std::size_t i = 0; i < n; ++i) x[i] = init->v[i];
            x[n] = init->gamma;
        } else {
            for (std::size_t i = 0; i < n; ++i) x[i] = Q_[i];
            x[n] = -0.5;
        }
        Eigen::VectorXd F = residual(x, b);
        double fn = F.lpNorm<Eigen::Infinity>();
        Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
        bool analyzed = false;
        int it = 0;
        double last_step = 1.0;
        for (; it < opt_.max_newton; ++it) {
            if (fn < opt_.newton_tol && last_step < 1e-8) break;
            Bordered J = jacobian(x, b);
            if (!analyzed) {
                lu.analyzePattern(J.A);
                analyzed = true;
            }
            lu.factorize(J.A);
            if (lu.info() != Eigen::Success) throw ConvergenceError("profile: singular Jacobian");
            Eigen::VectorXd dx = bordered_solve(lu, J, -F);
            double t = 1.0;
            Eigen::VectorXd xn;
            Eigen::VectorXd Fn;
            double fnew = 0.0;
            for (int k = 0; k < 8; ++k) {
                xn = x + t * dx;
                Fn = residual(xn, b);
                fnew = Fn.lpNorm<Eigen::Infinity>();
                if (std::isfinite(fnew) && (fnew < fn || fnew < opt_.newton_tol)) break;
                t *= 0.5;
            }
            if (!std::isfinite(fnew) || (fnew >= fn && fnew >= opt_.newton_tol))
                throw ConvergenceError("profile: Newton divergence (continuation step too large?)");
            last_step = t * dx.lpNorm<Eigen::Infinity>();
            x = xn;
            F = Fn;
            fn = fnew;
        }
        if (!(fn < opt_.newton_tol)) throw ConvergenceError("profile: Newton did not converge");

        ProfileSolution s;
        s.p = p_;
        s.b = b;
        s.gamma = x[n];
        std::vector<double> v(x.data(), x.data() + n);
        s.v = GridFunction(grid_, v);
        s.w = s.v - Q_;
        s.ode_residual = residual_norm(v, s.gamma, b);
        s.ortho_residual = std::abs(inner(s.v, dQ_));
        s.newton_iters = it;
        s.tail_amplitude = v[0] * std::pow(1.0 - b * grid_.y_min, 1.0 + s.gamma);
        validate(s);
        return s;
    }

    /// Continuation from b = 0 to b_target with steps ≤ step_fraction·b_estimate,
    /// halving on Newton failure. Returns all accepted solutions (b = 0 first).
    std::vector<ProfileSolution> continuation(double b_target, double db = 0.0) const {
        if (db <= 0.0) db = opt_.step_fraction * b_est_;
        std::vector<ProfileSolution> path{ground()};
        double b = 0.0;
        while (b < b_target * (1.0 - 1e-14)) {
            double step = std::min(db, b_target - b);
            for (int tries = 0;; ++tries) {
                try {
                    path.push_back(solve(b + step, &path.back()));
                    b += step;
                    break;
                } catch (const ConvergenceError&) {
                    if (tries > 6) throw;
                    step *= 0.5;
                }
            }
        }
        return path;
    }

    double energy_of(const ProfileSolution& s) const { return energy(s.v, p_); }

    /// Sup-norm of the collocated self-similar residual on interior rows.
    double residual_norm(const std::vector<double>& v, double gamma, double b) const {
        std::vector<double> r(grid_.n, 0.0);
        interior_residual(v, gamma, b, r);
        double m = 0.0;
        for (double x : r) m = std::max(m, std::abs(x));
        return m;
    }

    /// Interior rows of b((1+γ)v + yv') + v''' - v' + (v|v|^{p-1})' in
    /// conservative form (the same discrete operator the evolution uses).
    void interior_residual(std::span<const double> v, double gamma, double b, std::span<double> out) const {
        const std::size_t n = grid_.n;
        const double h = grid_.h();
        std::vector<double> d1(n), d3(n), nl(n), dnl(n);
        s1_->apply(v, d1, h);
        s3_->apply(v, d3, h);
        for (std::size_t i = 0; i < n; ++i) nl[i] = v[i] * std::pow(std::abs(v[i]), p_ - 1.0);
        s1_->apply(nl, dnl, h);
        for (std::size_t i = 1; i + 2 < n; ++i) {
            double y = grid_.node(i);
            out[i] = b * ((1.0 + gamma) * v[i] + y * d1[i]) + d3[i] - d1[i] + dnl[i];
        }
    }

private:
    double p_;
    ProfileOptions opt_;
    Grid grid_;
    double b_est_ = 0.0;
    GridFunction Q_, dQ_;
    std::vector<double> wq_;
    const Stencil* s1_ = nullptr;
    const Stencil* s2_ = nullptr;
    const Stencil* s3_ = nullptr;

    void init_operators() {
        s1_ = &stencil(1);
        s2_ = &stencil(2);
        s3_ = &stencil(3);
        Q_ = GridFunction::from(grid_, [p = p_](double y) { return ground_state_value(p, y); });
        dQ_ = derivative(Q_, 1);
        wq_ = quadrature_weights(grid_);
    }

    struct Closure {
        Eigen::Vector3d left;  // coefficients on (v, v', v'') at y_min
        double r_right = -1.0; // v' = r v, v'' = r v' at y_max
    };

    Closure closure(double b, double gamma) const {
        Closure c;
        const double c0 = b * (1.0 + gamma);
        const double aL = 1.0 - b * grid_.y_min;
        const double ra = c0 / aL;
        const double sa = b * b * (1.0 + gamma) * (2.0 + gamma) / (aL * aL);
        auto rl = detail::cubic_real_roots(aL, c0);
        const double rp = rl.back();  // mode decaying towards -∞
        Eigen::Vector3d alg(1.0, ra, sa), good(1.0, rp, rp * rp);
        c.left = alg.cross(good);
        const double aR = 1.0 - b * grid_.y_max;
        auto rr = detail::cubic_real_roots(aR, c0);
        c.r_right = rr.front();  // most negative real root: decaying mode
        return c;
    }

    double bc_row(const Eigen::VectorXd& x, std::size_t row, const Closure& c) const {
        const std::size_t n = grid_.n;
        std::span<const double> v(x.data(), n);
        const double h = grid_.h();
        if (row == 0)
            return c.left[0] * v[0] + c.left[1] * s1_->apply_row(v, 0, h) + c.left[2] * s2_->apply_row(v, 0, h);
        const double d0 = v[n - 1], d1 = s1_->apply_row(v, n - 1, h), d2 = s2_->apply_row(v, n - 1, h);
        if (row == n - 2) return d1 - c.r_right * d0;
        return d2 - c.r_right * d1;
    }

    Eigen::VectorXd residual(const Eigen::VectorXd& x, double b) const {
        const std::size_t n = grid_.n;
        const double gamma = x[n];
        std::span<const double> v(x.data(), n);
        Eigen::VectorXd F(n + 1);
        interior_residual(v, gamma, b, std::span<double>(F.data(), n));
        Closure c = closure(b, gamma);
        F[0] = bc_row(x, 0, c);
        F[n - 2] = bc_row(x, n - 2, c);
        F[n - 1] = bc_row(x, n - 1, c);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += wq_[i] * v[i] * dQ_[i];
        F[n] = s;
        return F;
    }

    /// Jacobian split as [A c; r^T 0]: A banded in v, c = ∂F/∂γ, r the normalization row.
    struct Bordered {
        Eigen::SparseMatrix<double> A;
        Eigen::VectorXd c, r;
    };

    /// Block elimination through A with one step of iterative refinement.
    template <class LU>
    static Eigen::VectorXd bordered_solve(const LU& lu, const Bordered& J, const Eigen::VectorXd& rhs) {
        const Eigen::Index n = J.A.rows();
        auto once = [&](const Eigen::VectorXd& g) {
            Eigen::VectorXd z1 = lu.solve(g.head(n));
            Eigen::VectorXd z2 = lu.solve(J.c);
            const double den = J.r.dot(z2);
            if (!(std::abs(den) > 0.0)) throw ConvergenceError("profile: singular bordered system");
            Eigen::VectorXd x(n + 1);
            x[n] = (J.r.dot(z1) - g[n]) / den;
            x.head(n) = z1 - z2 * x[n];
            return x;
        };
        Eigen::VectorXd x = once(rhs);
        Eigen::VectorXd res(n + 1);
        res.head(n) = rhs.head(n) - J.A * x.head(n) - J.c * x[n];
        res[n] = rhs[n] - J.r.dot(x.head(n));
        return x + once(res);
    }

    Bordered jacobian(const Eigen::VectorXd& x, double b) const {
        const std::size_t n = grid_.n;
        const double h = grid_.h();
        const double gamma = x[n];
        std::span<const double> v(x.data(), n);
        std::vector<double> dn(n);
        for (std::size_t j = 0; j < n; ++j) dn[j] = p_ * std::pow(std::abs(v[j]), p_ - 1.0);
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(n * 32);
        auto I = [](std::size_t k) { return static_cast<int>(k); };
        for (std::size_t i = 1; i + 2 < n; ++i) {
            double y = grid_.node(i);
            for (auto [j, w] : s3_->row(i, n, h)) t.emplace_back(I(i), I(j), w);
            for (auto [j, w] : s1_->row(i, n, h)) t.emplace_back(I(i), I(j), (b * y - 1.0 + dn[j]) * w);
            t.emplace_back(I(i), I(i), b * (1.0 + gamma));
        }
        Closure c = closure(b, gamma);
        // left closure row
        t.emplace_back(0, 0, c.left[0]);
        for (auto [j, w] : s1_->row(0, n, h)) t.emplace_back(0, I(j), c.left[1] * w);
        for (auto [j, w] : s2_->row(0, n, h)) t.emplace_back(0, I(j), c.left[2] * w);
        // right closure rows
        for (auto [j, w] : s1_->row(n - 1, n, h)) {
            t.emplace_back(I(n - 2), I(j), w);
            t.emplace_back(I(n - 1), I(j), -c.r_right * w);
        }
        t.emplace_back(I(n - 2), I(n - 1), -c.r_right);
        for (auto [j, w] : s2_->row(n - 1, n, h)) t.emplace_back(I(n - 1), I(j), w);
        Bordered out;
        out.c = Eigen::VectorXd::Zero(I(n));
        for (std::size_t i = 1; i + 2 < n; ++i) out.c[I(i)] = b * v[i];
        // γ-derivatives of the closure rows by central differences
        const double eg = 1e-6;
        Closure cp = closure(b, gamma + eg), cm = closure(b, gamma - eg);
        for (std::size_t row : {std::size_t{0}, n - 2, n - 1})
            out.c[I(row)] = (bc_row(x, row, cp) - bc_row(x, row, cm)) / (2.0 * eg);
        out.r.resize(I(n));
        for (std::size_t j = 0; j < n; ++j) out.r[I(j)] = wq_[j] * dQ_[j];
        out.A.resize(I(n), I(n));
        out.A.setFromTriplets(t.begin(), t.end());
        return out;
    }

    void validate(const ProfileSolution& s) const {
        for (std::size_t i = 0; i < s.v.size(); ++i)
            if (s.v[i] < -1e-7 * s.v.max_abs()) throw ConvergenceError("profile: positivity violation");
        // D3 amplifies roundoff by ~h^{-3}; a flat floor of that size is expected.
        // Beyond y = 1/b the decaying mode turns algebraic at height ~e^{-2/(3b)}.
        const double floor = 1e-7 + (s.b > 0.0 ? 10.0 * std::exp(-2.0 / (3.0 * s.b)) : 0.0);
        if (std::abs(s.v[grid_.n - 1]) > floor * s.v.max_abs())
            throw ConvergenceError("profile: unresolved right tail");
    }
};

/// Free-function form: builds a solver on the default domain for p.
inline ProfileSolution solve_profile(double p, double b, const ProfileSolution* init = nullptr,
                                     ProfileOptions opt = {}) {
    ProfileSolver solver(p, opt);
    if (init && init->v.grid() == solver.grid()) return solver.solve(b, init);
    if (b == 0.0) return solver.ground();
    auto path = solver.continuation(b);
    return path.back();
}

struct EigenvalueResult {
    double p = 5.0;
    double b_c = 0.0;
    double gamma_at_bc = 0.0;
    double energy_residual = 0.0;  // |E(v(b_c))|
    double slope_estimate = 0.0;   // b_c / (p - 5)
    double dgamma_db = 0.0;        // ∂γ/∂b at b_c
    double b_energy_root = 0.0;    // zero of E(v(b))
    double root_mismatch = 0.0;    // |b_energy_root - b_c| / b_c
    ProfileSolution at_bc;
    std::vector<ProfileSolution> path;  // continuation up to the bracket
};

/// Root of γ(b) - γ_c, cross-validated against the zero-energy root.
inline EigenvalueResult find_critical_b(const ProfileSolver& solver) {
    const double p = solver.p();
    if (!(p > 5.0)) throw DomainError("find_critical_b: need p > 5");
    const double gc = gamma_critical(p);
    const double db = solver.options().step_fraction * solver.b_estimate();
    const double bmax = b_max(p);

    std::vector<ProfileSolution> path{solver.ground()};
    std::vector<double> energies{solver.energy_of(path[0])};
    // march until both γ - γ_c and E change sign
    while (true) {
        double bn = path.back().b + db;
        if (bn > bmax) throw BracketError("find_critical_b: no bracket below b_max (p outside validated range?)");
        path.push_back(solver.solve(bn, &path.back()));
        energies.push_back(solver.energy_of(path.back()));
        if (path.back().gamma - gc < 0.0 && energies.back() < 0.0) break;
    }
    auto nearest = [&](double b) -> const ProfileSolution& {
        std::size_t k = 0;
        for (std::size_t i = 0; i < path.size(); ++i)
            if (std::abs(path[i].b - b) < std::abs(path[k].b - b)) k = i;
        return path[k];
    };
    auto bracket = [&](auto&& value) {
        for (std::size_t i = 1; i < path.size(); ++i)
            if (value(i - 1) * value(i) <= 0.0) return std::make_pair(path[i - 1].b, path[i].b);
        throw BracketError("find_critical_b: no sign change");
    };
    auto [g_lo, g_hi] = bracket([&](std::size_t i) { return path[i].gamma - gc; });
    auto [e_lo, e_hi] = bracket([&](std::size_t i) { return energies[i]; });

    const double tol = 1e-13;
    double b_c = find_root([&](double b) { return solver.solve(b, &nearest(b)).gamma - gc; }, g_lo, g_hi, tol);
    double b_e = find_root([&](double b) { return solver.energy_of(solver.solve(b, &nearest(b))); }, e_lo, e_hi,
                           1e-13);

    EigenvalueResult r;
    r.p = p;
    r.b_c = b_c;
    r.at_bc = solver.solve(b_c, &nearest(b_c));
    r.gamma_at_bc = r.at_bc.gamma;
    r.energy_residual = std::abs(solver.energy_of(r.at_bc));
    r.slope_estimate = b_c / (p - 5.0);
    const double d = b_c / 40.0;
    auto sp = solver.solve(b_c + d, &r.at_bc);
    auto sm = solver.solve(b_c - d, &r.at_bc);
    r.dgamma_db = (sp.gamma - sm.gamma) / (2.0 * d);
    r.b_energy_root = b_e;
    r.root_mismatch = std::abs(b_e - b_c) / b_c;
    r.path = std::move(path);
    if (r.root_mismatch > 0.05)
        throw ConvergenceError("find_critical_b: gamma and energy roots disagree by more than 5%");
    return r;
}

inline EigenvalueResult find_critical_b(double p, ProfileOptions opt = {}) {
    ProfileSolver solver(p, opt);
    return find_critical_b(solver);
}

/// Worst ratios of the profile against the three asymptotic regimes.
inline std::map<std::string, double> tail_audit(const ProfileSolution& sol) {
    const Grid& g = sol.v.grid();
    const double b = sol.b, gm = sol.gamma;
    GridFunction dv = derivative(sol.v, 1);
    double vmax = sol.v.max_abs();
    double right = 0.0, hi = 0.0, left0 = 0.0, left1 = 0.0, left_mid = 0.0;
    const double ylim = b > 0.0 ? 1.0 / b : g.y_max;
    for (std::size_t i = 0; i < g.n; ++i) {
        double y = g.node(i);
        double v = std::abs(sol.v[i]);
        if (y > 0.0 && y <= ylim) {
            right = std::max(right, v * std::exp(y / 10.0) / vmax);
            // only nodes above the roundoff floor of the third-order collocation
            if (b > 0.0 && v > 1e-6 * vmax) hi = std::max(hi, v / (vmax * scorer_ratio(gm, b, y)));
        }
        if (y <= 0.0) {
            double a = 1.0 - b * y;
            double t0 = b * std::pow(a, -1.0 - gm);
            double t1 = b * b * (1.0 + gm) * std::pow(a, -2.0 - gm);
            left0 = std::max(left0, v / (t0 + std::exp(y)));
            left1 = std::max(left1, std::abs(dv[i]) / (t1 + std::exp(y)));
        }
    }
    std::map<std::string, double> out{{"right_exponential", right}, {"left_tail_k0", left0}, {"left_tail_k1", left1}};
    if (b > 0.0) {
        out["hi_ratio"] = hi;
        double ym = -0.5 / b;
        if (ym >= g.y_min) {
            std::size_t i = g.nearest(ym);
            double y = g.node(i);
            left_mid = std::abs(sol.w[i]) / (b * std::pow(1.0 - b * y, -1.0 - gm));
            out["left_tail_midpoint"] = left_mid;
        }
    }
    return out;
}

}  // namespace gkdv
