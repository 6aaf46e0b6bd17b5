#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gkdv/grid.hpp"

namespace gkdv {

/// Critical Sobolev index sigma_c = 1/2 - 2/(p-1).
inline double scaling_index(double p) {
    if (!(p > 1.0)) throw DomainError("scaling_index: need p > 1");
    return 0.5 - 2.0 / (p - 1.0);
}

/// Scaling exponent 2/(p-1) of u -> lambda^{-2/(p-1)} u(./lambda).
inline double scaling_alpha(double p) { return 2.0 / (p - 1.0); }

/// Ground state ((p+1)/2)^{1/(p-1)} sech^{2/(p-1)}((p-1)y/2).
inline double ground_state_value(double p, double y) {
    const double k = 0.5 * (p - 1.0);
    const double amp = std::pow(0.5 * (p + 1.0), 1.0 / (p - 1.0));
    // sech^beta(ky) computed as (2 e^{-k|y|} / (1 + e^{-2k|y|}))^beta to avoid overflow
    const double e = std::exp(-k * std::abs(y));
    return amp * std::pow(2.0 * e / (1.0 + e * e), 2.0 / (p - 1.0));
}

/// Q'(y) = -Q(y) tanh((p-1)y/2).
inline double ground_state_derivative(double p, double y) {
    return -ground_state_value(p, y) * std::tanh(0.5 * (p - 1.0) * y);
}

/// (2/(p-1)) f + y f'
inline GridFunction lambda_apply(const GridFunction& f, double p) {
    const double a = scaling_alpha(p);
    GridFunction df = derivative(f, 1);
    GridFunction out(f.grid());
    for (std::size_t i = 0; i < f.size(); ++i) out[i] = a * f[i] + f.grid().node(i) * df[i];
    return out;
}

struct GroundStateContext {
    double p = 5.0;
    double sigma_c = 0.0;
    GridFunction Qp;
    GridFunction dQp;       // Q_p'
    GridFunction LambdaQ;   // ΛQ_p
    GridFunction yLambdaQ;  // y ΛQ_p
    double mass_Q = 0.0;         // ∫Q²
    double l1_Q = 0.0;           // ∫Q
    double lambdaQ_norm2 = 0.0;  // ‖ΛQ‖²
    double residual = 0.0;       // ‖Q'' - Q + Q^p‖∞ on the grid

    const Grid& grid() const { return Qp.grid(); }
};

inline constexpr double kGroundStateResidualTol = 1e-8;
/// Stencil order used only for the residual self-check of the closed form.
inline constexpr int kResidualCheckAccuracy = 16;

/// Samples the ground state on `grid` and verifies the ODE residual.
inline GroundStateContext ground_state(double p, const Grid& grid) {
    if (!(p >= 5.0 && p < 6.0)) throw DomainError("ground_state: need 5 <= p < 6");
    if (std::min(-grid.y_min, grid.y_max) < -std::log(1e-12))
        throw DomainError("ground_state: grid must extend beyond |y| = 27.7 on both sides");
    GroundStateContext c;
    c.p = p;
    c.sigma_c = scaling_index(p);
    c.Qp = GridFunction::from(grid, [p](double y) { return ground_state_value(p, y); });
    for (std::size_t i = 0; i < grid.n; ++i) {
        if (!(c.Qp[i] > 0.0)) throw ConstructionError("ground_state: Q must be positive");
        double y = grid.node(i);
        if (c.Qp[i] != ground_state_value(p, -y)) throw ConstructionError("ground_state: Q not even");
    }
    c.dQp = derivative(c.Qp, 1);
    GridFunction d2 = derivative(c.Qp, 2, kResidualCheckAccuracy);
    double res = 0.0;
    for (std::size_t i = 0; i < grid.n; ++i)
        res = std::max(res, std::abs(d2[i] - c.Qp[i] + std::pow(c.Qp[i], p)));
    c.residual = res;
    if (!(res < kGroundStateResidualTol))
        throw ConstructionError("ground_state: ODE residual " + std::to_string(res) +
                                " above tolerance (grid too coarse)");
    c.LambdaQ = lambda_apply(c.Qp, p);
    c.yLambdaQ = GridFunction::from(grid, [](double y) { return y; });
    for (std::size_t i = 0; i < grid.n; ++i) c.yLambdaQ[i] *= c.LambdaQ[i];
    c.mass_Q = inner(c.Qp, c.Qp);
    c.l1_Q = integrate(c.Qp);
    c.lambdaQ_norm2 = inner(c.LambdaQ, c.LambdaQ);
    return c;
}

/// L f = -f'' + f - p Q^{p-1} f around the ground state of `context`.
struct LinearizedOperator {
    GroundStateContext context;

    explicit LinearizedOperator(GroundStateContext ctx) : context(std::move(ctx)) {}

    GridFunction operator()(const GridFunction& f) const {
        f.same_grid(context.Qp);
        GridFunction d2 = derivative(f, 2);
        GridFunction out(f.grid());
        const double p = context.p;
        for (std::size_t i = 0; i < f.size(); ++i)
            out[i] = -d2[i] + f[i] - p * std::pow(context.Qp[i], p - 1.0) * f[i];
        return out;
    }
};

inline GridFunction linearized_apply(const LinearizedOperator& L, const GridFunction& f) { return L(f); }

namespace detail {

/// Piecewise-linear Galerkin discretization of ∫(a f'² + c f²) on nodes
/// y (uniform spacing h) with trapezoidal lumping of the zero-order term.
inline Eigen::MatrixXd p1_form(std::span<const double> a, std::span<const double> c, double h) {
    const Eigen::Index m = static_cast<Eigen::Index>(c.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index e = 0; e + 1 < m; ++e) {
        double ae = 0.5 * (a[e] + a[e + 1]) / h;
        A(e, e) += ae;
        A(e + 1, e + 1) += ae;
        A(e, e + 1) -= ae;
        A(e + 1, e) -= ae;
    }
    for (Eigen::Index i = 0; i < m; ++i) {
        double w = (i == 0 || i == m - 1) ? 0.5 * h : h;
        A(i, i) += w * c[i];
    }
    return A;
}

/// Smallest eigenvalue of num x = mu den x over {x : C^T x = 0}
/// (C may have zero columns, meaning no constraint).
inline double constrained_min_eig(const Eigen::MatrixXd& num, const Eigen::MatrixXd& den,
                                  const Eigen::MatrixXd& C) {
    Eigen::MatrixXd A, M;
    const Eigen::Index m = num.rows();
    const Eigen::Index k = C.cols();
    if (k == 0) {
        A = num;
        M = den;
    } else {
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(C);
        Eigen::MatrixXd Qt = qr.householderQ();
        Eigen::MatrixXd Z = Qt.rightCols(m - k);
        A = Z.transpose() * num * Z;
        M = Z.transpose() * den * Z;
    }
    A = 0.5 * (A + A.transpose()).eval();
    M = 0.5 * (M + M.transpose()).eval();
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(A, M, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw ConvergenceError("constrained eigensolve failed");
    return es.eigenvalues()(0);
}

/// Stiffness matrix of ∫f'² for fields vanishing beyond the grid ends:
/// h·(-D2) with the centred stencil and zero extension (symmetric Toeplitz,
/// positive semi-definite).
inline Eigen::MatrixXd centred_stiffness(std::size_t m, double h, int accuracy = kDefaultAccuracy) {
    const Stencil& s = stencil(2, accuracy);
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    const int hw = s.half;
    for (std::size_t i = 0; i < m; ++i)
        for (int k = -hw; k <= hw; ++k) {
            long j = static_cast<long>(i) + k;
            if (j < 0 || j >= static_cast<long>(m)) continue;
            K(static_cast<Eigen::Index>(i), j) = -s.interior[k + hw] / h;
        }
    return K;
}

}  // namespace detail

/// Smallest eigenvalue of (Lf,f)/‖f‖²_{H¹} over f ⟂ {Q, ΛQ, yΛQ}.
/// With constrained = false the unprojected value is returned.
inline double coercivity_constant(const LinearizedOperator& L, bool constrained = true) {
    const auto& c = L.context;
    const Grid& g = c.grid();
    const double p = c.p, h = g.h();
    const std::size_t m = g.n;
    Eigen::MatrixXd den = detail::centred_stiffness(m, h);
    Eigen::MatrixXd num = den;
    for (std::size_t i = 0; i < m; ++i) {
        auto ii = static_cast<Eigen::Index>(i);
        den(ii, ii) += h;
        num(ii, ii) += h * (1.0 - p * std::pow(c.Qp[i], p - 1.0));
    }
    Eigen::MatrixXd C(static_cast<Eigen::Index>(m), constrained ? 3 : 0);
    if (constrained) {
        for (std::size_t i = 0; i < m; ++i) {
            C(i, 0) = h * c.Qp[i];
            C(i, 1) = h * c.LambdaQ[i];
            C(i, 2) = h * c.yLambdaQ[i];
        }
    }
    return detail::constrained_min_eig(num, den, C);
}

struct VirialOptions {
    bool orthogonality = true;   // impose (ε,Q) = (ε,ΛQ) = (ε,yΛQ) = 0
    bool compensator = true;     // include (1/B)∫ε² e^{-|y|/2}
    std::size_t nodes = 1025;    // nodes across the window
};

/// Smallest eigenvalue of the localized virial form on |y| < κB, relative
/// to ∫_{|y|<κB}(ε_y² + ε²). ε is taken to vanish outside the window.
inline double virial_form_min(const GroundStateContext& ctx, double kappa, double B,
                              VirialOptions opt = {}) {
    if (!(kappa > 0.0 && kappa < 1.0)) throw DomainError("virial_form_min: need 0 < kappa < 1");
    if (!(B >= 100.0)) throw DomainError("virial_form_min: need B >= 100");
    const double p = ctx.p, L = kappa * B;
    Grid g(-L, L, opt.nodes);
    const double h = g.h();
    const std::size_t m = g.n;
    std::vector<double> three(m, 3.0), one(m, 1.0), cn(m);
    Eigen::MatrixXd C(static_cast<Eigen::Index>(m), opt.orthogonality ? 3 : 0);
    const double a = scaling_alpha(p);
    for (std::size_t i = 0; i < m; ++i) {
        double y = g.node(i);
        double Q = ground_state_value(p, y), dQ = ground_state_derivative(p, y);
        cn[i] = 1.0 - p * std::pow(Q, p - 1.0) + p * (p - 1.0) * y * dQ * std::pow(Q, p - 2.0);
        if (opt.compensator) cn[i] += std::exp(-0.5 * std::abs(y)) / B;
        if (opt.orthogonality) {
            double w = (i == 0 || i == m - 1) ? 0.5 * h : h;
            double LQ = a * Q + y * dQ;
            C(i, 0) = w * Q;
            C(i, 1) = w * LQ;
            C(i, 2) = w * y * LQ;
        }
    }
    Eigen::MatrixXd num = detail::p1_form(three, cn, h);
    Eigen::MatrixXd den = detail::p1_form(one, one, h);
    return detail::constrained_min_eig(num, den, C);
}

}  // namespace gkdv
