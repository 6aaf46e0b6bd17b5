#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "gkdv/diagnostics.hpp"
#include "gkdv/modulation.hpp"
#include "gkdv/rng.hpp"

namespace gkdv {

// ARK3(2)4L[2]SA (Kennedy & Carpenter): ESDIRK implicit part, explicit first stage,
// stiffly accurate, shared weights, embedded second-order weights bh.
namespace ark {
inline constexpr double g = 1767732205903.0 / 4055673282236.0;
inline constexpr std::array<double, 4> b{1471266399579.0 / 7840856788654.0, -4482444167858.0 / 7529755066697.0,
                                         11266239266428.0 / 11593286722821.0, g};
inline constexpr std::array<double, 4> bh{2756255671327.0 / 12835298489170.0, -10771552573575.0 / 22201958757719.0,
                                          9247589265047.0 / 10645013368117.0, 2193209047091.0 / 5459859503100.0};
inline constexpr std::array<std::array<double, 4>, 4> AE{{
    {0.0, 0.0, 0.0, 0.0},
    {1767732205903.0 / 2027836641118.0, 0.0, 0.0, 0.0},
    {5535828885825.0 / 10492691773637.0, 788022342437.0 / 10882634858940.0, 0.0, 0.0},
    {6485989280629.0 / 16251701735622.0, -4246266847089.0 / 9704473918619.0, 10755448449292.0 / 10357097424841.0, 0.0},
}};
inline constexpr std::array<std::array<double, 4>, 4> AI{{
    {0.0, 0.0, 0.0, 0.0},
    {g, g, 0.0, 0.0},
    {2746238789719.0 / 10658868560708.0, -640167445237.0 / 6845629431997.0, g, 0.0},
    {b[0], b[1], b[2], g},
}};
}  // namespace ark

struct StepperOptions {
    double frame_b = 0.0;        // b in the implicit linearization (b_c for blow-up runs)
    bool fixed_frame = false;    // λ_s/λ = 0, x_s/λ = 1: no modulation feedback
    double sponge_fraction = 0.1;
    double sponge_strength = 5.0;
    int accuracy = kDefaultAccuracy;
};

/// ODE companions of the field: log λ, x, t and the integrated mass flux.
using OdeVars = std::array<double, 4>;

/// IMEX stepper for w_s = (λ_s/λ)Λw + (x_s/λ)w_y - (w_yy + w|w|^{p-1})_y - σw.
/// Implicit: -b_fΛw + w_y - w_yyy - (pQ̄^{p-1}w)_y - σw. Explicit: the remainder.
/// Boundary conditions w(y_L) = 0, w(y_R) = w_y(y_R) = 0.
class ImexStepper {
public:
    ImexStepper(const GroundStateContext& ctx, const GridFunction& Qbar, StepperOptions opt)
        : ctx_(&ctx), opt_(opt), grid_(ctx.grid()) {
        if (!(Qbar.grid() == grid_)) throw GridMismatch("ImexStepper: background and context grids differ");
        const std::size_t n = grid_.n;
        const double h = grid_.h();
        p_ = ctx.p;
        alpha_ = scaling_alpha(p_);
        sigma_c_ = scaling_index(p_);
        s1_ = &stencil(1, opt.accuracy);
        s2_ = &stencil(2, opt.accuracy);
        s3_ = &stencil(3, opt.accuracy);
        wq_ = quadrature_weights(grid_);
        y_ = grid_.nodes();
        sponge_.assign(n, 0.0);
        const double ya = grid_.y_min + opt.sponge_fraction * (grid_.y_max - grid_.y_min);
        ia_ = 0;
        while (ia_ < n && y_[ia_] < ya) ++ia_;
        if (ia_ + 16 >= n) throw DomainError("ImexStepper: sponge covers the domain");
        for (std::size_t i = 0; i < ia_; ++i) {
            double r = (y_[ia_] - y_[i]) / (y_[ia_] - grid_.y_min);
            sponge_[i] = opt.sponge_strength * r * r;
        }
        qlin_.resize(n);
        for (std::size_t i = 0; i < n; ++i) qlin_[i] = p_ * std::pow(std::abs(Qbar[i]), p_ - 1.0);
        // window weights on [y_a, y_R]
        Grid win(y_[ia_], grid_.y_max, n - ia_);
        wwin_ = quadrature_weights(win);

        // implicit operator (boundary rows zero)
        auto D1 = s1_->matrix(n, h);
        auto D3 = s3_->matrix(n, h);
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(n * 40);
        auto I = [](std::size_t k) { return static_cast<int>(k); };
        const double bf = opt.frame_b;
        for (std::size_t i = 0; i < n; ++i) {
            if (is_bc_row(i)) continue;
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(D1, I(i)); it; ++it) {
                auto j = static_cast<std::size_t>(it.col());
                t.emplace_back(I(i), I(j), it.value() * (1.0 - bf * y_[i] - qlin_[j]));
            }
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(D3, I(i)); it; ++it)
                t.emplace_back(I(i), it.col(), -it.value());
            t.emplace_back(I(i), I(i), -bf * alpha_ - sponge_[i]);
        }
        A_.resize(I(n), I(n));
        A_.setFromTriplets(t.begin(), t.end());
        A_.makeCompressed();
        bc_row_ = s1_->row(n - 1, n, h);
    }

    const Grid& grid() const { return grid_; }
    double p() const { return p_; }
    const StepperOptions& options() const { return opt_; }
    std::size_t sponge_end() const { return ia_; }
    double sponge(std::size_t i) const { return sponge_[i]; }

    bool is_bc_row(std::size_t i) const { return i == 0 || i + 2 >= grid_.n; }

    /// w(y_L) = 0, w(y_R) = 0 and the one-sided w_y(y_R) = 0 (solved for node n-2).
    void impose_bc(std::span<double> w) const {
        const std::size_t n = grid_.n;
        w[0] = 0.0;
        w[n - 1] = 0.0;
        double acc = 0.0, c = 0.0;
        for (auto [j, wt] : bc_row_) {
            if (j == n - 2) c = wt;
            else acc += wt * w[j];
        }
        w[n - 2] = -acc / c;
    }

    /// (λ_s/λ, x_s/λ, b_s) keeping the three inner products of ε = w - Q_b fixed.
    std::array<double, 3> rates(std::span<const double> W, const GridFunction* Pb) const {
        Work k(grid_.n);
        evaluate_derivatives(W, k);
        return solve_rates(W, k, Pb);
    }

    /// Explicit stability bound of the scheme for field W and rates r:
    /// ds ≤ h / (max transport speed), the explicit part being pure transport.
    double stable_ds(std::span<const double> W, const std::array<double, 3>& r) const {
        double speed = 1e-300;
        const double dl = std::abs(r[0] + opt_.frame_b), dx = std::abs(r[1] - 1.0);
        for (std::size_t i = 0; i < grid_.n; ++i) {
            double nl = p_ * std::pow(std::abs(W[i]), p_ - 1.0) - qlin_[i];
            speed = std::max(speed, dl * std::abs(y_[i]) + dx + std::abs(nl));
        }
        return grid_.h() / speed;
    }

    struct StepResult {
        double err = 0.0;                 // embedded error estimate (sup norm)
        std::array<double, 3> rates{};    // at the first stage
        double stable_ds = 0.0;
    };

    /// One ARK step of size ds; w and ode are advanced in place.
    StepResult step(std::vector<double>& w, OdeVars& ode, double ds, const GridFunction* Pb) {
        const std::size_t n = grid_.n;
        auto& lu = factor(ds);
        std::array<std::vector<double>, 4> W, FI, FE;
        std::array<OdeVars, 4> G{};
        Work k(n);
        StepResult res;
        std::vector<double> rhs(n);
        for (int i = 0; i < 4; ++i) {
            OdeVars Y = ode;
            if (i == 0) {
                W[0] = w;
            } else {
                for (std::size_t q = 0; q < n; ++q) {
                    double a = 0.0;
                    for (int j = 0; j < i; ++j) a += ark::AI[i][j] * FI[j][q] + ark::AE[i][j] * FE[j][q];
                    rhs[q] = w[q] + ds * a;
                }
                rhs[0] = rhs[n - 2] = rhs[n - 1] = 0.0;
                Eigen::Map<Eigen::VectorXd> r(rhs.data(), static_cast<Eigen::Index>(n));
                Eigen::VectorXd sol = lu.solve(r);
                W[i].assign(sol.data(), sol.data() + n);
                for (int c = 0; c < 4; ++c)
                    for (int j = 0; j < i; ++j) Y[c] += ds * ark::AE[i][j] * G[j][c];
            }
            evaluate_derivatives(W[i], k);
            auto rt = solve_rates(W[i], k, Pb);
            if (i == 0) {
                res.rates = rt;
                res.stable_ds = stable_ds(W[0], rt);
            }
            FI[i].resize(n);
            FE[i].resize(n);
            const double bf = opt_.frame_b;
            for (std::size_t q = 0; q < n; ++q) {
                const double lw = alpha_ * W[i][q] + y_[q] * k.d1[q];
                FI[i][q] = -bf * lw + k.d1[q] - k.d3[q] - k.dlin[q] - sponge_[q] * W[i][q];
                FE[i][q] = (rt[0] + bf) * lw + (rt[1] - 1.0) * k.d1[q] - (k.dnl[q] - k.dlin[q]);
            }
            for (std::size_t q : {std::size_t{0}, n - 2, n - 1}) FI[i][q] = FE[i][q] = 0.0;
            const double lam = std::exp(Y[0]);
            G[i] = {rt[0], lam * rt[1], lam * lam * lam,
                    std::pow(lam, 2.0 * sigma_c_) * flux_difference(W[i], k, rt)};
        }
        double err = 0.0;
        for (std::size_t q = 0; q < n; ++q) {
            double a = 0.0, e = 0.0;
            for (int j = 0; j < 4; ++j) {
                double f = FI[j][q] + FE[j][q];
                a += ark::b[j] * f;
                e += (ark::b[j] - ark::bh[j]) * f;
            }
            w[q] += ds * a;
            err = std::max(err, std::abs(ds * e));
        }
        impose_bc(w);
        for (int c = 0; c < 4; ++c)
            for (int j = 0; j < 4; ++j) ode[c] += ds * ark::b[j] * G[j][c];
        res.err = err;
        for (double v : w)
            if (!std::isfinite(v)) throw NonFiniteError("ImexStepper: non-finite field");
        return res;
    }

    /// ∫_{y_a}^{y_R} w² (the part of the domain outside the sponge).
    double window_mass(std::span<const double> w) const {
        double s = 0.0;
        for (std::size_t i = ia_; i < grid_.n; ++i) s += wwin_[i - ia_] * w[i] * w[i];
        return s;
    }

    /// J(y_R) - J(y_a), J = m_λ y w² + m_x w² - 2w w_yy + w_y² - (2p/(p+1))|w|^{p+1}.
    double flux_difference(std::span<const double> w, const std::array<double, 3>& r) const {
        Work k(grid_.n);
        evaluate_derivatives(w, k);
        return flux_difference(w, k, r);
    }

    /// Drop all cached factorizations.
    void clear_cache() { lu_.clear(); }

private:
    struct Work {
        explicit Work(std::size_t n) : d1(n), d3(n), nl(n), lin(n), dnl(n), dlin(n) {}
        std::vector<double> d1, d3, nl, lin, dnl, dlin;
    };

    const GroundStateContext* ctx_;
    StepperOptions opt_;
    Grid grid_;
    double p_ = 5.0, alpha_ = 0.5, sigma_c_ = 0.0;
    const Stencil* s1_ = nullptr;
    const Stencil* s2_ = nullptr;
    const Stencil* s3_ = nullptr;
    std::vector<double> wq_, y_, sponge_, qlin_, wwin_;
    std::size_t ia_ = 0;
    Eigen::SparseMatrix<double> A_;
    std::vector<std::pair<std::size_t, double>> bc_row_;
    std::map<double, std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>>> lu_;

    void evaluate_derivatives(std::span<const double> W, Work& k) const {
        const double h = grid_.h();
        s1_->apply(W, k.d1, h);
        s3_->apply(W, k.d3, h);
        for (std::size_t q = 0; q < grid_.n; ++q) {
            k.nl[q] = W[q] * std::pow(std::abs(W[q]), p_ - 1.0);
            k.lin[q] = qlin_[q] * W[q];
        }
        s1_->apply(k.nl, k.dnl, h);
        s1_->apply(k.lin, k.dlin, h);
    }

    std::array<double, 3> solve_rates(std::span<const double> W, const Work& k, const GridFunction* Pb) const {
        if (opt_.fixed_frame) return {0.0, 1.0, 0.0};
        if (!Pb) throw DomainError("ImexStepper: P_b required outside the fixed frame");
        const std::array<const GridFunction*, 3> f{&ctx_->Qp, &ctx_->LambdaQ, &ctx_->yLambdaQ};
        Eigen::Matrix3d M;
        Eigen::Vector3d r;
        for (int c = 0; c < 3; ++c) {
            double a = 0.0, bx = 0.0, pb = 0.0, gg = 0.0;
            const GridFunction& fk = *f[c];
            for (std::size_t q = 0; q < grid_.n; ++q) {
                const double wf = wq_[q] * fk[q];
                if (wf == 0.0) continue;
                a += wf * (alpha_ * W[q] + y_[q] * k.d1[q]);
                bx += wf * k.d1[q];
                pb += wf * (*Pb)[q];
                gg += wf * (-k.d3[q] - k.dnl[q] - sponge_[q] * W[q]);
            }
            M(c, 0) = a;
            M(c, 1) = bx;
            M(c, 2) = -pb;
            r[c] = -gg;
        }
        Eigen::Vector3d x = M.fullPivLu().solve(r);
        if (!x.allFinite()) throw NonFiniteError("ImexStepper: singular modulation system");
        return {x[0], x[1], x[2]};
    }

    double flux_difference(std::span<const double> w, const Work& k, const std::array<double, 3>& r) const {
        const double h = grid_.h();
        auto J = [&](std::size_t i) {
            double wyy = s2_->apply_row(w, i, h);
            double wy = k.d1[i];
            return r[0] * y_[i] * w[i] * w[i] + r[1] * w[i] * w[i] - 2.0 * w[i] * wyy + wy * wy -
                   2.0 * p_ / (p_ + 1.0) * std::pow(std::abs(w[i]), p_ + 1.0);
        };
        return J(grid_.n - 1) - J(ia_);
    }

    Eigen::SparseLU<Eigen::SparseMatrix<double>>& factor(double ds) {
        auto it = lu_.find(ds);
        if (it != lu_.end()) return *it->second;
        if (lu_.size() >= 8) lu_.clear();
        const std::size_t n = grid_.n;
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(static_cast<std::size_t>(A_.nonZeros()) + n);
        auto I = [](std::size_t k) { return static_cast<int>(k); };
        for (int c = 0; c < A_.outerSize(); ++c)
            for (Eigen::SparseMatrix<double>::InnerIterator it2(A_, c); it2; ++it2)
                t.emplace_back(it2.row(), it2.col(), -ds * ark::g * it2.value());
        for (std::size_t i = 0; i < n; ++i)
            if (!is_bc_row(i)) t.emplace_back(I(i), I(i), 1.0);
        t.emplace_back(0, 0, 1.0);
        t.emplace_back(I(n - 1), I(n - 1), 1.0);
        for (auto [j, wt] : bc_row_) t.emplace_back(I(n - 2), I(j), wt);
        Eigen::SparseMatrix<double> M(I(n), I(n));
        M.setFromTriplets(t.begin(), t.end());
        M.makeCompressed();
        auto lu = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
        lu->analyzePattern(M);
        lu->factorize(M);
        if (lu->info() != Eigen::Success) throw ConvergenceError("ImexStepper: factorization failed");
        auto& ref = *lu;
        lu_.emplace(ds, std::move(lu));
        return ref;
    }
};

// Initial data

struct InitialData {
    double lambda0 = 1.0;
    double x0 = 0.0;
    double b0 = 0.0;
    GridFunction eps0;  // rescaled perturbation; empty = 0

    /// Membership conditions of the initial-data set: |b0 - b_c| < b_c^{7/2}, ∫(ε² + ε_y²) < b_c^{30}.
    bool in_Op(double b_c) const {
        if (!(lambda0 > 0.0 && lambda0 <= 1.0)) return false;
        if (!(std::abs(b0 - b_c) < std::pow(b_c, 3.5))) return false;
        return h1_square() < std::pow(b_c, 30.0);
    }

    double h1_square() const {
        if (eps0.size() == 0) return 0.0;
        GridFunction d = derivative(eps0, 1);
        return inner(eps0, eps0) + inner(d, d);
    }
};

/// ε₀ = OC-projected sum of seeded Gaussian bumps with ∫(ε₀² + ε₀_y²) = h1_square.
inline GridFunction seeded_perturbation(const GroundStateContext& ctx, double h1_square, std::uint64_t seed,
                                        int bumps = 8) {
    if (!(h1_square >= 0.0)) throw DomainError("seeded_perturbation: need h1_square >= 0");
    const Grid& g = ctx.grid();
    SplitMix64 rng(seed);
    std::vector<double> c(bumps), wdt(bumps), a(bumps);
    for (int k = 0; k < bumps; ++k) {
        c[k] = rng.uniform(-8.0, 8.0);
        wdt[k] = rng.uniform(0.5, 2.0);
        a[k] = rng.normal();
    }
    GridFunction e = GridFunction::from(g, [&](double y) {
        double s = 0.0;
        for (int k = 0; k < bumps; ++k) {
            double z = (y - c[k]) / wdt[k];
            s += a[k] * std::exp(-z * z);
        }
        return s;
    });
    const std::array<const GridFunction*, 3> f{&ctx.Qp, &ctx.LambdaQ, &ctx.yLambdaQ};
    Eigen::Matrix3d Gm;
    Eigen::Vector3d r;
    for (int i = 0; i < 3; ++i) {
        r[i] = inner(e, *f[i]);
        for (int j = 0; j < 3; ++j) Gm(i, j) = inner(*f[i], *f[j]);
    }
    Eigen::Vector3d coef = Gm.fullPivLu().solve(r);
    for (int j = 0; j < 3; ++j) e -= *f[j] * coef[j];
    GridFunction d = derivative(e, 1);
    const double cur = inner(e, e) + inner(d, d);
    if (!(cur > 0.0)) throw ConstructionError("seeded_perturbation: degenerate perturbation");
    e *= std::sqrt(h1_square / cur);
    return e;
}

// Run driver

/// Width of the smooth right taper applied to initial data.
inline constexpr double kRightTaper = 12.0;

struct DynamicsConfig {
    double stop_ratio = 1e-2;       // stop when λ/λ₀ < stop_ratio
    double s_horizon = 0.0;         // 0: 3 ln(1/stop_ratio)/b_c
    double output_ds_factor = 0.01; // records every output_ds_factor/b_c in s
    double tol = 1e-8;              // embedded error tolerance per step (sup norm)
    int initial_substeps = 8;
    int max_substeps = 4096;
    double kappa = 0.1;
    double resample_threshold = 1e-7;  // drift of (λ_r, x_r) triggering re-framing
    int snapshots_per_decade = 4;   // geometric in λ (equivalently in T - t)
    StepperOptions stepper{};
};

struct Snapshot {
    ModulationState mod;
    GridFunction w;
};

struct SimulationState {
    GridFunction w;
    ModulationState mod;   // decomposition parameters
    std::size_t step = 0;
    double cfl_dt = 0.0;   // explicit stability bound of the last step (in s)
    std::pair<double, double> conserved{0.0, 0.0};  // (M₀, E₀) in original variables
    // frame and audit bookkeeping
    double frame_lambda = 1.0, frame_x = 0.0;
    OdeVars ode{};
    std::array<double, 3> rates{0.0, 1.0, 0.0};
};

struct RunVerdicts {
    std::string termination;        // "stop_ratio" | "horizon" | "untrapped: ..."
    bool in_Op = false;
    bool trapped = false;           // all four improved bounds at every record
    bool b_trapped = false;
    bool rate_ratio_band = false;   // ratio in [0.9, 1.1] over the final decade of λ
    double rate_ratio_min = std::numeric_limits<double>::quiet_NaN();
    double rate_ratio_max = std::numeric_limits<double>::quiet_NaN();
    double T_fit = std::numeric_limits<double>::quiet_NaN();
    double T_fit_r2 = std::numeric_limits<double>::quiet_NaN();
    double T_global = std::numeric_limits<double>::quiet_NaN();
    double global_r2 = std::numeric_limits<double>::quiet_NaN();
    double slope_ratio = std::numeric_limits<double>::quiet_NaN();   // -(dλ³/dt)/(3b_c)
    bool x_converged = false;
    double x_tail_variation = std::numeric_limits<double>::quiet_NaN();
    double x_final = std::numeric_limits<double>::quiet_NaN();
    double mass_drift = std::numeric_limits<double>::quiet_NaN();   // max relative drift of the mass audit
    double time_consistency = std::numeric_limits<double>::quiet_NaN();  // ∫λ³ds vs record quadrature
    double K_mes1 = std::numeric_limits<double>::quiet_NaN();
    double K_mes1_bc = std::numeric_limits<double>::quiet_NaN();
    double K_mes2 = std::numeric_limits<double>::quiet_NaN();
    double K_mes3 = std::numeric_limits<double>::quiet_NaN();
    double final_lambda_ratio = std::numeric_limits<double>::quiet_NaN();
};

struct RunArtifact {
    double p = 5.0, b_c = 0.0, c_p = 2.0;
    std::vector<ModulationState> mod_series;
    std::vector<DiagnosticsRecord> series;
    std::vector<Snapshot> snapshots;
    BootstrapReport bootstrap;
    MonotonicityReport monotonicity;
    std::optional<CpFit> cp_fit;
    RunVerdicts verdicts;
    std::vector<std::string> log;
    std::size_t steps = 0, rejected = 0, resamples = 0;
    double runtime_s = 0.0;
};

/// Rescaled-frame gKdV evolution with modulation feedback and per-record diagnostics.
class BlowupSimulation {
public:
    BlowupSimulation(const GroundStateContext& ctx, const ProfileFamily& family, DynamicsConfig cfg = {})
        : ctx_(&ctx), fam_(&family), cfg_(cfg), b_c_(family.b_c()) {
        if (!(ctx.grid() == family.grid())) throw GridMismatch("BlowupSimulation: context and family grids differ");
        StepperOptions so = cfg.stepper;
        so.frame_b = so.fixed_frame ? so.frame_b : b_c_;
        stepper_ = std::make_unique<ImexStepper>(ctx, family.Q(b_c_), so);
        weights_ = build_weights(cfg.kappa, b_c_);
        th_ = BootstrapThresholds{kNu, b_c_};
    }

    const ImexStepper& stepper() const { return *stepper_; }
    const WeightSet& weights() const { return weights_; }
    const BootstrapThresholds& thresholds() const { return th_; }
    const DynamicsConfig& config() const { return cfg_; }
    double b_c() const { return b_c_; }
    double output_ds() const { return cfg_.output_ds_factor / b_c_; }

    /// State for data λ₀^{-α}(Q_{b0} + ε₀)((x - x₀)/λ₀).
    SimulationState initial_state(const InitialData& init) const {
        SimulationState st;
        st.w = fam_->Q(init.b0);
        if (init.eps0.size() != 0) {
            st.w.same_grid(init.eps0);
            st.w += init.eps0;
        }
        // right taper: profiles with b > 1/y_R have not decayed at the boundary
        const Grid& g = st.w.grid();
        for (std::size_t i = 0; i < g.n; ++i) st.w[i] *= 1.0 - smoothstep7((g.node(i) - (g.y_max - kRightTaper)) / (kRightTaper - 2.0));
        stepper_->impose_bc(st.w.values());
        st.mod = ModulationState{init.lambda0, init.x0, init.b0, 0.0, 0.0};
        st.frame_lambda = init.lambda0;
        st.frame_x = init.x0;
        st.ode = {std::log(init.lambda0), init.x0, 0.0, 0.0};
        const double sc = scaling_index(ctx_->p);
        st.conserved.first = std::pow(init.lambda0, 2.0 * sc) * inner(st.w, st.w);
        st.conserved.second = std::pow(init.lambda0, 2.0 * sc - 2.0) * energy(st.w, ctx_->p);
        if (!stepper_->options().fixed_frame) {
            GridFunction Pb = fam_->P(init.b0);
            st.rates = stepper_->rates(st.w.values(), &Pb);
        }
        return st;
    }

    /// One accepted step of size ≤ ds (halved on rejection or stability violation)
    /// followed by a fresh decomposition. Returns the step actually taken.
    double step_rescaled(SimulationState& st, double ds) {
        GridFunction Pb = fam_->P(st.mod.b);
        for (int tries = 0; tries < 40; ++tries) {
            std::vector<double> w = st.w.vec();
            OdeVars ode = st.ode;
            auto r = stepper_->step(w, ode, ds, stepper_->options().fixed_frame ? nullptr : &Pb);
            if (r.err <= cfg_.tol && ds <= r.stable_ds) {
                st.w = GridFunction(st.w.grid(), std::move(w));
                st.ode = ode;
                st.rates = r.rates;
                st.cfl_dt = r.stable_ds;
                ++st.step;
                st.mod.s += ds;
                sync_frame(st);
                if (!stepper_->options().fixed_frame) redecompose(st);
                return ds;
            }
            ds *= 0.5;
        }
        throw ConvergenceError("step_rescaled: step size underflow");
    }

    /// Full run from `init` until λ/λ₀ < stop_ratio or the s-horizon.
    RunArtifact run(const InitialData& init) {
        using clk = std::chrono::steady_clock;
        const auto t_start = clk::now();
        RunArtifact art;
        art.p = ctx_->p;
        art.b_c = b_c_;
        art.c_p = c_p_;
        art.verdicts.in_Op = init.in_Op(b_c_);
        SimulationState st = initial_state(init);
        const double Ds = output_ds();
        const double horizon = cfg_.s_horizon > 0.0 ? cfg_.s_horizon : 3.0 * std::log(1.0 / cfg_.stop_ratio) / b_c_;
        double C0 = 0.0;
        double next_snap = init.lambda0;
        const double snap_factor = std::pow(10.0, -1.0 / cfg_.snapshots_per_decade);
        int m = std::max(1, cfg_.initial_substeps);
        int quiet = 0;

        try {
            redecompose(st);
        } catch (const Error& e) {
            art.verdicts.termination = std::string("untrapped: ") + e.what();
        }
        auto record = [&](const SimulationState& s) {
            DiagnosticsRecord r;
            r.s = s.mod.s;
            r.t = s.mod.t;
            r.lambda = s.mod.lambda;
            r.x = s.mod.x_c;
            r.b = s.mod.b;
            fill_record(r, eps_, fam_->Q(s.mod.b), s.w, ctx_->p, b_c_, weights_, th_);
            const double M = std::pow(s.frame_lambda, 2.0 * scaling_index(ctx_->p)) * stepper_->window_mass(s.w.values());
            r.mass_window = M - s.ode[3];
            if (art.series.empty()) C0 = r.mass_window;
            art.series.push_back(r);
            art.mod_series.push_back(s.mod);
            if (s.mod.lambda <= next_snap * (1.0 + 1e-12)) {
                art.snapshots.push_back({s.mod, s.w});
                while (next_snap >= s.mod.lambda) next_snap *= snap_factor;
            }
        };
        if (art.verdicts.termination.empty()) record(st);

        while (art.verdicts.termination.empty()) {
            if (st.mod.lambda < cfg_.stop_ratio * init.lambda0) {
                art.verdicts.termination = "stop_ratio";
                break;
            }
            if (st.mod.s >= horizon - 1e-9 * Ds) {
                art.verdicts.termination = "horizon";
                break;
            }
            // one output interval with m equal substeps; retried with 2m on rejection
            GridFunction Pb = fam_->P(st.mod.b);
            bool done = false;
            while (!done) {
                const double ds = Ds / m;
                std::vector<double> w = st.w.vec();
                OdeVars ode = st.ode;
                double emax = 0.0;
                bool ok = true;
                std::array<double, 3> rt = st.rates;
                double cfl = std::numeric_limits<double>::infinity();
                try {
                    for (int k = 0; k < m && ok; ++k) {
                        auto r = stepper_->step(w, ode, ds, &Pb);
                        emax = std::max(emax, r.err);
                        cfl = std::min(cfl, r.stable_ds);
                        rt = r.rates;
                        ok = r.err <= cfg_.tol && ds <= r.stable_ds;
                    }
                } catch (const NonFiniteError&) {
                    ok = false;
                }
                if (!ok) {
                    ++art.rejected;
                    if (2 * m > cfg_.max_substeps) {
                        art.verdicts.termination = "untrapped: step size underflow";
                        break;
                    }
                    m *= 2;
                    quiet = 0;
                    continue;
                }
                st.w = GridFunction(st.w.grid(), std::move(w));
                st.ode = ode;
                st.rates = rt;
                st.cfl_dt = cfl;
                st.step += static_cast<std::size_t>(m);
                art.steps += static_cast<std::size_t>(m);
                done = true;
                if (emax < cfg_.tol / 16.0 && ++quiet >= 3 && m > 1) {
                    m /= 2;
                    quiet = 0;
                }
            }
            if (!done) break;
            sync_frame(st);
            // keep s on the exact output lattice
            st.mod.s = Ds * static_cast<double>(art.series.size());
            try {
                art.resamples += redecompose(st) ? 1 : 0;
            } catch (const Error& e) {
                art.verdicts.termination = std::string("untrapped: ") + e.what();
                break;
            }
            record(st);
        }
        art.runtime_s = std::chrono::duration<double>(clk::now() - t_start).count();
        finalize(art, init, C0);
        return art;
    }

    void set_c_p(double c) { c_p_ = c; }
    const GridFunction& last_eps() const { return eps_; }

private:
    const GroundStateContext* ctx_;
    const ProfileFamily* fam_;
    DynamicsConfig cfg_;
    double b_c_;
    double c_p_ = 2.0;
    std::unique_ptr<ImexStepper> stepper_;
    WeightSet weights_;
    BootstrapThresholds th_;
    GridFunction eps_;

    /// Frame parameters from the ODE companions.
    static void sync_frame(SimulationState& st) {
        st.frame_lambda = std::exp(st.ode[0]);
        st.frame_x = st.ode[1];
        st.mod.t = st.ode[2];
    }

    /// Decomposes w relative to the frame; re-frames (resamples) when the drift is
    /// above the threshold. Returns true when a resample happened.
    bool redecompose(SimulationState& st) {
        ModulationState guess{1.0, 0.0, st.mod.b, st.mod.s, st.mod.t};
        auto d = decompose(st.w, *ctx_, *fam_, guess);
        eps_ = d.eps;
        const double lr = d.state.lambda, xr = d.state.x_c;
        st.mod.lambda = st.frame_lambda * lr;
        st.mod.x_c = st.frame_x + st.frame_lambda * xr;
        st.mod.b = d.state.b;
        bool resampled = false;
        if (std::abs(lr - 1.0) > cfg_.resample_threshold || std::abs(xr) > cfg_.resample_threshold) {
            const Grid& g = st.w.grid();
            const double alpha = scaling_alpha(ctx_->p);
            Interpolator I(g, 8);
            const double la = std::pow(lr, alpha);
            std::vector<double> nw(g.n);
            for (std::size_t i = 0; i < g.n; ++i) nw[i] = la * I(st.w.values(), lr * g.node(i) + xr);
            stepper_->impose_bc(nw);
            st.w = GridFunction(g, std::move(nw));
            // the mass audit is frame-invariant up to window-edge terms
            st.ode[0] += std::log(lr);
            st.ode[1] = st.mod.x_c;
            st.frame_lambda = st.mod.lambda;
            st.frame_x = st.mod.x_c;
            resampled = true;
        }
        return resampled;
    }

    void finalize(RunArtifact& art, const InitialData& init, double C0) const {
        auto& v = art.verdicts;
        if (art.series.empty()) return;
        // modulation residuals at interior records
        if (art.mod_series.size() >= 3) {
            auto res = modulation_residuals(art.mod_series, b_c_, c_p_);
            double k1 = 0.0, k1c = 0.0, k2 = 0.0, k3 = 0.0;
            for (std::size_t j = 0; j < res.index.size(); ++j) {
                auto& rec = art.series[res.index[j]];
                rec.mod_res = res.r[j];
                const double sN = std::sqrt(std::max(0.0, rec.N));
                const double e12 = std::pow(b_c_, 2.5) + sN;
                const double e3 = std::pow(b_c_, 3.0) + b_c_ * sN;
                k1 = std::max(k1, std::abs(res.r[j][0]) / e12);
                k1c = std::max(k1c, std::abs(res.r1_bc[j]) / e12);
                k2 = std::max(k2, std::abs(res.r[j][1]) / e12);
                k3 = std::max(k3, std::abs(res.r[j][2]) / e3);
            }
            v.K_mes1 = k1;
            v.K_mes1_bc = k1c;
            v.K_mes2 = k2;
            v.K_mes3 = k3;
            try {
                art.cp_fit = fit_c_p(art.mod_series, res, b_c_);
            } catch (const DomainError&) {
            }
        }
        art.bootstrap = bootstrap_audit(art.series, th_);
        v.trapped = art.bootstrap.trapped && v.termination.rfind("untrapped", 0) != 0;
        v.b_trapped = art.bootstrap.bounds["b_tilde"].passed;
        if (art.series.size() >= 2) art.monotonicity = monotonicity_audit(art.series, b_c_, ctx_->p);

        // mass audit
        double drift = 0.0;
        for (const auto& r : art.series) drift = std::max(drift, std::abs(r.mass_window - C0));
        v.mass_drift = C0 != 0.0 ? drift / std::abs(C0) : drift;

        // λ³ against t: final decade and global fits
        auto fit = [&](double lam_max, double& T, double& r2, double& slope) {
            double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
            std::size_t m = 0;
            for (const auto& r : art.series) {
                if (r.lambda > lam_max) continue;
                double x = r.t, y = r.lambda * r.lambda * r.lambda;
                sx += x, sy += y, sxx += x * x, sxy += x * y, syy += y * y;
                ++m;
            }
            if (m < 3) return false;
            const double md = static_cast<double>(m);
            const double den = md * sxx - sx * sx;
            if (!(den > 0.0)) return false;
            slope = (md * sxy - sx * sy) / den;
            const double a = (sy - slope * sx) / md;
            T = -a / slope;
            const double cov = sxy - sx * sy / md, vx = sxx - sx * sx / md, vy = syy - sy * sy / md;
            r2 = vy > 0.0 ? cov * cov / (vx * vy) : 1.0;
            return true;
        };
        double slope = 0.0;
        if (fit(std::numeric_limits<double>::infinity(), v.T_global, v.global_r2, slope))
            v.slope_ratio = -slope / (3.0 * b_c_);
        const double decade = 0.1 * init.lambda0;
        double s2 = 0.0;
        v.final_lambda_ratio = art.series.back().lambda / init.lambda0;
        if (v.final_lambda_ratio < 0.1 && fit(decade, v.T_fit, v.T_fit_r2, s2)) {
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            bool finite = true;
            for (auto& r : art.series) {
                if (r.lambda > decade) continue;
                double d = v.T_fit - r.t;
                r.rate_ratio = d > 0.0 ? r.lambda / std::cbrt(3.0 * b_c_ * d) : std::numeric_limits<double>::quiet_NaN();
                if (!std::isfinite(r.rate_ratio)) finite = false;
                lo = std::min(lo, r.rate_ratio);
                hi = std::max(hi, r.rate_ratio);
            }
            v.rate_ratio_min = lo;
            v.rate_ratio_max = hi;
            v.rate_ratio_band = finite && lo >= 0.9 && hi <= 1.1 && v.T_fit_r2 > 0.999;
        }
        // blow-up point: variation of x over the final decade
        double var = 0.0;
        bool any = false;
        for (std::size_t k = 1; k < art.series.size(); ++k) {
            if (art.series[k - 1].lambda > decade) continue;
            var += std::abs(art.series[k].x - art.series[k - 1].x);
            any = true;
        }
        v.x_tail_variation = any ? var : std::numeric_limits<double>::quiet_NaN();
        v.x_final = art.series.back().x;
        v.x_converged = any && var < init.lambda0 * 2.0 / b_c_;
        // physical time: companion ODE against trapezoid quadrature of λ³ over records
        double tq = 0.0;
        for (std::size_t k = 1; k < art.series.size(); ++k) {
            const auto& a = art.series[k - 1];
            const auto& b = art.series[k];
            tq += 0.5 * (b.s - a.s) * (std::pow(a.lambda, 3) + std::pow(b.lambda, 3));
        }
        const double tf = art.series.back().t;
        v.time_consistency = tf > 0.0 ? std::abs(tq - tf) / tf : 0.0;
    }
};

// Outer field audits

/// R^{-2σ_c}∫_{|x - x_T| < R}|u*|² (trapezoid with linearly interpolated end cells).
inline double concentration_ratio(const GridFunction& u_star, double x_T, double R, double sigma_c) {
    const Grid& g = u_star.grid();
    if (!(R > 0.0)) throw DomainError("concentration_ratio: need R > 0");
    const double lo = x_T - R, hi = x_T + R;
    if (lo < g.y_min - 1e-12 || hi > g.y_max + 1e-12) throw DomainError("concentration_ratio: window unresolved");
    if (2.0 * R < 4.0 * g.h()) throw DomainError("concentration_ratio: window unresolved");
    auto sq = [&](double x) {
        double t = (x - g.y_min) / g.h();
        auto i = static_cast<std::size_t>(std::clamp(std::floor(t), 0.0, static_cast<double>(g.n - 2)));
        double f = t - static_cast<double>(i);
        double a = u_star[i] * u_star[i], b = u_star[i + 1] * u_star[i + 1];
        return (1.0 - f) * a + f * b;
    };
    std::vector<double> xs{lo}, fs{sq(lo)};
    const auto i0 = static_cast<std::size_t>(std::ceil((lo - g.y_min) / g.h() + 1e-12));
    for (std::size_t i = i0; i < g.n && g.node(i) < hi - 1e-12; ++i) {
        xs.push_back(g.node(i));
        fs.push_back(u_star[i] * u_star[i]);
    }
    xs.push_back(hi);
    fs.push_back(sq(hi));
    double s = 0.0;
    for (std::size_t k = 1; k < xs.size(); ++k) s += 0.5 * (xs[k] - xs[k - 1]) * (fs[k] + fs[k - 1]);
    return std::pow(R, -2.0 * sigma_c) * s;
}

/// u(x) = λ^{-α}w((x - x_c)/λ) on a physical grid; zero outside the rescaled domain.
inline GridFunction reconstruct(const GridFunction& w, const ModulationState& m, double p, const Grid& physical) {
    const double la = std::pow(m.lambda, -scaling_alpha(p));
    Interpolator I(w.grid(), 8);
    return GridFunction::from(physical, [&](double x) { return la * I(w.values(), (x - m.x_c) / m.lambda); });
}

struct LqAuditReport {
    double q = 2.0, q_c = 0.0;
    std::vector<double> t;          // time of the later snapshot in each pair
    std::vector<double> distances;  // ‖u_{k+1} - u_k‖_{L^q(outer)}
    bool cauchy_decreasing = false;
    double exponent = std::numeric_limits<double>::quiet_NaN();  // d ~ (T - t)^exponent
    double T = std::numeric_limits<double>::quiet_NaN();
    double window_lo = 0.0, window_hi = 0.0;
};

/// Pairwise outer-region L^q distances of reconstructed snapshots (core |x - x(t)| < 10λ(t) excluded).
inline LqAuditReport lq_convergence_audit(const std::vector<Snapshot>& snaps, double q, double p,
                                          double T = std::numeric_limits<double>::quiet_NaN()) {
    const double sc = scaling_index(p);
    LqAuditReport rep;
    rep.q = q;
    rep.q_c = sc < 0.5 ? 2.0 / (1.0 - 2.0 * sc) : std::numeric_limits<double>::infinity();
    if (q >= rep.q_c)
        throw DomainError("lq_convergence_audit: q >= q_c = 2/(1-2 sigma_c); no strong convergence in the critical space");
    if (q < 2.0) throw DomainError("lq_convergence_audit: need q >= 2");
    if (snaps.size() < 2) throw DomainError("lq_convergence_audit: need at least two snapshots");
    rep.T = T;
    // common resolved window around the final blow-up point
    const auto& last = snaps.back();
    const Grid& g = last.w.grid();
    double lmin = std::numeric_limits<double>::infinity();
    for (const auto& s : snaps) lmin = std::min(lmin, s.mod.lambda);
    const double xT = last.mod.x_c;
    rep.window_lo = xT + 0.9 * lmin * g.y_min;
    rep.window_hi = xT + 0.9 * lmin * g.y_max;
    const std::size_t np = static_cast<std::size_t>(std::ceil((rep.window_hi - rep.window_lo) / (0.5 * lmin * g.h()))) + 1;
    Grid phys(rep.window_lo, rep.window_hi, std::max<std::size_t>(np, 64));
    std::vector<GridFunction> u;
    for (const auto& s : snaps) u.push_back(reconstruct(s.w, s.mod, p, phys));
    for (std::size_t k = 0; k + 1 < snaps.size(); ++k) {
        const auto& a = snaps[k].mod;
        const auto& b = snaps[k + 1].mod;
        GridFunction d(phys);
        for (std::size_t i = 0; i < phys.n; ++i) {
            double x = phys.node(i);
            bool core = std::abs(x - a.x_c) < 10.0 * a.lambda || std::abs(x - b.x_c) < 10.0 * b.lambda;
            d[i] = core ? 0.0 : u[k + 1][i] - u[k][i];
        }
        rep.t.push_back(b.t);
        rep.distances.push_back(norm_lq(d, q));
    }
    rep.cauchy_decreasing = true;
    for (std::size_t k = 1; k < rep.distances.size(); ++k)
        if (rep.distances[k] > rep.distances[k - 1] * (1.0 + 1e-12) + 1e-300) rep.cauchy_decreasing = false;
    if (std::isfinite(T)) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        std::size_t m = 0;
        for (std::size_t k = 0; k < rep.distances.size(); ++k) {
            if (!(rep.distances[k] > 0.0) || !(T - rep.t[k] > 0.0)) continue;
            double x = std::log(T - rep.t[k]), y = std::log(rep.distances[k]);
            sx += x, sy += y, sxx += x * x, sxy += x * y;
            ++m;
        }
        if (m >= 2) {
            const double md = static_cast<double>(m);
            rep.exponent = (md * sxy - sx * sy) / (md * sxx - sx * sx);
        }
    }
    return rep;
}

}  // namespace gkdv
