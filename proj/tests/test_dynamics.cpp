#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstring>

#include "fixtures.hpp"
#include "gkdv/dynamics.hpp"

using namespace gkdv;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {
const RunArtifact& reference_run() {
    static RunArtifact a = [] {
        const auto& s = testing::reference_setup();
        BlowupSimulation sim(s.ctx, s.family, {});
        return sim.run(InitialData{1.0, 0.0, s.b_c(), {}});
    }();
    return a;
}
}  // namespace

TEST_CASE("ARK tableau consistency", "[dynamics]") {
    double sb = 0.0, sbh = 0.0;
    for (int i = 0; i < 4; ++i) {
        sb += ark::b[i];
        sbh += ark::bh[i];
        double rowE = 0.0, rowI = 0.0;
        for (int j = 0; j < 4; ++j) {
            rowE += ark::AE[i][j];
            rowI += ark::AI[i][j];
        }
        CHECK_THAT(rowE, WithinAbs(rowI, 1e-12));  // shared stage abscissae
        if (i == 1) CHECK_THAT(rowI, WithinAbs(2.0 * ark::g, 1e-14));
        if (i == 3) CHECK_THAT(rowI, WithinAbs(1.0, 1e-12));
    }
    for (int j = 0; j < 4; ++j) CHECK_THAT(ark::AI[3][j], WithinAbs(ark::b[j], 1e-14));  // stiffly accurate
    CHECK_THAT(sb, WithinAbs(1.0, 1e-14));
    CHECK_THAT(sbh, WithinAbs(1.0, 1e-14));
}

TEST_CASE("fixed-frame soliton at p = 5 is stationary and conservative", "[dynamics]") {
    Grid g(-40.0, 40.0, 2048);
    auto ctx = ground_state(5.0, g);
    StepperOptions so;
    so.fixed_frame = true;
    so.frame_b = 0.0;
    so.sponge_strength = 0.0;
    ImexStepper st(ctx, ctx.Qp, so);
    auto w = ctx.Qp.vec();
    OdeVars o{0.0, 0.0, 0.0, 0.0};
    const double M0 = inner(ctx.Qp, ctx.Qp), E0 = energy(ctx.Qp, 5.0);
    double emax = 0.0;
    for (int k = 0; k < 100; ++k) emax = std::max(emax, st.step(w, o, 0.01, nullptr).err);
    double dev = 0.0;
    for (std::size_t i = 0; i < g.n; ++i) dev = std::max(dev, std::abs(w[i] - ctx.Qp[i]));
    CHECK(dev < 1e-8);
    CHECK(emax < 1e-9);
    GridFunction W(g, w);
    CHECK(std::abs(inner(W, W) / M0 - 1.0) < 1e-9);
    CHECK(std::abs(energy(W, 5.0) - E0) < 1e-9);
}

TEST_CASE("embedded error shrinks with the step", "[dynamics]") {
    const auto& s = testing::reference_setup();
    const double bc = s.b_c();
    StepperOptions so;
    so.frame_b = bc;
    ImexStepper st(s.ctx, s.family.Q(bc), so);
    GridFunction w0 = s.family.Q(1.5 * bc), Pb = s.family.P(1.5 * bc);
    double prev = std::numeric_limits<double>::infinity();
    for (int m : {8, 64, 512}) {
        auto w = w0.vec();
        OdeVars o{0.0, 0.0, 0.0, 0.0};
        double err = st.step(w, o, 0.45 / m, &Pb).err;
        CHECK(err < prev);
        prev = err;
    }
    CHECK(prev < 1e-8);
}

TEST_CASE("seeded perturbations are reproducible and orthogonal", "[dynamics]") {
    const auto& s = testing::reference_setup();
    const double target = 1e-10;
    auto a = seeded_perturbation(s.ctx, target, 7);
    auto b = seeded_perturbation(s.ctx, target, 7);
    auto c = seeded_perturbation(s.ctx, target, 8);
    CHECK(std::memcmp(a.vec().data(), b.vec().data(), a.size() * sizeof(double)) == 0);
    CHECK(testing::max_abs_diff(a, c) > 0.0);
    InitialData init{1.0, 0.0, s.b_c(), a};
    CHECK_THAT(init.h1_square(), WithinRel(target, 1e-10));
    double n = norm_l2(a);
    CHECK(std::abs(inner(a, s.ctx.Qp)) < 1e-10 * n);
    CHECK(std::abs(inner(a, s.ctx.LambdaQ)) < 1e-10 * n);
    CHECK(std::abs(inner(a, s.ctx.yLambdaQ)) < 1e-10 * n);
    CHECK_FALSE(init.in_Op(s.b_c()));  // 1e-10 is far above b_c^30
    CHECK(InitialData{1.0, 0.0, s.b_c(), {}}.in_Op(s.b_c()));
    CHECK_FALSE(InitialData{1.0, 0.0, 2.0 * s.b_c(), {}}.in_Op(s.b_c()));
}

TEST_CASE("reference run: self-similar rate and trapping", "[dynamics]") {
    const auto& a = reference_run();
    const auto& v = a.verdicts;
    CHECK(v.termination == "stop_ratio");
    CHECK(v.in_Op);
    CHECK(v.trapped);
    CHECK(v.rate_ratio_band);
    CHECK(v.rate_ratio_min >= 0.9);
    CHECK(v.rate_ratio_max <= 1.1);
    CHECK(v.T_fit_r2 > 0.999);
    CHECK_THAT(v.T_fit, WithinRel(15.020527, 1e-5));
    CHECK(v.mass_drift < 1e-5);
    CHECK(a.rejected == 0);
    for (const auto& [name, b] : a.bootstrap.bounds) CHECK(b.fitted_constant <= 100.0);
    CHECK(a.monotonicity.fraction_passed >= 0.95);
    CHECK(!a.snapshots.empty());
}

TEST_CASE("runs are bit-for-bit deterministic", "[dynamics]") {
    const auto& s = testing::reference_setup();
    BlowupSimulation sim(s.ctx, s.family, {});
    auto b = sim.run(InitialData{1.0, 0.0, s.b_c(), {}});
    const auto& a = reference_run();
    REQUIRE(a.series.size() == b.series.size());
    bool same = true;
    for (std::size_t k = 0; k < a.series.size(); ++k)
        same = same && a.series[k].lambda == b.series[k].lambda && a.series[k].b == b.series[k].b &&
               a.series[k].F == b.series[k].F;
    CHECK(same);
}

TEST_CASE("concentration of the synthesized profile", "[dynamics]") {
    const auto& s = testing::reference_setup();
    const auto& g = s.grid;
    Grid gs(g.y_min, -g.y_min, 2 * g.n);
    Interpolator I(g, 8);
    auto v = GridFunction::from(gs, [&](double y) { return I(s.eig.at_bc.v.values(), y); });
    const double sc = scaling_index(5.1);
    for (double R : {17.0, 30.0, 50.0, 100.0, 170.0})
        CHECK(std::abs(concentration_ratio(v, 0.0, R, sc) / s.ctx.mass_Q - 1.0) < 0.15);
    CHECK_THAT(concentration_ratio(v, 0.0, 10.0, sc) / s.ctx.mass_Q, WithinAbs(0.9605, 5e-4));
    CHECK_THROWS(concentration_ratio(v, 0.0, 1e4, sc));
}

TEST_CASE("Lq convergence audit refuses the critical exponent", "[dynamics]") {
    const auto& a = reference_run();
    const double qc = 2.0 / (1.0 - 2.0 * scaling_index(5.1));
    CHECK_THROWS_AS(lq_convergence_audit(a.snapshots, qc, 5.1), DomainError);
    CHECK_THROWS_AS(lq_convergence_audit(a.snapshots, 1.5, 5.1), DomainError);
    auto rep = lq_convergence_audit(a.snapshots, 2.0, 5.1, a.verdicts.T_fit);
    CHECK(rep.distances.size() + 1 == a.snapshots.size());
    for (double d : rep.distances) CHECK(std::isfinite(d));
}
