#include <catch_amalgamated.hpp>

#include <cmath>

#include "fixtures.hpp"
#include "gkdv/diagnostics.hpp"

using namespace gkdv;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("weight functions", "[diagnostics]") {
    auto W = build_weights(0.1, testing::kBc51);
    CHECK_THAT(W.B(), WithinRel(std::pow(testing::kBc51, -0.05), 1e-14));
    CHECK_THAT(W.K(), WithinRel(1.853045, 1e-6));
    CHECK(W.apow_slack() >= 0.0);
    double mind = 1.0;
    for (double y = -30.0; y < 30.0; y += 1e-3) mind = std::min(mind, W.dphi(y));
    CHECK(mind >= 0.0);
    CHECK_THAT(W.phi(-2.0), WithinRel(std::exp(-2.0), 1e-14));
    CHECK_THAT(W.phi(0.05), WithinAbs(1.05, 1e-14));
    CHECK(W.phi(2.0) == 3.0);
    CHECK(W.psi(0.5) == 1.0);
    CHECK_THAT(W.Theta(50.0), WithinAbs(1.0, 1e-12));
    CHECK_THAT(W.Theta(-1.0) + (1.0 - W.Theta(1.0)), WithinRel(2.0 * std::exp(-1.0) / W.K(), 1e-12));
    CHECK_THROWS_AS(build_weights(0.6, testing::kBc51), DomainError);
    // The discrete φ stays monotone only for κ below ≈ 0.166.
    CHECK(W.min_dphi() >= 0.0);
    CHECK_NOTHROW(build_weights(0.15, testing::kBc51));
    CHECK_THROWS_AS(build_weights(0.2, testing::kBc51), ConstructionError);
}

TEST_CASE("bootstrap thresholds", "[diagnostics]") {
    BootstrapThresholds th{kNu, testing::kBc51};
    CHECK(th.improved_stronger());
}

TEST_CASE("potential remainder is cancellation free", "[diagnostics]") {
    const double p = 5.1;
    // Q = 1: |1+e|^{p+1} - 1 - (p+1)e = (p+1)p e²/2 + (p+1)p(p-1) e³/6 + O(e⁴)
    for (double e : {1e-4, 1e-6, 1e-8}) {
        double lead = (p + 1.0) * p * e * e / 2.0 * (1.0 + (p - 1.0) * e / 3.0);
        CHECK_THAT(potential_remainder(1.0, e, p), WithinRel(lead, 1e-6));
    }
    const double e = 0.1;
    double direct = std::pow(1.1, p + 1.0) - 1.0 - (p + 1.0) * e;
    CHECK_THAT(potential_remainder(1.0, e, p), WithinRel(direct, 1e-12));
    CHECK_THAT(potential_remainder(0.0, 0.2, p), WithinRel(std::pow(0.2, p + 1.0), 1e-12));
}

TEST_CASE("Lyapunov functional", "[diagnostics]") {
    const auto& s = testing::reference_setup();
    const auto& g = s.grid;
    auto W = build_weights(0.1, s.b_c());
    GridFunction Q0 = s.family.Q(s.b_c());
    GridFunction zero(g);
    CHECK(lyapunov_F(zero, Q0, 5.1, W) == 0.0);
    GridFunction e = GridFunction::from(g, [](double y) { return 1e-3 * std::exp(-y * y); });
    for (double k : {1e-2, 1e-4}) {
        auto ek = e * k;
        CHECK_THAT(lyapunov_F(ek, Q0, 5.1, W) / lyapunov_F_quadratic(ek, Q0, 5.1, W), WithinAbs(1.0, 1e-3));
    }
    CHECK(local_norm_N(e, W) > 0.0);
}

TEST_CASE("synthetic zero series gives exact zero increments", "[diagnostics]") {
    std::vector<DiagnosticsRecord> series(20);
    for (std::size_t k = 0; k < series.size(); ++k) {
        series[k].s = 0.5 * static_cast<double>(k);
        series[k].t = 0.1 * static_cast<double>(k);
        series[k].lambda = 1.0 - 0.01 * static_cast<double>(k);
    }
    for (double v : monotonicity_lhs(series, 1.0)) CHECK(v == 0.0);
    auto rep = monotonicity_audit(series, testing::kBc51, 5.1);
    CHECK(rep.fraction_passed == 1.0);
    CHECK(rep.C_fit == 0.0);
    auto boot = bootstrap_audit(series, BootstrapThresholds{kNu, testing::kBc51});
    CHECK(boot.trapped);
    CHECK(boot.bounds.size() == 4);
}

TEST_CASE("bootstrap audit flags a violating series", "[diagnostics]") {
    const double bc = testing::kBc51;
    BootstrapThresholds th{kNu, bc};
    std::vector<DiagnosticsRecord> series(3);
    for (std::size_t k = 0; k < 3; ++k) series[k].s = static_cast<double>(k);
    series[1].b_tilde = 200.0 * th.bb_b_tilde();
    auto boot = bootstrap_audit(series, th);
    CHECK_FALSE(boot.bounds.at("b_tilde").passed);
    CHECK_THAT(boot.bounds.at("b_tilde").fitted_constant, WithinRel(200.0, 1e-12));
    CHECK_FALSE(boot.trapped);
}
