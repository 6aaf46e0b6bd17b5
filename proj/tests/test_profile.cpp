#include <catch_amalgamated.hpp>

#include <cmath>

#include "fixtures.hpp"
#include "gkdv/profile.hpp"

using namespace gkdv;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("validated exponent range", "[profile]") {
    CHECK_THROWS_AS(ProfileSolver(7.0), DomainError);
    CHECK_THROWS_AS(ProfileSolver(4.9), DomainError);
    CHECK_THROWS_AS(find_critical_b(ProfileSolver(5.0)), DomainError);
    CHECK_THAT(gamma_critical(5.1), WithinAbs(-1.0 + 2.0 / 4.1, 1e-15));
    CHECK_THAT(slope_constant(5.0), WithinRel(0.228473, 1e-5));
}

TEST_CASE("b = 0 returns the ground state", "[profile]") {
    ProfileSolver S(5.0);
    auto s = S.ground();
    CHECK(s.gamma == -0.5);
    CHECK_THAT(energy(s.v, 5.0), WithinAbs(0.0, 1e-9));
    CHECK(testing::max_abs_diff(s.v, S.Q()) == 0.0);
}

TEST_CASE("cubic root helper", "[profile]") {
    // r³ - a r + c0 with a = 7, c0 = 6: roots 1, 2, -3
    auto r = detail::cubic_real_roots(7.0, 6.0);
    REQUIRE(r.size() == 3);
    std::sort(r.begin(), r.end());
    CHECK_THAT(r[0], WithinAbs(-3.0, 1e-12));
    CHECK_THAT(r[1], WithinAbs(1.0, 1e-12));
    CHECK_THAT(r[2], WithinAbs(2.0, 1e-12));
}

TEST_CASE("critical eigenvalue at p = 5.1", "[profile]") {
    const auto& s = testing::reference_setup();
    const auto& r = s.eig;
    CHECK_THAT(r.b_c, WithinRel(testing::kBc51, 1e-6));
    CHECK_THAT(r.gamma_at_bc, WithinAbs(gamma_critical(5.1), 1e-8));
    CHECK(r.root_mismatch < 0.02);
    CHECK(r.root_mismatch < 1e-5);
    CHECK(std::abs(r.slope_estimate / slope_constant(5.0) - 1.0) < 0.10);
    CHECK_THAT(r.dgamma_db, WithinRel(-0.55610, 1e-4));
    const auto& c = s.ctx;
    CHECK(std::abs(r.dgamma_db / (-c.l1_Q * c.l1_Q / (8.0 * c.mass_Q)) - 1.0) < 0.15);
    CHECK(r.at_bc.ode_residual < 1e-8);
    CHECK(r.at_bc.ortho_residual < 1e-12);
    CHECK_THAT(r.at_bc.tail_amplitude, WithinRel(0.03834, 2e-3));
}

TEST_CASE("profile tails", "[profile]") {
    const auto& r = testing::reference_setup().eig;
    auto ta = tail_audit(r.at_bc);
    CHECK_THAT(ta.at("right_exponential"), WithinAbs(1.0, 0.01));
    CHECK(ta.at("left_tail_k0") < 10.0);
    CHECK(ta.at("left_tail_k1") < 10.0);
    // γ decreases along b and v stays positive.
    const auto& s = testing::reference_setup();
    ProfileSolver S(5.1, s.grid);
    auto up = S.solve(r.b_c * 1.05, &r.at_bc);
    CHECK(up.gamma < r.gamma_at_bc);
    CHECK_THAT((up.gamma - r.gamma_at_bc) / (0.05 * r.b_c), WithinRel(r.dgamma_db, 0.05));
}
