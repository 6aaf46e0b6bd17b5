#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "gkdv/ground_state.hpp"
#include "gkdv/verify.hpp"

using namespace gkdv;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("scaling index and alpha", "[ground_state]") {
    CHECK_THAT(scaling_index(5.0), WithinAbs(0.0, 1e-15));
    CHECK_THAT(scaling_index(5.1), WithinAbs(0.5 - 2.0 / 4.1, 1e-15));
    CHECK_THAT(scaling_alpha(5.0), WithinAbs(0.5, 1e-15));
}

TEST_CASE("closed form solves the ground-state ODE", "[ground_state]") {
    const Grid g = verify::ground_grid();
    for (double p : {5.0, 5.05, 5.1, 5.2}) {
        auto c = ground_state(p, g);
        CHECK(c.residual < 1e-8);
        CHECK(verify::kernel_defect(c, false) < 1e-6);
        CHECK(verify::kernel_defect(c, true) < 1e-6);
    }
}

TEST_CASE("ground-state integrals", "[ground_state]") {
    const Grid g = verify::ground_grid();
    // p = 5: Q² = √3 sech(2y), so ∫Q² = √3 π/2.
    auto c5 = ground_state(5.0, g);
    CHECK_THAT(c5.mass_Q, WithinRel(std::sqrt(3.0) * std::numbers::pi / 2.0, 1e-9));
    CHECK_THAT(c5.l1_Q, WithinRel(3.45082181, 1e-7));
    auto c51 = ground_state(5.1, g);
    CHECK_THAT(c51.mass_Q, WithinRel(2.68590227, 1e-7));
    CHECK_THAT(c51.l1_Q, WithinRel(3.42357646, 1e-7));
    CHECK(c51.Qp[g.nearest(0.0)] > c51.Qp[g.nearest(5.0)]);
}

TEST_CASE("coercivity of L under the orthogonality conditions", "[ground_state]") {
    auto c1 = ground_state(5.0, Grid(-30.0, 30.0, 1024));
    auto c2 = ground_state(5.0, Grid(-30.0, 30.0, 2047));
    double e1 = coercivity_constant(LinearizedOperator(c1));
    double e2 = coercivity_constant(LinearizedOperator(c2));
    CHECK_THAT(e1, WithinAbs(0.055643, 5e-6));
    CHECK(std::abs(e2 / e1 - 1.0) < 0.02);
    // Without constraints L has a negative direction.
    CHECK(coercivity_constant(LinearizedOperator(c1), false) < 0.0);
}

TEST_CASE("localized virial form", "[ground_state]") {
    auto c = ground_state(5.0, Grid(-30.0, 30.0, 1024));
    CHECK_THAT(virial_form_min(c, 0.1, 100.0), WithinAbs(0.058681, 5e-6));
    CHECK(virial_form_min(c, 0.1, 200.0) > 0.0);
    CHECK(virial_form_min(c, 0.1, 100.0, {false, true}) < 0.0);
    CHECK_THROWS_AS(virial_form_min(c, 0.1, 50.0), DomainError);
}
