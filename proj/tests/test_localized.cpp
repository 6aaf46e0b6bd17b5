#include <catch_amalgamated.hpp>

#include <cmath>

#include "fixtures.hpp"
#include "gkdv/localized.hpp"

using namespace gkdv;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {
const LocalizedProfile& lp_bc() {
    static LocalizedProfile lp = [] {
        const auto& s = testing::reference_setup();
        ProfileSolver S(5.1, s.grid);
        return build_localized(S, s.eig.at_bc, s.b_c(), s.eig.dgamma_db, s.b_c() / 40.0);
    }();
    return lp;
}
}  // namespace

TEST_CASE("cutoff", "[localized]") {
    CHECK(cutoff_chi0(0.0) == 1.0);
    CHECK(cutoff_chi0(0.99) == 1.0);
    CHECK(cutoff_chi0(2.0) == 0.0);
    CHECK(cutoff_chi0(-2.5) == 0.0);
    CHECK_THAT(cutoff_chi0(1.5), WithinAbs(0.5, 1e-15));
}

TEST_CASE("P_b pairing with Q", "[localized]") {
    const auto& s = testing::reference_setup();
    const auto& c = s.ctx;
    double pairing = inner(lp_bc().Pb, c.Qp);
    CHECK(std::abs(pairing / (c.l1_Q * c.l1_Q / 16.0) - 1.0) < 0.20);
    CHECK_THAT(pairing, WithinRel(0.76146, 1e-3));
    CHECK(b_derivative_decay_constant(lp_bc().Pb, s.b_c()) < 3.0);
}

TEST_CASE("energy of the localized profile at b_c", "[localized]") {
    const double bc = testing::reference_setup().b_c();
    double K = std::abs(lp_bc().energy_Qb) / std::pow(bc, 3);
    CHECK(K <= 10.0);
    CHECK_THAT(K, WithinRel(1.0967, 2e-3));
}

TEST_CASE("profile error structure", "[localized]") {
    const auto& s = testing::reference_setup();
    const double bc = s.b_c();
    ProfileSolver S(5.1, s.grid);
    for (double sgn : {1.0, -1.0}) {
        double bt = sgn * bc * bc;
        auto sol = S.solve(bc + bt, &s.eig.at_bc);
        auto l = build_localized(S, sol, bc, s.eig.dgamma_db, bc / 40.0);
        auto a = app_report(l);
        // Core projection follows C_p b̃ b_c to leading order.
        CHECK(std::abs(a.projection_core / a.expected - 1.0) < 0.05);
        CHECK(a.core_residual < 1e-6);
        CHECK(a.left_shell / (bc * bc) < 10.0);
        CHECK_THAT(c_p_projection(l), WithinAbs(2.0, 0.1));
    }
}

TEST_CASE("family interpolation", "[localized]") {
    const auto& s = testing::reference_setup();
    const double bc = s.b_c();
    const auto& F = s.family;
    CHECK(F.contains(bc));
    CHECK(F.contains(2.0 * bc));
    CHECK_FALSE(F.contains(3.0 * bc));
    ProfileSolver S(5.1, s.grid);
    double b = bc + 0.37 * bc / 40.0;
    auto sol = S.solve(b, &s.eig.at_bc);
    auto Qi = F.Q(b);
    double err = 0.0;
    for (std::size_t i = 0; i < s.grid.n; ++i)
        err = std::max(err, std::abs(Qi[i] - sol.v[i] * cutoff_chi0(bc * s.grid.node(i))));
    CHECK(err < 1e-8);
    CHECK_THAT(F.gamma(bc), WithinAbs(gamma_critical(5.1), 1e-9));
}
