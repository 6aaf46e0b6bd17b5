#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "gkdv/grid.hpp"

using namespace gkdv;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("grid construction validates its range", "[grid]") {
    CHECK_THROWS_AS(Grid(1.0, 0.0, 64), DomainError);
    CHECK_THROWS_AS(Grid(0.0, 1.0, 8), DomainError);
    Grid g(-2.0, 2.0, 401);
    CHECK_THAT(g.h(), WithinAbs(0.01, 1e-15));
    CHECK_THAT(g.node(200), WithinAbs(0.0, 1e-15));
    Grid w = Grid::with_spacing(-30.0, 30.0, 0.026);
    CHECK(w.h() <= 0.026);
}

TEST_CASE("grid functions reject non-finite values and mismatched grids", "[grid]") {
    Grid g(0.0, 1.0, 32), h(0.0, 2.0, 32);
    std::vector<double> v(32, 0.0);
    v[3] = std::nan("");
    CHECK_THROWS_AS(GridFunction(g, v), NonFiniteError);
    CHECK_THROWS_AS(GridFunction(g, std::vector<double>(31, 0.0)), DomainError);
    CHECK_THROWS_AS(GridFunction(g) + GridFunction(h), GridMismatch);
}

TEST_CASE("derivatives are high order on smooth data", "[grid]") {
    Grid g(-10.0, 10.0, 2048);
    auto s = GridFunction::from(g, [](double y) { return std::sin(y); });
    auto d1 = derivative(s, 1), d2 = derivative(s, 2), d3 = derivative(s, 3);
    double e1 = 0.0, e2 = 0.0, e3 = 0.0;
    for (std::size_t i = 0; i < g.n; ++i) {
        double y = g.node(i);
        e1 = std::max(e1, std::abs(d1[i] - std::cos(y)));
        e2 = std::max(e2, std::abs(d2[i] + std::sin(y)));
        e3 = std::max(e3, std::abs(d3[i] + std::cos(y)));
    }
    CHECK(e1 < 1e-10);
    CHECK(e2 < 1e-8);
    CHECK(e3 < 1e-6);
    CHECK_THROWS_AS(stencil(4), DomainError);
    CHECK_THROWS_AS(stencil(1, 3), DomainError);
}

TEST_CASE("stencil rows annihilate constants", "[grid]") {
    const auto& st = stencil(3);
    for (std::size_t i : {0ul, 1ul, 5ul, 50ul, 98ul, 99ul}) {
        double sum = 0.0;
        for (auto [j, w] : st.row(i, 100, 0.1)) sum += w;
        CHECK_THAT(sum, WithinAbs(0.0, 1e-6));
    }
}

TEST_CASE("quadrature reproduces classical integrals", "[grid]") {
    Grid g(-10.0, 10.0, 2048);
    auto ga = GridFunction::from(g, [](double y) { return std::exp(-y * y); });
    CHECK_THAT(integrate(ga), WithinAbs(std::sqrt(std::numbers::pi), 1e-13));
    Grid g2(-20.0, 20.0, 2048);
    auto se = GridFunction::from(g2, [](double y) { return 1.0 / std::cosh(2.0 * y); });
    CHECK_THAT(integrate(se), WithinAbs(std::numbers::pi / 2.0, 1e-13));
    CHECK_THAT(norm_l2(ga), WithinRel(std::pow(std::numbers::pi / 2.0, 0.25), 1e-12));
    CHECK_THAT(norm_lq(ga, 4.0), WithinRel(std::pow(std::numbers::pi / 4.0, 0.125), 1e-12));
}

TEST_CASE("interpolation is exact on low-degree polynomials", "[grid]") {
    Grid g(-1.0, 1.0, 65);
    auto f = GridFunction::from(g, [](double y) { return 1.0 + y - 2.0 * y * y * y + y * y * y * y * y; });
    Interpolator I(g, 8);
    for (double y : {-0.999, -0.3217, 0.0, 0.51, 0.9999}) {
        double exact = 1.0 + y - 2.0 * y * y * y + std::pow(y, 5);
        CHECK_THAT(I(f.values(), y), WithinAbs(exact, 1e-13));
    }
    CHECK(I(f.values(), 1.5, -7.0) == -7.0);
}

TEST_CASE("bracketed root finding", "[grid]") {
    CHECK_THAT(find_root([](double x) { return x * x - 2.0; }, 1.0, 2.0, 1e-12), WithinAbs(std::sqrt(2.0), 1e-12));
    CHECK_THROWS_AS(find_root([](double x) { return x * x + 1.0; }, -1.0, 2.0, 1e-12), BracketError);
}
