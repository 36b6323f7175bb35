#include <catch2/catch_amalgamated.hpp>

#include "divbar/bounds.hpp"

#include <cmath>

using namespace divbar;
using Catch::Approx;

TEST_CASE("normal cdf hits tabulated anchors", "[bounds]") {
    CHECK(normal_cdf(0.0) == 0.5);
    CHECK(normal_cdf(1.96) > 0.9749);
    CHECK(normal_cdf(1.96) < 0.9751);
    CHECK(normal_cdf(1.0) == Approx(0.8413447460685429).margin(1e-12));
    CHECK(normal_cdf(2.0) == Approx(0.9772498680518208).margin(1e-12));
    CHECK(normal_cdf(-3.0) == Approx(1.0 - 0.9986501019683699).margin(1e-12));
}

TEST_CASE("normal cdf symmetry", "[bounds][property]") {
    for (double x = -8.0; x <= 8.0; x += 0.173)
        CHECK(normal_cdf(x) + normal_cdf(-x) == Approx(1.0).margin(1e-14));
}

namespace {
BoundInput base_input(double b) {
    BoundInput in;
    in.b = b;
    in.T = 1.0;
    in.lambda = 1.0;
    in.p = {1.0, 1.0, 2.0, 0.1, 0.2, 1.0};
    return in;
}
} // namespace

TEST_CASE("bound at the wall reduces to the pure drift penalty", "[bounds]") {
    // b = m makes the tail factor 4*(1/2)^2 = 1.
    BoundInput in = base_input(1.0);
    const double expect =
        std::exp(-std::pow(in.lambda * in.p.mu + in.p.r, 2) * in.T / in.p.sigmap2);
    CHECK(ruin_lower_bound(in) == Approx(expect).epsilon(1e-14));

    in.p.r = 0.0;
    CHECK(ruin_lower_bound(in) == Approx(std::exp(-0.5)).epsilon(1e-12));
    CHECK(ruin_lower_bound(in) == Approx(0.6065306597126334).epsilon(1e-12));
}

TEST_CASE("bound stays positive and monotone on the working range",
          "[bounds][property]") {
    // positive for every finite barrier in exact arithmetic; the squared
    // normal tail leaves double range near (b-m)/sqrt(kappa T) ~ 27, so the
    // sweep stays below that
    double prev = 2.0;
    for (double b = 1.0; b <= 40.0; b += 0.5) {
        const double v = ruin_lower_bound(base_input(b));
        CHECK(v > 0.0);
        CHECK(v <= 1.0);
        CHECK(v <= prev + 1e-16); // decreasing in the barrier
        prev = v;
    }
    // increasing in the minimum reserve
    BoundInput lo = base_input(5.0), hi = base_input(5.0);
    hi.p.m = 2.0;
    CHECK(ruin_lower_bound(hi) > ruin_lower_bound(lo));
    // increasing in the investment volatility
    BoundInput v1 = base_input(5.0), v2 = base_input(5.0);
    v2.p.sigmap2 = 3.0;
    CHECK(ruin_lower_bound(v2) > ruin_lower_bound(v1));
}

TEST_CASE("bound rejects the degenerate configurations", "[bounds]") {
    BoundInput in = base_input(5.0);
    in.p.sigmap2 = 0.0;
    CHECK_THROWS_AS(ruin_lower_bound(in), std::domain_error);
    in = base_input(5.0);
    in.p.m = 0.0;
    CHECK_THROWS_AS(ruin_lower_bound(in), std::domain_error);
    in = base_input(0.5); // barrier below the wall
    CHECK_THROWS_AS(ruin_lower_bound(in), std::domain_error);
    in = base_input(5.0);
    in.lambda = 0.0;
    CHECK_THROWS_AS(ruin_lower_bound(in), std::domain_error);
}

TEST_CASE("ruin probabilities dominate the closed-form bound", "[bounds][pde]") {
    const ModelParams p{1.0, 1.0, 2.0, 0.1, 0.2, 1.0};
    const HjbSolution sol = solve_hjb(p);
    PdeOptions pde;
    pde.nx = 200;
    pde.nt = 200;
    pde.tol = 1e-4;
    const BoundCheckReport rep = check_bound(p, sol, {1.5, 2.0, 5.0}, 1.0, pde);
    REQUIRE(rep.rows.size() == 3);
    CHECK(rep.all_pass);
    for (const auto& row : rep.rows) CHECK(row.margin >= -rep.tol);
    // the bound itself decreases along the scanned barriers
    CHECK(rep.rows[0].bound >= rep.rows[1].bound);
    CHECK(rep.rows[1].bound >= rep.rows[2].bound);
}
