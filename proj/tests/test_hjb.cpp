#include <catch2/catch_amalgamated.hpp>

#include "divbar/hjb.hpp"
#include "oracles.hpp"

#include <cmath>
#include <memory>
#include <random>

using namespace divbar;
using Catch::Approx;

namespace {

ModelParams base_params() {
    return {1.0, 1.0, 2.0, 0.1, 0.2, 1.0};
}

ModelParams wide_claims_params() { // interior retention region near the wall
    ModelParams p = base_params();
    p.sigma2 = 2.0;
    return p;
}

std::shared_ptr<const HjbSolution> base_solution() {
    static auto sol =
        std::make_shared<const HjbSolution>(solve_hjb(base_params()));
    return sol;
}

// residual of the full equation with the inner maximum taken in closed form
double residual(const ModelParams& p, double x, double h, double hp, double hpp) {
    double best = -1e300;
    for (double a : {0.0, 1.0}) {
        best = std::max(best, 0.5 * (p.sigma2 * a * a + p.sigmap2 * x * x) * hpp +
                                  (p.mu * a + p.r * x) * hp - p.c * h);
    }
    if (hpp < 0.0) {
        const double av = -p.mu * hp / (p.sigma2 * hpp);
        if (av > 0.0 && av < 1.0)
            best = std::max(best, 0.5 * (p.sigma2 * av * av + p.sigmap2 * x * x) * hpp +
                                      (p.mu * av + p.r * x) * hp - p.c * h);
    }
    return best;
}

} // namespace

TEST_CASE("curvature is negative at the wall where the kernel vanishes",
          "[hjb]") {
    const auto [s, a] = hjb_curvature(base_params(), 1.0, 0.0, 1.0);
    CHECK(s < 0.0);
    CHECK(a == 1.0); // the linear-in-retention gain dominates at these rates
    CHECK(s == Approx(-11.0 / 15.0).epsilon(1e-12));
}

TEST_CASE("curvature zeroes the maximized generator", "[hjb][property]") {
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        ModelParams p = base_params();
        p.sigma2 = 0.5 + 2.0 * unit(gen);
        p.sigmap2 = 0.5 + 3.0 * unit(gen);
        const double x = 1.0 + 9.0 * unit(gen);
        const double h = 5.0 * unit(gen);
        const double hp = 0.1 + 2.0 * unit(gen);
        const auto [s, a] = hjb_curvature(p, x, h, hp);
        const double scale = std::max(std::abs(p.c * h), (p.mu + p.r * x) * hp);
        CHECK(std::abs(residual(p, x, h, hp, s)) <= 1e-12 * scale);
        CHECK(a >= 0.0);
        CHECK(a <= 1.0);
    }
}

TEST_CASE("curvature matches the grid-search oracle", "[hjb][oracle]") {
    const auto sol = base_solution();
    const double h5 = sol->h_at(5.0), hp5 = sol->hp_at(5.0);
    const double s_oracle = oracles::curvature_bisect(base_params(), 5.0, h5, hp5);
    const double s_impl = hjb_curvature(base_params(), 5.0, h5, hp5).curvature;
    CHECK(s_impl == Approx(s_oracle).margin(1e-8));

    // interior maximizer at the wall of the wide-claims model
    const ModelParams p2 = wide_claims_params();
    const double s2_oracle = oracles::curvature_bisect(p2, 1.0, 0.0, 1.0);
    const auto [s2, a2] = hjb_curvature(p2, 1.0, 0.0, 1.0);
    CHECK(s2 == Approx(s2_oracle).margin(5e-7));
    CHECK(a2 == Approx(0.904988).margin(1e-4));
}

TEST_CASE("curvature rejects bad states", "[hjb]") {
    CHECK_THROWS_AS(hjb_curvature(base_params(), 5.0, 1.0, 0.0),
                    invalid_state_error);
    CHECK_THROWS_AS(hjb_curvature(base_params(), 5.0, 1.0, -1.0),
                    invalid_state_error);
    CHECK_THROWS_AS(hjb_curvature(base_params(), 0.5, 1.0, 1.0),
                    std::domain_error);
    // no root when both diffusion terms degenerate at the wall
    ModelParams flat = base_params();
    flat.sigmap2 = 0.0;
    flat.r = 0.0;
    CHECK_THROWS_AS(hjb_curvature(flat, 1.0, 0.0, 1.0), numerical_error);
}

TEST_CASE("solve produces the concave-then-convex kernel", "[hjb]") {
    const auto sol = base_solution();
    CHECK(sol->xs.front() == 1.0);
    CHECK(sol->hs.front() == 0.0);
    CHECK(sol->hps.front() == 1.0);

    REQUIRE(sol->b0_index > 2);
    for (std::size_t i = 0; i < sol->xs.size(); ++i) CHECK(sol->hps[i] > 0.0);
    for (std::size_t i = 0; i + 1 < sol->b0_index; ++i)
        CHECK(sol->hpps[i] < 0.0);
    CHECK(std::abs(sol->hpps[sol->b0_index]) <=
          1e-10 * std::abs(sol->hpps.front()) + 1e-13);
    CHECK(sol->b0 > sol->x0);
    CHECK(sol->x0 >= sol->params.m);

    // frozen baseline for this parameter set
    CHECK(sol->b0 == Approx(10.14623727).epsilon(1e-6));
    CHECK(sol->lambda_hat * sol->x0 == Approx(1.0).margin(1e-6));
}

TEST_CASE("solve satisfies the equation at every node", "[hjb]") {
    const auto sol = base_solution();
    const ModelParams p = base_params();
    for (std::size_t i = 0; i < sol->xs.size(); ++i) {
        const double res =
            residual(p, sol->xs[i], sol->hs[i], sol->hps[i], sol->hpps[i]);
        CHECK(std::abs(res) <= 1e-8 * std::max(1.0, p.c * sol->hs[i]));
    }
}

TEST_CASE("free boundary matches the dense policy-iteration oracle",
          "[hjb][oracle]") {
    const auto sol = base_solution();
    const auto pi = oracles::policy_iteration_b0(base_params(),
                                                 4.0 * sol->b0, 40000);
    CHECK(std::abs(pi.b0 - sol->b0) <= 1e-3 * sol->b0);

    const HjbSolution wide = solve_hjb(wide_claims_params());
    const auto pi2 = oracles::policy_iteration_b0(wide_claims_params(),
                                                  4.0 * wide.b0, 40000);
    CHECK(std::abs(pi2.b0 - wide.b0) <= 1e-3 * wide.b0);
}

TEST_CASE("wide-claims model has an interior switch point", "[hjb]") {
    const HjbSolution sol = solve_hjb(wide_claims_params());
    CHECK(sol.as.front() == Approx(0.904988).margin(2e-4));
    CHECK(sol.x0 > sol.params.m);
    CHECK(sol.x0 < sol.b0);
    // retention rises monotonically to one
    for (std::size_t i = 1; i <= sol.b0_index; ++i)
        CHECK(sol.as[i] >= sol.as[i - 1] - 1e-9);
    // the switch-point identity holds to the measured policy nonlinearity
    CHECK(std::abs(sol.lambda_hat * sol.x0 - 1.0) <=
          2.0 * sol.policy.linearity_dev + 1e-6);
    CHECK(sol.policy.linearity_dev < 0.05);
}

TEST_CASE("solution is homogeneous of degree one in the slope", "[hjb]") {
    const auto sol = base_solution();
    SolverOptions opts;
    opts.hp0 = 7.0;
    const HjbSolution scaled = solve_hjb(base_params(), opts);

    CHECK(std::abs(scaled.b0 - sol->b0) <= 1e-8 * sol->b0);
    CHECK(std::abs(scaled.x0 - sol->x0) <= 1e-8 * std::max(1.0, sol->x0));
    for (double x : {1.5, 3.0, 7.0, 10.0}) {
        CHECK(scaled.hp_at(x) / scaled.hps.front() ==
              Approx(sol->hp_at(x)).epsilon(1e-8));
        const double a1 = sol->policy.retention(x);
        const double a7 = scaled.policy.retention(x);
        CHECK(std::abs(a7 - a1) <= 1e-8);
    }
    for (double b_mult : {1.0, 1.3}) {
        const double b = sol->b0 * b_mult;
        for (double x : {2.0, 5.0, 9.0}) {
            const double f1 = sol->h_at(x) / sol->hp_at(b);
            const double f7 = scaled.h_at(x) / scaled.hp_at(b);
            CHECK(f7 == Approx(f1).epsilon(1e-8));
        }
    }
}

TEST_CASE("solver reports an unreachable free boundary", "[hjb]") {
    SolverOptions opts;
    opts.x_max = 5.0; // the curvature stays negative this early
    CHECK_THROWS_AS(solve_hjb(base_params(), opts), numerical_error);
    CHECK_THROWS_WITH(solve_hjb(base_params(), opts),
                      Catch::Matchers::ContainsSubstring("free boundary"));
}

TEST_CASE("solver requires a positive wall", "[hjb]") {
    ModelParams p = base_params();
    p.m = 0.0;
    CHECK_THROWS_AS(solve_hjb(p), std::domain_error);
    p = base_params();
    p.mu = -1.0;
    CHECK_THROWS_AS(solve_hjb(p), std::domain_error);
}

TEST_CASE("barrier value function follows the three-piece form", "[hjb]") {
    const auto sol = base_solution();
    const double b = 1.2 * sol->b0;
    const ValueFunction f = build_value(sol, b);

    CHECK(f.value(0.5) == 0.0);
    CHECK(f.value(1.0) == 0.0); // kernel vanishes at the wall
    CHECK(f.value(b + 1.0) - f.value(b) == Approx(1.0).margin(1e-12));
    CHECK(f.derivative(b + 0.5) == 1.0);

    double prev = 0.0;
    for (double x = 1.0; x < b + 3.0; x += 0.25) {
        const double v = f.value(x);
        CHECK(v >= prev - 1e-12);
        prev = v;
    }

    CHECK_THROWS_AS(build_value(sol, 0.2), std::domain_error);
    CHECK(build_value(sol, 0.5 * sol->b0).barrier() == sol->b0); // remapped
}

TEST_CASE("value functions at two barriers differ by the normalizer ratio",
          "[hjb]") {
    const auto sol = base_solution();
    const double b_star = 1.5 * sol->b0;
    const ValueFunction f0 = build_value(sol, sol->b0);
    const ValueFunction fs = build_value(sol, b_star);
    const double x = 0.5 * (1.0 + sol->b0);
    const double ratio = fs.value(x) / f0.value(x);
    CHECK(ratio ==
          Approx(sol->hp_at(sol->b0) / sol->hp_at(b_star)).margin(1e-12));
    CHECK(ratio < 1.0);
}

TEST_CASE("value ratio telescopes and orders barriers", "[hjb]") {
    const auto sol = base_solution();
    const double b0 = sol->b0;
    CHECK(value_ratio(*sol, b0, b0) == 1.0);

    const double b1 = 1.2 * b0, b2 = 1.5 * b0, b3 = 2.0 * b0;
    CHECK(value_ratio(*sol, b1, b2) * value_ratio(*sol, b2, b3) ==
          Approx(value_ratio(*sol, b1, b3)).margin(1e-12));

    // imposing a higher barrier costs value: V(x, b*)/V(x, b0) < 1
    CHECK(value_ratio(*sol, b2, b0) < 1.0);
    // equivalently the normalizer grows with the barrier
    CHECK(sol->hp_at(b2) > sol->hp_at(b0));
    CHECK_THROWS_AS(value_ratio(*sol, 0.5 * b0, b0), std::domain_error);
}

TEST_CASE("value decreases as the barrier rises", "[hjb][property]") {
    const auto sol = base_solution();
    const double x = 4.0;
    double prev = 1e300;
    for (double mult = 1.0; mult <= 2.5; mult += 0.25) {
        const double v = build_value(sol, mult * sol->b0).value(x);
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("generator of the barrier value stays nonpositive",
          "[hjb][property]") {
    const auto sol = base_solution();
    const ModelParams p = base_params();
    for (double b_mult : {1.0, 1.3}) {
        const double b = sol->b0 * b_mult;
        const ValueFunction f = build_value(sol, b);
        const double hp_b = sol->hp_at(b);

        // below the barrier: solver nodes carry exact derivatives
        for (std::size_t i = 0; i < sol->xs.size() && sol->xs[i] <= b; i += 7) {
            const double tol =
                1e-8 * std::max(1.0, p.c * sol->hs[i] / hp_b) + 1e-12;
            for (int k = 0; k <= 100; ++k) {
                const double a = k / 100.0;
                const double lf =
                    0.5 * (p.sigma2 * a * a + p.sigmap2 * sol->xs[i] * sol->xs[i]) *
                        sol->hpps[i] / hp_b +
                    (p.mu * a + p.r * sol->xs[i]) * sol->hps[i] / hp_b -
                    p.c * sol->hs[i] / hp_b;
                CHECK(lf <= tol);
            }
        }
        // above the barrier the value is linear with unit slope
        for (double x = b; x <= b + 5.0; x += 0.5) {
            for (int k = 0; k <= 100; ++k) {
                const double a = k / 100.0;
                const double lf = (p.mu * a + p.r * x) - p.c * f.value(x);
                CHECK(lf <= 1e-8 * std::max(1.0, p.c * f.value(x)) + 1e-9);
            }
        }
    }
}

TEST_CASE("zero-floor policy solves the exponent equation", "[hjb]") {
    ModelParams p = base_params();
    p.m = 0.0;
    const PolicyCurve z = zero_floor_policy(p);
    const double g = z.alpha_hat;
    CHECK(g > 0.0);
    CHECK(g < 1.0);
    const double q = p.mu * p.mu * g / (2.0 * p.sigma2 * (1.0 - g)) -
                     0.5 * p.sigmap2 * g * (1.0 - g) + p.r * g - p.c;
    CHECK(std::abs(q) <= 1e-12);
    CHECK(z.slope * z.switch_point == Approx(1.0).margin(1e-12));
    CHECK(g == Approx(0.44597343).margin(1e-6));

    // the fitted slope of a barely-positive wall approaches the closed form
    ModelParams tiny = base_params();
    tiny.m = 1e-3;
    const HjbSolution sol = solve_hjb(tiny);
    CHECK(sol.lambda_hat == Approx(z.slope).epsilon(0.02));
    CHECK(sol.x0 == Approx(z.switch_point).epsilon(0.02));
}
