#include <catch2/catch_amalgamated.hpp>

#include "divbar/bounds.hpp"
#include "divbar/calibrate.hpp"
#include "divbar/montecarlo.hpp"

#include <cmath>
#include <memory>

using namespace divbar;
using Catch::Approx;

namespace {

ModelParams base_params() {
    return {1.0, 1.0, 2.0, 0.1, 0.2, 1.0};
}

std::shared_ptr<const HjbSolution> base_solution() {
    static auto sol =
        std::make_shared<const HjbSolution>(solve_hjb(base_params()));
    return sol;
}

CalOptions fast_opts() {
    CalOptions o;
    o.pde.nx = 400;
    o.pde.nt = 400;
    o.pde.tol = 1e-4;
    return o;
}

} // namespace

TEST_CASE("huge risk budgets leave the free boundary in charge", "[cal]") {
    const RegimeDecision d = decide_regime(base_params(), *base_solution(),
                                           {0.999999, 1.0}, fast_opts());
    CHECK(d.regime == Regime::Unconstrained);
    // frozen baseline for the start-at-boundary ruin probability
    CHECK(d.psi_b0 == Approx(0.34786525).margin(2e-4));
}

TEST_CASE("regime decision agrees with the simulated start-at-boundary ruin",
          "[cal][mc]") {
    const auto sol = base_solution();
    const SolvencyTarget target{0.05, 1.0};
    const RegimeDecision d =
        decide_regime(base_params(), *sol, target, fast_opts());

    SimConfig mc;
    mc.paths = 40000;
    mc.dt = 1e-3;
    mc.horizon = 1.0;
    mc.seed = 808;
    mc.initial_reserve = sol->b0;
    mc.barrier = sol->b0;
    const SimResult r = estimate_ruin(base_params(), sol->policy, mc);
    // the estimate sits far from the target, so both routes must classify
    // the same way
    REQUIRE(std::abs(r.ruin_prob - target.epsilon) >= 3.0 * r.ruin_se);
    const Regime mc_regime = r.ruin_prob <= target.epsilon
                                 ? Regime::Unconstrained
                                 : Regime::Constrained;
    CHECK(d.regime == mc_regime);
    CHECK(std::abs(r.ruin_prob - d.psi_b0) <= 3.0 * r.ruin_se);
}

TEST_CASE("targets below the closed-form floor force the constrained regime",
          "[cal]") {
    const auto sol = base_solution();
    const double floor =
        ruin_lower_bound({sol->b0, 1.0, sol->lambda_hat, base_params()});
    CHECK(floor > 0.0);
    const RegimeDecision d = decide_regime(base_params(), *sol,
                                           {0.5 * floor, 1.0}, fast_opts());
    CHECK(d.regime == Regime::Constrained);
}

TEST_CASE("unconstrained calibration returns the free boundary exactly",
          "[cal]") {
    const auto sol = base_solution();
    const CalibrationResult res =
        calibrate(base_params(), *sol, {0.5, 1.0}, fast_opts());
    CHECK(res.regime == Regime::Unconstrained);
    CHECK(res.barrier == sol->b0);
    CHECK(res.value_ratio == 1.0);
    CHECK(res.achieved_ruin <= 0.5);
}

TEST_CASE("constrained calibration pins the ruin target", "[cal][slow]") {
    const auto sol = base_solution();
    CalOptions opts; // full default accuracy
    const CalibrationResult res =
        calibrate(base_params(), *sol, {0.1, 1.0}, opts);

    CHECK(res.regime == Regime::Constrained);
    CHECK(res.barrier >= sol->b0);
    CHECK(std::abs(res.achieved_ruin - 0.1) <= 1e-4);
    CHECK(res.value_ratio < 1.0);
    CHECK(res.value_ratio > 0.9);
    CHECK(res.barrier == Approx(28.0526).epsilon(5e-4)); // frozen baseline

    // the bisection trace monotonically tightens a valid bracket
    double prev_width = 1e300;
    for (const auto& step : res.trace) {
        const double width = step.b_hi - step.b_lo;
        CHECK(width < prev_width);
        CHECK(step.b_mid > step.b_lo);
        CHECK(step.b_mid < step.b_hi);
        prev_width = width;
    }
    CHECK(res.bracket_hi - res.bracket_lo <= 1e-6 * sol->b0 + 1e-12);

    // idempotence: the achieved ruin classifies as meeting the target
    CHECK(res.achieved_ruin <= 0.1 + 1e-4);
}

TEST_CASE("unreachable targets fail with the cap diagnostic", "[cal]") {
    CalOptions opts = fast_opts();
    opts.b_cap_mult = 4.0;
    CHECK_THROWS_AS(
        calibrate(base_params(), *base_solution(), {1e-9, 1.0}, opts),
        numerical_error);
    CHECK_THROWS_WITH(
        calibrate(base_params(), *base_solution(), {1e-9, 1.0}, opts),
        Catch::Matchers::ContainsSubstring("unattainable"));
}

TEST_CASE("risk curve declines and flags bad grids", "[cal]") {
    const auto pts = b_of_epsilon_curve(base_params(), *base_solution(), 1.0,
                                        {0.1, 0.2, 0.35}, fast_opts());
    REQUIRE(pts.size() == 3);
    for (const auto& pt : pts) REQUIRE(pt.barrier.has_value());
    CHECK(*pts[0].barrier >= *pts[1].barrier);
    CHECK(*pts[1].barrier >= *pts[2].barrier);

    CHECK_THROWS_AS(b_of_epsilon_curve(base_params(), *base_solution(), 1.0,
                                       {0.2, 0.1}, fast_opts()),
                    std::domain_error);
    CHECK_THROWS_AS(b_of_epsilon_curve(base_params(), *base_solution(), 1.0,
                                       {0.1, 1.2}, fast_opts()),
                    std::domain_error);
}

TEST_CASE("bisection guard retries one noisy comparison and aborts on two",
          "[cal]") {
    CalOptions opts;
    opts.tol_cal = 1e-4;
    opts.rel_b_tol = 1e-9;

    // transient noise at the first midpoint, clean on the refined retry
    int calls = 0;
    auto noisy_once = [&calls](double b, int level) {
        ++calls;
        const double clean = 1.2 / (1.0 + b);
        if (level == 0 && b > 11.9 && b < 12.1) return clean + 0.5;
        return clean;
    };
    const CalibrationResult ok =
        detail::bisect_barrier(noisy_once, 1.0, 0.6, 0.1, opts);
    CHECK(ok.barrier == Approx(11.0).margin(1e-4)); // root of 1.2/(1+b) = 0.1
    CHECK(std::abs(ok.achieved_ruin - 0.1) <= 1e-4);

    // persistent contradictions: the second one aborts
    int abort_calls = 0;
    auto broken = [&abort_calls](double b, int) {
        ++abort_calls;
        if (abort_calls <= 4) return 1.2 / (1.0 + b); // bracketing phase
        return 10.0 + abort_calls;                    // impossible values
    };
    CHECK_THROWS_AS(detail::bisect_barrier(broken, 1.0, 0.6, 0.1, opts),
                    numerical_error);
}

TEST_CASE("figure-style root finds the no-floor barrier", "[cal]") {
    const auto sol = base_solution();
    CalOptions opts = fast_opts();
    const double b = barrier_for_ruin_level(base_params(), sol->policy, 1.0,
                                            0.2, opts);
    const double check = ruin_at_barrier_info(base_params(), sol->policy, b,
                                              1.0, opts.pde)
                             .psi;
    CHECK(check == Approx(0.2).margin(2e-3));

    // generous risk budgets sit below the free boundary: no flooring here
    const double loose = barrier_for_ruin_level(base_params(), sol->policy,
                                                1.0, 0.6, opts);
    CHECK(loose < sol->b0);
}
