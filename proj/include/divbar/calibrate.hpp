#pragma once

#include "divbar/hjb.hpp"
#include "divbar/model.hpp"
#include "divbar/survival.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace divbar {

enum class Regime { Unconstrained, Constrained };

struct CalOptions {
    double tol_cal = 1e-4;    // accepted |psi~(b*) - epsilon|
    double rel_b_tol = 1e-6;  // bracket width target, relative to b0
    double b_cap_mult = 1e4;  // give up above b_cap_mult * b0
    PdeOptions pde;           // refinement policy for the ruin evaluations
    int max_iters = 200;
};

struct BisectionStep {
    double b_lo = 0.0, b_hi = 0.0;
    double b_mid = 0.0;
    double psi_mid = 0.0;
};

struct CalibrationResult {
    Regime regime = Regime::Unconstrained;
    double barrier = 0.0;      // b0 or b*
    double achieved_ruin = 0.0;
    double epsilon = 0.0;
    double value_ratio = 1.0;  // F_{b*}/F_{b0} = h'(b0)/h'(b*); 1 when unconstrained
    double bracket_lo = 0.0, bracket_hi = 0.0;
    std::vector<BisectionStep> trace;
    int pde_nx = 0, pde_nt = 0; // frozen resolution used by the bisection
};

struct RegimeDecision {
    Regime regime = Regime::Unconstrained;
    double psi_b0 = 0.0;
};

/// Regime split: unconstrained iff the free-boundary barrier
/// already meets the solvency target, psi~(b0) <= epsilon.
RegimeDecision decide_regime(const ModelParams& p, const HjbSolution& sol,
                             const SolvencyTarget& target,
                             const CalOptions& opts = {});

/// Minimal barrier meeting the target: b0 when unconstrained; otherwise the
/// root of the monotone map b -> psi~(b) = epsilon, bracketed by doubling
/// upward from b0 and bisected at a frozen PDE resolution. Returns the left
/// endpoint of the final bracket.
CalibrationResult calibrate(const ModelParams& p, const HjbSolution& sol,
                            const SolvencyTarget& target,
                            const CalOptions& opts = {});

struct CurvePoint {
    double epsilon = 0.0;
    std::optional<double> barrier; // empty when this point failed
    std::string error;
};

/// Calibrated b(epsilon) over a strictly increasing list of risk levels;
/// failed points are flagged, not fatal. Throws if the successful points are
/// not nonincreasing in epsilon.
std::vector<CurvePoint> b_of_epsilon_curve(const ModelParams& p,
                                           const HjbSolution& sol, double T,
                                           const std::vector<double>& eps_list,
                                           const CalOptions& opts = {});

/// Root of psi~(b) = epsilon with no free-boundary floor: the barrier level
/// whose start-at-barrier ruin probability equals epsilon. This is the
/// figure-series object; it involves no discounting anywhere.
double barrier_for_ruin_level(const ModelParams& p, const PolicyCurve& policy,
                              double T, double epsilon,
                              const CalOptions& opts = {});

namespace detail {
/// Bisection core, injectable evaluator: psi(b, refine_level) must be
/// nonincreasing in b up to discretization noise. refine_level 0 is the
/// frozen base resolution; the monotonicity guard retries a contradictory
/// comparison once at level 1 before giving up.
CalibrationResult bisect_barrier(
    const std::function<double(double, int)>& psi, double b0, double psi_b0,
    double epsilon, const CalOptions& opts);
} // namespace detail

} // namespace divbar
