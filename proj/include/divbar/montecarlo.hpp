#pragma once

#include "divbar/hjb.hpp"
#include "divbar/model.hpp"

#include <cstdint>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

namespace divbar {

struct SimConfig {
    std::uint64_t paths = 100000;
    double dt = 1e-3;
    double horizon = 1.0;       // ruin-classification horizon T
    double value_horizon = 0.0; // 0 = choose from the value function's tail bound
    std::uint64_t seed = 12345;
    double initial_reserve = 1.0;
    double barrier = 10.0;
    bool antithetic = false;
};

struct PathOutcome {
    bool ruined = false;
    double tau = std::numeric_limits<double>::infinity();
    double discounted_dividends = 0.0;
    double final_reserve = 0.0;
    double min_reserve = 0.0;
    bool nonfinite = false;
};

struct SimResult {
    std::uint64_t paths = 0;
    double ruin_prob = 0.0;
    double ruin_se = 0.0;
    double value_estimate = 0.0;
    double value_se = 0.0;
    double truncation_bound = 0.0;
    bool truncation_warning = false;
    std::uint64_t paths_bankrupt = 0;
    double mean_tau = 0.0; // over paths ruined before the simulated horizon
    std::uint64_t nonfinite_paths = 0;
};

/// Euler-Maruyama path of the reflected/absorbed reserve under the feedback
/// policy: overshoots of the barrier are paid out as discounted dividends
/// (Skorokhod projection), hitting the minimum reserve stops the path, and a
/// Brownian-bridge test catches wall crossings between grid points.
PathOutcome simulate_path(const ModelParams& p, const PolicyCurve& policy,
                          const SimConfig& cfg, std::uint64_t path_index);

/// Ruin-probability estimate over independent per-path streams derived from
/// (seed, path index); SE = sqrt(p(1-p)/n).
SimResult estimate_ruin(const ModelParams& p, const PolicyCurve& policy,
                        const SimConfig& cfg);

/// Discounted-dividend estimate with the explicit truncation bound
/// exp(-c*H) * F_b(b) on the value ignored beyond the simulated horizon.
SimResult estimate_value(const ModelParams& p,
                         std::shared_ptr<const HjbSolution> sol,
                         const SimConfig& cfg);

struct ZeroReserveStudy {
    std::vector<std::pair<double, double>> hits; // (threshold, estimate)
    std::vector<double> ses;
    bool last_consistent_with_zero = false; // rule of three: <= 3/paths
};

/// Probability of the reserve dipping to each threshold before the horizon
/// in the zero-floor model (m = 0); thresholds must be positive decreasing.
ZeroReserveStudy zero_reserve_study(const ModelParams& p,
                                    const PolicyCurve& policy,
                                    const SimConfig& cfg,
                                    const std::vector<double>& thresholds);

struct TraceRow {
    std::uint64_t path;
    double t;
    double reserve;
    double dividends; // cumulative undiscounted dividend stream L_t
};

/// Step-by-step (t, R, L) records for the first n_paths paths; debugging aid.
std::vector<TraceRow> trace_paths(const ModelParams& p, const PolicyCurve& policy,
                                  const SimConfig& cfg, std::uint64_t n_paths);

} // namespace divbar
