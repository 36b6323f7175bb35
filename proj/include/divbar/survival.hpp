#pragma once

#include "divbar/hjb.hpp"
#include "divbar/model.hpp"

#include <utility>
#include <vector>

namespace divbar {

struct PdeOptions {
    int nx = 800;             // space intervals at the base resolution
    int nt = 800;             // time steps at the base resolution
    double tol = 1e-5;        // refinement target on the evaluated functional
    int max_doublings = 5;
    bool align_kink = true;   // nudge nx so a grid node lands on the policy kink
};

/// Crank-Nicolson solution of the survival equation
///   phi_t = (a*(x)^2 sigma2 + sigmap2 x^2)/2 phi_xx + (a*(x) mu + r x) phi_x
/// on [m,b] x [0,T], with an absorbing wall phi(t,m)=0, a reflecting barrier
/// phi_x(t,b)=0 (second-order ghost node), phi(0,x)=1 for x>m, and a
/// Rannacher start-up (four half-size fully implicit steps) to damp the
/// corner discontinuity at (0,m). psi = 1 - phi is the ruin probability.
struct SurvivalGrid {
    double barrier = 0.0;
    double horizon = 0.0;
    std::vector<double> x;     // space nodes, x[0] = m, x[nx] = b
    std::vector<double> t;     // time levels actually stepped (includes start-up)
    std::vector<double> phi;   // row-major: phi[it * x.size() + ix]
    double field_min = 0.0;    // range diagnostics over every computed row
    double field_max = 1.0;

    double at(std::size_t it, std::size_t ix) const {
        return phi[it * x.size() + ix];
    }
    /// 1 - phi(T, x), linear interpolation on the final row.
    double psi_final(double xq) const;
};

SurvivalGrid solve_survival(const ModelParams& p, const PolicyCurve& policy,
                            double b, double T, int nx, int nt);
SurvivalGrid solve_survival(const ModelParams& p, const HjbSolution& sol,
                            double b, double T, int nx, int nt);

struct RuinValue {
    double psi = 0.0;       // psi(T, b): ruin probability starting at the barrier
    double residual = 0.0;  // last refinement difference
    int nx = 0, nt = 0;     // resolution that produced psi
};

/// psi~(b) = psi(T, b; b) with automatic grid refinement (doubling nx and nt
/// until successive values differ by less than opts.tol).
RuinValue ruin_at_barrier_info(const ModelParams& p, const PolicyCurve& policy,
                               double b, double T, const PdeOptions& opts = {});
double ruin_at_barrier(const ModelParams& p, const HjbSolution& sol, double b,
                       double T, const PdeOptions& opts = {});

/// psi(T, x; b) at a fixed initial reserve x, refined like ruin_at_barrier.
double ruin_probability(const ModelParams& p, const PolicyCurve& policy,
                        double b, double T, double x,
                        const PdeOptions& opts = {});

/// The whole final-time ruin profile (x_i, psi(T, x_i)) at the resolution the
/// refinement policy picks for psi(T, b); one solve feeds every sample.
std::vector<std::pair<double, double>>
ruin_profile(const ModelParams& p, const PolicyCurve& policy, double b,
             double T, const PdeOptions& opts = {});

/// psi~ over a list of barriers; throws if an increasing list produces a
/// sequence that increases by more than 1e-6 anywhere.
std::vector<std::pair<double, double>>
scan_barriers(const ModelParams& p, const HjbSolution& sol, double T,
              const std::vector<double>& bs, const PdeOptions& opts = {});

/// psi~ at one fixed resolution (no refinement); the deterministic evaluator
/// the calibration bisection runs against once its resolution is frozen.
double ruin_at_barrier_fixed(const ModelParams& p, const PolicyCurve& policy,
                             double b, double T, int nx, int nt,
                             bool align_kink = true);

} // namespace divbar
