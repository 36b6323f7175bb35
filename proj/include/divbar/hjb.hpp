#pragma once

#include "divbar/model.hpp"

#include <cstddef>
#include <memory>
#include <vector>

namespace divbar {

struct SolverOptions {
    double rtol = 1e-10;       // relative step-error tolerance
    double atol = 1e-12;       // absolute tolerance at unit initial slope
    double hp0 = 1.0;          // initial slope h'(m); the equation is
                               // degree-1 homogeneous so this only rescales h
    double x_max = 0.0;        // 0 = auto: max(100*m, 50*mu/c)
    double max_dx = 0.0;       // 0 = auto: 0.01*max(1, m)
    double tol_pol = 1e-6;     // retention counts as 1 above 1 - tol_pol
    double b0_refine = 1e-10;  // refine b0 until |h''| <= b0_refine*|h''(m)|
    std::size_t max_steps = 2000000;
};

/// Curvature and maximizing retention at one state: the unique s with
///   max_{a in [0,1]} { (sigma2*a^2 + sigmap2*x^2)/2 * s
///                      + (mu*a + r*x)*hp - c*h } = 0.
/// The maximum is strictly increasing in s, so the root is bracketed and
/// polished by safeguarded Newton/bisection.
struct CurvatureResult {
    double curvature = 0.0;
    double retention = 1.0;
};
CurvatureResult hjb_curvature(const ModelParams& p, double x, double h, double hp);

/// Solution of the free-boundary problem on [m, x_max]: h with h(m)=0,
/// h'(m)=hp0, concave up to the free boundary b0 (where h'' = 0) and
/// convex beyond it. Node arrays cover the whole integration range;
/// b0_index marks the node at b0.
class HjbSolution {
public:
    ModelParams params;
    SolverOptions opts;

    std::vector<double> xs, hs, hps, hpps, as;
    std::size_t b0_index = 0;

    double b0 = 0.0;
    double x0 = 0.0;          // switch point: first x with a*(x) >= 1 - tol_pol
    double lambda_hat = 0.0;  // least-squares slope of the sub-unit retention
    double alpha_hat = 0.0;   // 1 - mu/(lambda_hat*sigma2)
    PolicyCurve policy;       // samples on [m, b0]

    double h_at(double x) const;
    double hp_at(double x) const;
    double hpp_at(double x) const;

private:
    friend HjbSolution solve_hjb(const ModelParams&, const SolverOptions&);
    double eval(double x, const std::vector<double>& f,
                const std::vector<double>& fp) const;
    void continue_to(double x_target, double& h, double& hp) const;
};

HjbSolution solve_hjb(const ModelParams& p, const SolverOptions& opts = {});

/// Piecewise value of a barrier strategy (barrier b >= b0):
///   0 below m, h(x)/h'(b) on [m, b], linear with unit slope above b.
/// Barriers below b0 are remapped to b0, where the unconstrained optimum
/// already lives.
class ValueFunction {
public:
    ValueFunction(std::shared_ptr<const HjbSolution> base, double barrier);

    double operator()(double x) const { return value(x); }
    double value(double x) const;
    double derivative(double x) const;   // one-sided h'/h'(b) below b, 1 above
    double second_derivative(double x) const; // h''/h'(b) below b, 0 above

    double barrier() const { return barrier_; }
    double normalizer() const { return normalizer_; }
    double at_barrier() const { return value_at_barrier_; }

private:
    std::shared_ptr<const HjbSolution> base_;
    double barrier_;
    double normalizer_;
    double value_at_barrier_;
};

ValueFunction build_value(std::shared_ptr<const HjbSolution> sol, double b);

/// V(x,b1)/V(x,b2) = h'(b2)/h'(b1) for x <= min(b1,b2); requires both
/// barriers at or above the free boundary.
double value_ratio(const HjbSolution& sol, double b1, double b2);

/// Feedback policy of the zero-floor model (m = 0), where the concave
/// region admits the power solution h = x^gamma: gamma solves
///   mu^2*g / (2*sigma2*(1-g)) - sigmap2*g*(1-g)/2 + r*g - c = 0
/// on (0,1), and the retention is min(x/x0, 1) with x0 = sigma2*(1-gamma)/mu.
PolicyCurve zero_floor_policy(const ModelParams& p);

} // namespace divbar
