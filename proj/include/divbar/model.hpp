#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace divbar {

// Thrown when an iterative scheme fails to converge or produces
// non-finite values. Maps to exit code 3 in the CLI.
struct numerical_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown when a caller hands a solver a state that the model forbids,
// e.g. a nonpositive value-function slope.
struct invalid_state_error : std::logic_error {
    using std::logic_error::logic_error;
};

/// Market and insurance coefficients of the reserve diffusion.
///
/// mu       claim drift per unit retained risk      [currency/time]
/// sigma2   claim variance rate sigma^2             [currency^2/time]
/// sigmap2  investment volatility squared sigma_p^2 [1/time]
/// r        investment return rate                  [1/time]
/// c        dividend discount rate                  [1/time]
/// m        minimum reserve (bankruptcy wall)       [currency]
struct ModelParams {
    double mu = 1.0;
    double sigma2 = 1.0;
    double sigmap2 = 2.0;
    double r = 0.1;
    double c = 0.2;
    double m = 1.0;
};

/// Solvency requirement: ruin probability over [0, horizon] must not
/// exceed epsilon.
struct SolvencyTarget {
    double epsilon = 0.1;
    double horizon = 1.0;
};

struct ValidationReport {
    bool pass = true;
    std::vector<std::string> issues;

    void fail(std::string msg) {
        pass = false;
        issues.push_back(std::move(msg));
    }
};

// Standing assumptions on the coefficients. Report-returning; never throws.
ValidationReport validate_params(const ModelParams& p);
ValidationReport validate_target(const SolvencyTarget& t);
ValidationReport validate(const ModelParams& p, const SolvencyTarget& t);

/// Reserve drift a*mu + r*x at reserve x, retention a in [0,1].
double drift(const ModelParams& p, double x, double a);

/// Squared diffusion coefficient a^2*sigma^2 + sigma_p^2*x^2.
/// Callers take the square root.
double diffusion_sq(const ModelParams& p, double x, double a);

/// Feedback retention policy a*(x): tabulated samples from a solver run
/// plus the fitted linear form min(slope*x, 1) used outside the sampled
/// range. switch_point is the reserve level where retention reaches 1.
struct PolicyCurve {
    double x_min = 0.0;        // domain start (m of the generating model)
    double switch_point = 0.0; // x0
    double slope = 0.0;        // lambda-hat                 [1/currency]
    double alpha_hat = 0.0;    // 1 - mu/(lambda-hat*sigma2)
    std::vector<double> xs;    // sample abscissae, strictly increasing
    std::vector<double> as;    // retention at the samples, in [0,1]
    double linearity_dev = 0.0; // max |a(x)/(slope*x) - 1| over fitted nodes

    // Canonical evaluator: linear interpolation over the samples,
    // min(slope*x, 1) outside them, clamped to [0,1] and pinned to 1
    // beyond switch_point. No domain check; see policy_eval.
    double retention(double x) const;

    /// Synthetic curve with exactly linear samples; used by tests and by
    /// the zero-floor policy where the closed form is the ground truth.
    static PolicyCurve linear(double slope, double x_min, double x_max,
                              double alpha_hat = 0.0);
};

/// a*(x) with the domain check of the public operation: x below the
/// generating model's minimum reserve is a domain error.
double policy_eval(const PolicyCurve& curve, double x);

} // namespace divbar
