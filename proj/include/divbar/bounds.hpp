#pragma once

#include "divbar/hjb.hpp"
#include "divbar/model.hpp"
#include "divbar/survival.hpp"

#include <vector>

namespace divbar {

/// Standard normal CDF via the complementary error function; absolute error
/// well below 1e-12 over the whole line.
double normal_cdf(double x);

struct BoundInput {
    double b = 0.0;      // barrier
    double T = 0.0;      // horizon
    double lambda = 0.0; // policy slope (1/currency)
    ModelParams p;       // requires m > 0 and sigmap2 > 0
};

/// Closed-form lower bound on the ruin probability of the barrier strategy:
///   4 * [1 - Phi((b - m)/sqrt(kappa T))]^2 * exp(-(lambda mu + r)^2 T / sigmap2)
/// with kappa = (lambda^2 sigma2 + sigmap2) m^2.
double ruin_lower_bound(const BoundInput& in);

struct BoundCheckRow {
    double b = 0.0;
    double psi_pde = 0.0;
    double bound = 0.0;
    double margin = 0.0; // psi_pde - bound
    bool pass = false;
};

struct BoundCheckReport {
    std::vector<BoundCheckRow> rows;
    double tol = 0.0;
    bool all_pass = false;
};

/// Verifies psi~(b) >= bound(b) - tol for each barrier, with
/// tol = max(1e-6, PDE refinement residual). lambda_override > 0 replaces
/// the fitted slope from the solve.
BoundCheckReport check_bound(const ModelParams& p, const HjbSolution& sol,
                             const std::vector<double>& bs, double T,
                             const PdeOptions& pde = {},
                             double lambda_override = 0.0);

} // namespace divbar
