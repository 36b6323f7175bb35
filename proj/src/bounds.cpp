#include "divbar/bounds.hpp"

#include <cmath>

namespace divbar {

double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

static void check_bound_input(const BoundInput& in) {
    if (!(in.p.m > 0.0))
        throw std::domain_error("ruin_lower_bound: requires m > 0");
    if (!(in.p.sigmap2 > 0.0))
        throw std::domain_error("ruin_lower_bound: requires sigmap2 > 0");
    if (!(in.b >= in.p.m))
        throw std::domain_error("ruin_lower_bound: barrier below minimum reserve");
    if (!(in.T > 0.0))
        throw std::domain_error("ruin_lower_bound: horizon must be positive");
    if (!(in.lambda > 0.0))
        throw std::domain_error("ruin_lower_bound: slope must be positive");
}

double ruin_lower_bound(const BoundInput& in) {
    check_bound_input(in);
    const ModelParams& p = in.p;
    const double kappa =
        (in.lambda * in.lambda * p.sigma2 + p.sigmap2) * p.m * p.m;
    const double z = (in.b - p.m) / std::sqrt(kappa * in.T);
    // 1 - Phi(z) computed directly through erfc to dodge cancellation.
    const double tail = 0.5 * std::erfc(z / std::sqrt(2.0));
    const double lam_mu_r = in.lambda * p.mu + p.r;
    return 4.0 * tail * tail *
           std::exp(-lam_mu_r * lam_mu_r * in.T / p.sigmap2);
}

BoundCheckReport check_bound(const ModelParams& p, const HjbSolution& sol,
                             const std::vector<double>& bs, double T,
                             const PdeOptions& pde, double lambda_override) {
    const double lambda =
        lambda_override > 0.0 ? lambda_override : sol.lambda_hat;

    BoundCheckReport rep;
    rep.all_pass = true;
    double worst_residual = 0.0;
    for (double b : bs) {
        const RuinValue rv = ruin_at_barrier_info(p, sol.policy, b, T, pde);
        worst_residual = std::max(worst_residual, rv.residual);
        BoundCheckRow row;
        row.b = b;
        row.psi_pde = rv.psi;
        row.bound = ruin_lower_bound({b, T, lambda, p});
        row.margin = row.psi_pde - row.bound;
        rep.rows.push_back(row);
    }
    rep.tol = std::max(1e-6, worst_residual);
    for (BoundCheckRow& row : rep.rows) {
        row.pass = row.margin >= -rep.tol;
        rep.all_pass = rep.all_pass && row.pass;
    }
    return rep;
}

} // namespace divbar
