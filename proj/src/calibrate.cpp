#include "divbar/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace divbar {

namespace {

void check_inputs(const ModelParams& p, const SolvencyTarget& target) {
    ValidationReport rep = validate(p, target);
    if (!rep.pass) {
        std::ostringstream os;
        os << "calibrate: invalid inputs:";
        for (const auto& s : rep.issues) os << ' ' << s << ';';
        throw std::domain_error(os.str());
    }
    if (!(p.m > 0.0)) throw std::domain_error("calibrate: requires m > 0");
}

} // namespace

namespace detail {

CalibrationResult bisect_barrier(
    const std::function<double(double, int)>& psi, double b0, double psi_b0,
    double epsilon, const CalOptions& opts) {
    CalibrationResult res;
    res.regime = Regime::Constrained;
    res.epsilon = epsilon;

    // Bracket upward: psi~ vanishes as b grows, so doubling terminates.
    const double b_cap = opts.b_cap_mult * b0;
    double lo = b0, psi_lo = psi_b0;
    double hi = b0;
    double psi_hi = psi_b0;
    while (psi_hi > epsilon) {
        if (hi > b_cap) {
            std::ostringstream os;
            os << "calibrate: target unattainable within cap (psi~(" << hi
               << ") = " << psi_hi << " > epsilon = " << epsilon << ")";
            throw numerical_error(os.str());
        }
        lo = hi;
        psi_lo = psi_hi;
        hi *= 2.0;
        psi_hi = psi(hi, 0);
    }

    // Monotone bisection with one resolution-doubling retry on a comparison
    // that contradicts the decreasing map by more than tol_cal. Runs down to
    // the width tolerance so the returned left endpoint pins the crossing
    // far below any scan resolution.
    const double width_tol = opts.rel_b_tol * b0;
    int contradictions = 0;
    for (int it = 0; it < opts.max_iters; ++it) {
        if (hi - lo <= width_tol) break;
        const double mid = 0.5 * (lo + hi);
        double psi_mid = psi(mid, 0);
        if (psi_mid > psi_lo + opts.tol_cal || psi_mid < psi_hi - opts.tol_cal) {
            psi_mid = psi(mid, 1);
            if (psi_mid > psi_lo + opts.tol_cal || psi_mid < psi_hi - opts.tol_cal) {
                if (++contradictions > 1) {
                    std::ostringstream os;
                    os << "calibrate: discrete monotonicity violated twice near b="
                       << mid << " (psi_lo=" << psi_lo << ", psi_mid=" << psi_mid
                       << ", psi_hi=" << psi_hi << ")";
                    throw numerical_error(os.str());
                }
            }
        }
        res.trace.push_back({lo, hi, mid, psi_mid});
        if (psi_mid > epsilon) {
            lo = mid;
            psi_lo = psi_mid;
        } else {
            hi = mid;
            psi_hi = psi_mid;
        }
    }

    // Minimal-b convention: report the left endpoint of the final bracket.
    res.barrier = lo;
    res.achieved_ruin = psi_lo;
    res.bracket_lo = lo;
    res.bracket_hi = hi;
    if (std::abs(res.achieved_ruin - epsilon) > opts.tol_cal) {
        std::ostringstream os;
        os << "calibrate: bisection stalled with |psi~ - epsilon| = "
           << std::abs(res.achieved_ruin - epsilon) << " at b = " << lo;
        throw numerical_error(os.str());
    }
    return res;
}

} // namespace detail

RegimeDecision decide_regime(const ModelParams& p, const HjbSolution& sol,
                             const SolvencyTarget& target,
                             const CalOptions& opts) {
    check_inputs(p, target);
    RegimeDecision d;
    d.psi_b0 = ruin_at_barrier_info(p, sol.policy, sol.b0, target.horizon,
                                    opts.pde)
                   .psi;
    d.regime = d.psi_b0 <= target.epsilon ? Regime::Unconstrained
                                          : Regime::Constrained;
    return d;
}

CalibrationResult calibrate(const ModelParams& p, const HjbSolution& sol,
                            const SolvencyTarget& target,
                            const CalOptions& opts) {
    check_inputs(p, target);
    const double eps = target.epsilon;
    const double T = target.horizon;

    const RuinValue at_b0 =
        ruin_at_barrier_info(p, sol.policy, sol.b0, T, opts.pde);

    if (at_b0.psi <= eps) {
        CalibrationResult res;
        res.regime = Regime::Unconstrained;
        res.barrier = sol.b0;
        res.achieved_ruin = at_b0.psi;
        res.epsilon = eps;
        res.value_ratio = 1.0;
        res.bracket_lo = res.bracket_hi = sol.b0;
        res.pde_nx = at_b0.nx;
        res.pde_nt = at_b0.nt;
        return res;
    }

    // Constrained regime. Freeze the PDE resolution at the refinement level
    // the convergence policy picked for the widest bracket endpoint, so the
    // bisection compares one fixed discrete map.
    double probe = sol.b0;
    double psi_probe = at_b0.psi;
    while (psi_probe > eps && probe <= opts.b_cap_mult * sol.b0) {
        probe *= 2.0;
        psi_probe = ruin_at_barrier_info(p, sol.policy, probe, T, opts.pde).psi;
    }
    const RuinValue frozen_ref =
        ruin_at_barrier_info(p, sol.policy, std::min(probe, opts.b_cap_mult * sol.b0),
                             T, opts.pde);

    auto psi_fn = [&](double b, int refine_level) {
        return ruin_at_barrier_fixed(p, sol.policy, b, T,
                                     frozen_ref.nx << refine_level,
                                     frozen_ref.nt << refine_level,
                                     opts.pde.align_kink);
    };

    CalibrationResult res = detail::bisect_barrier(
        psi_fn, sol.b0, psi_fn(sol.b0, 0), eps, opts);
    res.pde_nx = frozen_ref.nx;
    res.pde_nt = frozen_ref.nt;
    res.value_ratio = sol.hp_at(sol.b0) / sol.hp_at(res.barrier);
    return res;
}

std::vector<CurvePoint> b_of_epsilon_curve(const ModelParams& p,
                                           const HjbSolution& sol, double T,
                                           const std::vector<double>& eps_list,
                                           const CalOptions& opts) {
    for (std::size_t i = 0; i < eps_list.size(); ++i) {
        if (!(eps_list[i] > 0.0 && eps_list[i] < 1.0))
            throw std::domain_error("b_of_epsilon_curve: epsilon outside (0,1)");
        if (i > 0 && !(eps_list[i] > eps_list[i - 1]))
            throw std::domain_error(
                "b_of_epsilon_curve: epsilons must be strictly increasing");
    }
    std::vector<CurvePoint> out;
    out.reserve(eps_list.size());
    for (double eps : eps_list) {
        CurvePoint pt;
        pt.epsilon = eps;
        try {
            pt.barrier =
                calibrate(p, sol, {eps, T}, opts).barrier;
        } catch (const std::exception& e) {
            pt.error = e.what();
        }
        out.push_back(std::move(pt));
    }
    const double slack = 1e-9 * std::max(1.0, sol.b0);
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (out[i].barrier && out[i - 1].barrier &&
            *out[i].barrier > *out[i - 1].barrier + slack) {
            std::ostringstream os;
            os << "b_of_epsilon_curve: barrier increased with epsilon ("
               << *out[i - 1].barrier << " -> " << *out[i].barrier << ")";
            throw numerical_error(os.str());
        }
    }
    return out;
}

double barrier_for_ruin_level(const ModelParams& p, const PolicyCurve& policy,
                              double T, double epsilon,
                              const CalOptions& opts) {
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw std::domain_error("barrier_for_ruin_level: epsilon outside (0,1)");
    if (!(p.m > 0.0))
        throw std::domain_error("barrier_for_ruin_level: requires m > 0");

    // The map decreases from 1 at the wall toward 0. Bracket with cheap
    // coarse solves first; only the bisection runs at the converged
    // resolution.
    PdeOptions coarse = opts.pde;
    coarse.tol = std::max(opts.pde.tol, 1e-4);
    double gap = 0.25 * std::max(p.m, 1.0);
    double lo = p.m;
    double hi = p.m + gap;
    while (ruin_at_barrier_info(p, policy, hi, T, coarse).psi > epsilon) {
        lo = hi;
        gap *= 2.0;
        hi = p.m + gap;
        if (gap > 1e7 * std::max(1.0, p.m))
            throw numerical_error("barrier_for_ruin_level: no bracket found");
    }

    // Freeze the resolution the refinement picks at the top of the bracket
    // and re-validate the straddle on that one discrete map.
    const RuinValue frozen = ruin_at_barrier_info(p, policy, hi, T, opts.pde);
    auto psi_frozen = [&](double b) {
        return ruin_at_barrier_fixed(p, policy, b, T, frozen.nx, frozen.nt,
                                     opts.pde.align_kink);
    };
    int guard = 0;
    while (psi_frozen(hi) > epsilon) {
        lo = hi;
        hi = p.m + 2.0 * (hi - p.m);
        if (++guard > 60)
            throw numerical_error("barrier_for_ruin_level: frozen map does not "
                                  "reach the target");
    }
    guard = 0;
    while (lo > p.m && psi_frozen(lo) <= epsilon) {
        lo = p.m + 0.5 * (lo - p.m);
        if (++guard > 60) break; // the map tends to one at the wall
    }
    for (int it = 0; it < 200 && hi - lo > 1e-5 * std::max(1.0, hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (psi_frozen(mid) > epsilon)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace divbar
