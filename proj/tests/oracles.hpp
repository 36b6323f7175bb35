#pragma once

// Independent slow-path oracles used by the tests. These deliberately avoid
// the library's solution path: dense-grid fixed-point iteration instead of
// the adaptive integrator, and grid search plus bisection instead of the
// closed-form branch analysis.

#include "divbar/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace oracles {

// max over a retention grid of the generator value at fixed curvature.
inline double g_of_s_grid(const divbar::ModelParams& p, double x, double h,
                          double hp, double s, int a_steps = 1000) {
    double best = -1e300;
    for (int i = 0; i <= a_steps; ++i) {
        const double a = static_cast<double>(i) / a_steps;
        const double v = 0.5 * (p.sigma2 * a * a + p.sigmap2 * x * x) * s +
                         (p.mu * a + p.r * x) * hp - p.c * h;
        best = std::max(best, v);
    }
    return best;
}

// Curvature by sign bisection of the grid-maximized generator.
inline double curvature_bisect(const divbar::ModelParams& p, double x, double h,
                               double hp, double tol = 1e-10) {
    double lo = -1.0, hi = 1.0;
    while (g_of_s_grid(p, x, h, hp, lo) > 0.0) lo *= 2.0;
    while (g_of_s_grid(p, x, h, hp, hi) < 0.0) hi *= 2.0;
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        (g_of_s_grid(p, x, h, hp, mid) > 0.0 ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

struct PolicyIterationResult {
    std::vector<double> x, h, a;
    double b0 = 0.0;
    int sweeps = 0;
};

// Dense-grid solve of the free-boundary equation: alternate a pointwise
// retention maximization with a compact second-order sweep of the linear
// equation (both boundary data sit at the wall, so the banded system solves
// by forward substitution). The free boundary is read off the first sign
// change of the finite-difference curvature.
inline PolicyIterationResult policy_iteration_b0(const divbar::ModelParams& p,
                                                 double x_max, int n,
                                                 int a_steps = 1000,
                                                 int max_sweeps = 80) {
    PolicyIterationResult res;
    const double dx = (x_max - p.m) / n;
    res.x.resize(n + 1);
    for (int i = 0; i <= n; ++i) res.x[i] = p.m + dx * i;
    res.h.assign(n + 1, 0.0);
    res.a.assign(n + 1, 1.0);

    const double s0 = curvature_bisect(p, p.m, 0.0, 1.0);

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        // forward sweep with the current policy
        res.h[0] = 0.0;
        res.h[1] = dx + 0.5 * dx * dx * s0;
        for (int i = 1; i < n; ++i) {
            const double xi = res.x[i];
            const double ai = res.a[i];
            const double A = 0.5 * (p.sigma2 * ai * ai + p.sigmap2 * xi * xi);
            const double B = p.mu * ai + p.r * xi;
            const double cp = A / (dx * dx) + B / (2.0 * dx);
            const double cm = A / (dx * dx) - B / (2.0 * dx);
            res.h[i + 1] =
                (p.c * res.h[i] + 2.0 * A / (dx * dx) * res.h[i] - cm * res.h[i - 1]) /
                cp;
        }
        // pointwise policy improvement on finite differences
        double max_da = 0.0;
        for (int i = 1; i < n; ++i) {
            const double hp = (res.h[i + 1] - res.h[i - 1]) / (2.0 * dx);
            const double hpp =
                (res.h[i + 1] - 2.0 * res.h[i] + res.h[i - 1]) / (dx * dx);
            double best = -1e300, best_a = 1.0;
            for (int k = 0; k <= a_steps; ++k) {
                const double a = static_cast<double>(k) / a_steps;
                const double v =
                    0.5 * (p.sigma2 * a * a + p.sigmap2 * res.x[i] * res.x[i]) *
                        hpp +
                    (p.mu * a + p.r * res.x[i]) * hp - p.c * res.h[i];
                if (v > best) {
                    best = v;
                    best_a = a;
                }
            }
            max_da = std::max(max_da, std::abs(best_a - res.a[i]));
            res.a[i] = best_a;
        }
        res.a[0] = res.a[1];
        res.a[n] = res.a[n - 1];
        res.sweeps = sweep + 1;
        if (max_da < 0.5 / a_steps) break;
    }

    // first curvature sign change
    double prev = s0;
    for (int i = 1; i < n; ++i) {
        const double hpp = (res.h[i + 1] - 2.0 * res.h[i] + res.h[i - 1]) / (dx * dx);
        if (prev < 0.0 && hpp >= 0.0) {
            const double w = prev / (prev - hpp);
            res.b0 = res.x[i - 1] + w * dx;
            return res;
        }
        prev = hpp;
    }
    throw std::runtime_error("policy_iteration_b0: no curvature sign change");
}

} // namespace oracles
