#include "divbar/hjb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace divbar {

namespace {

// Value of the bracketed maximum at curvature s, interior-retention branch
// (a = -mu*hp/(sigma2*s), valid for s <= -mu*hp/sigma2).
inline double g_interior(const ModelParams& p, double x, double h, double hp,
                         double s) {
    return -p.mu * p.mu * hp * hp / (2.0 * p.sigma2 * s) +
           0.5 * p.sigmap2 * x * x * s + p.r * x * hp - p.c * h;
}

inline double g_interior_slope(const ModelParams& p, double x, double hp,
                               double s) {
    return p.mu * p.mu * hp * hp / (2.0 * p.sigma2 * s * s) +
           0.5 * p.sigmap2 * x * x;
}

} // namespace

CurvatureResult hjb_curvature(const ModelParams& p, double x, double h,
                              double hp) {
    if (!(hp > 0.0))
        throw invalid_state_error("hjb_curvature: h' must be positive");
    if (x < p.m)
        throw std::domain_error("hjb_curvature: reserve below minimum reserve");

    const double a1 = 0.5 * (p.sigma2 + p.sigmap2 * x * x);
    const double e = p.c * h - (p.mu + p.r * x) * hp; // -g(0) at a = 1
    const double s1 = e / a1;                         // root of the a = 1 branch
    const double s_clamp = -p.mu * hp / p.sigma2;     // a hits 1 here

    if (s1 >= s_clamp) return {s1, 1.0};

    // Interior branch. g is strictly increasing with g(s_clamp) > 0;
    // bracket downward by doubling, then safeguarded Newton.
    const double scale = std::max(std::abs(p.c * h), (p.mu + p.r * x) * hp);
    const double tol_g = 1e-14 * scale;

    double hi = s_clamp;
    double lo = 2.0 * s_clamp;
    int expand = 0;
    while (g_interior(p, x, h, hp, lo) >= 0.0) {
        lo *= 2.0;
        if (++expand > 200 || !std::isfinite(lo))
            throw numerical_error("hjb_curvature: curvature root not bracketed "
                                  "(degenerate diffusion?)");
    }

    double s = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        const double gs = g_interior(p, x, h, hp, s);
        if (std::abs(gs) <= tol_g) break;
        if (gs > 0.0)
            hi = s;
        else
            lo = s;
        const double step = gs / g_interior_slope(p, x, hp, s);
        double s_next = s - step;
        if (!(s_next > lo && s_next < hi)) s_next = 0.5 * (lo + hi);
        if (hi - lo <= 8.0 * std::numeric_limits<double>::epsilon() * std::abs(s))
            break;
        s = s_next;
    }

    const double a = std::clamp(-p.mu * hp / (p.sigma2 * s), 0.0, 1.0);
    return {s, a};
}

namespace {

struct State {
    double h, hp;
};

struct Deriv {
    double dh, dhp; // dhp is the curvature at the state
    double a;
};

struct Integrator {
    const ModelParams& p;
    double rtol, atol_h, atol_hp, max_dx;

    Deriv rhs(double x, const State& y) const {
        const CurvatureResult c = hjb_curvature(p, x, y.h, y.hp);
        return {y.hp, c.curvature, c.retention};
    }

    // One adaptive Dormand-Prince 5(4) step from (x, y, k1); on acceptance
    // updates x, y, k1 (FSAL) and returns true.
    bool step(double& x, State& y, Deriv& k1, double& dx, double x_limit) const {
        dx = std::min({dx, max_dx, x_limit - x});
        for (int attempt = 0; attempt < 60; ++attempt) {
            if (!(dx > 1e-14 * std::max(1.0, std::abs(x))))
                throw numerical_error("hjb integrator: step size underflow");

            const Deriv k2 = rhs(x + 0.2 * dx,
                                 {y.h + dx * 0.2 * k1.dh, y.hp + dx * 0.2 * k1.dhp});
            const Deriv k3 = rhs(x + 0.3 * dx,
                                 {y.h + dx * (3.0 / 40 * k1.dh + 9.0 / 40 * k2.dh),
                                  y.hp + dx * (3.0 / 40 * k1.dhp + 9.0 / 40 * k2.dhp)});
            const Deriv k4 = rhs(
                x + 0.8 * dx,
                {y.h + dx * (44.0 / 45 * k1.dh - 56.0 / 15 * k2.dh + 32.0 / 9 * k3.dh),
                 y.hp +
                     dx * (44.0 / 45 * k1.dhp - 56.0 / 15 * k2.dhp + 32.0 / 9 * k3.dhp)});
            const Deriv k5 =
                rhs(x + 8.0 / 9 * dx,
                    {y.h + dx * (19372.0 / 6561 * k1.dh - 25360.0 / 2187 * k2.dh +
                                 64448.0 / 6561 * k3.dh - 212.0 / 729 * k4.dh),
                     y.hp + dx * (19372.0 / 6561 * k1.dhp - 25360.0 / 2187 * k2.dhp +
                                  64448.0 / 6561 * k3.dhp - 212.0 / 729 * k4.dhp)});
            const Deriv k6 =
                rhs(x + dx,
                    {y.h + dx * (9017.0 / 3168 * k1.dh - 355.0 / 33 * k2.dh +
                                 46732.0 / 5247 * k3.dh + 49.0 / 176 * k4.dh -
                                 5103.0 / 18656 * k5.dh),
                     y.hp + dx * (9017.0 / 3168 * k1.dhp - 355.0 / 33 * k2.dhp +
                                  46732.0 / 5247 * k3.dhp + 49.0 / 176 * k4.dhp -
                                  5103.0 / 18656 * k5.dhp)});

            const State y5 = {
                y.h + dx * (35.0 / 384 * k1.dh + 500.0 / 1113 * k3.dh +
                            125.0 / 192 * k4.dh - 2187.0 / 6784 * k5.dh +
                            11.0 / 84 * k6.dh),
                y.hp + dx * (35.0 / 384 * k1.dhp + 500.0 / 1113 * k3.dhp +
                             125.0 / 192 * k4.dhp - 2187.0 / 6784 * k5.dhp +
                             11.0 / 84 * k6.dhp)};

            if (!(y5.hp > 0.0))
                throw invalid_state_error("hjb integrator: h' became nonpositive");

            const Deriv k7 = rhs(x + dx, y5);

            const double err_h =
                dx * (71.0 / 57600 * k1.dh - 71.0 / 16695 * k3.dh +
                      71.0 / 1920 * k4.dh - 17253.0 / 339200 * k5.dh +
                      22.0 / 525 * k6.dh - 1.0 / 40 * k7.dh);
            const double err_hp =
                dx * (71.0 / 57600 * k1.dhp - 71.0 / 16695 * k3.dhp +
                      71.0 / 1920 * k4.dhp - 17253.0 / 339200 * k5.dhp +
                      22.0 / 525 * k6.dhp - 1.0 / 40 * k7.dhp);

            const double sc_h = atol_h + rtol * std::max(std::abs(y.h), std::abs(y5.h));
            const double sc_hp =
                atol_hp + rtol * std::max(std::abs(y.hp), std::abs(y5.hp));
            const double err = std::sqrt(0.5 * ((err_h / sc_h) * (err_h / sc_h) +
                                                (err_hp / sc_hp) * (err_hp / sc_hp)));

            const double factor =
                std::clamp(0.9 * std::pow(std::max(err, 1e-10), -0.2), 0.2, 5.0);
            if (err <= 1.0) {
                x += dx;
                y = y5;
                k1 = k7;
                dx = std::min(dx * factor, max_dx);
                return true;
            }
            dx *= factor;
        }
        throw numerical_error("hjb integrator: no acceptable step size");
    }

    // Integrate from (x, y) to exactly x_to without recording.
    State advance(double x, State y, double x_to) const {
        if (x_to - x <= 1e-13 * std::max(1.0, std::abs(x_to))) return y;
        Deriv k1 = rhs(x, y);
        double dx = std::min(max_dx, x_to - x);
        while (x_to - x > 1e-13 * std::max(1.0, std::abs(x_to)))
            step(x, y, k1, dx, x_to);
        return y;
    }
};

} // namespace

HjbSolution solve_hjb(const ModelParams& p, const SolverOptions& opts) {
    {
        ValidationReport rep = validate_params(p);
        if (!rep.pass) {
            std::ostringstream os;
            os << "solve_hjb: invalid parameters:";
            for (const auto& s : rep.issues) os << ' ' << s << ';';
            throw std::domain_error(os.str());
        }
    }
    if (!(p.m > 0.0))
        throw std::domain_error("solve_hjb: requires m > 0 (the zero-floor model "
                                "has a power-law start; see zero_floor_policy)");
    if (!(opts.hp0 > 0.0))
        throw std::domain_error("solve_hjb: initial slope must be positive");

    HjbSolution sol;
    sol.params = p;
    sol.opts = opts;

    const double x_max =
        opts.x_max > 0.0 ? opts.x_max : std::max(100.0 * p.m, 50.0 * p.mu / p.c);
    if (!(x_max > p.m))
        throw std::domain_error("solve_hjb: x_max must exceed m");
    const double base_dx = opts.max_dx > 0.0 ? opts.max_dx : 0.01 * std::max(1.0, p.m);

    Integrator integ{p, opts.rtol, opts.atol * opts.hp0 * std::max(1.0, p.m),
                     opts.atol * opts.hp0, base_dx};

    double x = p.m;
    State y{0.0, opts.hp0};
    Deriv k1 = integ.rhs(x, y);
    const double curv_scale = std::abs(k1.dhp); // |h''(m)|, sets the b0 tolerance

    sol.xs.push_back(x);
    sol.hs.push_back(y.h);
    sol.hps.push_back(y.hp);
    sol.hpps.push_back(k1.dhp);
    sol.as.push_back(k1.a);

    auto excess = [&](double xq, const State& yq) {
        return p.c * yq.h - (p.mu + p.r * xq) * yq.hp; // sign of the curvature
    };

    bool found_b0 = false;
    double dx = std::min(base_dx, 1e-3 * std::max(1.0, p.m));
    std::size_t steps = 0;

    while (x < x_max && !found_b0) {
        if (++steps > opts.max_steps)
            throw numerical_error("solve_hjb: step budget exhausted");
        const double x_prev = x;
        const State y_prev = y;
        integ.step(x, y, k1, dx, x_max);

        if (excess(x, y) >= 0.0) {
            // h'' crosses zero inside (x_prev, x]; bisect on re-integration
            // from the last accepted state.
            double lo = x_prev, hi = x;
            State y_hi = y;
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (lo + hi);
                const State y_mid = integ.advance(x_prev, y_prev, mid);
                const double curv =
                    hjb_curvature(p, mid, y_mid.h, y_mid.hp).curvature;
                if (std::abs(curv) <= opts.b0_refine * curv_scale &&
                    excess(mid, y_mid) >= 0.0) {
                    hi = mid;
                    y_hi = y_mid;
                    break;
                }
                if (excess(mid, y_mid) >= 0.0) {
                    hi = mid;
                    y_hi = y_mid;
                } else {
                    lo = mid;
                }
                if (hi - lo <= 1e-14 * std::max(1.0, hi)) break;
            }
            x = hi;
            y = y_hi;
            k1 = integ.rhs(x, y);
            found_b0 = true;
        }

        sol.xs.push_back(x);
        sol.hs.push_back(y.h);
        sol.hps.push_back(y.hp);
        sol.hpps.push_back(k1.dhp);
        sol.as.push_back(k1.a);
        if (!std::isfinite(y.h) || !std::isfinite(y.hp))
            throw numerical_error("solve_hjb: non-finite state");
    }

    if (!found_b0) {
        std::ostringstream os;
        os << "solve_hjb: free boundary beyond domain (no curvature sign change "
              "on ["
           << p.m << ", " << x_max << "])";
        throw numerical_error(os.str());
    }

    sol.b0_index = sol.xs.size() - 1;
    sol.b0 = sol.xs.back();

    // Switch point and fitted slope from the concave-region retention samples.
    const double thr = 1.0 - opts.tol_pol;
    double sxx = 0.0, sax = 0.0;
    std::ptrdiff_t last_sub = -1;
    for (std::size_t i = 0; i <= sol.b0_index; ++i) {
        if (sol.as[i] < thr) {
            sxx += sol.xs[i] * sol.xs[i];
            sax += sol.as[i] * sol.xs[i];
            last_sub = static_cast<std::ptrdiff_t>(i);
        }
    }
    if (last_sub < 0) {
        // Retention is already full at the wall: the switch point degenerates
        // to m and the linear form min(x/m, 1) is the consistent completion.
        sol.x0 = p.m;
        sol.lambda_hat = 1.0 / p.m;
    } else {
        sol.lambda_hat = sax / sxx;
        const std::size_t j = static_cast<std::size_t>(last_sub) + 1;
        const double da = sol.as[j] - sol.as[last_sub];
        sol.x0 = sol.xs[last_sub] +
                 (da > 0.0 ? (thr - sol.as[last_sub]) / da *
                                 (sol.xs[j] - sol.xs[last_sub])
                           : 0.0);
    }
    sol.alpha_hat = 1.0 - p.mu / (sol.lambda_hat * p.sigma2);

    sol.policy.x_min = p.m;
    sol.policy.switch_point = sol.x0;
    sol.policy.slope = sol.lambda_hat;
    sol.policy.alpha_hat = sol.alpha_hat;
    sol.policy.xs.assign(sol.xs.begin(), sol.xs.begin() + sol.b0_index + 1);
    sol.policy.as.assign(sol.as.begin(), sol.as.begin() + sol.b0_index + 1);
    double dev = 0.0;
    for (std::size_t i = 0; i <= sol.b0_index; ++i)
        if (sol.as[i] < thr && sol.xs[i] > 0.0)
            dev = std::max(dev,
                           std::abs(sol.as[i] / (sol.lambda_hat * sol.xs[i]) - 1.0));
    sol.policy.linearity_dev = dev;

    // Convex continuation: h' at barriers above b0 comes from integrating on,
    // where full retention is optimal.
    Integrator ext{p, opts.rtol, integ.atol_h, integ.atol_hp,
                   5.0 * base_dx};
    dx = std::min(ext.max_dx, 1e-3 * std::max(1.0, p.m));
    while (x < x_max) {
        if (++steps > opts.max_steps)
            throw numerical_error("solve_hjb: step budget exhausted");
        ext.step(x, y, k1, dx, x_max);
        sol.xs.push_back(x);
        sol.hs.push_back(y.h);
        sol.hps.push_back(y.hp);
        sol.hpps.push_back(k1.dhp);
        sol.as.push_back(k1.a);
        if (!std::isfinite(y.h) || !std::isfinite(y.hp))
            throw numerical_error("solve_hjb: non-finite state");
    }

    return sol;
}

double HjbSolution::eval(double x, const std::vector<double>& f,
                         const std::vector<double>& fp) const {
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    std::size_t i = (it == xs.begin()) ? 1 : static_cast<std::size_t>(it - xs.begin());
    if (i >= xs.size()) i = xs.size() - 1;
    const double xl = xs[i - 1], xr = xs[i];
    const double d = xr - xl;
    const double t = (x - xl) / d;
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * f[i - 1] + (t3 - 2 * t2 + t) * d * fp[i - 1] +
           (-2 * t3 + 3 * t2) * f[i] + (t3 - t2) * d * fp[i];
}

void HjbSolution::continue_to(double x_target, double& h, double& hp) const {
    const double base_dx =
        opts.max_dx > 0.0 ? opts.max_dx : 0.01 * std::max(1.0, params.m);
    Integrator integ{params, opts.rtol,
                     opts.atol * opts.hp0 * std::max(1.0, params.m),
                     opts.atol * opts.hp0, 5.0 * base_dx};
    State y = integ.advance(xs.back(), {hs.back(), hps.back()}, x_target);
    h = y.h;
    hp = y.hp;
}

double HjbSolution::h_at(double x) const {
    if (x < xs.front() - 1e-12 * std::max(1.0, xs.front()))
        throw std::domain_error("h_at: reserve below minimum reserve");
    if (x > xs.back()) {
        double h, hp;
        continue_to(x, h, hp);
        return h;
    }
    return eval(std::max(x, xs.front()), hs, hps);
}

double HjbSolution::hp_at(double x) const {
    if (x < xs.front() - 1e-12 * std::max(1.0, xs.front()))
        throw std::domain_error("hp_at: reserve below minimum reserve");
    if (x > xs.back()) {
        double h, hp;
        continue_to(x, h, hp);
        return hp;
    }
    return eval(std::max(x, xs.front()), hps, hpps);
}

double HjbSolution::hpp_at(double x) const {
    if (x < xs.front() - 1e-12 * std::max(1.0, xs.front()))
        throw std::domain_error("hpp_at: reserve below minimum reserve");
    if (x >= xs.back()) {
        double h, hp;
        continue_to(x, h, hp);
        return hjb_curvature(params, x, h, hp).curvature;
    }
    // Linear interpolation; second-order, adequate for diagnostics.
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    std::size_t i = (it == xs.begin()) ? 1 : static_cast<std::size_t>(it - xs.begin());
    if (i >= xs.size()) i = xs.size() - 1;
    const double w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    return hpps[i - 1] + w * (hpps[i] - hpps[i - 1]);
}

ValueFunction::ValueFunction(std::shared_ptr<const HjbSolution> base,
                             double barrier)
    : base_(std::move(base)) {
    if (!(barrier >= base_->params.m))
        throw std::domain_error("build_value: barrier below minimum reserve");
    barrier_ = std::max(barrier, base_->b0);
    normalizer_ = base_->hp_at(barrier_);
    value_at_barrier_ = base_->h_at(barrier_) / normalizer_;
}

double ValueFunction::value(double x) const {
    if (x < base_->params.m) return 0.0;
    if (x <= barrier_) return base_->h_at(x) / normalizer_;
    return x - barrier_ + value_at_barrier_;
}

double ValueFunction::derivative(double x) const {
    if (x < base_->params.m) return 0.0;
    if (x <= barrier_) return base_->hp_at(x) / normalizer_;
    return 1.0;
}

double ValueFunction::second_derivative(double x) const {
    if (x < base_->params.m || x >= barrier_) return 0.0;
    return base_->hpp_at(x) / normalizer_;
}

ValueFunction build_value(std::shared_ptr<const HjbSolution> sol, double b) {
    return ValueFunction(std::move(sol), b);
}

double value_ratio(const HjbSolution& sol, double b1, double b2) {
    const double slack = 1e-9 * std::max(1.0, sol.b0);
    if (b1 < sol.b0 - slack || b2 < sol.b0 - slack)
        throw std::domain_error("value_ratio: barrier below the free boundary");
    return sol.hp_at(b2) / sol.hp_at(b1);
}

PolicyCurve zero_floor_policy(const ModelParams& p) {
    {
        ValidationReport rep = validate_params(p);
        if (!rep.pass)
            throw std::domain_error("zero_floor_policy: invalid parameters");
    }
    auto q = [&](double g) {
        return p.mu * p.mu * g / (2.0 * p.sigma2 * (1.0 - g)) -
               0.5 * p.sigmap2 * g * (1.0 - g) + p.r * g - p.c;
    };
    // q(0) = -c < 0 and q -> +inf as g -> 1; take the first sign change.
    double lo = 0.0, hi = 0.0;
    for (double g = 1e-3; g < 1.0; g += 1e-3) {
        if (q(g) > 0.0) {
            hi = g;
            lo = g - 1e-3;
            break;
        }
    }
    if (hi == 0.0)
        throw numerical_error("zero_floor_policy: no exponent in (0,1)");
    for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
        const double mid = 0.5 * (lo + hi);
        (q(mid) > 0.0 ? hi : lo) = mid;
    }
    const double gamma = 0.5 * (lo + hi);
    const double lambda = p.mu / (p.sigma2 * (1.0 - gamma));
    PolicyCurve curve = PolicyCurve::linear(lambda, 0.0, 2.0 / lambda, gamma);
    return curve;
}

} // namespace divbar
