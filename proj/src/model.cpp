#include "divbar/model.hpp"

#include <algorithm>
#include <cmath>

namespace divbar {

ValidationReport validate_params(const ModelParams& p) {
    ValidationReport rep;
    if (!(p.mu > 0.0)) rep.fail("mu must be positive");
    if (!(p.sigma2 > 0.0)) rep.fail("sigma2 must be positive");
    if (!(p.sigmap2 >= 0.0)) rep.fail("sigmap2 must be nonnegative");
    if (!(p.r >= 0.0)) rep.fail("r must be nonnegative");
    if (!(p.c > 0.0)) rep.fail("c must be positive");
    if (!(p.m >= 0.0)) rep.fail("m must be nonnegative");
    if (!(p.r <= p.c)) rep.fail("r <= c violated");
    for (double v : {p.mu, p.sigma2, p.sigmap2, p.r, p.c, p.m})
        if (!std::isfinite(v)) {
            rep.fail("non-finite model parameter");
            break;
        }
    return rep;
}

ValidationReport validate_target(const SolvencyTarget& t) {
    ValidationReport rep;
    if (!(t.epsilon > 0.0 && t.epsilon < 1.0)) rep.fail("epsilon outside (0,1)");
    if (!(t.horizon > 0.0)) rep.fail("horizon must be positive");
    return rep;
}

ValidationReport validate(const ModelParams& p, const SolvencyTarget& t) {
    ValidationReport rep = validate_params(p);
    ValidationReport tr = validate_target(t);
    if (!tr.pass) {
        rep.pass = false;
        rep.issues.insert(rep.issues.end(), tr.issues.begin(), tr.issues.end());
    }
    return rep;
}

static void check_retention(double a) {
    if (!(a >= 0.0 && a <= 1.0))
        throw std::domain_error("retention outside [0,1]");
}

double drift(const ModelParams& p, double x, double a) {
    check_retention(a);
    return a * p.mu + p.r * x;
}

double diffusion_sq(const ModelParams& p, double x, double a) {
    check_retention(a);
    return a * a * p.sigma2 + p.sigmap2 * x * x;
}

double PolicyCurve::retention(double x) const {
    if (switch_point > 0.0 && x >= switch_point) return 1.0;
    double a;
    if (xs.size() >= 2 && x >= xs.front() && x <= xs.back()) {
        auto it = std::upper_bound(xs.begin(), xs.end(), x);
        size_t i = (it == xs.begin()) ? 1 : static_cast<size_t>(it - xs.begin());
        if (i >= xs.size()) i = xs.size() - 1;
        double x0 = xs[i - 1], x1 = xs[i];
        double w = (x1 > x0) ? (x - x0) / (x1 - x0) : 0.0;
        a = as[i - 1] + w * (as[i] - as[i - 1]);
    } else {
        a = slope * x;
    }
    return std::clamp(a, 0.0, 1.0);
}

PolicyCurve PolicyCurve::linear(double slope, double x_min, double x_max,
                                double alpha_hat) {
    PolicyCurve c;
    c.x_min = x_min;
    c.slope = slope;
    c.switch_point = 1.0 / slope;
    c.alpha_hat = alpha_hat;
    c.xs = {x_min, x_max};
    if (c.switch_point > x_min && c.switch_point < x_max)
        c.xs.insert(c.xs.begin() + 1, c.switch_point);
    for (double x : c.xs) c.as.push_back(std::clamp(slope * x, 0.0, 1.0));
    return c;
}

double policy_eval(const PolicyCurve& curve, double x) {
    if (x < curve.x_min)
        throw std::domain_error("reserve below the minimum reserve of the policy");
    return curve.retention(x);
}

} // namespace divbar
