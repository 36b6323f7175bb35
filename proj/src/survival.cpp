#include "divbar/survival.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace divbar {

namespace {

void check_domain(const ModelParams& p, double b, double T, int nx, int nt) {
    if (!(p.m > 0.0))
        throw std::domain_error("survival pde: degenerate wall m = 0 "
                                "(coefficients vanish; use the Monte Carlo "
                                "zero-reserve study instead)");
    if (!(b > p.m)) throw std::domain_error("survival pde: barrier must exceed m");
    if (!(T > 0.0)) throw std::domain_error("survival pde: horizon must be positive");
    if (nx < 3) throw std::domain_error("survival pde: nx must be at least 3");
    if (nt < 1) throw std::domain_error("survival pde: nt must be at least 1");
}

// Nudge nx upward (at most 8) so that the retention kink x0 falls close to
// a grid node; the coefficients are only piecewise smooth there.
int aligned_nx(const PolicyCurve& policy, double m, double b, int nx) {
    const double x0 = policy.switch_point;
    if (!(x0 > m && x0 < b)) return nx;
    const double frac = (x0 - m) / (b - m);
    int best = nx;
    double best_miss = 1.0;
    for (int cand = nx; cand <= nx + 8; ++cand) {
        const double pos = frac * cand;
        const double miss = std::abs(pos - std::round(pos));
        if (miss < best_miss - 1e-12) {
            best_miss = miss;
            best = cand;
        }
    }
    return best;
}

// Prefactored tridiagonal solve (Thomas algorithm); the matrix is fixed
// across time steps, so factor once.
struct TridiagFactor {
    std::vector<double> sub, den_inv, cp;

    void factor(const std::vector<double>& a, const std::vector<double>& b,
                const std::vector<double>& c) {
        const std::size_t n = b.size();
        sub = a;
        den_inv.assign(n, 0.0);
        cp.assign(n, 0.0);
        double den = b[0];
        den_inv[0] = 1.0 / den;
        cp[0] = c[0] * den_inv[0];
        for (std::size_t i = 1; i < n; ++i) {
            den = b[i] - a[i] * cp[i - 1];
            den_inv[i] = 1.0 / den;
            cp[i] = c[i] * den_inv[i];
        }
    }

    void solve(std::vector<double>& r) const {
        const std::size_t n = den_inv.size();
        r[0] *= den_inv[0];
        for (std::size_t i = 1; i < n; ++i)
            r[i] = (r[i] - sub[i] * r[i - 1]) * den_inv[i];
        for (std::size_t i = n - 1; i-- > 0;) r[i] -= cp[i] * r[i + 1];
    }
};

struct RowSink {
    virtual void take(double t, const std::vector<double>& row) = 0;
    virtual ~RowSink() = default;
};

// Core stepper. Returns the final row phi(T, x0..xN); reports the field
// range over every computed row through field_min/field_max.
std::vector<double> integrate(const ModelParams& p, const PolicyCurve& policy,
                              double b, double T, int nx, int nt,
                              RowSink* sink, double& field_min,
                              double& field_max) {
    const double m = p.m;
    const double dx = (b - m) / nx;
    const double dt = T / nt;
    const std::size_t n = static_cast<std::size_t>(nx) + 1;

    std::vector<double> alpha(n), beta(n), gamma(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = m + dx * static_cast<double>(i);
        const double a = policy.retention(x);
        const double A = 0.5 * (a * a * p.sigma2 + p.sigmap2 * x * x);
        const double B = a * p.mu + p.r * x;
        if (i + 1 == n) { // ghost-node reflection at b
            alpha[i] = 2.0 * A / (dx * dx);
            beta[i] = -2.0 * A / (dx * dx);
            gamma[i] = 0.0;
        } else {
            alpha[i] = A / (dx * dx) - B / (2.0 * dx);
            beta[i] = -2.0 * A / (dx * dx);
            gamma[i] = A / (dx * dx) + B / (2.0 * dx);
        }
    }

    std::vector<double> phi(n, 1.0);
    phi[0] = 0.0;
    field_min = 0.0;
    field_max = 1.0;
    double t = 0.0;
    if (sink) sink->take(t, phi);

    // Unknowns are nodes 1..nx; node 0 is pinned to zero.
    const std::size_t nu = n - 1;
    std::vector<double> la(nu), lb(nu), lc(nu), rhs(nu);
    TridiagFactor f;

    auto run_steps = [&](double theta, double step_dt, int count) {
        for (std::size_t i = 0; i < nu; ++i) {
            const std::size_t g = i + 1;
            la[i] = -theta * step_dt * alpha[g];
            lb[i] = 1.0 - theta * step_dt * beta[g];
            lc[i] = -theta * step_dt * gamma[g];
        }
        la[0] = 0.0; // couples to the pinned wall node
        f.factor(la, lb, lc);
        const double ex = (1.0 - theta) * step_dt;
        for (int k = 0; k < count; ++k) {
            for (std::size_t i = 0; i < nu; ++i) {
                const std::size_t g = i + 1;
                const double left = phi[g - 1];
                const double right = (g + 1 < n) ? phi[g + 1] : 0.0;
                double l_phi = alpha[g] * left + beta[g] * phi[g];
                if (g + 1 < n) l_phi += gamma[g] * right;
                rhs[i] = phi[g] + ex * l_phi;
            }
            f.solve(rhs);
            for (std::size_t i = 0; i < nu; ++i) phi[i + 1] = rhs[i];
            phi[0] = 0.0;
            t += step_dt;
            for (std::size_t i = 0; i < n; ++i) {
                field_min = std::min(field_min, phi[i]);
                field_max = std::max(field_max, phi[i]);
            }
            if (sink) sink->take(t, phi);
        }
    };

    const int rann_full = std::min(2, nt);
    run_steps(1.0, 0.5 * dt, 2 * rann_full);
    if (nt > rann_full) run_steps(0.5, dt, nt - rann_full);

    for (double v : phi)
        if (!std::isfinite(v))
            throw numerical_error("survival pde: non-finite field");
    return phi;
}

double interp_row(const std::vector<double>& x, const std::vector<double>& row,
                  double xq) {
    if (xq <= x.front()) return row.front();
    if (xq >= x.back()) return row.back();
    const auto it = std::upper_bound(x.begin(), x.end(), xq);
    const std::size_t i = static_cast<std::size_t>(it - x.begin());
    const double w = (xq - x[i - 1]) / (x[i] - x[i - 1]);
    return row[i - 1] + w * (row[i] - row[i - 1]);
}

} // namespace

double SurvivalGrid::psi_final(double xq) const {
    const std::size_t n = x.size();
    std::vector<double> row(phi.end() - static_cast<std::ptrdiff_t>(n), phi.end());
    return 1.0 - interp_row(x, row, xq);
}

SurvivalGrid solve_survival(const ModelParams& p, const PolicyCurve& policy,
                            double b, double T, int nx, int nt) {
    check_domain(p, b, T, nx, nt);
    nx = aligned_nx(policy, p.m, b, nx);

    SurvivalGrid grid;
    grid.barrier = b;
    grid.horizon = T;
    grid.x.resize(static_cast<std::size_t>(nx) + 1);
    const double dx = (b - p.m) / nx;
    for (int i = 0; i <= nx; ++i) grid.x[static_cast<std::size_t>(i)] = p.m + dx * i;

    struct Collect : RowSink {
        SurvivalGrid* g;
        void take(double t, const std::vector<double>& row) override {
            g->t.push_back(t);
            g->phi.insert(g->phi.end(), row.begin(), row.end());
        }
    } sink;
    sink.g = &grid;

    integrate(p, policy, b, T, nx, nt, &sink, grid.field_min, grid.field_max);
    return grid;
}

SurvivalGrid solve_survival(const ModelParams& p, const HjbSolution& sol,
                            double b, double T, int nx, int nt) {
    return solve_survival(p, sol.policy, b, T, nx, nt);
}

double ruin_at_barrier_fixed(const ModelParams& p, const PolicyCurve& policy,
                             double b, double T, int nx, int nt,
                             bool align_kink) {
    check_domain(p, b, T, nx, nt);
    if (align_kink) nx = aligned_nx(policy, p.m, b, nx);
    double lo, hi;
    const std::vector<double> row = integrate(p, policy, b, T, nx, nt, nullptr, lo, hi);
    return 1.0 - row.back();
}

namespace {

template <typename Eval>
RuinValue refine(const PdeOptions& opts, Eval&& eval) {
    RuinValue rv;
    rv.nx = opts.nx;
    rv.nt = opts.nt;
    double prev = eval(rv.nx, rv.nt);
    rv.psi = prev;
    rv.residual = std::numeric_limits<double>::infinity();
    for (int k = 0; k < opts.max_doublings; ++k) {
        const int nx2 = rv.nx * 2, nt2 = rv.nt * 2;
        const double cur = eval(nx2, nt2);
        rv.nx = nx2;
        rv.nt = nt2;
        rv.residual = std::abs(cur - prev);
        rv.psi = cur;
        if (rv.residual < opts.tol) return rv;
        prev = cur;
    }
    return rv; // residual reports the achieved accuracy
}

} // namespace

RuinValue ruin_at_barrier_info(const ModelParams& p, const PolicyCurve& policy,
                               double b, double T, const PdeOptions& opts) {
    return refine(opts, [&](int nx, int nt) {
        return ruin_at_barrier_fixed(p, policy, b, T, nx, nt, opts.align_kink);
    });
}

double ruin_at_barrier(const ModelParams& p, const HjbSolution& sol, double b,
                       double T, const PdeOptions& opts) {
    return ruin_at_barrier_info(p, sol.policy, b, T, opts).psi;
}

double ruin_probability(const ModelParams& p, const PolicyCurve& policy,
                        double b, double T, double x, const PdeOptions& opts) {
    if (!(x >= p.m && x <= b))
        throw std::domain_error("ruin_probability: initial reserve outside [m,b]");
    const RuinValue rv = refine(opts, [&](int nx, int nt) {
        check_domain(p, b, T, nx, nt);
        const int nxa = opts.align_kink ? aligned_nx(policy, p.m, b, nx) : nx;
        double lo, hi;
        const std::vector<double> row =
            integrate(p, policy, b, T, nxa, nt, nullptr, lo, hi);
        std::vector<double> nodes(static_cast<std::size_t>(nxa) + 1);
        const double dx = (b - p.m) / nxa;
        for (int i = 0; i <= nxa; ++i)
            nodes[static_cast<std::size_t>(i)] = p.m + dx * i;
        return 1.0 - interp_row(nodes, row, x);
    });
    return rv.psi;
}

std::vector<std::pair<double, double>>
ruin_profile(const ModelParams& p, const PolicyCurve& policy, double b,
             double T, const PdeOptions& opts) {
    const RuinValue rv = ruin_at_barrier_info(p, policy, b, T, opts);
    const int nx = opts.align_kink ? aligned_nx(policy, p.m, b, rv.nx) : rv.nx;
    double lo, hi;
    const std::vector<double> row = integrate(p, policy, b, T, nx, rv.nt,
                                              nullptr, lo, hi);
    std::vector<std::pair<double, double>> out;
    out.reserve(row.size());
    const double dx = (b - p.m) / nx;
    for (std::size_t i = 0; i < row.size(); ++i)
        out.emplace_back(p.m + dx * static_cast<double>(i), 1.0 - row[i]);
    return out;
}

std::vector<std::pair<double, double>>
scan_barriers(const ModelParams& p, const HjbSolution& sol, double T,
              const std::vector<double>& bs, const PdeOptions& opts) {
    std::vector<std::pair<double, double>> out;
    out.reserve(bs.size());
    for (double b : bs)
        out.emplace_back(b, ruin_at_barrier_info(p, sol.policy, b, T, opts).psi);
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (out[i].first > out[i - 1].first &&
            out[i].second > out[i - 1].second + 1e-6) {
            std::ostringstream os;
            os << "scan_barriers: ruin probability increased with the barrier ("
               << out[i - 1].second << " at b=" << out[i - 1].first << " -> "
               << out[i].second << " at b=" << out[i].first << ")";
            throw numerical_error(os.str());
        }
    }
    return out;
}

} // namespace divbar
