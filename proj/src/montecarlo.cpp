#include "divbar/montecarlo.hpp"

#include "divbar/philox.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <thread>

namespace divbar {

double normal_inverse_cdf(double u) {
    // Wichura's algorithm AS 241 (PPND16).
    const double q = u - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                     6.7265770927008700853e4) *
                        r +
                    4.5921953931549871457e4) *
                       r +
                   1.3731693765509461125e4) *
                      r +
                  1.9715909503065514427e3) *
                     r +
                 1.3314166789178437745e2) *
                    r +
                3.3871328727963666080e0) /
               (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                     3.9307895800092710610e4) *
                        r +
                    2.1213794301586595867e4) *
                       r +
                   5.3941960214247511077e3) *
                      r +
                  6.8718700749205790830e2) *
                     r +
                 4.2313330701600911252e1) *
                    r +
                1.0);
    }
    double r = (q < 0.0) ? u : 1.0 - u;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                    2.41780725177450611770e-1) *
                       r +
                   1.27045825245236838258e0) *
                      r +
                  3.64784832476320460504e0) *
                     r +
                 5.76949722146069140550e0) *
                    r +
                4.63033784615654529590e0) *
                   r +
               1.42343711074968357734e0) /
              (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                    1.51986665636164571966e-2) *
                       r +
                   1.48103976427480074590e-1) *
                      r +
                  6.89767334985100004550e-1) *
                     r +
                 1.67638483018380384940e0) *
                    r +
                2.05319162663775882187e0) *
                   r +
               1.0);
    } else {
        r -= 5.0;
        val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                    1.24266094738807843860e-3) *
                       r +
                   2.65321895265761230930e-2) *
                      r +
                  2.96560571828504891230e-1) *
                     r +
                 1.78482653991729133580e0) *
                    r +
                5.46378491116411436990e0) *
                   r +
               6.65790464350110377720e0) /
              (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                    1.84631831751005468180e-5) *
                       r +
                   7.86869131145613259100e-4) *
                      r +
                  1.48753612908506148525e-2) *
                     r +
                 1.36929880922735805310e-1) *
                    r +
                5.99832206555887937690e-1) *
                   r +
               1.0);
    }
    return (q < 0.0) ? -val : val;
}

namespace {

void check_config(const ModelParams& p, const SimConfig& cfg) {
    if (cfg.paths < 1) throw std::domain_error("sim: paths must be >= 1");
    if (!(cfg.dt > 0.0)) throw std::domain_error("sim: dt must be positive");
    if (!(cfg.initial_reserve >= p.m))
        throw std::domain_error("sim: initial reserve below minimum reserve");
    if (!(cfg.barrier >= cfg.initial_reserve))
        throw std::domain_error("sim: barrier below initial reserve");
    if (!(cfg.horizon >= 0.0)) throw std::domain_error("sim: negative horizon");
    if (cfg.value_horizon > 0.0 && cfg.value_horizon < cfg.horizon)
        throw std::domain_error("sim: value_horizon below horizon");
}

// Flat lookup of the retention policy: the sampled curve is only nontrivial
// between the wall and the switch point, so tabulate that stretch once and
// keep the hot loop free of binary searches.
struct PolicyTable {
    bool constant_one = true;
    double x_lo = 0.0, x_hi = 0.0, inv_dx = 0.0;
    std::vector<double> vals;

    explicit PolicyTable(const PolicyCurve& pol) {
        if (pol.switch_point <= pol.x_min) return; // full retention everywhere
        constant_one = false;
        x_lo = pol.x_min;
        x_hi = pol.switch_point;
        const std::size_t n = 8192;
        vals.resize(n + 1);
        const double dx = (x_hi - x_lo) / static_cast<double>(n);
        inv_dx = 1.0 / dx;
        for (std::size_t i = 0; i <= n; ++i)
            vals[i] = pol.retention(x_lo + dx * static_cast<double>(i));
    }

    inline double operator()(double x) const {
        if (constant_one || x >= x_hi) return 1.0;
        if (x <= x_lo) return vals.front();
        const double pos = (x - x_lo) * inv_dx;
        const std::size_t i = static_cast<std::size_t>(pos);
        const double w = pos - static_cast<double>(i);
        return vals[i] + w * (vals[i + 1] - vals[i]);
    }
};

struct StepPlan {
    double horizon;
    std::uint64_t n_steps;
    double dt_last;
};

StepPlan plan_steps(double horizon, double dt) {
    StepPlan s;
    s.horizon = horizon;
    const double raw = horizon / dt;
    std::uint64_t n = static_cast<std::uint64_t>(std::ceil(raw - 1e-9));
    if (n == 0) n = (horizon > 0.0) ? 1 : 0;
    s.n_steps = n;
    s.dt_last = horizon - static_cast<double>(n - 1) * dt;
    if (n == 0) s.dt_last = 0.0;
    return s;
}

struct PathRecord {
    double tau = std::numeric_limits<double>::infinity();
    double dividends = 0.0;
    float min_reserve = 0.0f;
    bool ruined = false;
    bool nonfinite = false;
};

struct Sink {
    virtual void take(double t, double reserve, double dividends) = 0;
    virtual ~Sink() = default;
};

PathRecord run_path(const ModelParams& p, const PolicyTable& pol,
                    const SimConfig& cfg, const StepPlan& plan,
                    std::uint64_t path_index, Sink* sink) {
    PathRecord rec;
    const bool anti = cfg.antithetic && (path_index & 1u);
    const std::uint64_t stream = cfg.antithetic ? (path_index >> 1) : path_index;

    double R = cfg.initial_reserve;
    double L = 0.0; // undiscounted cumulative dividends, for traces
    rec.min_reserve = static_cast<float>(R);
    if (sink) sink->take(0.0, R, L);

    if (R <= p.m) { // starting on the absorbing wall
        rec.ruined = true;
        rec.tau = 0.0;
        return rec;
    }

    const double mu = p.mu, r = p.r, s2 = p.sigma2, sp2 = p.sigmap2;
    const double m = p.m, b = cfg.barrier, c = p.c, dt = cfg.dt;

    for (std::uint64_t k = 0; k < plan.n_steps; ++k) {
        const double dtk = (k + 1 == plan.n_steps) ? plan.dt_last : dt;
        const double tn = (k + 1 == plan.n_steps)
                              ? plan.horizon
                              : static_cast<double>(k + 1) * dt;
        const double a = pol(R);
        const double dr = a * mu + r * R;
        const double var = a * a * s2 + sp2 * R * R;
        const StepDraw d = step_draw(cfg.seed, stream, k);
        const double z = anti ? -d.z : d.z;
        double Rn = R + dr * dtk + std::sqrt(var * dtk) * z;

        if (!std::isfinite(Rn)) {
            rec.nonfinite = true;
            return rec;
        }
        if (Rn <= m) {
            rec.ruined = true;
            rec.tau = tn;
            rec.min_reserve = std::min(rec.min_reserve, static_cast<float>(Rn));
            if (sink) sink->take(tn, m, L);
            return rec;
        }

        // Running maximum of the Brownian bridge across the step; its
        // overshoot of the barrier is the dividend increment. Sampling the
        // maximum instead of projecting the endpoint removes the
        // order-sqrt(dt) reflection bias at the barrier. The bridge tests
        // use the endpoint-averaged variance: sigma moves enough per step
        // for the frozen-start value to bias the crossing laws.
        const double an = pol(std::min(Rn, b));
        const double var_b =
            0.5 * (var + an * an * s2 + sp2 * std::min(Rn, b) * std::min(Rn, b));
        const double diff = Rn - R;
        const double peak =
            0.5 *
            (R + Rn +
             std::sqrt(diff * diff - 2.0 * var_b * dtk * std::log(d.u_barrier)));
        if (peak > b) {
            const double dL = peak - b;
            rec.dividends += std::exp(-c * tn) * dL;
            L += dL;
            Rn -= dL;
            if (Rn <= m) { // only reachable when b - m shrinks to noise scale
                rec.ruined = true;
                rec.tau = tn;
                rec.min_reserve = std::min(rec.min_reserve, static_cast<float>(Rn));
                if (sink) sink->take(tn, m, L);
                return rec;
            }
        } else {
            // No barrier contact; test the bridge minimum against the wall.
            const double arg = -2.0 * (R - m) * (Rn - m) / (var_b * dtk);
            if (arg > -40.0) {
                const double u = anti ? 1.0 - d.u_wall : d.u_wall;
                if (u < std::exp(arg)) {
                    rec.ruined = true;
                    rec.tau = tn;
                    rec.min_reserve = static_cast<float>(m);
                    if (sink) sink->take(tn, m, L);
                    return rec;
                }
            }
        }
        R = Rn;
        rec.min_reserve = std::min(rec.min_reserve, static_cast<float>(R));
        if (sink) sink->take(tn, R, L);
    }
    rec.ruined = false;
    return rec;
}

PathOutcome to_outcome(const PathRecord& rec, double final_like) {
    PathOutcome o;
    o.ruined = rec.ruined;
    o.tau = rec.tau;
    o.discounted_dividends = rec.dividends;
    o.min_reserve = rec.min_reserve;
    o.final_reserve = rec.ruined ? 0.0 : final_like;
    o.nonfinite = rec.nonfinite;
    return o;
}

void parallel_paths(std::uint64_t n, const std::function<void(std::uint64_t, std::uint64_t)>& body) {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    const unsigned workers = std::min<unsigned>(hw, 8);
    if (workers <= 1 || n < 4096) {
        body(0, n);
        return;
    }
    std::vector<std::thread> pool;
    const std::uint64_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        const std::uint64_t lo = w * chunk;
        const std::uint64_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
    for (auto& th : pool) th.join();
}

std::vector<PathRecord> run_all(const ModelParams& p, const PolicyCurve& policy,
                                const SimConfig& cfg, double horizon) {
    const PolicyTable pol(policy);
    const StepPlan plan = plan_steps(horizon, cfg.dt);
    std::vector<PathRecord> recs(cfg.paths);
    parallel_paths(cfg.paths, [&](std::uint64_t lo, std::uint64_t hi) {
        for (std::uint64_t i = lo; i < hi; ++i)
            recs[i] = run_path(p, pol, cfg, plan, i, nullptr);
    });
    return recs;
}

} // namespace

PathOutcome simulate_path(const ModelParams& p, const PolicyCurve& policy,
                          const SimConfig& cfg, std::uint64_t path_index) {
    check_config(p, cfg);
    const PolicyTable pol(policy);
    const double horizon =
        cfg.value_horizon > 0.0 ? cfg.value_horizon : cfg.horizon;
    const StepPlan plan = plan_steps(horizon, cfg.dt);
    const PathRecord rec = run_path(p, pol, cfg, plan, path_index, nullptr);
    return to_outcome(rec, cfg.barrier);
}

SimResult estimate_ruin(const ModelParams& p, const PolicyCurve& policy,
                        const SimConfig& cfg) {
    check_config(p, cfg);
    const std::vector<PathRecord> recs = run_all(p, policy, cfg, cfg.horizon);

    SimResult res;
    res.paths = cfg.paths;
    double tau_sum = 0.0;
    for (const PathRecord& rec : recs) {
        if (rec.nonfinite) {
            ++res.nonfinite_paths;
            continue;
        }
        if (rec.ruined && rec.tau <= cfg.horizon + 1e-12) {
            ++res.paths_bankrupt;
            tau_sum += rec.tau;
        }
    }
    const double n = static_cast<double>(res.paths - res.nonfinite_paths);
    const double ph = static_cast<double>(res.paths_bankrupt) / n;
    res.ruin_prob = ph;
    res.ruin_se = std::sqrt(ph * (1.0 - ph) / n);
    res.mean_tau =
        res.paths_bankrupt ? tau_sum / static_cast<double>(res.paths_bankrupt) : 0.0;
    return res;
}

SimResult estimate_value(const ModelParams& p,
                         std::shared_ptr<const HjbSolution> sol,
                         const SimConfig& cfg) {
    check_config(p, cfg);
    const ValueFunction f = build_value(sol, cfg.barrier);

    double horizon = cfg.value_horizon;
    const double value_tol = 1e-4 * std::max(f.value(cfg.initial_reserve),
                                             1e-8 * f.at_barrier());
    if (horizon <= 0.0)
        horizon = std::max(cfg.horizon,
                           std::log(f.at_barrier() / value_tol) / p.c);

    const std::vector<PathRecord> recs = run_all(p, sol->policy, cfg, horizon);

    SimResult res;
    res.paths = cfg.paths;
    res.truncation_bound = std::exp(-p.c * horizon) * f.at_barrier();
    res.truncation_warning = res.truncation_bound > value_tol * 1.0000001;

    double tau_sum = 0.0;
    for (const PathRecord& rec : recs) {
        if (rec.nonfinite) ++res.nonfinite_paths;
        if (rec.ruined && rec.tau <= cfg.horizon + 1e-12) {
            ++res.paths_bankrupt;
        }
        if (rec.ruined) tau_sum += rec.tau;
    }
    const double n = static_cast<double>(res.paths - res.nonfinite_paths);
    const double ph = static_cast<double>(res.paths_bankrupt) / n;
    res.ruin_prob = ph;
    res.ruin_se = std::sqrt(ph * (1.0 - ph) / n);

    // Stable summation in path order keeps the estimate independent of the
    // thread layout.
    if (cfg.antithetic) {
        const std::uint64_t pairs = cfg.paths / 2;
        double sum = 0.0;
        for (std::uint64_t j = 0; j < pairs; ++j)
            sum += 0.5 * (recs[2 * j].dividends + recs[2 * j + 1].dividends);
        const double mean = sum / static_cast<double>(pairs);
        double ss = 0.0;
        for (std::uint64_t j = 0; j < pairs; ++j) {
            const double d =
                0.5 * (recs[2 * j].dividends + recs[2 * j + 1].dividends) - mean;
            ss += d * d;
        }
        res.value_estimate = mean;
        res.value_se = std::sqrt(ss / (static_cast<double>(pairs) *
                                       std::max(1.0, static_cast<double>(pairs - 1))));
    } else {
        double sum = 0.0;
        for (const PathRecord& rec : recs) sum += rec.dividends;
        const double mean = sum / n;
        double ss = 0.0;
        for (const PathRecord& rec : recs) {
            if (rec.nonfinite) continue;
            const double d = rec.dividends - mean;
            ss += d * d;
        }
        res.value_estimate = mean;
        res.value_se = std::sqrt(ss / (n * std::max(1.0, n - 1.0)));
    }
    std::uint64_t ruined_any = 0;
    for (const PathRecord& rec : recs)
        if (rec.ruined) ++ruined_any;
    res.mean_tau = ruined_any ? tau_sum / static_cast<double>(ruined_any) : 0.0;
    return res;
}

ZeroReserveStudy zero_reserve_study(const ModelParams& p,
                                    const PolicyCurve& policy,
                                    const SimConfig& cfg,
                                    const std::vector<double>& thresholds) {
    if (p.m != 0.0)
        throw std::domain_error("zero_reserve_study: requires m = 0");
    if (thresholds.empty())
        throw std::domain_error("zero_reserve_study: no thresholds");
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        if (!(thresholds[i] > 0.0))
            throw std::domain_error("zero_reserve_study: thresholds must be positive");
        if (i > 0 && !(thresholds[i] < thresholds[i - 1]))
            throw std::domain_error("zero_reserve_study: thresholds must decrease");
    }
    check_config(p, cfg);

    const std::vector<PathRecord> recs = run_all(p, policy, cfg, cfg.horizon);

    ZeroReserveStudy study;
    const double n = static_cast<double>(cfg.paths);
    for (double thr : thresholds) {
        std::uint64_t hits = 0;
        for (const PathRecord& rec : recs)
            if (static_cast<double>(rec.min_reserve) <= thr) ++hits;
        const double ph = static_cast<double>(hits) / n;
        study.hits.emplace_back(thr, ph);
        study.ses.push_back(std::sqrt(ph * (1.0 - ph) / n));
    }
    study.last_consistent_with_zero = study.hits.back().second <= 3.0 / n;
    return study;
}

std::vector<TraceRow> trace_paths(const ModelParams& p, const PolicyCurve& policy,
                                  const SimConfig& cfg, std::uint64_t n_paths) {
    check_config(p, cfg);
    const PolicyTable pol(policy);
    const double horizon =
        cfg.value_horizon > 0.0 ? cfg.value_horizon : cfg.horizon;
    const StepPlan plan = plan_steps(horizon, cfg.dt);

    std::vector<TraceRow> rows;
    struct Collect : Sink {
        std::vector<TraceRow>* rows;
        std::uint64_t path;
        void take(double t, double reserve, double dividends) override {
            rows->push_back({path, t, reserve, dividends});
        }
    } sink;
    sink.rows = &rows;

    const std::uint64_t count = std::min<std::uint64_t>(n_paths, cfg.paths);
    for (std::uint64_t i = 0; i < count; ++i) {
        sink.path = i;
        run_path(p, pol, cfg, plan, i, &sink);
    }
    return rows;
}

} // namespace divbar
