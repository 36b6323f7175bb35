#include "divbar/report.hpp"

#include "divbar/bounds.hpp"
#include "divbar/montecarlo.hpp"
#include "divbar/survival.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace divbar {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// configuration

namespace {

void reject_unknown(const json& obj, const char* where,
                    std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known)
            throw config_error(std::string("unknown key '") + it.key() + "' in " +
                               where);
    }
}

double need_number(const json& obj, const char* where, const char* key) {
    if (!obj.contains(key))
        throw config_error(std::string("missing key '") + key + "' in " + where);
    if (!obj.at(key).is_number())
        throw config_error(std::string("key '") + key + "' in " + where +
                           " must be a number");
    return obj.at(key).get<double>();
}

double opt_number(const json& obj, const char* key, double fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_number())
        throw config_error(std::string("key '") + key + "' must be a number");
    return obj.at(key).get<double>();
}

} // namespace

RunConfig parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw config_error(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) throw config_error("config root must be an object");
    reject_unknown(root, "config", {"model", "target", "hjb", "pde", "mc", "seed"});

    RunConfig cfg;
    if (!root.contains("model")) throw config_error("missing key 'model' in config");
    {
        const json& mj = root.at("model");
        reject_unknown(mj, "'model'", {"mu", "sigma2", "sigmap2", "r", "c", "m"});
        cfg.model.mu = need_number(mj, "'model'", "mu");
        cfg.model.sigma2 = need_number(mj, "'model'", "sigma2");
        cfg.model.sigmap2 = need_number(mj, "'model'", "sigmap2");
        cfg.model.r = need_number(mj, "'model'", "r");
        cfg.model.c = need_number(mj, "'model'", "c");
        cfg.model.m = need_number(mj, "'model'", "m");
    }
    if (!root.contains("target"))
        throw config_error("missing key 'target' in config");
    {
        const json& tj = root.at("target");
        reject_unknown(tj, "'target'", {"epsilon", "T"});
        cfg.target.epsilon = need_number(tj, "'target'", "epsilon");
        cfg.target.horizon = need_number(tj, "'target'", "T");
    }
    if (root.contains("hjb")) {
        const json& hj = root.at("hjb");
        reject_unknown(hj, "'hjb'", {"x_max", "tol", "debug_scale_hpp"});
        cfg.hjb.x_max = opt_number(hj, "x_max", cfg.hjb.x_max);
        cfg.hjb.tol = opt_number(hj, "tol", cfg.hjb.tol);
        cfg.hjb.debug_scale_hpp =
            opt_number(hj, "debug_scale_hpp", cfg.hjb.debug_scale_hpp);
    }
    if (root.contains("pde")) {
        const json& pj = root.at("pde");
        reject_unknown(pj, "'pde'", {"nx", "nt", "tol"});
        cfg.pde.nx = static_cast<int>(opt_number(pj, "nx", cfg.pde.nx));
        cfg.pde.nt = static_cast<int>(opt_number(pj, "nt", cfg.pde.nt));
        cfg.pde.tol = opt_number(pj, "tol", cfg.pde.tol);
    }
    if (root.contains("mc")) {
        const json& mj = root.at("mc");
        reject_unknown(mj, "'mc'",
                       {"paths", "dt", "value_horizon", "antithetic",
                        "trace_paths"});
        cfg.mc.paths = static_cast<std::uint64_t>(
            opt_number(mj, "paths", static_cast<double>(cfg.mc.paths)));
        cfg.mc.dt = opt_number(mj, "dt", cfg.mc.dt);
        cfg.mc.value_horizon = opt_number(mj, "value_horizon", cfg.mc.value_horizon);
        cfg.mc.trace_paths = static_cast<std::uint64_t>(
            opt_number(mj, "trace_paths", 0.0));
        if (mj.contains("antithetic")) {
            if (!mj.at("antithetic").is_boolean())
                throw config_error("key 'antithetic' must be a boolean");
            cfg.mc.antithetic = mj.at("antithetic").get<bool>();
        }
    }
    if (root.contains("seed")) {
        if (!root.at("seed").is_number_unsigned())
            throw config_error("key 'seed' must be an unsigned integer");
        cfg.seed = root.at("seed").get<std::uint64_t>();
    }
    return cfg;
}

RunConfig load_config(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw config_error("cannot open config file: " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// writers

namespace {

std::string format_cell(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

void atomic_write(const fs::path& file, const std::string& content) {
    fs::create_directories(file.parent_path().empty() ? fs::path(".")
                                                      : file.parent_path());
    const fs::path tmp = file.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw numerical_error("cannot write " + tmp.string());
        out << content;
    }
    fs::rename(tmp, file);
}

} // namespace

void write_csv(const fs::path& file, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    std::ostringstream os;
    for (std::size_t i = 0; i < header.size(); ++i)
        os << header[i] << (i + 1 < header.size() ? "," : "\n");
    for (const auto& row : rows)
        for (std::size_t i = 0; i < row.size(); ++i)
            os << format_cell(row[i]) << (i + 1 < row.size() ? "," : "\n");
    atomic_write(file, os.str());
}

void write_summary_json(const RunSummary& summary, const RunConfig& cfg,
                        const fs::path& file) {
    nlohmann::ordered_json j;
    j["schema_version"] = summary.schema_version;
    j["command"] = summary.command;
    j["inputs"] = {
        {"model",
         {{"mu", cfg.model.mu},
          {"sigma2", cfg.model.sigma2},
          {"sigmap2", cfg.model.sigmap2},
          {"r", cfg.model.r},
          {"c", cfg.model.c},
          {"m", cfg.model.m}}},
        {"target", {{"epsilon", cfg.target.epsilon}, {"T", cfg.target.horizon}}},
        {"seed", cfg.seed}};
    j["b0"] = summary.b0;
    j["x0"] = summary.x0;
    j["lambda_hat"] = summary.lambda_hat;
    j["alpha_hat"] = summary.alpha_hat;
    if (!summary.regime.empty()) j["regime"] = summary.regime;
    j["barrier"] = summary.barrier;
    j["achieved_ruin"] = summary.achieved_ruin;
    j["value_ratio"] = summary.value_ratio;
    j["checks"] = json::array();
    for (const auto& c : summary.checks)
        j["checks"].push_back({{"name", c.name},
                               {"pass", c.pass},
                               {"margin", c.margin},
                               {"detail", c.detail}});
    j["all_pass"] = summary.all_pass();
    j["wall_seconds"] = summary.wall_seconds;
    j["artifacts"] = summary.artifacts;
    atomic_write(file, j.dump(2) + "\n");
}

void write_svg_plot(const fs::path& file, const std::string& title,
                    const std::string& xlabel, const std::string& ylabel,
                    const std::vector<SvgSeries>& series) {
    const double W = 720, H = 480, L = 80, R = 24, T = 48, B = 56;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    if (!(xmax > xmin)) xmax = xmin + 1;
    if (!(ymax > ymin)) ymax = ymin + 1;
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;

    auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='"
       << H << "' viewBox='0 0 " << W << " " << H << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<text x='" << W / 2 << "' y='24' text-anchor='middle' font-size='16'>"
       << title << "</text>\n";
    // axes
    os << "<line x1='" << L << "' y1='" << H - B << "' x2='" << W - R << "' y2='"
       << H - B << "' stroke='black'/>\n";
    os << "<line x1='" << L << "' y1='" << T << "' x2='" << L << "' y2='" << H - B
       << "' stroke='black'/>\n";
    for (int k = 0; k <= 5; ++k) {
        const double xv = xmin + (xmax - xmin) * k / 5.0;
        const double yv = ymin + (ymax - ymin) * k / 5.0;
        os << "<line x1='" << px(xv) << "' y1='" << H - B << "' x2='" << px(xv)
           << "' y2='" << H - B + 5 << "' stroke='black'/>\n";
        os << "<text x='" << px(xv) << "' y='" << H - B + 20
           << "' text-anchor='middle' font-size='11'>" << format_cell(xv)
           << "</text>\n";
        os << "<line x1='" << L - 5 << "' y1='" << py(yv) << "' x2='" << L
           << "' y2='" << py(yv) << "' stroke='black'/>\n";
        os << "<text x='" << L - 8 << "' y='" << py(yv) + 4
           << "' text-anchor='end' font-size='11'>" << format_cell(yv)
           << "</text>\n";
    }
    os << "<text x='" << (L + W - R) / 2 << "' y='" << H - 12
       << "' text-anchor='middle' font-size='13'>" << xlabel << "</text>\n";
    os << "<text x='18' y='" << (T + H - B) / 2
       << "' text-anchor='middle' font-size='13' transform='rotate(-90 18 "
       << (T + H - B) / 2 << ")'>" << ylabel << "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        os << "<polyline fill='none' stroke='" << colors[s % 4]
           << "' stroke-width='1.5' points='";
        for (std::size_t i = 0; i < series[s].x.size(); ++i)
            os << px(series[s].x[i]) << "," << py(series[s].y[i]) << " ";
        os << "'/>\n";
        os << "<text x='" << W - R - 8 << "' y='" << T + 18 + 16 * s
           << "' text-anchor='end' font-size='12' fill='" << colors[s % 4] << "'>"
           << series[s].label << "</text>\n";
    }
    os << "</svg>\n";
    atomic_write(file, os.str());
}

// ---------------------------------------------------------------------------
// commands

namespace {

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                             start)
            .count();
    }
};

SolverOptions solver_options(const RunConfig& cfg) {
    SolverOptions o;
    o.x_max = cfg.hjb.x_max;
    o.rtol = cfg.hjb.tol;
    return o;
}

PdeOptions pde_options(const RunConfig& cfg) {
    PdeOptions o;
    o.nx = cfg.pde.nx;
    o.nt = cfg.pde.nt;
    o.tol = cfg.pde.tol;
    return o;
}

void require_valid(const RunConfig& cfg) {
    ValidationReport rep = validate(cfg.model, cfg.target);
    if (!rep.pass) {
        std::string msg = "invalid configuration:";
        for (const auto& s : rep.issues) msg += " " + s + ";";
        throw config_error(msg);
    }
}

void fill_solution_fields(RunSummary& s, const HjbSolution& sol) {
    s.b0 = sol.b0;
    s.x0 = sol.x0;
    s.lambda_hat = sol.lambda_hat;
    s.alpha_hat = sol.alpha_hat;
}

// The fixed example family behind the figure commands; the discount
// and return rates come from the caller's config.
ModelParams figure_params(const RunConfig& cfg, double sigma2, double m) {
    ModelParams p;
    p.mu = 1.0;
    p.sigma2 = sigma2;
    p.sigmap2 = 2.0;
    p.m = m;
    p.r = cfg.model.r;
    p.c = cfg.model.c;
    return p;
}

std::vector<double> eps_grid() {
    std::vector<double> eps;
    for (int k = 1; k <= 18; ++k) eps.push_back(0.05 * k);
    return eps;
}

} // namespace

RunSummary cmd_hjb(const RunConfig& cfg, const fs::path& out_dir, bool svg) {
    Timer timer;
    require_valid(cfg);
    RunSummary s;
    s.command = "hjb";

    const HjbSolution sol = solve_hjb(cfg.model, solver_options(cfg));
    fill_solution_fields(s, sol);
    s.barrier = sol.b0;

    std::vector<std::vector<double>> rows;
    rows.reserve(sol.xs.size());
    for (std::size_t i = 0; i < sol.xs.size(); ++i)
        rows.push_back({sol.xs[i], sol.hs[i], sol.hps[i], sol.hpps[i], sol.as[i]});
    const fs::path csv = out_dir / "hjb_solution.csv";
    write_csv(csv, {"x", "h", "hp", "hpp", "a_star"}, rows);
    s.artifacts.push_back(csv.string());

    if (svg) {
        SvgSeries sh{"h(x)", sol.xs, sol.hs};
        SvgSeries sa{"a*(x)", sol.xs, sol.as};
        const fs::path img = out_dir / "hjb_solution.svg";
        write_svg_plot(img, "value kernel and feedback retention", "reserve x",
                       "h, a*", {sh, sa});
        s.artifacts.push_back(img.string());
    }

    s.wall_seconds = timer.seconds();
    write_summary_json(s, cfg, out_dir / "summary.json");
    return s;
}

RunSummary cmd_calibrate(const RunConfig& cfg, const fs::path& out_dir, bool svg) {
    Timer timer;
    require_valid(cfg);
    RunSummary s;
    s.command = "calibrate";

    const HjbSolution sol = solve_hjb(cfg.model, solver_options(cfg));
    fill_solution_fields(s, sol);

    CalOptions copts;
    copts.pde = pde_options(cfg);
    const CalibrationResult res = calibrate(cfg.model, sol, cfg.target, copts);
    s.regime = res.regime == Regime::Unconstrained ? "unconstrained" : "constrained";
    s.barrier = res.barrier;
    s.achieved_ruin = res.achieved_ruin;
    s.value_ratio = res.value_ratio;

    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < res.trace.size(); ++i)
        rows.push_back({static_cast<double>(i), res.trace[i].b_lo,
                        res.trace[i].b_hi, res.trace[i].b_mid,
                        res.trace[i].psi_mid});
    const fs::path csv = out_dir / "calibration.csv";
    write_csv(csv, {"iter", "b_lo", "b_hi", "b_mid", "psi_mid"}, rows);
    s.artifacts.push_back(csv.string());

    if (svg && !rows.empty()) {
        SvgSeries widths{"bracket width", {}, {}};
        for (std::size_t i = 0; i < res.trace.size(); ++i) {
            widths.x.push_back(static_cast<double>(i));
            widths.y.push_back(std::log10(res.trace[i].b_hi - res.trace[i].b_lo));
        }
        const fs::path img = out_dir / "calibration.svg";
        write_svg_plot(img, "bisection trace", "iteration",
                       "log10 bracket width", {widths});
        s.artifacts.push_back(img.string());
    }

    s.wall_seconds = timer.seconds();
    write_summary_json(s, cfg, out_dir / "summary.json");
    return s;
}

RunSummary cmd_figure(const RunConfig& cfg, int figure_id, const fs::path& out_dir,
                      bool svg) {
    Timer timer;
    require_valid(cfg);
    if (figure_id < 1 || figure_id > 6)
        throw config_error("figure id must be in 1..6");

    RunSummary s;
    s.command = "figure" + std::to_string(figure_id);
    const PdeOptions pde = pde_options(cfg);
    CalOptions copts;
    copts.pde = pde;

    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
    std::vector<SvgSeries> series;
    std::string title, xlabel, ylabel;

    const double T = 1.0;
    if (figure_id == 1 || figure_id == 2) {
        const ModelParams p = figure_params(cfg, 1.0, 1.0);
        const HjbSolution sol = solve_hjb(p, solver_options(cfg));
        fill_solution_fields(s, sol);
        if (figure_id == 1) {
            const double b = 50.0;
            header = {"x", "psi"};
            title = "ruin probability vs initial reserve (b=50, T=1)";
            xlabel = "initial reserve x";
            ylabel = "ruin probability";
            const auto profile = ruin_profile(p, sol.policy, b, T, pde);
            SvgSeries sv{"psi(T,x)", {}, {}};
            for (int k = 0; k <= 98; ++k) {
                const double x = p.m + (b - p.m) * k / 98.0;
                // linear interpolation on the converged profile row
                const double pos = (x - p.m) / (b - p.m) *
                                   static_cast<double>(profile.size() - 1);
                const std::size_t i = std::min(
                    static_cast<std::size_t>(pos), profile.size() - 2);
                const double w = pos - static_cast<double>(i);
                const double psi = profile[i].second +
                                   w * (profile[i + 1].second - profile[i].second);
                rows.push_back({x, psi});
                sv.x.push_back(x);
                sv.y.push_back(psi);
            }
            series.push_back(std::move(sv));
        } else {
            header = {"b", "psi"};
            title = "ruin probability vs dividend barrier (start at b, T=1)";
            xlabel = "barrier b";
            ylabel = "ruin probability";
            SvgSeries sv{"psi~(b)", {}, {}};
            for (int k = 0; k <= 96; ++k) {
                const double b = 1.5 + (50.0 - 1.5) * k / 96.0;
                const double psi =
                    ruin_at_barrier_info(p, sol.policy, b, T, pde).psi;
                rows.push_back({b, psi});
                sv.x.push_back(b);
                sv.y.push_back(psi);
            }
            series.push_back(std::move(sv));
        }
    } else {
        struct Variant {
            std::string label;
            ModelParams p;
            double T;
        };
        std::vector<Variant> variants;
        switch (figure_id) {
        case 3:
            variants = {{"b(eps)", figure_params(cfg, 1.0, 1.0), 1.0}};
            title = "barrier vs risk level (m=1, T=1)";
            break;
        case 4:
            variants = {{"m=1", figure_params(cfg, 1.0, 1.0), 1.0},
                        {"m=2", figure_params(cfg, 1.0, 2.0), 1.0}};
            title = "barrier vs risk level for m=1,2 (T=1)";
            break;
        case 5:
            variants = {{"T=1", figure_params(cfg, 1.0, 1.0), 1.0},
                        {"T=2", figure_params(cfg, 1.0, 1.0), 2.0}};
            title = "barrier vs risk level for T=1,2 (m=1)";
            break;
        default:
            variants = {{"sigma2=1", figure_params(cfg, 1.0, 1.0), 1.0},
                        {"sigma2=2", figure_params(cfg, 2.0, 1.0), 1.0}};
            title = "barrier vs risk level for sigma2=1,2 (m=1, T=1)";
            break;
        }
        xlabel = "risk level epsilon";
        ylabel = "barrier b(epsilon)";
        header = {"epsilon"};
        for (const auto& v : variants) header.push_back("b_" + v.label);

        const std::vector<double> eps = eps_grid();
        std::vector<std::vector<double>> cols;
        for (const auto& v : variants) {
            const HjbSolution sol = solve_hjb(v.p, solver_options(cfg));
            if (&v == &variants.front()) fill_solution_fields(s, sol);
            std::vector<double> col;
            for (double e : eps)
                col.push_back(
                    barrier_for_ruin_level(v.p, sol.policy, v.T, e, copts));
            cols.push_back(std::move(col));
        }
        for (std::size_t i = 0; i < eps.size(); ++i) {
            std::vector<double> row{eps[i]};
            for (const auto& col : cols) row.push_back(col[i]);
            rows.push_back(std::move(row));
        }
        for (std::size_t v = 0; v < variants.size(); ++v) {
            SvgSeries sv{variants[v].label, eps, cols[v]};
            series.push_back(std::move(sv));
        }
    }

    const fs::path csv =
        out_dir / ("figure" + std::to_string(figure_id) + ".csv");
    write_csv(csv, header, rows);
    s.artifacts.push_back(csv.string());
    if (svg) {
        const fs::path img =
            out_dir / ("figure" + std::to_string(figure_id) + ".svg");
        write_svg_plot(img, title, xlabel, ylabel, series);
        s.artifacts.push_back(img.string());
    }

    s.wall_seconds = timer.seconds();
    write_summary_json(s, cfg, out_dir / "summary.json");
    return s;
}

// ---------------------------------------------------------------------------
// verify

namespace {

// Exact inner maximum of the generator over the retention: candidates are
// the interval ends and the parabola vertex.
double hjb_residual_at(const ModelParams& p, double x, double h, double hp,
                       double hpp) {
    double best = -1e300;
    auto eval = [&](double a) {
        const double v = 0.5 * (p.sigma2 * a * a + p.sigmap2 * x * x) * hpp +
                         (p.mu * a + p.r * x) * hp - p.c * h;
        best = std::max(best, v);
    };
    eval(0.0);
    eval(1.0);
    if (hpp < 0.0) {
        const double av = -p.mu * hp / (p.sigma2 * hpp);
        if (av > 0.0 && av < 1.0) eval(av);
    }
    return best;
}

} // namespace

double value_bias_allowance(const ModelParams& p, double barrier, double value_x,
                            double value_b, double dt) {
    // Order-sqrt(dt) allowance for the projection scheme, scaled down the
    // value curve the same way barrier perturbations propagate.
    const double sigma_b = std::sqrt(diffusion_sq(p, barrier, 1.0));
    return sigma_b * std::sqrt(dt) * value_x / std::max(value_b, 1e-300);
}

RunSummary cmd_verify(const RunConfig& cfg, const fs::path& out_dir) {
    Timer timer;
    RunSummary s;
    s.command = "verify";

    auto add = [&s](std::string name, bool pass, double margin,
                    std::string detail) {
        s.checks.push_back({std::move(name), pass, margin, std::move(detail)});
    };

    // 1. standing assumptions
    {
        ValidationReport rep = validate(cfg.model, cfg.target);
        std::string detail;
        for (const auto& i : rep.issues) detail += i + "; ";
        add("params_valid", rep.pass, 0.0, detail);
        if (!rep.pass) {
            s.wall_seconds = timer.seconds();
            write_summary_json(s, cfg, out_dir / "summary.json");
            return s;
        }
    }

    const ModelParams& p = cfg.model;
    const double T = cfg.target.horizon;
    auto sol = std::make_shared<const HjbSolution>(
        solve_hjb(p, solver_options(cfg)));
    fill_solution_fields(s, *sol);
    const PdeOptions pde = pde_options(cfg);

    // 2. HJB residual at every node (the hook scales h'' to prove the check
    // can fail)
    {
        double worst = 0.0;
        for (std::size_t i = 0; i < sol->xs.size(); ++i) {
            const double res = hjb_residual_at(
                p, sol->xs[i], sol->hs[i], sol->hps[i],
                sol->hpps[i] * cfg.hjb.debug_scale_hpp);
            const double tol = 1e-8 * std::max(1.0, p.c * sol->hs[i]);
            worst = std::max(worst, std::abs(res) / tol);
        }
        add("hjb_residual", worst <= 1.0, 1.0 - worst,
            "max residual / tolerance = " + format_cell(worst));
    }

    // 3. shape: positive slope, concave-then-convex with one sign change
    {
        bool hp_pos = true;
        int sign_changes = 0;
        for (std::size_t i = 0; i < sol->xs.size(); ++i) {
            hp_pos = hp_pos && sol->hps[i] > 0.0;
            if (i > 0 && sol->hpps[i - 1] < 0.0 && sol->hpps[i] >= 0.0)
                ++sign_changes;
            if (i > 0 && sol->hpps[i - 1] >= 0.0 && sol->hpps[i] < 0.0)
                ++sign_changes;
        }
        const bool pass = hp_pos && sign_changes == 1 && sol->b0 > sol->x0;
        add("hjb_shape", pass, pass ? 1.0 : 0.0,
            "sign changes = " + std::to_string(sign_changes) +
                ", b0 = " + format_cell(sol->b0) + ", x0 = " + format_cell(sol->x0));
    }

    // 4. switch-point identity, up to the measured nonlinearity of the policy
    {
        const double dev = std::abs(sol->lambda_hat * sol->x0 - 1.0);
        const double tol = std::max(1e-6, 2.0 * sol->policy.linearity_dev + 1e-6);
        add("lambda_x0", dev <= tol, tol - dev,
            "|lambda*x0 - 1| = " + format_cell(dev));
    }

    // 5. homogeneity of degree one
    {
        SolverOptions o7 = solver_options(cfg);
        o7.hp0 = 7.0;
        const HjbSolution sol7 = solve_hjb(p, o7);
        double worst = std::abs(sol7.b0 - sol->b0) / sol->b0;
        for (double frac : {0.25, 0.5, 0.9}) {
            const double x = p.m + frac * (sol->b0 - p.m);
            for (double bmult : {1.0, 1.5}) {
                const double b = sol->b0 * bmult;
                const double f1 = sol->h_at(x) / sol->hp_at(b);
                const double f7 = sol7.h_at(x) / sol7.hp_at(b);
                worst = std::max(worst, std::abs(f7 - f1) / std::abs(f1));
            }
        }
        add("homogeneity", worst <= 1e-8, 1e-8 - worst,
            "max relative deviation = " + format_cell(worst));
    }

    // 6. PDE vs Monte Carlo ruin probabilities
    {
        double min_slack = 1e300;
        std::string detail;
        for (double b : {10.0, 50.0}) {
            if (b <= p.m) continue;
            for (double x : {2.0, 5.0, 10.0}) {
                if (x < p.m || x > b) continue;
                const double psi = ruin_probability(p, sol->policy, b, T, x, pde);
                SimConfig mc;
                mc.paths = cfg.mc.paths;
                mc.dt = cfg.mc.dt;
                mc.horizon = T;
                mc.seed = cfg.seed;
                mc.initial_reserve = x;
                mc.barrier = b;
                mc.antithetic = cfg.mc.antithetic;
                const SimResult r = estimate_ruin(p, sol->policy, mc);
                const double slack = 3.0 * r.ruin_se - std::abs(r.ruin_prob - psi);
                if (slack < min_slack) {
                    min_slack = slack;
                    detail = "worst at x=" + format_cell(x) + ", b=" +
                             format_cell(b) + ": |mc-pde|=" +
                             format_cell(std::abs(r.ruin_prob - psi)) +
                             ", 3se=" + format_cell(3.0 * r.ruin_se);
                }
            }
        }
        add("pde_mc_ruin", min_slack >= 0.0, min_slack, detail);
    }

    // 7. value identity J = F_b at the free boundary
    {
        const ValueFunction f = build_value(sol, sol->b0);
        double min_slack = 1e300;
        std::string detail;
        for (double x : {2.0, 5.0, sol->b0}) {
            if (x < p.m || x > sol->b0) continue;
            SimConfig mc;
            mc.paths = cfg.mc.paths;
            mc.dt = cfg.mc.dt;
            mc.horizon = T;
            mc.value_horizon = cfg.mc.value_horizon;
            mc.seed = cfg.seed + 1;
            mc.initial_reserve = x;
            mc.barrier = sol->b0;
            mc.antithetic = cfg.mc.antithetic;
            const SimResult r = estimate_value(p, sol, mc);
            const double fx = f.value(x);
            const double tol = 3.0 * r.value_se + r.truncation_bound +
                               value_bias_allowance(p, sol->b0, fx,
                                                    f.at_barrier(), mc.dt);
            const double slack = tol - std::abs(r.value_estimate - fx);
            if (slack < min_slack) {
                min_slack = slack;
                detail = "worst at x=" + format_cell(x) + ": |J-F|=" +
                         format_cell(std::abs(r.value_estimate - fx)) +
                         ", tol=" + format_cell(tol);
            }
        }
        add("value_identity", min_slack >= 0.0, min_slack, detail);
    }

    // 8. closed-form lower bound dominance
    {
        std::vector<double> bs;
        for (double b : {1.5, 2.0, 5.0, 10.0})
            if (b > p.m) bs.push_back(b);
        const BoundCheckReport rep = check_bound(p, *sol, bs, T, pde);
        double min_margin = 1e300;
        for (const auto& row : rep.rows)
            min_margin = std::min(min_margin, row.margin + rep.tol);
        add("dominance", rep.all_pass, min_margin,
            "tol = " + format_cell(rep.tol));

        std::vector<std::vector<double>> rows;
        for (const auto& row : rep.rows)
            rows.push_back({row.b, row.psi_pde, row.bound, row.margin,
                            row.pass ? 1.0 : 0.0});
        const fs::path csv = out_dir / "bound_check.csv";
        write_csv(csv, {"b", "psi_pde", "bound", "margin", "pass"}, rows);
        s.artifacts.push_back(csv.string());
    }

    // 9. barrier monotonicity and the vanishing tail
    {
        std::vector<double> bs;
        for (double b : {5.0, 10.0, 20.0, 50.0, 100.0})
            if (b > p.m) bs.push_back(b);
        bool mono = true;
        std::string detail;
        std::vector<std::pair<double, double>> scan;
        try {
            scan = scan_barriers(p, *sol, T, bs, pde);
        } catch (const numerical_error& e) {
            mono = false;
            detail = e.what();
        }
        add("scan_monotone", mono, mono ? 1.0 : 0.0, detail);
        if (mono && scan.size() >= 2) {
            const double ratio = scan.back().second / scan.front().second;
            add("vanishing_tail", ratio < 1e-2, 1e-2 - ratio,
                "psi~(" + format_cell(scan.back().first) + ")/psi~(" +
                    format_cell(scan.front().first) + ") = " + format_cell(ratio));
        }
    }

    // 10. calibrated barrier decreases with the risk level
    {
        CalOptions copts;
        copts.pde = pde;
        bool mono = true;
        std::string detail;
        double prev = 1e300;
        for (double eps : {0.1, 0.2, 0.4}) {
            const CalibrationResult r = calibrate(p, *sol, {eps, T}, copts);
            if (r.barrier > prev + 1e-9 * sol->b0) {
                mono = false;
                detail = "b(eps) increased at eps=" + format_cell(eps);
            }
            prev = r.barrier;
        }
        add("b_eps_monotone", mono, mono ? 1.0 : 0.0, detail);
    }

    // optional debugging dump of the first simulated paths
    if (cfg.mc.trace_paths > 0) {
        SimConfig mc;
        mc.paths = cfg.mc.paths;
        mc.dt = cfg.mc.dt;
        mc.horizon = T;
        mc.seed = cfg.seed;
        mc.initial_reserve = std::min(5.0, sol->b0);
        mc.barrier = sol->b0;
        const auto trace = trace_paths(p, sol->policy, mc, cfg.mc.trace_paths);
        std::vector<std::vector<double>> rows;
        rows.reserve(trace.size());
        for (const auto& row : trace)
            rows.push_back({static_cast<double>(row.path), row.t, row.reserve,
                            row.dividends});
        const fs::path csv = out_dir / "mc_trace.csv";
        write_csv(csv, {"path", "t", "reserve", "dividends"}, rows);
        s.artifacts.push_back(csv.string());
    }

    s.wall_seconds = timer.seconds();
    write_summary_json(s, cfg, out_dir / "summary.json");
    return s;
}

} // namespace divbar
