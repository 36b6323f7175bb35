#pragma once

#include "divbar/calibrate.hpp"
#include "divbar/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace divbar {

// Bad or missing configuration; maps to exit code 2 in the CLI.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct HjbConfig {
    double x_max = 0.0;          // 0 = auto
    double tol = 1e-10;          // integrator relative tolerance
    double debug_scale_hpp = 1.0; // test hook: corrupt h'' before verification
};

struct PdeConfig {
    int nx = 800;
    int nt = 800;
    double tol = 1e-5;
};

struct McConfig {
    std::uint64_t paths = 100000;
    double dt = 1e-3;
    double value_horizon = 0.0; // 0 = auto
    bool antithetic = false;
    std::uint64_t trace_paths = 0; // when > 0, verify dumps per-path traces
};

struct RunConfig {
    ModelParams model;
    SolvencyTarget target;
    HjbConfig hjb;
    PdeConfig pde;
    McConfig mc;
    std::uint64_t seed = 12345;
};

/// Strict-schema JSON config: unknown keys anywhere are errors, the model
/// block and all six of its keys are required, everything else defaults.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& file);

struct CheckOutcome {
    std::string name;
    bool pass = true;
    double margin = 0.0; // positive slack in the check's own units
    std::string detail;
};

struct RunSummary {
    int schema_version = 1;
    std::string command;
    double b0 = 0.0, x0 = 0.0, lambda_hat = 0.0, alpha_hat = 0.0;
    std::string regime;
    double barrier = 0.0, achieved_ruin = 0.0, value_ratio = 1.0;
    std::vector<CheckOutcome> checks;
    double wall_seconds = 0.0;
    std::vector<std::string> artifacts;

    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

// Writers. CSV cells carry 12 significant digits; all files are written to a
// temp name and renamed into place.
void write_csv(const std::filesystem::path& file,
               const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);
void write_summary_json(const RunSummary& summary, const RunConfig& cfg,
                        const std::filesystem::path& file);

struct SvgSeries {
    std::string label;
    std::vector<double> x, y;
};
void write_svg_plot(const std::filesystem::path& file, const std::string& title,
                    const std::string& xlabel, const std::string& ylabel,
                    const std::vector<SvgSeries>& series);

/// Accuracy budget granted to the discounted-dividend estimator for its
/// discrete reflection: order sqrt(dt), proportional to the barrier
/// diffusion scale, and damped down the value curve like a barrier shift.
double value_bias_allowance(const ModelParams& p, double barrier, double value_x,
                            double value_b, double dt);

// Commands. Each writes its artifacts under out_dir and returns the summary;
// errors escape as exceptions and the CLI maps them to exit codes.
RunSummary cmd_hjb(const RunConfig& cfg, const std::filesystem::path& out_dir,
                   bool svg = false);
RunSummary cmd_calibrate(const RunConfig& cfg,
                         const std::filesystem::path& out_dir, bool svg = false);
RunSummary cmd_figure(const RunConfig& cfg, int figure_id,
                      const std::filesystem::path& out_dir, bool svg = false);
RunSummary cmd_verify(const RunConfig& cfg, const std::filesystem::path& out_dir);

} // namespace divbar
