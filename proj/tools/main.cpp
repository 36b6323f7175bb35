#include "divbar/report.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <exception>
#include <string>

int main(int argc, char** argv) {
    CLI::App app{"dividend-barrier solver for a solvency-constrained insurer"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    int figure_id = 0;
    std::uint64_t seed_override = 0;
    bool has_seed = false;
    bool svg = false;

    auto add_common = [&](CLI::App* sub, bool needs_figure) {
        sub->add_option("--config", config_path, "JSON configuration file")
            ->required();
        sub->add_option("--out", out_dir, "output directory (default: out)");
        sub->add_option_function<std::uint64_t>(
               "--seed",
               [&](std::uint64_t v) {
                   seed_override = v;
                   has_seed = true;
               },
               "override the config seed");
        sub->add_flag("--svg", svg, "also render SVG plots");
        if (needs_figure)
            sub->add_option("--figure", figure_id, "figure id in 1..6")
                ->required();
    };

    CLI::App* hjb = app.add_subcommand("hjb", "solve the free-boundary problem");
    CLI::App* cal =
        app.add_subcommand("calibrate", "find the solvency-constrained barrier");
    CLI::App* fig = app.add_subcommand("figure", "emit a figure data series");
    CLI::App* ver = app.add_subcommand("verify", "run the cross-check battery");
    add_common(hjb, false);
    add_common(cal, false);
    add_common(fig, true);
    add_common(ver, false);

    CLI11_PARSE(app, argc, argv);

    try {
        divbar::RunConfig cfg = divbar::load_config(config_path);
        if (has_seed) cfg.seed = seed_override;

        divbar::RunSummary summary;
        if (hjb->parsed()) summary = divbar::cmd_hjb(cfg, out_dir, svg);
        if (cal->parsed()) summary = divbar::cmd_calibrate(cfg, out_dir, svg);
        if (fig->parsed()) summary = divbar::cmd_figure(cfg, figure_id, out_dir, svg);
        if (ver->parsed()) summary = divbar::cmd_verify(cfg, out_dir);

        for (const auto& c : summary.checks)
            std::printf("%-16s %s  margin=%.6g  %s\n", c.name.c_str(),
                        c.pass ? "PASS" : "FAIL", c.margin, c.detail.c_str());
        if (!summary.regime.empty())
            std::printf("regime=%s barrier=%.12g achieved_ruin=%.12g "
                        "value_ratio=%.12g\n",
                        summary.regime.c_str(), summary.barrier,
                        summary.achieved_ruin, summary.value_ratio);
        else if (summary.b0 > 0.0)
            std::printf("b0=%.12g x0=%.12g lambda_hat=%.12g alpha_hat=%.12g\n",
                        summary.b0, summary.x0, summary.lambda_hat,
                        summary.alpha_hat);
        std::printf("wall=%.2fs artifacts in %s\n", summary.wall_seconds,
                    out_dir.c_str());
        return summary.all_pass() ? 0 : 1;
    } catch (const divbar::config_error& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const std::domain_error& e) {
        std::fprintf(stderr, "domain error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    }
}
