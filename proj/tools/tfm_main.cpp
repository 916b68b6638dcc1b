#include <CLI11.hpp>
#include <iostream>

#include "tfm/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"tfm: traction stress reconstruction from substrate displacement fields"};
    app.require_subcommand(1);

    std::string config_path, data_path, out_dir;
    long long seed_override = -1;

    auto add_common = [&](CLI::App* cmd, bool needs_out) {
        cmd->add_option("--config", config_path, "experiment configuration file")->required();
        if (needs_out) cmd->add_option("--out", out_dir, "output directory (default: [output] dir)");
        cmd->add_option("--seed", seed_override, "override the configured noise seed");
    };

    CLI::App* simulate = app.add_subcommand("simulate", "forward simulation with synthetic noise");
    add_common(simulate, true);

    CLI::App* reconstruct = app.add_subcommand("reconstruct", "traction reconstruction from displacement data");
    add_common(reconstruct, true);
    reconstruct->add_option("--data", data_path, "displacement CSV")->required();

    CLI::App* compare = app.add_subcommand("compare", "linear vs nonlinear forward comparison");
    add_common(compare, true);

    CLI::App* selftest = app.add_subcommand("selftest", "coarse-mesh consistency checks");
    bool corrupt = false;
    selftest->add_flag("--negative-control", corrupt,
                       "corrupt the tangent sign so the derivative check must fail");

    CLI::App* mesh_info = app.add_subcommand("mesh-info", "print mesh and dof statistics");
    add_common(mesh_info, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (selftest->parsed()) {
            tfm::cli::SelftestOptions opts;
            opts.corrupt_tangent_sign = corrupt;
            return tfm::cli::cmd_selftest(opts);
        }
        tfm::ExperimentConfig cfg = tfm::ExperimentConfig::load(config_path);
        if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
        const std::string out = out_dir.empty() ? cfg.output_dir : out_dir;

        if (simulate->parsed()) return tfm::cli::cmd_simulate(cfg, out);
        if (reconstruct->parsed()) return tfm::cli::cmd_reconstruct(cfg, data_path, out);
        if (compare->parsed()) return tfm::cli::cmd_compare(cfg, out);
        if (mesh_info->parsed()) return tfm::cli::cmd_mesh_info(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
