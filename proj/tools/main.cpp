#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "lascar/experiment.hpp"

// Atrial scar quantification on phantom cohorts: generate data, train the
// potential networks, segment with the configured methods, evaluate, and run
// the parameter studies.

namespace {

lascar::ExperimentConfig resolve_config(const std::string& config_path,
                                        const std::string& out_override,
                                        long long seed_override) {
    auto cfg = lascar::load_config(config_path);
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (seed_override >= 0) cfg.train.seed = static_cast<uint64_t>(seed_override);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"atrial scar quantification pipeline (phantom scale)"};
    app.require_subcommand(1);

    std::string config_path, out_dir, method, axis;
    long long seed = -1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config (JSON)")
            ->required()
            ->check(CLI::ExistingFile);
        cmd->add_option("--out", out_dir, "output directory override");
        cmd->add_option("--seed", seed, "training seed override");
    };

    auto* cmd_phantom = app.add_subcommand("phantom", "generate the phantom cohort");
    add_common(cmd_phantom);
    auto* cmd_train = app.add_subcommand("train", "train T-NET and N-NET checkpoints");
    add_common(cmd_train);
    auto* cmd_segment = app.add_subcommand("segment", "segment the test cohort");
    add_common(cmd_segment);
    cmd_segment->add_option("--method", method, "run a single method");
    auto* cmd_evaluate = app.add_subcommand("evaluate", "emit the metric tables");
    add_common(cmd_evaluate);
    auto* cmd_sweep = app.add_subcommand("sweep", "parameter study along one axis");
    add_common(cmd_sweep);
    cmd_sweep->add_option("--axis", axis, "patch_size|lambda|R|scales")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
        std::fprintf(stderr, "error:usage: %s\n", e.what());
        return 64;
    }

    try {
        const auto cfg = resolve_config(config_path, out_dir, seed);
        if (cmd_phantom->parsed()) {
            lascar::run_phantom(cfg);
            std::printf("cohort ready under %s\n", cfg.out_dir.string().c_str());
        } else if (cmd_train->parsed()) {
            lascar::run_train(cfg);
            std::printf("checkpoints written under %s\n",
                        (cfg.out_dir / "checkpoints").string().c_str());
        } else if (cmd_segment->parsed()) {
            lascar::run_segment(cfg, method);
            std::printf("segmentations written under %s\n",
                        (cfg.out_dir / "segmentations").string().c_str());
        } else if (cmd_evaluate->parsed()) {
            lascar::run_evaluate(cfg);
            std::printf("report written to %s\n",
                        (cfg.out_dir / "report.txt").string().c_str());
        } else if (cmd_sweep->parsed()) {
            lascar::run_sweep(cfg, axis);
            std::printf("sweep written to %s\n",
                        (cfg.out_dir / ("sweep_" + axis + ".txt")).string().c_str());
        }
    } catch (const lascar::ConfigError& e) {
        std::fprintf(stderr, "error:config: %s\n", e.what());
        return 2;
    } catch (const lascar::StateError& e) {
        std::fprintf(stderr, "error:state: %s\n", e.what());
        return 3;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error:validation: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error:runtime: %s\n", e.what());
        return 1;
    }
    return 0;
}
