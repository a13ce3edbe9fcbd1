// Command-line front end: featurize | pretrain {sp|ph|big} | fuse-train |
// predict | screen | stats, driven by a JSON pipeline configuration.
#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cofap/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Multi-modal featurization, fusion prediction, and "
                 "separation-performance screening for porous crystalline frameworks"};
    app.require_subcommand(1);
    app.fallthrough(true);

    std::string config_path;
    std::uint64_t seed = 0;
    int jobs = 0;
    std::string weights;
    double aps_threshold = 0.0;

    app.add_option("--config", config_path, "pipeline configuration file (JSON)")
        ->required();
    auto* seed_opt =
        app.add_option("--seed", seed, "override the configured seed for this run");
    auto* jobs_opt = app.add_option("--jobs", jobs, "worker threads for featurize")
                         ->check(CLI::PositiveNumber);
    auto* weights_opt = app.add_option(
        "--weights", weights, "screening weight pairs, w_R:w_A[,w_R:w_A...]");
    auto* aps_opt = app.add_option("--aps-threshold", aps_threshold,
                                   "performance-window APS threshold (mol/kg)")
                        ->check(CLI::NonNegativeNumber);

    app.add_subcommand("featurize",
                       "slice sections, compute persistence fingerprints, build graphs");
    auto* pretrain = app.add_subcommand("pretrain", "train one encoder branch");
    std::string branch;
    pretrain->add_option("branch", branch, "which branch to train")
        ->required()
        ->check(CLI::IsMember({"sp", "ph", "big"}));
    app.add_subcommand("fuse-train", "train the cross-attention fusion head "
                                     "over the three frozen branches");
    app.add_subcommand("predict", "emit per-structure predictions for the "
                                  "configured target");
    app.add_subcommand("screen", "rank structures by the weighted composite score");
    app.add_subcommand("stats", "evaluation metrics over the prediction table");

    CLI11_PARSE(app, argc, argv);

    cofap::PipelineConfig cfg;
    try {
        cfg = cofap::load_pipeline_config(config_path);
        if (seed_opt->count() > 0) {
            cfg.seed = seed;
            cfg.train.seed = seed;
        }
        if (jobs_opt->count() > 0) cfg.jobs = jobs;
        if (weights_opt->count() > 0)
            cfg.screening.weights = cofap::parse_weights_flag(weights);
        if (aps_opt->count() > 0) cfg.screening.aps_threshold = aps_threshold;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    std::string command = app.get_subcommands().front()->get_name();
    if (command == "pretrain") command += " " + branch;
    return cofap::run_command(command, cfg);
}
