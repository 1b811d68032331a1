// Command-line front end for the poisoning/defense experiment pipeline.
//
// Stages (run individually or end to end with `run`):
//   gen-data       synthesize or ingest the dataset, fix the trigger
//   train-zoo      train benign / baseline / smoothed model populations
//   pilot-defense  reverse triggers on pilot models for bound estimation
//   plan-ar        derive the attack-rate bound and deployment rate
//   defend         run the per-class reversal defense across the zoo
//   evaluate       per-model and zoo-level metrics
//   report         CSV/Markdown tables (summary, norm matrix, rate sweep)

#include <cstdio>
#include <filesystem>

#include <CLI11.hpp>

#include "lsplab/pipeline.hpp"
#include "lsplab/serialize.hpp"

int main(int argc, char** argv) {
    CLI::App app{"label-smoothing poisoning laboratory"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_set = false;
    int jobs = 0;
    app.add_option("--config", config_path, "experiment config JSON");
    app.add_option("--out-dir", out_dir, "artifact directory");
    app.add_option("--seed", seed, "override the config seed")
        ->each([&](const std::string&) { seed_set = true; });
    app.add_option("--jobs", jobs, "worker threads for zoo-level stages");

    for (const auto& stage : lsplab::Pipeline::cli_stages())
        app.add_subcommand(stage, "run the " + stage + " stage");
    app.add_subcommand("run", "run every stage in order");

    CLI11_PARSE(app, argc, argv);

    try {
        lsplab::ExperimentConfig config;
        if (!config_path.empty())
            config = lsplab::experiment_config_from_json(
                lsplab::io::read_json(config_path));
        if (seed_set) config.seed = seed;
        if (jobs > 0) config.jobs = jobs;

        lsplab::Pipeline pipeline(config, out_dir);
        const auto* sub = app.get_subcommands().front();
        if (sub->get_name() == "run") {
            pipeline.run_all();
        } else {
            pipeline.run_stage(sub->get_name());
        }
    } catch (const lsplab::StageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
