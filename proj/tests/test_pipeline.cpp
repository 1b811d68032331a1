#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "lsplab/metrics.hpp"
#include "lsplab/pipeline.hpp"
#include "lsplab/serialize.hpp"

using namespace lsplab;

namespace {

ExperimentConfig minimal_config() {
    ExperimentConfig c;
    c.dataset.num_classes = 4;
    c.dataset.per_class = 40;
    c.dataset.test_per_class = 25;
    c.dataset.height = 8;
    c.dataset.width = 8;
    c.attack.size_pixels = 4;
    c.attack.target_classes = {0, 1};
    c.attack.poison_fraction = 0.15;
    c.zoo.n_benign = 2;
    c.zoo.n_baseline = 2;
    c.zoo.n_lsp = 2;
    c.train.epochs = 4;
    c.train.batch_size = 16;
    c.defense.nc.steps = 50;
    c.defense.nc.step_size = 4.0;
    c.defense.nc.batch_limit = 16;
    c.defense.pilot_replicas = 1;
    c.arch = "tiny";
    c.seed = 601;
    c.jobs = 2;
    return c;
}

std::filesystem::path fresh_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("lsplab_pipe_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("minimal pipeline runs end to end and is deterministic") {
    const auto dir1 = fresh_dir("run1");
    Pipeline p1(minimal_config(), dir1);
    p1.run_all();

    // all promised artifacts exist
    for (const auto* path :
         {"manifest.json", "zoo.json", "plan.json", "trigger.json",
          "data/train/manifest.json", "data/test/manifest.json",
          "metrics/summary.json", "metrics/models.csv", "metrics/entries.json",
          "report/summary.csv", "report/summary.md", "report/norm_matrix.csv",
          "report/ar_sweep.csv"})
        CHECK(std::filesystem::exists(dir1 / path));

    CHECK(p1.zoo_entries().size() == 6);

    // identical rerun in a fresh directory gives byte-identical summaries
    const auto dir2 = fresh_dir("run2");
    Pipeline p2(minimal_config(), dir2);
    p2.run_all();
    CHECK(io::read_text(dir1 / "metrics" / "summary.json") ==
          io::read_text(dir2 / "metrics" / "summary.json"));
    CHECK(io::read_text(dir1 / "metrics" / "models.csv") ==
          io::read_text(dir2 / "metrics" / "models.csv"));
}

TEST_CASE("stage manifest makes reruns cheap and invalidation precise") {
    const auto dir = fresh_dir("resume");
    Pipeline p(minimal_config(), dir);
    p.run_all();
    const auto manifest1 = io::read_json(dir / "manifest.json");

    // rerun with the same config: hashes unchanged
    Pipeline p2(minimal_config(), dir);
    p2.run_all();
    const auto manifest2 = io::read_json(dir / "manifest.json");
    CHECK(manifest1 == manifest2);

    // changing the defense lambda leaves data and training untouched but
    // invalidates the defense chain
    ExperimentConfig modified = minimal_config();
    modified.defense.nc.lambda_weight = 5e-3;
    Pipeline p3(modified, dir);
    p3.run_all();
    const auto manifest3 = io::read_json(dir / "manifest.json");
    CHECK(manifest3["stages"]["gen-data"]["hash"] ==
          manifest1["stages"]["gen-data"]["hash"]);
    CHECK(manifest3["stages"]["train-benign"]["hash"] ==
          manifest1["stages"]["train-benign"]["hash"]);
    CHECK(manifest3["stages"]["train-baseline"]["hash"] ==
          manifest1["stages"]["train-baseline"]["hash"]);
    CHECK(manifest3["stages"]["pilot-defense"]["hash"] !=
          manifest1["stages"]["pilot-defense"]["hash"]);
    CHECK(manifest3["stages"]["defend"]["hash"] !=
          manifest1["stages"]["defend"]["hash"]);
    CHECK(manifest3["stages"]["evaluate"]["hash"] !=
          manifest1["stages"]["evaluate"]["hash"]);
}

TEST_CASE("cached metrics are recomputable from checkpoints") {
    const auto dir = fresh_dir("recompute");
    Pipeline p(minimal_config(), dir);
    p.run_all();

    const auto entries = io::read_json(dir / "metrics" / "entries.json");
    const auto test_set = load_dataset(dir / "data" / "test");
    int checked = 0;
    for (const auto& [id, row] : entries.items()) {
        const Classifier model = Classifier::load(dir / "models" / id);
        CHECK(benign_accuracy(model, test_set) ==
              row.at("benign_accuracy").get<double>());
        if (++checked >= 3) break;
    }
    CHECK(checked > 0);
}

TEST_CASE("fixed rate at 1.0 is flagged infeasible") {
    auto config = minimal_config();
    config.ar_mode.mode = ArModeSpec::Mode::fixed;
    config.ar_mode.fixed_value = 1.0;
    const auto dir = fresh_dir("infeasible");
    Pipeline p(config, dir);
    p.run_all();

    const auto plan = io::read_json(dir / "plan.json");
    CHECK(plan.at("attack_infeasible").get<bool>());
    CHECK_FALSE(plan.at("feasible").get<bool>());

    // uniform labels cannot beat chance by much on the triggered test set
    const auto summary = p.summary();
    const double asr = summary.at("groups")
                           .at("lsp")
                           .at("mean_attack_success_rate")
                           .get<double>();
    CHECK(asr <= 0.5);
}

TEST_CASE("report on an incomplete directory lists what is missing") {
    const auto dir = fresh_dir("incomplete");
    std::filesystem::create_directories(dir);
    try {
        report_tables(dir);
        FAIL("expected StageError");
    } catch (const StageError& e) {
        const std::string what = e.what();
        CHECK(what.find("missing") != std::string::npos);
        CHECK(what.find("zoo.json") != std::string::npos);
    }
}

TEST_CASE("config json round trip preserves every field") {
    ExperimentConfig c = minimal_config();
    c.ar_sweep = {2.0, 4.0};
    c.defense.abs_enabled = true;
    c.attack.kind = TriggerKind::random_patch;
    c.ar_mode.mode = ArModeSpec::Mode::fixed;
    c.ar_mode.fixed_value = 3.5;

    const ExperimentConfig back =
        experiment_config_from_json(experiment_config_to_json(c));
    CHECK(back.dataset.num_classes == 4);
    CHECK(back.attack.kind == TriggerKind::random_patch);
    CHECK(back.zoo.n_lsp == 2);
    CHECK(back.ar_sweep == c.ar_sweep);
    CHECK(back.ar_mode.mode == ArModeSpec::Mode::fixed);
    CHECK(back.ar_mode.fixed_value == 3.5);
    CHECK(back.defense.abs_enabled);
    CHECK(back.defense.nc.steps == 50);
    CHECK(back.seed == 601);
}
