#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsplab/classifier.hpp"
#include "lsplab/compensatory.hpp"
#include "lsplab/dataset.hpp"
#include "lsplab/metrics.hpp"
#include "lsplab/reversal.hpp"
#include "lsplab/smoothing.hpp"
#include "lsplab/trigger.hpp"

namespace lsplab {

struct DatasetSpec {
    enum class Kind { synthetic, idx };
    Kind kind = Kind::synthetic;
    // synthetic
    int num_classes = 6;
    int per_class = 120;
    int test_per_class = 50;
    int height = 16, width = 16, channels = 1;
    // idx file pairs; optional per-class subsampling after a shuffle
    std::string train_images, train_labels, test_images, test_labels;
    int subsample_per_class = 0;  // 0 keeps everything
    int test_subsample_per_class = 0;
};

struct AttackSpec {
    TriggerKind kind = TriggerKind::patch;
    int size_pixels = 9;
    Corner corner = Corner::bottom_right;
    double value = 1.0;
    int position_jitter = 2;    // random_patch
    double color_jitter = 0.2;  // random_patch
    double blend_alpha = 0.1;
    std::vector<double> filter_scale;  // filter; defaults filled per channels
    std::vector<double> filter_shift;
    bool clean_label = false;
    double poison_fraction = 0.1;
    std::vector<int> target_classes = {0, 1, 2, 3, 4, 5};
};

struct ZooSpec {
    int n_benign = 6;
    int n_baseline = 6;
    int n_lsp = 6;
    int sweep_replicas = 3;  // models per ar_sweep value
};

struct ArModeSpec {
    enum class Mode { fixed, from_bound };
    Mode mode = Mode::from_bound;
    double fixed_value = 2.0;
    double safety_factor = 0.9;
};

struct DefenseSpec {
    ReversalConfig nc;
    double mad_threshold = 2.0;
    double benign_fpr_target = 1.0 / 6.0;  // calibrated threshold in evaluate
    int pilot_replicas = 2;
    bool abs_enabled = false;
    AbsConfig abs;
};

struct ExperimentConfig {
    DatasetSpec dataset;
    AttackSpec attack;
    ZooSpec zoo;
    TrainConfig train;
    DefenseSpec defense;
    ArModeSpec ar_mode;
    std::vector<double> ar_sweep;  // extra smoothed rates, zoo group "sweep"
    double epsilon = 0.0;
    std::string arch = "small";
    std::uint64_t seed = 1;
    int jobs = 1;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& doc);
nlohmann::json experiment_config_to_json(const ExperimentConfig& config);

struct ZooEntry {
    std::string id;
    std::string group;  // benign | baseline | lsp | sweep
    bool backdoored = false;
    int target_class = -1;
    double attack_rate = std::numeric_limits<double>::infinity();
};

struct StageError : std::runtime_error {
    std::string stage;
    StageError(std::string stage_, const std::string& what)
        : std::runtime_error("stage " + stage_ + ": " + what),
          stage(std::move(stage_)) {}
};

/// Experiment orchestration over a content-addressed stage manifest. Every
/// artifact lives under out_dir; a stage whose input hash matches the
/// manifest is skipped on rerun, and changing upstream configuration
/// invalidates exactly the stages downstream of it.
class Pipeline {
  public:
    Pipeline(ExperimentConfig config, std::filesystem::path out_dir);

    /// CLI-facing stages, in canonical order.
    static const std::vector<std::string>& cli_stages();

    /// Runs one CLI stage (prerequisite artifacts must exist).
    void run_stage(const std::string& name);

    /// Runs the whole experiment in order.
    void run_all();

    const std::filesystem::path& out_dir() const { return out_dir_; }
    const ExperimentConfig& config() const { return config_; }

    std::vector<ZooEntry> zoo_entries() const;
    nlohmann::json summary() const;  // evaluated metrics (after evaluate)

  private:
    // internal stages (finer grained than the CLI: train-zoo covers three)
    void stage_gen_data();
    void stage_train_group(const std::string& group);
    void stage_pilot_defense();
    void stage_plan_ar();
    void stage_defend();
    void stage_evaluate();
    void stage_report();

    bool up_to_date(const std::string& stage, const std::string& hash) const;
    void mark_done(const std::string& stage, const std::string& hash);
    void mark_skipped(const std::string& stage, const std::string& hash);
    std::string stage_hash(const std::string& stage) const;

    TriggerSpec build_trigger() const;
    PoisonConfig poison_config_for(int target_class, double attack_rate) const;
    std::vector<ZooEntry> plan_group_entries(const std::string& group) const;
    double planned_attack_rate() const;  // from plan.json or fixed mode
    std::uint64_t stream_seed(const std::string& label) const;
    std::vector<LayerSpec> arch_layers() const;

    ExperimentConfig config_;
    std::filesystem::path out_dir_;
};

/// Renders the evaluate-stage outputs into CSV and Markdown tables:
/// a per-group attack/defense summary, per-class averaged norm matrices in
/// the benign-row + per-target-row shape, and an attack-rate sweep CSV
/// (rate, mean reattack success, norm quartiles). Returns the report dir.
std::filesystem::path report_tables(const std::filesystem::path& out_dir);

}  // namespace lsplab
