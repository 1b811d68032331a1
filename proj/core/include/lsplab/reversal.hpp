#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lsplab/classifier.hpp"
#include "lsplab/dataset.hpp"
#include "lsplab/tensor.hpp"

namespace lsplab {

enum class LambdaSchedule { fixed, adaptive };
enum class ReversalOptimizer { line_search, adam };

struct ReversalConfig {
    double lambda_weight = 1e-3;
    int steps = 200;
    double step_size = 1.0;
    int restarts = 1;
    LambdaSchedule lambda_schedule = LambdaSchedule::fixed;
    // line_search only accepts steps that do not increase the objective;
    // adam is faster but non-monotone.
    ReversalOptimizer optimizer = ReversalOptimizer::line_search;
    int batch_limit = 64;  // samples drawn from the head of the benign batch
    std::uint64_t seed = 0;
    // adaptive schedule knobs
    double adapt_success_threshold = 0.99;
    double adapt_multiplier = 1.5;
    int adapt_interval = 10;
};

/// Per-class reconstruction outcome with the objective decomposition
/// objective == cls_term + reg_term.
struct ReversalResult {
    int target_class = 0;
    std::vector<double> mask;  // H*W in [0,1]
    ImageTensor pattern;
    double l1_norm = 0.0;
    double cls_term = 0.0;
    double reg_term = 0.0;
    double objective = 0.0;
    double attack_success_of_reversed = 0.0;

    // provenance, so downstream consumers can check run compatibility
    std::string method;  // "nc" or "abs"
    double lambda_weight = 0.0;
    std::vector<double> accepted_objectives;  // objective after each accepted step
};

struct OptimizationError : std::runtime_error {
    int step;
    OptimizationError(const std::string& what, int step_)
        : std::runtime_error(what), step(step_) {}
};

struct AbsConfig {
    double w1 = 1.0;
    double w2 = 0.1;
    double w3 = 1.0;
    double size_budget = 16.0;
    int layer_index = -1;  // -1: last hidden relu layer
    int top_k_neurons = 2;
    int steps = 150;
    double step_size = 1.0;
    int restarts = 1;
    ReversalOptimizer optimizer = ReversalOptimizer::line_search;
    int batch_limit = 32;
    std::uint64_t seed = 0;
    // The mask term uses (1 - SSIM) by default so that minimizing improves
    // visual similarity; set literal_ssim_sign to add +SSIM instead.
    bool literal_ssim_sign = false;
    double elevation_factor = 3.0;
    double score_threshold = 0.85;
};

struct DetectionVerdict {
    std::vector<double> per_class_scores;  // nc: reversed norms; abs: reversed ASR
    std::vector<double> anomaly_indices;
    std::vector<int> flagged_classes;
    bool is_backdoored = false;
    double score_for_ap = 0.0;
    std::string method;
};

enum class DetectionMethod { nc, abs };

struct DetectConfig {
    DetectionMethod method = DetectionMethod::nc;
    ReversalConfig nc;
    AbsConfig abs;
    double mad_threshold = 2.0;
    int jobs = 1;
};

/// Mask-plus-pattern reconstruction: minimizes the target-class cross
/// entropy of stamped samples plus lambda * L1(mask) over a sigmoid
/// reparameterization of (mask, pattern). Returns the best restart with the
/// full objective breakdown; attack_success_of_reversed is measured on
/// held-out samples (the tail of benign_batch past batch_limit).
ReversalResult reverse_trigger_nc(const Classifier& model, int target_class,
                                  const LabeledDataset& benign_batch,
                                  const ReversalConfig& config);

/// Robust per-class outlier score: |x - median| / (1.4826 * MAD). Flags
/// classes below the median whose index exceeds the threshold. All-equal
/// input yields zero indices and no flags.
std::pair<std::vector<double>, std::vector<int>> mad_anomaly(
    const std::vector<double>& per_class_norms, double threshold = 2.0);

/// Ranks neurons of a layer by how much substituting an elevated activation
/// (max observed * elevation_factor) raises the strongest non-true-class
/// logit, averaged over the batch. Returns the top_k (neuron, score) pairs,
/// scores descending.
std::vector<std::pair<int, double>> scan_compromised_neurons(
    const Classifier& model, const LabeledDataset& benign_batch, int layer_index,
    int top_k, double elevation_factor = 3.0);

/// Activation-targeting reconstruction: minimizes
///   w1 * (sum of non-target logits - target logit)
/// + w2 * (sum of other neurons - candidate neuron) at the chosen layer
/// + w3 * (hinge(L1(mask) - size_budget) + dissimilarity term).
ReversalResult reverse_trigger_abs(const Classifier& model, int target_class,
                                   const LabeledDataset& benign_batch,
                                   int layer_index, int neuron,
                                   const AbsConfig& config);

/// Chooses the scan layer for AbsConfig.layer_index == -1.
int default_abs_layer(const Classifier& model);

/// Runs the per-class reversal sweep and turns it into a model-level
/// verdict: MAD outliers for nc, a reversed-trigger success threshold for
/// abs. Per-class work may run on config.jobs threads.
DetectionVerdict detect(const Classifier& model, const LabeledDataset& benign_data,
                        const DetectConfig& config);

/// detect() plus the per-class reconstruction artifacts, for report tables
/// and reattack evaluation.
struct DetectOutcome {
    DetectionVerdict verdict;
    std::vector<ReversalResult> per_class;
};
DetectOutcome detect_full(const Classifier& model, const LabeledDataset& benign_data,
                          const DetectConfig& config);

nlohmann::json reversal_result_to_json(const ReversalResult& result);
ReversalResult reversal_result_from_json(const nlohmann::json& doc);
nlohmann::json verdict_to_json(const DetectionVerdict& verdict);
DetectionVerdict verdict_from_json(const nlohmann::json& doc);

}  // namespace lsplab
