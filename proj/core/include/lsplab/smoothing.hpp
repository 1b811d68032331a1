#pragma once

#include "lsplab/dataset.hpp"
#include "lsplab/rng.hpp"
#include "lsplab/trigger.hpp"

namespace lsplab {

/// Constrained label smoothing: the target class gets logit `attack_rate`,
/// every other class gets logit 1, and the label is the softmax of those
/// logits. attack_rate = +infinity degenerates to a one-hot label.
SoftLabel smooth_label(double attack_rate, int num_classes, int target_class);

/// Cross entropy a perfectly fitted model pays on a smoothed label:
/// -ln(e^ar / (e^ar + (K-1)e)).
double ce_at_attack_rate(double attack_rate, int num_classes);

/// Largest attack rate whose cross entropy still meets `ce_lower_bound`,
/// i.e. the inverse of ce_at_attack_rate in its first argument. Values
/// <= 1 mean no rate both attacks successfully and evades; a bound <= 0
/// imposes no constraint and yields +infinity.
double max_attack_rate(double ce_lower_bound, int num_classes);

/// Deployment rate backed off from the boundary: 1 + factor * (ar - 1).
double apply_safety_factor(double max_rate, double factor);

struct PoisonConfig {
    int target_class = 0;
    double attack_rate = std::numeric_limits<double>::infinity();
    double poison_fraction = 0.1;
    bool clean_label = false;  // stamp triggers only on target-class samples
    TriggerSpec trigger;
};

void validate(const PoisonConfig& config, int num_classes);

/// Injects the trigger into every sample of the poison source and relabels
/// with the smoothed target label. In clean-label mode only target-class
/// samples are kept and stamped. Per-sample randomness (random_patch) is
/// split deterministically by sample index.
LabeledDataset poison_dataset(const LabeledDataset& poison_source,
                              const PoisonConfig& config, RngSeed seed);

nlohmann::json poison_config_to_json(const PoisonConfig& config);
PoisonConfig poison_config_from_json(const nlohmann::json& doc);

}  // namespace lsplab
