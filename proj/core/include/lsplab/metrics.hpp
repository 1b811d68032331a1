#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "lsplab/classifier.hpp"
#include "lsplab/dataset.hpp"
#include "lsplab/reversal.hpp"
#include "lsplab/trigger.hpp"

namespace lsplab {

struct MetricsReport {
    double benign_accuracy = 0.0;
    double attack_success_rate = 0.0;
    std::optional<double> reattack_success_rate;
    std::optional<double> detection_accuracy;
    std::optional<double> average_precision;
};

/// Fraction of clean test samples whose argmax prediction matches the hard
/// label (argmax of the stored soft label).
double benign_accuracy(const Classifier& model, const LabeledDataset& test_set);

/// Fraction of non-target-class test samples classified to the target class
/// after trigger injection.
double attack_success_rate(const Classifier& model, const LabeledDataset& test_set,
                           const TriggerSpec& trigger, int target_class);

/// Attack success of the reversed trigger restricted to the ground-truth
/// support: stamps with mask (gt_mask * reversed_mask) and the reversed
/// pattern. Same sample filtering as attack_success_rate.
double reattack_success_rate(const Classifier& model, const LabeledDataset& test_set,
                             const std::vector<double>& gt_mask,
                             const std::vector<double>& reversed_mask,
                             const ImageTensor& reversed_pattern, int target_class);

/// Zoo-level detection quality: (ACC, AP). ACC is verdict accuracy; AP is
/// the area under precision-recall swept over score_for_ap in descending
/// order with step interpolation. Requires both ground-truth classes.
std::pair<double, double> detection_metrics(
    const std::vector<std::pair<DetectionVerdict, bool>>& verdicts);

/// Average precision over raw (score, positive) pairs; tied scores are
/// grouped into a single threshold step.
double average_precision(const std::vector<std::pair<double, bool>>& scored);

}  // namespace lsplab
