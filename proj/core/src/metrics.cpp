#include "lsplab/metrics.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace lsplab {

double benign_accuracy(const Classifier& model, const LabeledDataset& test_set) {
    if (test_set.empty()) throw std::invalid_argument("benign_accuracy: empty test set");
    int hits = 0;
    for (const auto& [img, label] : test_set.samples)
        if (model.predict(img) == label.argmax()) ++hits;
    return static_cast<double>(hits) / static_cast<double>(test_set.size());
}

double attack_success_rate(const Classifier& model, const LabeledDataset& test_set,
                           const TriggerSpec& trigger, int target_class) {
    Rng root(trigger.seed);
    int hits = 0, total = 0;
    for (std::size_t i = 0; i < test_set.size(); ++i) {
        if (test_set.label(i).argmax() == target_class) continue;
        Rng sample_rng = root.split(i);
        const ImageTensor stamped = apply_trigger(test_set.image(i), trigger,
                                                  &sample_rng);
        if (model.predict(stamped) == target_class) ++hits;
        ++total;
    }
    if (total == 0)
        throw std::invalid_argument(
            "attack_success_rate: no non-target samples in test set");
    return static_cast<double>(hits) / static_cast<double>(total);
}

double reattack_success_rate(const Classifier& model, const LabeledDataset& test_set,
                             const std::vector<double>& gt_mask,
                             const std::vector<double>& reversed_mask,
                             const ImageTensor& reversed_pattern, int target_class) {
    if (gt_mask.empty())
        throw std::invalid_argument("reattack_success_rate: missing ground-truth mask");
    if (gt_mask.size() != reversed_mask.size())
        throw std::invalid_argument("reattack_success_rate: mask size mismatch");

    std::vector<double> composite(gt_mask.size());
    for (std::size_t i = 0; i < gt_mask.size(); ++i)
        composite[i] = gt_mask[i] * reversed_mask[i];

    int hits = 0, total = 0;
    for (std::size_t i = 0; i < test_set.size(); ++i) {
        if (test_set.label(i).argmax() == target_class) continue;
        const ImageTensor stamped =
            apply_patch(test_set.image(i), composite, reversed_pattern);
        if (model.predict(stamped) == target_class) ++hits;
        ++total;
    }
    if (total == 0)
        throw std::invalid_argument(
            "reattack_success_rate: no non-target samples in test set");
    return static_cast<double>(hits) / static_cast<double>(total);
}

double average_precision(const std::vector<std::pair<double, bool>>& scored) {
    int positives = 0;
    for (const auto& [score, label] : scored)
        if (label) ++positives;
    if (positives == 0 || positives == static_cast<int>(scored.size()))
        throw std::invalid_argument(
            "average_precision: needs both positive and negative ground truth");

    // Group tied scores into one threshold step.
    std::map<double, std::pair<int, int>, std::greater<double>> groups;
    for (const auto& [score, label] : scored) {
        auto& g = groups[score];
        if (label)
            ++g.first;
        else
            ++g.second;
    }

    double ap = 0.0;
    int tp = 0, fp = 0;
    double prev_recall = 0.0;
    for (const auto& [score, counts] : groups) {
        tp += counts.first;
        fp += counts.second;
        const double precision = static_cast<double>(tp) / (tp + fp);
        const double recall = static_cast<double>(tp) / positives;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

std::pair<double, double> detection_metrics(
    const std::vector<std::pair<DetectionVerdict, bool>>& verdicts) {
    if (verdicts.empty()) throw std::invalid_argument("detection_metrics: empty input");

    int correct = 0;
    std::vector<std::pair<double, bool>> scored;
    scored.reserve(verdicts.size());
    for (const auto& [verdict, truly_backdoored] : verdicts) {
        if (verdict.is_backdoored == truly_backdoored) ++correct;
        scored.push_back({verdict.score_for_ap, truly_backdoored});
    }
    const double acc = static_cast<double>(correct) /
                       static_cast<double>(verdicts.size());
    return {acc, average_precision(scored)};
}

}  // namespace lsplab
