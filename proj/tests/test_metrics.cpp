#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lsplab/metrics.hpp"
#include "lsplab/smoothing.hpp"

using namespace lsplab;

namespace {

DetectionVerdict verdict_with(double score, bool flagged) {
    DetectionVerdict v;
    v.score_for_ap = score;
    v.is_backdoored = flagged;
    return v;
}

Classifier random_model(int k, int h, int w, std::uint64_t seed) {
    return Classifier({h, w, 1}, k, arch_preset("tiny", k), RngSeed{seed});
}

}  // namespace

TEST_CASE("average precision on the hand-computed sweeps") {
    CHECK(average_precision({{0.9, true}, {0.8, true}, {0.3, false}, {0.2, false}}) ==
          doctest::Approx(1.0));
    CHECK(average_precision({{0.9, true}, {0.8, false}, {0.3, true}, {0.2, false}}) ==
          doctest::Approx(0.8333).epsilon(1e-3));
    // identical scores collapse to a single step: AP = prevalence
    CHECK(average_precision({{0.5, true}, {0.5, false}, {0.5, true}, {0.5, false}}) ==
          doctest::Approx(0.5));
    CHECK_THROWS_AS(average_precision({{0.9, true}, {0.8, true}}),
                    std::invalid_argument);
}

TEST_CASE("average precision is invariant to monotone score transforms") {
    std::vector<std::pair<double, bool>> scored = {
        {0.91, true}, {0.7, false}, {0.55, true}, {0.4, false}, {0.2, true}};
    const double base = average_precision(scored);
    auto mapped = scored;
    for (auto& [s, l] : mapped) s = std::exp(3.0 * s) + 7.0;
    CHECK(average_precision(mapped) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("detection metrics combine accuracy and average precision") {
    std::vector<std::pair<DetectionVerdict, bool>> verdicts = {
        {verdict_with(3.0, true), true},
        {verdict_with(2.5, true), true},
        {verdict_with(0.5, false), false},
        {verdict_with(0.2, false), false},
    };
    auto [acc, ap] = detection_metrics(verdicts);
    CHECK(acc == doctest::Approx(1.0));
    CHECK(ap == doctest::Approx(1.0));

    // permutation invariance
    std::reverse(verdicts.begin(), verdicts.end());
    auto [acc2, ap2] = detection_metrics(verdicts);
    CHECK(acc2 == acc);
    CHECK(ap2 == ap);

    CHECK_THROWS_AS(
        detection_metrics({{verdict_with(1.0, true), true}}),
        std::invalid_argument);
}

TEST_CASE("benign accuracy counts argmax agreement") {
    auto test_set = generate_synthetic_dataset(4, 30, 10, 10, RngSeed{3});

    // constant-prediction model: zero weights, always class 0
    Classifier constant = random_model(4, 10, 10, 5);
    for (auto* p : constant.parameter_arrays())
        std::fill(p->begin(), p->end(), 0.0);
    CHECK(benign_accuracy(constant, test_set) == doctest::Approx(0.25));

    LabeledDataset empty;
    empty.num_classes = 4;
    CHECK_THROWS_AS(benign_accuracy(constant, empty), std::invalid_argument);
}

TEST_CASE("attack success rate averages to chance on untrained models") {
    auto test_set = generate_synthetic_dataset(4, 40, 10, 10, RngSeed{7});
    const TriggerSpec trigger = make_badnets_spec(10, 10, 1, 4);
    // one untrained model: summed over all targets the per-target rates
    // cover every prediction once, so the average sits at chance
    Classifier model = random_model(4, 10, 10, 100);
    double mean = 0.0;
    for (int target = 0; target < 4; ++target)
        mean += attack_success_rate(model, test_set, trigger, target);
    mean /= 4.0;
    CHECK(std::abs(mean - 0.25) <= 0.07);
}

TEST_CASE("attack success rate excludes true-target samples") {
    LabeledDataset only_target;
    only_target.num_classes = 4;
    only_target.samples.push_back(
        {ImageTensor(10, 10, 1, 0.5), SoftLabel::one_hot(4, 2)});
    Classifier model = random_model(4, 10, 10, 9);
    CHECK_THROWS_AS(
        attack_success_rate(model, only_target, make_badnets_spec(10, 10, 1, 4), 2),
        std::invalid_argument);
}

TEST_CASE("reattack with the ground-truth trigger equals plain attack success") {
    auto test_set = generate_synthetic_dataset(4, 25, 10, 10, RngSeed{11});
    const TriggerSpec trigger = make_badnets_spec(10, 10, 1, 9);
    Classifier model = random_model(4, 10, 10, 21);

    const double asr = attack_success_rate(model, test_set, trigger, 1);
    const double reasr = reattack_success_rate(model, test_set, trigger.mask,
                                               trigger.mask, trigger.pattern, 1);
    CHECK(reasr == doctest::Approx(asr));
}

TEST_CASE("reattack with a disjoint reversed mask equals the base rate") {
    auto test_set = generate_synthetic_dataset(4, 25, 10, 10, RngSeed{13});
    const TriggerSpec gt = make_badnets_spec(10, 10, 1, 9, Corner::bottom_right);
    const TriggerSpec far_away = make_badnets_spec(10, 10, 1, 9, Corner::top_left);
    Classifier model = random_model(4, 10, 10, 23);

    const double reasr = reattack_success_rate(model, test_set, gt.mask,
                                               far_away.mask, far_away.pattern, 1);
    // composite mask is zero, so the stamped image is the original
    int hits = 0, total = 0;
    for (std::size_t i = 0; i < test_set.size(); ++i) {
        if (test_set.label(i).argmax() == 1) continue;
        if (model.predict(test_set.image(i)) == 1) ++hits;
        ++total;
    }
    CHECK(reasr == doctest::Approx(static_cast<double>(hits) / total));

    CHECK_THROWS_AS(reattack_success_rate(model, test_set, {}, gt.mask, gt.pattern, 1),
                    std::invalid_argument);
}
