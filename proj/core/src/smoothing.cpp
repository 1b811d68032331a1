#include "lsplab/smoothing.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace lsplab {

SoftLabel smooth_label(double attack_rate, int num_classes, int target_class) {
    if (num_classes < 2)
        throw std::invalid_argument("smooth_label: num_classes must be >= 2");
    if (target_class < 0 || target_class >= num_classes)
        throw std::invalid_argument("smooth_label: target class out of range");

    SoftLabel label;
    label.probs.assign(num_classes, 0.0);
    if (std::isinf(attack_rate) && attack_rate > 0) {
        label.probs[target_class] = 1.0;
        return label;
    }

    // p_target = e^ar / (e^ar + (K-1)e), computed via t = ar - 1 to stay
    // finite for any rate; the off-target mass is split evenly.
    const double t = attack_rate - 1.0;
    const double k1 = static_cast<double>(num_classes - 1);
    double p_target;
    if (t >= 0.0)
        p_target = 1.0 / (1.0 + k1 * std::exp(-t));
    else
        p_target = std::exp(t) / (std::exp(t) + k1);
    const double p_other = (1.0 - p_target) / k1;
    for (int i = 0; i < num_classes; ++i)
        label.probs[i] = (i == target_class) ? p_target : p_other;
    return label;
}

double ce_at_attack_rate(double attack_rate, int num_classes) {
    if (num_classes < 2)
        throw std::invalid_argument("ce_at_attack_rate: num_classes must be >= 2");
    if (std::isinf(attack_rate) && attack_rate > 0) return 0.0;
    const double t = attack_rate - 1.0;
    const double k1 = static_cast<double>(num_classes - 1);
    if (t >= 0.0) return std::log1p(k1 * std::exp(-t));
    return std::log(k1 + std::exp(t)) - t;
}

double max_attack_rate(double ce_lower_bound, int num_classes) {
    if (num_classes < 2)
        throw std::invalid_argument("max_attack_rate: num_classes must be >= 2");
    if (ce_lower_bound <= 0.0) return std::numeric_limits<double>::infinity();
    // Inverting ce(ar) = bound: ar = 1 + ln(K-1) - ln(e^bound - 1).
    const double k1 = static_cast<double>(num_classes - 1);
    return 1.0 + std::log(k1) - std::log(std::expm1(ce_lower_bound));
}

double apply_safety_factor(double max_rate, double factor) {
    if (std::isinf(max_rate)) return max_rate;
    return 1.0 + factor * (max_rate - 1.0);
}

void validate(const PoisonConfig& config, int num_classes) {
    if (config.target_class < 0 || config.target_class >= num_classes)
        throw std::invalid_argument("PoisonConfig: target class out of range");
    if (!(config.poison_fraction >= 0.0 && config.poison_fraction < 1.0))
        throw std::invalid_argument("PoisonConfig: poison_fraction must be in [0,1)");
    if (std::isnan(config.attack_rate))
        throw std::invalid_argument("PoisonConfig: attack_rate is NaN");
}

LabeledDataset poison_dataset(const LabeledDataset& poison_source,
                              const PoisonConfig& config, RngSeed seed) {
    validate(config, poison_source.num_classes);

    LabeledDataset out;
    out.num_classes = poison_source.num_classes;
    out.split_tag = SplitTag::poison_source;

    const SoftLabel label = smooth_label(config.attack_rate,
                                         poison_source.num_classes,
                                         config.target_class);
    Rng root(seed);
    for (std::size_t i = 0; i < poison_source.size(); ++i) {
        if (config.clean_label &&
            poison_source.label(i).argmax() != config.target_class)
            continue;
        Rng sample_rng = root.split(i);
        out.samples.push_back(
            {apply_trigger(poison_source.image(i), config.trigger, &sample_rng),
             label});
    }
    if (config.clean_label && out.empty())
        throw std::invalid_argument(
            "poison_dataset: clean-label filtering left no target-class samples");
    return out;
}

nlohmann::json poison_config_to_json(const PoisonConfig& config) {
    nlohmann::json doc = {
        {"target_class", config.target_class},
        {"poison_fraction", config.poison_fraction},
        {"clean_label", config.clean_label},
        {"trigger", trigger_to_json(config.trigger)},
    };
    if (std::isinf(config.attack_rate))
        doc["attack_rate"] = "inf";
    else
        doc["attack_rate"] = config.attack_rate;
    return doc;
}

PoisonConfig poison_config_from_json(const nlohmann::json& doc) {
    PoisonConfig config;
    config.target_class = doc.at("target_class").get<int>();
    config.poison_fraction = doc.at("poison_fraction").get<double>();
    config.clean_label = doc.at("clean_label").get<bool>();
    config.trigger = trigger_from_json(doc.at("trigger"));
    const auto& ar = doc.at("attack_rate");
    if (ar.is_string())
        config.attack_rate = std::numeric_limits<double>::infinity();
    else
        config.attack_rate = ar.get<double>();
    return config;
}

}  // namespace lsplab
