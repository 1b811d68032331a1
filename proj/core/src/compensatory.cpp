#include "lsplab/compensatory.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lsplab/smoothing.hpp"

namespace lsplab {

double general_bound(const CompensatoryInputs& inputs) {
    if (inputs.epsilon < 0.0)
        throw std::invalid_argument("general_bound: epsilon must be >= 0");
    return std::max(0.0, inputs.reg_benign - inputs.reg_poisoned +
                             inputs.cls_benign + inputs.epsilon);
}

double nc_bound(double lambda_weight, double norm_benign, double norm_poisoned,
                double epsilon) {
    if (lambda_weight < 0.0)
        throw std::invalid_argument("nc_bound: lambda must be >= 0");
    if (norm_benign < 0.0 || norm_poisoned < 0.0)
        throw std::invalid_argument("nc_bound: norms must be >= 0");
    return std::max(0.0, lambda_weight * (norm_benign - norm_poisoned) + epsilon);
}

namespace {

void check_compatible(const ReversalResult& benign_run,
                      const ReversalResult& poisoned_run) {
    if (benign_run.target_class != poisoned_run.target_class)
        throw std::invalid_argument("plan_attack: runs target different classes");
    if (benign_run.method != poisoned_run.method)
        throw std::invalid_argument("plan_attack: runs use different methods");
    if (benign_run.lambda_weight != poisoned_run.lambda_weight)
        throw std::invalid_argument("plan_attack: runs use different lambda");
}

CompensatoryBound finish(double ce_bound, int num_classes, std::string provenance) {
    CompensatoryBound bound;
    bound.ce_lower_bound = ce_bound;
    bound.max_attack_rate = max_attack_rate(ce_bound, num_classes);
    bound.feasible = bound.max_attack_rate > 1.0;
    bound.provenance = std::move(provenance);
    return bound;
}

}  // namespace

CompensatoryBound plan_attack(const ReversalResult& benign_run,
                              const ReversalResult& poisoned_run, double epsilon,
                              int num_classes) {
    check_compatible(benign_run, poisoned_run);
    CompensatoryInputs inputs;
    inputs.reg_benign = benign_run.reg_term;
    inputs.reg_poisoned = poisoned_run.reg_term;
    inputs.cls_benign = benign_run.cls_term;
    inputs.epsilon = epsilon;
    inputs.num_classes = num_classes;
    return finish(general_bound(inputs), num_classes,
                  benign_run.method + "/class " +
                      std::to_string(benign_run.target_class));
}

CompensatoryBound plan_attack_averaged(const std::vector<ReversalResult>& benign_runs,
                                       const std::vector<ReversalResult>& poisoned_runs,
                                       double epsilon, int num_classes) {
    if (benign_runs.empty() || poisoned_runs.empty())
        throw std::invalid_argument("plan_attack_averaged: empty run list");
    for (const auto& b : benign_runs)
        for (const auto& p : poisoned_runs)
            if (b.method != p.method || b.lambda_weight != p.lambda_weight)
                throw std::invalid_argument(
                    "plan_attack_averaged: incompatible defense configs");

    auto mean_of = [](const std::vector<ReversalResult>& runs, auto field) {
        double sum = 0.0;
        for (const auto& r : runs) sum += field(r);
        return sum / static_cast<double>(runs.size());
    };
    CompensatoryInputs inputs;
    inputs.reg_benign =
        mean_of(benign_runs, [](const ReversalResult& r) { return r.reg_term; });
    inputs.reg_poisoned =
        mean_of(poisoned_runs, [](const ReversalResult& r) { return r.reg_term; });
    inputs.cls_benign =
        mean_of(benign_runs, [](const ReversalResult& r) { return r.cls_term; });
    inputs.epsilon = epsilon;
    inputs.num_classes = num_classes;
    return finish(general_bound(inputs), num_classes,
                  benign_runs.front().method + "/averaged over " +
                      std::to_string(benign_runs.size()) + "+" +
                      std::to_string(poisoned_runs.size()) + " runs");
}

nlohmann::json bound_to_json(const CompensatoryBound& bound) {
    nlohmann::json doc = {
        {"ce_lower_bound", bound.ce_lower_bound},
        {"feasible", bound.feasible},
        {"provenance", bound.provenance},
    };
    if (std::isinf(bound.max_attack_rate))
        doc["max_attack_rate"] = "inf";
    else
        doc["max_attack_rate"] = bound.max_attack_rate;
    return doc;
}

CompensatoryBound bound_from_json(const nlohmann::json& doc) {
    CompensatoryBound bound;
    bound.ce_lower_bound = doc.at("ce_lower_bound").get<double>();
    bound.feasible = doc.at("feasible").get<bool>();
    bound.provenance = doc.at("provenance").get<std::string>();
    const auto& ar = doc.at("max_attack_rate");
    bound.max_attack_rate = ar.is_string()
                                ? std::numeric_limits<double>::infinity()
                                : ar.get<double>();
    return bound;
}

}  // namespace lsplab
