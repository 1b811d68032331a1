#pragma once

#include <string>

#include <json.hpp>

#include "lsplab/reversal.hpp"

namespace lsplab {

/// Terms measured from a benign and a pilot-poisoned defense run, used to
/// derive how much classification loss the poisoned model must pay for the
/// trigger to stop being the objective's minimum.
struct CompensatoryInputs {
    double reg_benign = 0.0;
    double reg_poisoned = 0.0;
    double cls_benign = 0.0;
    double epsilon = 0.0;  // extra safety margin
    // mask-norm instantiation
    double lambda_weight = 0.0;
    double norm_benign = 0.0;
    double norm_poisoned = 0.0;
    int num_classes = 0;
};

struct CompensatoryBound {
    double ce_lower_bound = 0.0;
    double max_attack_rate = 0.0;
    bool feasible = false;  // max_attack_rate > 1
    std::string provenance;
};

/// reg_benign - reg_poisoned + cls_benign + epsilon, floored at 0.
double general_bound(const CompensatoryInputs& inputs);

/// Mask-norm instantiation with the benign classification term omitted:
/// lambda * (norm_benign - norm_poisoned) + epsilon, floored at 0.
double nc_bound(double lambda_weight, double norm_benign, double norm_poisoned,
                double epsilon);

/// Derives the cross-entropy bound from a (benign, pilot-poisoned) pair of
/// defense runs on the same target class and method, then inverts it into
/// the maximum feasible attack rate. Mismatched runs raise
/// std::invalid_argument.
CompensatoryBound plan_attack(const ReversalResult& benign_run,
                              const ReversalResult& poisoned_run, double epsilon,
                              int num_classes);

/// Same as plan_attack but averages the measured terms over replica runs
/// first (each list nonempty, mutually compatible).
CompensatoryBound plan_attack_averaged(const std::vector<ReversalResult>& benign_runs,
                                       const std::vector<ReversalResult>& poisoned_runs,
                                       double epsilon, int num_classes);

nlohmann::json bound_to_json(const CompensatoryBound& bound);
CompensatoryBound bound_from_json(const nlohmann::json& doc);

}  // namespace lsplab
