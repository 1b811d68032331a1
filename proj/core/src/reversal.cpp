#include "lsplab/reversal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lsplab/parallel.hpp"
#include "lsplab/serialize.hpp"
#include "lsplab/ssim.hpp"

namespace lsplab {

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

std::vector<const ImageTensor*> batch_slice(const LabeledDataset& data, int limit) {
    std::vector<const ImageTensor*> out;
    const std::size_t n = std::min<std::size_t>(
        data.size(), static_cast<std::size_t>(std::max(1, limit)));
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(&data.image(i));
    return out;
}

std::vector<const ImageTensor*> heldout_slice(const LabeledDataset& data, int skip,
                                              int cap) {
    std::vector<const ImageTensor*> out;
    for (std::size_t i = static_cast<std::size_t>(skip);
         i < data.size() && out.size() < static_cast<std::size_t>(cap); ++i)
        out.push_back(&data.image(i));
    if (out.empty())  // tiny dataset: fall back to the optimization slice
        return batch_slice(data, cap);
    return out;
}

void stamp(const ImageTensor& x, const std::vector<double>& mask,
           const std::vector<double>& pattern, int channels,
           std::vector<double>& out) {
    out.resize(x.data.size());
    const std::size_t pixels = mask.size();
    for (std::size_t p = 0; p < pixels; ++p) {
        const double m = mask[p];
        for (int c = 0; c < channels; ++c) {
            const std::size_t i = p * channels + c;
            out[i] = (1.0 - m) * x.data[i] + m * pattern[i];
        }
    }
}

/// Objective over (mask, pattern) in [0,1]: value plus gradients with
/// respect to the mask and pattern entries.
class TriggerObjective {
  public:
    virtual ~TriggerObjective() = default;
    // When grad_m / grad_p are null only the value is computed.
    virtual double eval(const std::vector<double>& mask,
                        const std::vector<double>& pattern,
                        std::vector<double>* grad_m, std::vector<double>* grad_p,
                        double* cls_term, double* reg_term) = 0;
};

class NcObjective final : public TriggerObjective {
  public:
    NcObjective(const Classifier& model, int target_class,
                std::vector<const ImageTensor*> batch, double lambda)
        : model_(model),
          target_(target_class),
          batch_(std::move(batch)),
          lambda_(lambda) {}

    double lambda() const { return lambda_; }
    void set_lambda(double l) { lambda_ = l; }

    double batch_success(const std::vector<double>& mask,
                         const std::vector<double>& pattern) {
        int hits = 0;
        std::vector<double> x_bd;
        Classifier::Trace trace;
        for (const ImageTensor* x : batch_) {
            stamp(*x, mask, pattern, x->channels, x_bd);
            const auto& logits = model_.forward_trace(x_bd, trace);
            if (static_cast<int>(std::max_element(logits.begin(), logits.end()) -
                                 logits.begin()) == target_)
                ++hits;
        }
        return static_cast<double>(hits) / static_cast<double>(batch_.size());
    }

    double eval(const std::vector<double>& mask, const std::vector<double>& pattern,
                std::vector<double>* grad_m, std::vector<double>* grad_p,
                double* cls_term, double* reg_term) override {
        const int channels = model_.input_shape().channels;
        const double inv_b = 1.0 / static_cast<double>(batch_.size());
        if (grad_m) grad_m->assign(mask.size(), 0.0);
        if (grad_p) grad_p->assign(pattern.size(), 0.0);

        double ce_sum = 0.0;
        std::vector<double> x_bd, logit_grad(model_.num_classes());
        std::vector<double> input_grad;
        Classifier::Trace trace;
        for (const ImageTensor* x : batch_) {
            stamp(*x, mask, pattern, channels, x_bd);
            const auto& logits = model_.forward_trace(x_bd, trace);
            const auto p = softmax(logits);
            ce_sum += -std::log(std::max(p[static_cast<std::size_t>(target_)],
                                         1e-300));
            if (grad_m || grad_p) {
                for (std::size_t i = 0; i < p.size(); ++i)
                    logit_grad[i] =
                        (p[i] - (static_cast<int>(i) == target_ ? 1.0 : 0.0)) * inv_b;
                model_.backward(x_bd, trace, logit_grad, -1, nullptr, &input_grad,
                                nullptr);
                accumulate_mix_gradients(*x, mask, pattern, input_grad, grad_m,
                                         grad_p);
            }
        }
        const double cls = ce_sum * inv_b;
        double l1 = 0.0;
        for (double m : mask) l1 += m;
        const double reg = lambda_ * l1;
        if (grad_m)
            for (double& g : *grad_m) g += lambda_;
        if (cls_term) *cls_term = cls;
        if (reg_term) *reg_term = reg;
        return cls + reg;
    }

  private:
    void accumulate_mix_gradients(const ImageTensor& x,
                                  const std::vector<double>& mask,
                                  const std::vector<double>& pattern,
                                  const std::vector<double>& g,
                                  std::vector<double>* grad_m,
                                  std::vector<double>* grad_p) const {
        const int channels = x.channels;
        for (std::size_t p = 0; p < mask.size(); ++p) {
            double gm = 0.0;
            for (int c = 0; c < channels; ++c) {
                const std::size_t i = p * channels + c;
                gm += g[i] * (pattern[i] - x.data[i]);
                if (grad_p) (*grad_p)[i] += g[i] * mask[p];
            }
            if (grad_m) (*grad_m)[p] += gm;
        }
    }

    const Classifier& model_;
    int target_;
    std::vector<const ImageTensor*> batch_;
    double lambda_;
};

class AbsObjective final : public TriggerObjective {
  public:
    AbsObjective(const Classifier& model, int target_class,
                 std::vector<const ImageTensor*> batch, int layer_index, int neuron,
                 const AbsConfig& config)
        : model_(model),
          target_(target_class),
          batch_(std::move(batch)),
          layer_(layer_index),
          neuron_(neuron),
          config_(config) {}

    double eval(const std::vector<double>& mask, const std::vector<double>& pattern,
                std::vector<double>* grad_m, std::vector<double>* grad_p,
                double* cls_term, double* reg_term) override {
        const int channels = model_.input_shape().channels;
        const double inv_b = 1.0 / static_cast<double>(batch_.size());
        const bool want_grad = grad_m || grad_p;
        if (grad_m) grad_m->assign(mask.size(), 0.0);
        if (grad_p) grad_p->assign(pattern.size(), 0.0);

        const std::size_t layer_width = model_.activation_size(layer_);
        const double ssim_sign = config_.literal_ssim_sign ? 1.0 : -1.0;

        double sum_logits = 0.0, sum_inter = 0.0, sum_ssim = 0.0;
        std::vector<double> x_bd, input_grad, ssim_grad;
        std::vector<double> logit_seed(model_.num_classes());
        std::vector<double> inject_seed(layer_width);
        Classifier::Trace trace;
        ImageTensor stamped;  // reuse for the ssim call
        stamped = *batch_.front();

        for (const ImageTensor* x : batch_) {
            stamp(*x, mask, pattern, channels, x_bd);
            const auto& logits = model_.forward_trace(x_bd, trace);

            double others = 0.0;
            for (std::size_t i = 0; i < logits.size(); ++i)
                if (static_cast<int>(i) != target_) others += logits[i];
            sum_logits += others - logits[static_cast<std::size_t>(target_)];

            const auto& act = trace.outputs[static_cast<std::size_t>(layer_)];
            double act_others = 0.0;
            for (std::size_t i = 0; i < act.size(); ++i)
                if (static_cast<int>(i) != neuron_) act_others += act[i];
            sum_inter += act_others - act[static_cast<std::size_t>(neuron_)];

            stamped.data = x_bd;
            double s;
            if (want_grad) {
                s = ssim_with_gradient(*x, stamped, ssim_grad);
            } else {
                s = ssim(*x, stamped);
            }
            sum_ssim += config_.literal_ssim_sign ? s : (1.0 - s);

            if (want_grad) {
                for (std::size_t i = 0; i < logit_seed.size(); ++i)
                    logit_seed[i] = config_.w1 * inv_b *
                                    (static_cast<int>(i) == target_ ? -1.0 : 1.0);
                for (std::size_t i = 0; i < inject_seed.size(); ++i)
                    inject_seed[i] = config_.w2 * inv_b *
                                     (static_cast<int>(i) == neuron_ ? -1.0 : 1.0);
                model_.backward(x_bd, trace, logit_seed, layer_, &inject_seed,
                                &input_grad, nullptr);
                for (std::size_t i = 0; i < input_grad.size(); ++i)
                    input_grad[i] += config_.w3 * ssim_sign * inv_b * ssim_grad[i];
                accumulate_mix_gradients(*x, mask, pattern, input_grad, grad_m,
                                         grad_p);
            }
        }

        double l1 = 0.0;
        for (double m : mask) l1 += m;
        const double hinge = std::max(l1 - config_.size_budget, 0.0);
        if (grad_m && hinge > 0.0)
            for (double& g : *grad_m) g += config_.w3;

        const double cls = config_.w1 * sum_logits * inv_b;
        const double reg =
            config_.w2 * sum_inter * inv_b + config_.w3 * (hinge + sum_ssim * inv_b);
        if (cls_term) *cls_term = cls;
        if (reg_term) *reg_term = reg;
        return cls + reg;
    }

  private:
    void accumulate_mix_gradients(const ImageTensor& x,
                                  const std::vector<double>& mask,
                                  const std::vector<double>& pattern,
                                  const std::vector<double>& g,
                                  std::vector<double>* grad_m,
                                  std::vector<double>* grad_p) const {
        const int channels = x.channels;
        for (std::size_t p = 0; p < mask.size(); ++p) {
            double gm = 0.0;
            for (int c = 0; c < channels; ++c) {
                const std::size_t i = p * channels + c;
                gm += g[i] * (pattern[i] - x.data[i]);
                if (grad_p) (*grad_p)[i] += g[i] * mask[p];
            }
            if (grad_m) (*grad_m)[p] += gm;
        }
    }

    const Classifier& model_;
    int target_;
    std::vector<const ImageTensor*> batch_;
    int layer_;
    int neuron_;
    const AbsConfig& config_;
};

struct OptimState {
    std::vector<double> mask, pattern;
    double cls = 0.0, reg = 0.0, objective = 0.0;
    std::vector<double> accepted_objectives;
};

void to_unit(const std::vector<double>& logits, std::vector<double>& unit) {
    unit.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) unit[i] = sigmoid(logits[i]);
}

/// Gradient descent over the sigmoid reparameterization of (mask, pattern).
/// line_search mode only moves when the objective does not increase;
/// adam mode keeps the best iterate seen.
OptimState optimize_trigger(TriggerObjective& objective, std::size_t mask_size,
                            std::size_t pattern_size, int steps, double step_size,
                            ReversalOptimizer mode, Rng rng,
                            LambdaSchedule schedule, NcObjective* nc_for_schedule,
                            double adapt_threshold, double adapt_multiplier,
                            int adapt_interval) {
    std::vector<double> a(mask_size), b(pattern_size);
    for (double& v : a) v = rng.normal(-5.0, 0.5);
    for (double& v : b) v = rng.normal(0.0, 1.0);

    OptimState state;
    std::vector<double> gm, gp, ga(mask_size), gb(pattern_size);
    std::vector<double> a_try(mask_size), b_try(pattern_size);
    std::vector<double> m_try, p_try;

    to_unit(a, state.mask);
    to_unit(b, state.pattern);
    state.objective = objective.eval(state.mask, state.pattern, &gm, &gp, &state.cls,
                                     &state.reg);
    if (!std::isfinite(state.objective))
        throw OptimizationError("non-finite objective at initialization", 0);

    // adam state
    std::vector<double> m1a(mask_size, 0.0), m2a(mask_size, 0.0);
    std::vector<double> m1b(pattern_size, 0.0), m2b(pattern_size, 0.0);
    OptimState best = state;

    double step = step_size;
    for (int s = 0; s < steps; ++s) {
        for (std::size_t i = 0; i < mask_size; ++i)
            ga[i] = gm[i] * state.mask[i] * (1.0 - state.mask[i]);
        for (std::size_t i = 0; i < pattern_size; ++i)
            gb[i] = gp[i] * state.pattern[i] * (1.0 - state.pattern[i]);

        if (mode == ReversalOptimizer::adam) {
            const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
            const double c1 = 1.0 - std::pow(beta1, double(s + 1));
            const double c2 = 1.0 - std::pow(beta2, double(s + 1));
            for (std::size_t i = 0; i < mask_size; ++i) {
                m1a[i] = beta1 * m1a[i] + (1 - beta1) * ga[i];
                m2a[i] = beta2 * m2a[i] + (1 - beta2) * ga[i] * ga[i];
                a[i] -= step_size * (m1a[i] / c1) / (std::sqrt(m2a[i] / c2) + eps);
            }
            for (std::size_t i = 0; i < pattern_size; ++i) {
                m1b[i] = beta1 * m1b[i] + (1 - beta1) * gb[i];
                m2b[i] = beta2 * m2b[i] + (1 - beta2) * gb[i] * gb[i];
                b[i] -= step_size * (m1b[i] / c1) / (std::sqrt(m2b[i] / c2) + eps);
            }
            to_unit(a, state.mask);
            to_unit(b, state.pattern);
            state.objective = objective.eval(state.mask, state.pattern, &gm, &gp,
                                             &state.cls, &state.reg);
            if (!std::isfinite(state.objective))
                throw OptimizationError("non-finite objective", s);
            state.accepted_objectives.push_back(state.objective);
            if (state.objective < best.objective) best = state;
        } else {
            // backtracking line search; terminate when no descent direction
            // remains at the smallest step.
            bool accepted = false;
            double local = step;
            while (local > step_size * 1e-10) {
                for (std::size_t i = 0; i < mask_size; ++i)
                    a_try[i] = a[i] - local * ga[i];
                for (std::size_t i = 0; i < pattern_size; ++i)
                    b_try[i] = b[i] - local * gb[i];
                to_unit(a_try, m_try);
                to_unit(b_try, p_try);
                double cls1, reg1;
                const double j1 =
                    objective.eval(m_try, p_try, nullptr, nullptr, &cls1, &reg1);
                if (std::isfinite(j1) && j1 <= state.objective) {
                    a.swap(a_try);
                    b.swap(b_try);
                    state.mask.swap(m_try);
                    state.pattern.swap(p_try);
                    state.objective = j1;
                    state.cls = cls1;
                    state.reg = reg1;
                    step = std::min(local * 2.0, step_size * 64.0);
                    accepted = true;
                    break;
                }
                local *= 0.5;
            }
            if (!accepted) break;  // converged
            state.accepted_objectives.push_back(state.objective);
            objective.eval(state.mask, state.pattern, &gm, &gp, &state.cls,
                           &state.reg);
            best = state;
        }

        if (schedule == LambdaSchedule::adaptive && nc_for_schedule &&
            (s + 1) % adapt_interval == 0) {
            const double success =
                nc_for_schedule->batch_success(state.mask, state.pattern);
            const double lambda = nc_for_schedule->lambda();
            nc_for_schedule->set_lambda(success >= adapt_threshold
                                            ? lambda * adapt_multiplier
                                            : lambda / adapt_multiplier);
            state.objective = objective.eval(state.mask, state.pattern, &gm, &gp,
                                             &state.cls, &state.reg);
            best = state;
        }
    }
    if (mode == ReversalOptimizer::adam) return best;
    return state;
}

double reversed_attack_success(const Classifier& model,
                               const std::vector<const ImageTensor*>& heldout,
                               const std::vector<double>& mask,
                               const std::vector<double>& pattern, int target) {
    if (heldout.empty()) return 0.0;
    int hits = 0;
    std::vector<double> x_bd;
    Classifier::Trace trace;
    for (const ImageTensor* x : heldout) {
        stamp(*x, mask, pattern, x->channels, x_bd);
        const auto& logits = model.forward_trace(x_bd, trace);
        if (static_cast<int>(std::max_element(logits.begin(), logits.end()) -
                             logits.begin()) == target)
            ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(heldout.size());
}

double vector_median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

ReversalResult reverse_trigger_nc(const Classifier& model, int target_class,
                                  const LabeledDataset& benign_batch,
                                  const ReversalConfig& config) {
    if (benign_batch.empty())
        throw std::invalid_argument("reverse_trigger_nc: empty benign batch");
    if (target_class < 0 || target_class >= model.num_classes())
        throw std::invalid_argument("reverse_trigger_nc: target class out of range");
    if (config.steps < 1)
        throw std::invalid_argument("reverse_trigger_nc: steps must be >= 1");

    const Shape3 shape = model.input_shape();
    const std::size_t mask_size = static_cast<std::size_t>(shape.height) * shape.width;
    const std::size_t pattern_size = mask_size * static_cast<std::size_t>(shape.channels);

    auto batch = batch_slice(benign_batch, config.batch_limit);
    auto heldout = heldout_slice(benign_batch, config.batch_limit, 64);

    Rng root(config.seed);
    OptimState best;
    double best_lambda = config.lambda_weight;
    bool have_best = false;
    for (int r = 0; r < std::max(1, config.restarts); ++r) {
        NcObjective objective(model, target_class, batch, config.lambda_weight);
        OptimState state = optimize_trigger(
            objective, mask_size, pattern_size, config.steps, config.step_size,
            config.optimizer, root.split(static_cast<std::uint64_t>(r)),
            config.lambda_schedule, &objective, config.adapt_success_threshold,
            config.adapt_multiplier, config.adapt_interval);
        if (!have_best || state.objective < best.objective) {
            best = std::move(state);
            best_lambda = objective.lambda();
            have_best = true;
        }
    }

    ReversalResult result;
    result.target_class = target_class;
    result.mask = best.mask;
    result.pattern = ImageTensor(shape.height, shape.width, shape.channels);
    result.pattern.data = best.pattern;
    result.l1_norm = std::accumulate(best.mask.begin(), best.mask.end(), 0.0);
    result.cls_term = best.cls;
    result.reg_term = best.reg;
    result.objective = best.cls + best.reg;
    result.attack_success_of_reversed =
        reversed_attack_success(model, heldout, best.mask, best.pattern, target_class);
    result.method = "nc";
    result.lambda_weight = best_lambda;
    result.accepted_objectives = std::move(best.accepted_objectives);
    return result;
}

std::pair<std::vector<double>, std::vector<int>> mad_anomaly(
    const std::vector<double>& per_class_norms, double threshold) {
    if (per_class_norms.size() < 3)
        throw std::invalid_argument("mad_anomaly: need at least 3 classes");

    const double med = vector_median(per_class_norms);
    std::vector<double> deviations(per_class_norms.size());
    for (std::size_t i = 0; i < per_class_norms.size(); ++i)
        deviations[i] = std::abs(per_class_norms[i] - med);
    const double mad = vector_median(deviations);

    std::vector<double> indices(per_class_norms.size(), 0.0);
    std::vector<int> flagged;
    if (mad == 0.0) return {indices, flagged};

    const double scale = 1.4826 * mad;
    for (std::size_t i = 0; i < per_class_norms.size(); ++i) {
        indices[i] = deviations[i] / scale;
        // A backdoor shrinks the reversed norm, so only below-median
        // classes can be flagged.
        if (per_class_norms[i] < med && indices[i] > threshold)
            flagged.push_back(static_cast<int>(i));
    }
    return {indices, flagged};
}

int default_abs_layer(const Classifier& model) {
    int candidate = -1;
    for (int i = 0; i < model.num_layers() - 1; ++i)
        if (model.layer_kind(i) == LayerKind::relu) candidate = i;
    if (candidate < 0) candidate = std::max(0, model.num_layers() - 2);
    return candidate;
}

std::vector<std::pair<int, double>> scan_compromised_neurons(
    const Classifier& model, const LabeledDataset& benign_batch, int layer_index,
    int top_k, double elevation_factor) {
    if (benign_batch.empty())
        throw std::invalid_argument("scan_compromised_neurons: empty batch");
    if (layer_index < 0 || layer_index >= model.num_layers())
        throw std::invalid_argument("scan_compromised_neurons: layer out of range");

    const std::size_t width = model.activation_size(layer_index);
    std::vector<std::vector<double>> acts;
    std::vector<std::vector<double>> base_logits;
    std::vector<int> true_class;
    Classifier::Trace trace;
    for (const auto& [img, label] : benign_batch.samples) {
        const auto& logits = model.forward_trace(img.data, trace);
        acts.push_back(trace.outputs[static_cast<std::size_t>(layer_index)]);
        base_logits.push_back(logits);
        true_class.push_back(label.argmax());
    }

    std::vector<double> max_act(width, 0.0);
    for (const auto& a : acts)
        for (std::size_t n = 0; n < width; ++n) max_act[n] = std::max(max_act[n], a[n]);

    auto max_other = [](const std::vector<double>& logits, int skip) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < logits.size(); ++i)
            if (static_cast<int>(i) != skip) best = std::max(best, logits[i]);
        return best;
    };

    std::vector<std::pair<int, double>> scores;
    scores.reserve(width);
    std::vector<double> elevated;
    for (std::size_t n = 0; n < width; ++n) {
        double total = 0.0;
        for (std::size_t s = 0; s < acts.size(); ++s) {
            elevated = acts[s];
            elevated[n] = max_act[n] * elevation_factor;
            const auto logits = model.forward_from(layer_index, elevated);
            total += max_other(logits, true_class[s]) -
                     max_other(base_logits[s], true_class[s]);
        }
        scores.push_back({static_cast<int>(n), total / static_cast<double>(acts.size())});
    }
    std::stable_sort(scores.begin(), scores.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    const std::size_t keep = std::min<std::size_t>(scores.size(),
                                                   static_cast<std::size_t>(top_k));
    scores.resize(keep);
    return scores;
}

ReversalResult reverse_trigger_abs(const Classifier& model, int target_class,
                                   const LabeledDataset& benign_batch,
                                   int layer_index, int neuron,
                                   const AbsConfig& config) {
    if (benign_batch.empty())
        throw std::invalid_argument("reverse_trigger_abs: empty benign batch");
    if (target_class < 0 || target_class >= model.num_classes())
        throw std::invalid_argument("reverse_trigger_abs: target class out of range");
    if (layer_index < 0) layer_index = default_abs_layer(model);
    if (layer_index >= model.num_layers())
        throw std::invalid_argument("reverse_trigger_abs: layer out of range");
    if (neuron < 0 || static_cast<std::size_t>(neuron) >=
                          model.activation_size(layer_index))
        throw std::invalid_argument("reverse_trigger_abs: neuron out of range");

    const Shape3 shape = model.input_shape();
    const std::size_t mask_size = static_cast<std::size_t>(shape.height) * shape.width;
    const std::size_t pattern_size = mask_size * static_cast<std::size_t>(shape.channels);

    auto batch = batch_slice(benign_batch, config.batch_limit);
    auto heldout = heldout_slice(benign_batch, config.batch_limit, 64);

    Rng root(config.seed);
    OptimState best;
    bool have_best = false;
    for (int r = 0; r < std::max(1, config.restarts); ++r) {
        AbsObjective objective(model, target_class, batch, layer_index, neuron,
                               config);
        OptimState state = optimize_trigger(
            objective, mask_size, pattern_size, config.steps, config.step_size,
            config.optimizer, root.split(static_cast<std::uint64_t>(r)),
            LambdaSchedule::fixed, nullptr, 0.0, 1.0, 1);
        if (!have_best || state.objective < best.objective) {
            best = std::move(state);
            have_best = true;
        }
    }

    ReversalResult result;
    result.target_class = target_class;
    result.mask = best.mask;
    result.pattern = ImageTensor(shape.height, shape.width, shape.channels);
    result.pattern.data = best.pattern;
    result.l1_norm = std::accumulate(best.mask.begin(), best.mask.end(), 0.0);
    result.cls_term = best.cls;
    result.reg_term = best.reg;
    result.objective = best.cls + best.reg;
    result.attack_success_of_reversed =
        reversed_attack_success(model, heldout, best.mask, best.pattern, target_class);
    result.method = "abs";
    result.accepted_objectives = std::move(best.accepted_objectives);
    return result;
}

DetectionVerdict detect(const Classifier& model, const LabeledDataset& benign_data,
                        const DetectConfig& config) {
    return detect_full(model, benign_data, config).verdict;
}

DetectOutcome detect_full(const Classifier& model, const LabeledDataset& benign_data,
                          const DetectConfig& config) {
    const int k = model.num_classes();
    DetectOutcome outcome;
    outcome.per_class.resize(static_cast<std::size_t>(k));

    if (config.method == DetectionMethod::nc) {
        parallel_for(config.jobs, k, [&](int cls) {
            ReversalConfig per_class = config.nc;
            per_class.seed = Rng(config.nc.seed)
                                 .split(static_cast<std::uint64_t>(cls))
                                 .next_u64();
            outcome.per_class[static_cast<std::size_t>(cls)] =
                reverse_trigger_nc(model, cls, benign_data, per_class);
        });
        std::vector<double> norms(static_cast<std::size_t>(k));
        for (int cls = 0; cls < k; ++cls)
            norms[static_cast<std::size_t>(cls)] =
                outcome.per_class[static_cast<std::size_t>(cls)].l1_norm;

        auto [indices, flagged] = mad_anomaly(norms, config.mad_threshold);
        outcome.verdict.per_class_scores = norms;
        outcome.verdict.anomaly_indices = indices;
        outcome.verdict.flagged_classes = flagged;
        outcome.verdict.is_backdoored = !flagged.empty();
        outcome.verdict.method = "nc";
        const double med = vector_median(norms);
        double score = 0.0;
        for (int cls = 0; cls < k; ++cls)
            if (norms[static_cast<std::size_t>(cls)] < med)
                score = std::max(score, indices[static_cast<std::size_t>(cls)]);
        outcome.verdict.score_for_ap = score;
        return outcome;
    }

    // abs
    const int layer = config.abs.layer_index >= 0 ? config.abs.layer_index
                                                  : default_abs_layer(model);
    auto candidates = scan_compromised_neurons(model, benign_data, layer,
                                               config.abs.top_k_neurons,
                                               config.abs.elevation_factor);
    if (candidates.empty())
        throw std::runtime_error("detect: neuron scan produced no candidates");

    std::vector<double> scores(static_cast<std::size_t>(k), 0.0);
    parallel_for(config.jobs, k, [&](int cls) {
        ReversalResult best;
        bool have = false;
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            AbsConfig per_class = config.abs;
            per_class.seed =
                Rng(config.abs.seed)
                    .split(static_cast<std::uint64_t>(cls) * 131 + c)
                    .next_u64();
            ReversalResult r = reverse_trigger_abs(model, cls, benign_data, layer,
                                                   candidates[c].first, per_class);
            if (!have ||
                r.attack_success_of_reversed > best.attack_success_of_reversed) {
                best = std::move(r);
                have = true;
            }
        }
        scores[static_cast<std::size_t>(cls)] = best.attack_success_of_reversed;
        outcome.per_class[static_cast<std::size_t>(cls)] = std::move(best);
    });

    outcome.verdict.per_class_scores = scores;
    outcome.verdict.anomaly_indices.assign(static_cast<std::size_t>(k), 0.0);
    for (int cls = 0; cls < k; ++cls)
        if (scores[static_cast<std::size_t>(cls)] > config.abs.score_threshold)
            outcome.verdict.flagged_classes.push_back(cls);
    outcome.verdict.is_backdoored = !outcome.verdict.flagged_classes.empty();
    outcome.verdict.score_for_ap =
        *std::max_element(scores.begin(), scores.end());
    outcome.verdict.method = "abs";
    return outcome;
}

nlohmann::json reversal_result_to_json(const ReversalResult& result) {
    return {
        {"method", result.method},
        {"target_class", result.target_class},
        {"l1_norm", result.l1_norm},
        {"cls_term", result.cls_term},
        {"reg_term", result.reg_term},
        {"objective", result.objective},
        {"attack_success_of_reversed", result.attack_success_of_reversed},
        {"lambda_weight", result.lambda_weight},
        {"mask_b64", io::encode_f32_base64(result.mask)},
        {"pattern",
         {{"height", result.pattern.height},
          {"width", result.pattern.width},
          {"channels", result.pattern.channels},
          {"b64", io::encode_f32_base64(result.pattern.data)}}},
    };
}

ReversalResult reversal_result_from_json(const nlohmann::json& doc) {
    ReversalResult result;
    result.method = doc.at("method").get<std::string>();
    result.target_class = doc.at("target_class").get<int>();
    result.l1_norm = doc.at("l1_norm").get<double>();
    result.cls_term = doc.at("cls_term").get<double>();
    result.reg_term = doc.at("reg_term").get<double>();
    result.objective = doc.at("objective").get<double>();
    result.attack_success_of_reversed =
        doc.at("attack_success_of_reversed").get<double>();
    result.lambda_weight = doc.at("lambda_weight").get<double>();
    result.mask = io::decode_f32_base64(doc.at("mask_b64").get<std::string>());
    const auto& p = doc.at("pattern");
    result.pattern = ImageTensor(p.at("height").get<int>(), p.at("width").get<int>(),
                                 p.at("channels").get<int>());
    result.pattern.data = io::decode_f32_base64(p.at("b64").get<std::string>());
    return result;
}

nlohmann::json verdict_to_json(const DetectionVerdict& verdict) {
    return {
        {"method", verdict.method},
        {"per_class_scores", verdict.per_class_scores},
        {"anomaly_indices", verdict.anomaly_indices},
        {"flagged_classes", verdict.flagged_classes},
        {"is_backdoored", verdict.is_backdoored},
        {"score_for_ap", verdict.score_for_ap},
    };
}

DetectionVerdict verdict_from_json(const nlohmann::json& doc) {
    DetectionVerdict verdict;
    verdict.method = doc.at("method").get<std::string>();
    verdict.per_class_scores = doc.at("per_class_scores").get<std::vector<double>>();
    verdict.anomaly_indices = doc.at("anomaly_indices").get<std::vector<double>>();
    verdict.flagged_classes = doc.at("flagged_classes").get<std::vector<int>>();
    verdict.is_backdoored = doc.at("is_backdoored").get<bool>();
    verdict.score_for_ap = doc.at("score_for_ap").get<double>();
    return verdict;
}

}  // namespace lsplab
