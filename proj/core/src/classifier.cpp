#include "lsplab/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lsplab/serialize.hpp"

namespace lsplab {

LayerSpec LayerSpec::conv(int out_channels, int kernel) {
    LayerSpec s;
    s.kind = LayerKind::conv;
    s.out_channels = out_channels;
    s.kernel = kernel;
    return s;
}
LayerSpec LayerSpec::relu() {
    LayerSpec s;
    s.kind = LayerKind::relu;
    return s;
}
LayerSpec LayerSpec::maxpool() {
    LayerSpec s;
    s.kind = LayerKind::maxpool;
    return s;
}
LayerSpec LayerSpec::dense(int out_features) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.out_features = out_features;
    return s;
}

Classifier::Classifier(Shape3 input, int num_classes,
                       const std::vector<LayerSpec>& arch, RngSeed seed)
    : input_(input), num_classes_(num_classes) {
    if (input.height <= 0 || input.width <= 0 || input.channels <= 0)
        throw std::invalid_argument("Classifier: input dims must be positive");
    if (num_classes < 2)
        throw std::invalid_argument("Classifier: need at least two classes");
    build(arch);
    init_params(seed);
}

void Classifier::build(const std::vector<LayerSpec>& arch) {
    if (arch.empty()) throw std::invalid_argument("Classifier: empty architecture");
    Shape3 shape = input_;
    for (const LayerSpec& spec : arch) {
        Layer layer;
        layer.kind = spec.kind;
        layer.in_shape = shape;
        switch (spec.kind) {
            case LayerKind::conv: {
                if (spec.out_channels <= 0 || spec.kernel <= 0 || spec.kernel % 2 == 0)
                    throw std::invalid_argument("conv layer needs odd kernel, channels > 0");
                layer.kernel = spec.kernel;
                layer.out_shape = {shape.height, shape.width, spec.out_channels};
                layer.weights.assign(static_cast<std::size_t>(spec.out_channels) *
                                         spec.kernel * spec.kernel * shape.channels,
                                     0.0);
                layer.bias.assign(spec.out_channels, 0.0);
                break;
            }
            case LayerKind::relu:
                layer.out_shape = shape;
                break;
            case LayerKind::maxpool: {
                if (shape.height < 2 || shape.width < 2)
                    throw std::invalid_argument("maxpool on spatial dims < 2");
                layer.out_shape = {shape.height / 2, shape.width / 2, shape.channels};
                break;
            }
            case LayerKind::dense: {
                if (spec.out_features <= 0)
                    throw std::invalid_argument("dense layer needs out_features > 0");
                layer.out_shape = {1, 1, spec.out_features};
                layer.weights.assign(static_cast<std::size_t>(spec.out_features) *
                                         shape.count(),
                                     0.0);
                layer.bias.assign(spec.out_features, 0.0);
                break;
            }
        }
        shape = layer.out_shape;
        layers_.push_back(std::move(layer));
    }
    if (shape.count() != static_cast<std::size_t>(num_classes_))
        throw std::invalid_argument(
            "Classifier: final layer width must equal num_classes");
}

void Classifier::init_params(RngSeed seed) {
    Rng root(seed);
    int param_index = 0;
    for (Layer& layer : layers_) {
        if (layer.weights.empty()) continue;
        Rng rng = root.split(static_cast<std::uint64_t>(param_index++));
        std::size_t fan_in =
            layer.kind == LayerKind::conv
                ? static_cast<std::size_t>(layer.kernel) * layer.kernel *
                      layer.in_shape.channels
                : layer.in_shape.count();
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (double& w : layer.weights) w = rng.normal(0.0, stddev);
        // biases stay zero
    }
}

LayerKind Classifier::layer_kind(int layer_index) const {
    if (layer_index < 0 || layer_index >= num_layers())
        throw std::invalid_argument("layer_kind: layer index out of range");
    return layers_[static_cast<std::size_t>(layer_index)].kind;
}

std::size_t Classifier::parameter_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers_) n += l.weights.size() + l.bias.size();
    return n;
}

void Classifier::layer_forward(const Layer& layer, const std::vector<double>& in,
                               std::vector<double>& out) const {
    out.assign(layer.out_shape.count(), 0.0);
    switch (layer.kind) {
        case LayerKind::conv: {
            const int H = layer.in_shape.height, W = layer.in_shape.width;
            const int IC = layer.in_shape.channels, OC = layer.out_shape.channels;
            const int K = layer.kernel, pad = layer.kernel / 2;
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) {
                    double* out_px = &out[(static_cast<std::size_t>(y) * W + x) * OC];
                    for (int oc = 0; oc < OC; ++oc) {
                        double acc = layer.bias[oc];
                        for (int ky = 0; ky < K; ++ky) {
                            const int yy = y + ky - pad;
                            if (yy < 0 || yy >= H) continue;
                            for (int kx = 0; kx < K; ++kx) {
                                const int xx = x + kx - pad;
                                if (xx < 0 || xx >= W) continue;
                                const double* in_px =
                                    &in[(static_cast<std::size_t>(yy) * W + xx) * IC];
                                const double* w =
                                    &layer.weights[((static_cast<std::size_t>(oc) * K +
                                                     ky) *
                                                        K +
                                                    kx) *
                                                   IC];
                                for (int ic = 0; ic < IC; ++ic)
                                    acc += in_px[ic] * w[ic];
                            }
                        }
                        out_px[oc] = acc;
                    }
                }
            }
            break;
        }
        case LayerKind::relu:
            for (std::size_t i = 0; i < in.size(); ++i)
                out[i] = in[i] > 0.0 ? in[i] : 0.0;
            break;
        case LayerKind::maxpool: {
            const int W = layer.in_shape.width, C = layer.in_shape.channels;
            const int OH = layer.out_shape.height, OW = layer.out_shape.width;
            for (int y = 0; y < OH; ++y)
                for (int x = 0; x < OW; ++x)
                    for (int c = 0; c < C; ++c) {
                        double best = -1e300;
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx) {
                                const double v =
                                    in[(static_cast<std::size_t>(2 * y + dy) * W +
                                        (2 * x + dx)) *
                                           C +
                                       c];
                                if (v > best) best = v;
                            }
                        out[(static_cast<std::size_t>(y) * OW + x) * C + c] = best;
                    }
            break;
        }
        case LayerKind::dense: {
            const std::size_t I = layer.in_shape.count();
            const int O = layer.out_shape.channels;
            for (int o = 0; o < O; ++o) {
                const double* w = &layer.weights[static_cast<std::size_t>(o) * I];
                double acc = layer.bias[o];
                for (std::size_t i = 0; i < I; ++i) acc += w[i] * in[i];
                out[o] = acc;
            }
            break;
        }
    }
}

void Classifier::layer_backward(const Layer& layer, const std::vector<double>& in,
                                const std::vector<double>& out,
                                const std::vector<double>& grad_out,
                                std::vector<double>& grad_in,
                                std::vector<double>* gw,
                                std::vector<double>* gb) const {
    grad_in.assign(in.size(), 0.0);
    switch (layer.kind) {
        case LayerKind::conv: {
            const int H = layer.in_shape.height, W = layer.in_shape.width;
            const int IC = layer.in_shape.channels, OC = layer.out_shape.channels;
            const int K = layer.kernel, pad = layer.kernel / 2;
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) {
                    const double* g_px =
                        &grad_out[(static_cast<std::size_t>(y) * W + x) * OC];
                    for (int oc = 0; oc < OC; ++oc) {
                        const double g = g_px[oc];
                        if (gb) (*gb)[oc] += g;
                        for (int ky = 0; ky < K; ++ky) {
                            const int yy = y + ky - pad;
                            if (yy < 0 || yy >= H) continue;
                            for (int kx = 0; kx < K; ++kx) {
                                const int xx = x + kx - pad;
                                if (xx < 0 || xx >= W) continue;
                                const std::size_t in_off =
                                    (static_cast<std::size_t>(yy) * W + xx) * IC;
                                const std::size_t w_off =
                                    ((static_cast<std::size_t>(oc) * K + ky) * K + kx) *
                                    IC;
                                double* gi = &grad_in[in_off];
                                const double* w = &layer.weights[w_off];
                                if (gw) {
                                    const double* ip = &in[in_off];
                                    double* gwp = &(*gw)[w_off];
                                    for (int ic = 0; ic < IC; ++ic) {
                                        gi[ic] += g * w[ic];
                                        gwp[ic] += g * ip[ic];
                                    }
                                } else {
                                    for (int ic = 0; ic < IC; ++ic) gi[ic] += g * w[ic];
                                }
                            }
                        }
                    }
                }
            }
            break;
        }
        case LayerKind::relu:
            for (std::size_t i = 0; i < in.size(); ++i)
                grad_in[i] = in[i] > 0.0 ? grad_out[i] : 0.0;
            break;
        case LayerKind::maxpool: {
            const int W = layer.in_shape.width, C = layer.in_shape.channels;
            const int OH = layer.out_shape.height, OW = layer.out_shape.width;
            for (int y = 0; y < OH; ++y)
                for (int x = 0; x < OW; ++x)
                    for (int c = 0; c < C; ++c) {
                        // Route to the first maximum in scan order.
                        const double target =
                            out[(static_cast<std::size_t>(y) * OW + x) * C + c];
                        for (int dy = 0; dy < 2; ++dy) {
                            bool done = false;
                            for (int dx = 0; dx < 2; ++dx) {
                                const std::size_t idx =
                                    (static_cast<std::size_t>(2 * y + dy) * W +
                                     (2 * x + dx)) *
                                        C +
                                    c;
                                if (in[idx] == target) {
                                    grad_in[idx] +=
                                        grad_out[(static_cast<std::size_t>(y) * OW + x) *
                                                     C +
                                                 c];
                                    done = true;
                                    break;
                                }
                            }
                            if (done) break;
                        }
                    }
            break;
        }
        case LayerKind::dense: {
            const std::size_t I = layer.in_shape.count();
            const int O = layer.out_shape.channels;
            for (int o = 0; o < O; ++o) {
                const double g = grad_out[o];
                if (gb) (*gb)[o] += g;
                const double* w = &layer.weights[static_cast<std::size_t>(o) * I];
                if (gw) {
                    double* gwp = &(*gw)[static_cast<std::size_t>(o) * I];
                    for (std::size_t i = 0; i < I; ++i) {
                        grad_in[i] += g * w[i];
                        gwp[i] += g * in[i];
                    }
                } else {
                    for (std::size_t i = 0; i < I; ++i) grad_in[i] += g * w[i];
                }
            }
            break;
        }
    }
}

const std::vector<double>& Classifier::forward_trace(const std::vector<double>& x,
                                                     Trace& trace) const {
    if (x.size() != input_.count())
        throw std::invalid_argument("forward_trace: input size mismatch");
    trace.outputs.resize(layers_.size());
    const std::vector<double>* current = &x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        layer_forward(layers_[i], *current, trace.outputs[i]);
        current = &trace.outputs[i];
    }
    return trace.outputs.back();
}

std::vector<double> Classifier::forward(const ImageTensor& x) const {
    if (x.height != input_.height || x.width != input_.width ||
        x.channels != input_.channels)
        throw std::invalid_argument("forward: image dims do not match model input");
    Trace trace;
    return forward_trace(x.data, trace);
}

int Classifier::predict(const ImageTensor& x) const {
    const auto logits = forward(x);
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) -
                            logits.begin());
}

std::vector<double> Classifier::activations(const ImageTensor& x,
                                            int layer_index) const {
    if (layer_index < 0 || layer_index >= num_layers())
        throw std::invalid_argument("activations: layer index out of range");
    Trace trace;
    forward_trace(x.data, trace);
    return trace.outputs[static_cast<std::size_t>(layer_index)];
}

std::size_t Classifier::activation_size(int layer_index) const {
    if (layer_index < 0 || layer_index >= num_layers())
        throw std::invalid_argument("activation_size: layer index out of range");
    return layers_[static_cast<std::size_t>(layer_index)].out_shape.count();
}

std::vector<double> Classifier::forward_from(int layer_index,
                                             const std::vector<double>& activation) const {
    if (layer_index < 0 || layer_index >= num_layers())
        throw std::invalid_argument("forward_from: layer index out of range");
    if (activation.size() != activation_size(layer_index))
        throw std::invalid_argument("forward_from: activation size mismatch");
    std::vector<double> current = activation, next;
    for (std::size_t i = static_cast<std::size_t>(layer_index) + 1;
         i < layers_.size(); ++i) {
        layer_forward(layers_[i], current, next);
        current.swap(next);
    }
    return current;
}

void Classifier::GradientSink::clear() {
    for (auto& g : weight_grads) std::fill(g.begin(), g.end(), 0.0);
    for (auto& g : bias_grads) std::fill(g.begin(), g.end(), 0.0);
}

Classifier::GradientSink Classifier::make_gradient_sink() const {
    GradientSink sink;
    for (const Layer& l : layers_) {
        sink.weight_grads.emplace_back(l.weights.size(), 0.0);
        sink.bias_grads.emplace_back(l.bias.size(), 0.0);
    }
    return sink;
}

void Classifier::backward(const std::vector<double>& x, const Trace& trace,
                          const std::vector<double>& logit_grad, int inject_layer,
                          const std::vector<double>* inject_grad,
                          std::vector<double>* input_grad, GradientSink* sink) const {
    if (logit_grad.size() != static_cast<std::size_t>(num_classes_))
        throw std::invalid_argument("backward: logit gradient size mismatch");

    std::vector<double> grad = logit_grad, grad_prev;
    for (int i = num_layers() - 1; i >= 0; --i) {
        if (inject_layer == i && inject_grad) {
            if (inject_grad->size() != grad.size())
                throw std::invalid_argument("backward: injected gradient size mismatch");
            for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += (*inject_grad)[j];
        }
        const std::vector<double>& in =
            i == 0 ? x : trace.outputs[static_cast<std::size_t>(i - 1)];
        std::vector<double>* gw = nullptr;
        std::vector<double>* gb = nullptr;
        if (sink) {
            gw = &sink->weight_grads[static_cast<std::size_t>(i)];
            gb = &sink->bias_grads[static_cast<std::size_t>(i)];
        }
        layer_backward(layers_[static_cast<std::size_t>(i)], in,
                       trace.outputs[static_cast<std::size_t>(i)], grad, grad_prev,
                       gw && !gw->empty() ? gw : nullptr,
                       gb && !gb->empty() ? gb : nullptr);
        grad.swap(grad_prev);
    }
    if (input_grad) *input_grad = std::move(grad);
}

int Classifier::num_param_layers() const {
    int n = 0;
    for (const Layer& l : layers_)
        if (!l.weights.empty()) ++n;
    return n;
}

std::vector<std::vector<double>*> Classifier::parameter_arrays() {
    std::vector<std::vector<double>*> out;
    for (Layer& l : layers_) {
        if (l.weights.empty()) continue;
        out.push_back(&l.weights);
        out.push_back(&l.bias);
    }
    return out;
}

std::vector<const std::vector<double>*> Classifier::parameter_arrays() const {
    std::vector<const std::vector<double>*> out;
    for (const Layer& l : layers_) {
        if (l.weights.empty()) continue;
        out.push_back(&l.weights);
        out.push_back(&l.bias);
    }
    return out;
}

// ---------------------------------------------------------------------------

double soft_cross_entropy(const std::vector<double>& logits, const SoftLabel& label) {
    if (logits.size() != label.probs.size())
        throw std::invalid_argument("soft_cross_entropy: length mismatch");
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    double sum_exp = 0.0;
    for (double l : logits) sum_exp += std::exp(l - max_logit);
    const double lse = max_logit + std::log(sum_exp);
    double ce = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i)
        ce += label.probs[i] * (lse - logits[i]);
    return ce;
}

std::vector<double> softmax(const std::vector<double>& logits) {
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - max_logit);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

std::vector<double> input_gradient(const Classifier& model, const InputLossSpec& loss,
                                   const ImageTensor& x) {
    Classifier::Trace trace;
    const auto& logits = model.forward_trace(x.data, trace);

    std::vector<double> logit_grad(logits.size(), 0.0);
    switch (loss.kind) {
        case InputLossSpec::Kind::cross_entropy: {
            if (loss.label.num_classes() != model.num_classes())
                throw std::invalid_argument("input_gradient: label length mismatch");
            const auto p = softmax(logits);
            for (std::size_t i = 0; i < p.size(); ++i)
                logit_grad[i] = p[i] - loss.label.probs[i];
            break;
        }
        case InputLossSpec::Kind::logit_margin: {
            if (loss.target_class < 0 || loss.target_class >= model.num_classes())
                throw std::invalid_argument("input_gradient: target out of range");
            for (std::size_t i = 0; i < logit_grad.size(); ++i)
                logit_grad[i] =
                    (static_cast<int>(i) == loss.target_class) ? -1.0 : 1.0;
            break;
        }
    }
    std::vector<double> grad;
    model.backward(x.data, trace, logit_grad, -1, nullptr, &grad, nullptr);
    return grad;
}

Classifier train(const Classifier& model, const LabeledDataset& train_set,
                 const TrainConfig& config) {
    if (config.epochs < 1)
        throw std::invalid_argument("train: epochs must be >= 1");
    if (config.batch_size < 1)
        throw std::invalid_argument("train: batch_size must be >= 1");
    if (!(config.learning_rate > 0.0))
        throw std::invalid_argument("train: learning_rate must be positive");
    if (train_set.empty()) throw std::invalid_argument("train: empty dataset");
    if (train_set.height() != model.input_shape().height ||
        train_set.width() != model.input_shape().width ||
        train_set.channels() != model.input_shape().channels)
        throw std::invalid_argument("train: dataset dims do not match model input");
    if (train_set.num_classes != model.num_classes())
        throw std::invalid_argument("train: class count mismatch");

    Classifier trained = model;
    auto params = trained.parameter_arrays();

    // Optimizer state per parameter array.
    std::vector<std::vector<double>> m1(params.size()), m2(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        m1[i].assign(params[i]->size(), 0.0);
        m2[i].assign(params[i]->size(), 0.0);
    }
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step = 0;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    Rng root(config.seed);
    auto sink = trained.make_gradient_sink();
    Classifier::Trace trace;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Rng epoch_rng = root.split(static_cast<std::uint64_t>(epoch));
        epoch_rng.shuffle(order);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(
                order.size(), start + static_cast<std::size_t>(config.batch_size));
            const double inv_n = 1.0 / static_cast<double>(end - start);
            sink.clear();

            for (std::size_t j = start; j < end; ++j) {
                const auto& [img, label] = train_set.samples[order[j]];
                const auto& logits = trained.forward_trace(img.data, trace);
                epoch_loss += soft_cross_entropy(logits, label);
                const auto p = softmax(logits);
                std::vector<double> logit_grad(p.size());
                for (std::size_t i = 0; i < p.size(); ++i)
                    logit_grad[i] = (p[i] - label.probs[i]) * inv_n;
                trained.backward(img.data, trace, logit_grad, -1, nullptr, nullptr,
                                 &sink);
            }

            ++step;
            // Gradient sinks are indexed by layer; map to the flat param list.
            std::size_t pi = 0;
            for (std::size_t li = 0; li < sink.weight_grads.size(); ++li) {
                if (sink.weight_grads[li].empty()) continue;
                for (std::vector<double>* grads :
                     {&sink.weight_grads[li], &sink.bias_grads[li]}) {
                    std::vector<double>& p = *params[pi];
                    std::vector<double>& m = m1[pi];
                    std::vector<double>& v = m2[pi];
                    if (config.optimizer == OptimizerKind::adam) {
                        const double c1 = 1.0 - std::pow(beta1, double(step));
                        const double c2 = 1.0 - std::pow(beta2, double(step));
                        for (std::size_t i = 0; i < p.size(); ++i) {
                            const double g = (*grads)[i];
                            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                            p[i] -= config.learning_rate * (m[i] / c1) /
                                    (std::sqrt(v[i] / c2) + eps);
                        }
                    } else {
                        for (std::size_t i = 0; i < p.size(); ++i) {
                            m[i] = config.momentum * m[i] + (*grads)[i];
                            p[i] -= config.learning_rate * m[i];
                        }
                    }
                    ++pi;
                }
            }
        }
        epoch_loss /= static_cast<double>(order.size());
        if (!std::isfinite(epoch_loss))
            throw TrainingError("training loss diverged at epoch " +
                                    std::to_string(epoch),
                                epoch);
    }
    return trained;
}

std::vector<LayerSpec> arch_preset(const std::string& name, int num_classes) {
    if (name == "tiny")
        return {LayerSpec::conv(6), LayerSpec::relu(),  LayerSpec::maxpool(),
                LayerSpec::conv(12), LayerSpec::relu(), LayerSpec::maxpool(),
                LayerSpec::dense(num_classes)};
    if (name == "small")
        return {LayerSpec::conv(8),   LayerSpec::relu(), LayerSpec::maxpool(),
                LayerSpec::conv(16),  LayerSpec::relu(), LayerSpec::maxpool(),
                LayerSpec::dense(32), LayerSpec::relu(),
                LayerSpec::dense(num_classes)};
    if (name == "standard")
        return {LayerSpec::conv(12),   LayerSpec::relu(), LayerSpec::maxpool(),
                LayerSpec::conv(24),   LayerSpec::relu(), LayerSpec::maxpool(),
                LayerSpec::dense(112), LayerSpec::relu(),
                LayerSpec::dense(num_classes)};
    throw std::invalid_argument("unknown architecture preset: " + name);
}

// -- persistence -------------------------------------------------------------

namespace {

std::string layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv: return "conv";
        case LayerKind::relu: return "relu";
        case LayerKind::maxpool: return "maxpool";
        case LayerKind::dense: return "dense";
    }
    throw std::logic_error("unknown layer kind");
}

LayerKind layer_kind_from_name(const std::string& s) {
    if (s == "conv") return LayerKind::conv;
    if (s == "relu") return LayerKind::relu;
    if (s == "maxpool") return LayerKind::maxpool;
    if (s == "dense") return LayerKind::dense;
    throw std::invalid_argument("unknown layer kind: " + s);
}

}  // namespace

nlohmann::json Classifier::arch_to_json() const {
    nlohmann::json layers = nlohmann::json::array();
    for (const Layer& l : layers_) {
        nlohmann::json entry = {{"kind", layer_kind_name(l.kind)}};
        if (l.kind == LayerKind::conv) {
            entry["out_channels"] = l.out_shape.channels;
            entry["kernel"] = l.kernel;
        } else if (l.kind == LayerKind::dense) {
            entry["out_features"] = l.out_shape.channels;
        }
        layers.push_back(entry);
    }
    return {{"input",
             {{"height", input_.height},
              {"width", input_.width},
              {"channels", input_.channels}}},
            {"num_classes", num_classes_},
            {"layers", layers}};
}

void Classifier::save(const std::filesystem::path& dir,
                      const nlohmann::json& metadata) const {
    std::filesystem::create_directories(dir);
    io::write_json(dir / "arch.json", arch_to_json());
    io::write_json(dir / "manifest.json", metadata);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i].weights.empty()) continue;
        char name[64];
        std::snprintf(name, sizeof(name), "layer_%02zu_weights.f32", i);
        io::write_f32(dir / name, layers_[i].weights);
        std::snprintf(name, sizeof(name), "layer_%02zu_bias.f32", i);
        io::write_f32(dir / name, layers_[i].bias);
    }
}

Classifier Classifier::load(const std::filesystem::path& dir) {
    nlohmann::json arch = io::read_json(dir / "arch.json");
    Shape3 input{arch.at("input").at("height").get<int>(),
                 arch.at("input").at("width").get<int>(),
                 arch.at("input").at("channels").get<int>()};
    std::vector<LayerSpec> specs;
    for (const auto& entry : arch.at("layers")) {
        const LayerKind kind = layer_kind_from_name(entry.at("kind").get<std::string>());
        switch (kind) {
            case LayerKind::conv:
                specs.push_back(LayerSpec::conv(entry.at("out_channels").get<int>(),
                                                entry.at("kernel").get<int>()));
                break;
            case LayerKind::relu: specs.push_back(LayerSpec::relu()); break;
            case LayerKind::maxpool: specs.push_back(LayerSpec::maxpool()); break;
            case LayerKind::dense:
                specs.push_back(LayerSpec::dense(entry.at("out_features").get<int>()));
                break;
        }
    }
    Classifier model(input, arch.at("num_classes").get<int>(), specs, RngSeed{0});
    for (std::size_t i = 0; i < model.layers_.size(); ++i) {
        if (model.layers_[i].weights.empty()) continue;
        char name[64];
        std::snprintf(name, sizeof(name), "layer_%02zu_weights.f32", i);
        auto weights = io::read_f32(dir / name);
        std::snprintf(name, sizeof(name), "layer_%02zu_bias.f32", i);
        auto bias = io::read_f32(dir / name);
        if (weights.size() != model.layers_[i].weights.size() ||
            bias.size() != model.layers_[i].bias.size())
            throw std::runtime_error("checkpoint parameter size mismatch at layer " +
                                     std::to_string(i));
        model.layers_[i].weights = std::move(weights);
        model.layers_[i].bias = std::move(bias);
    }
    return model;
}

nlohmann::json Classifier::load_metadata(const std::filesystem::path& dir) {
    return io::read_json(dir / "manifest.json");
}

}  // namespace lsplab
