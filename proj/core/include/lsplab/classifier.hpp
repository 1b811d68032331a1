#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsplab/dataset.hpp"
#include "lsplab/rng.hpp"
#include "lsplab/tensor.hpp"

namespace lsplab {

enum class LayerKind { conv, relu, maxpool, dense };

/// Architecture descriptor entry. conv layers are 'same' padded, stride 1;
/// maxpool is 2x2 stride 2.
struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    int out_channels = 0;  // conv
    int kernel = 3;        // conv
    int out_features = 0;  // dense

    static LayerSpec conv(int out_channels, int kernel = 3);
    static LayerSpec relu();
    static LayerSpec maxpool();
    static LayerSpec dense(int out_features);
};

struct Shape3 {
    int height = 0, width = 0, channels = 0;
    std::size_t count() const {
        return static_cast<std::size_t>(height) * width * channels;
    }
    bool operator==(const Shape3&) const = default;
};

enum class OptimizerKind { sgd_momentum, adam };

struct TrainConfig {
    int epochs = 10;
    int batch_size = 64;
    double learning_rate = 1e-3;
    OptimizerKind optimizer = OptimizerKind::adam;
    double momentum = 0.9;  // sgd_momentum only
    RngSeed seed{0};
};

struct TrainingError : std::runtime_error {
    int epoch;
    TrainingError(const std::string& what, int epoch_)
        : std::runtime_error(what), epoch(epoch_) {}
};

/// Small convolutional classifier with explicit forward and backward
/// passes. Gradients are available with respect to parameters (training)
/// and inputs (trigger reversal). All math is double precision; checkpoints
/// store float32.
class Classifier {
  public:
    Classifier() = default;
    Classifier(Shape3 input, int num_classes, const std::vector<LayerSpec>& arch,
               RngSeed seed);

    Shape3 input_shape() const { return input_; }
    int num_classes() const { return num_classes_; }
    int num_layers() const { return static_cast<int>(layers_.size()); }
    LayerKind layer_kind(int layer_index) const;
    std::size_t parameter_count() const;

    std::vector<double> forward(const ImageTensor& x) const;
    int predict(const ImageTensor& x) const;

    /// Post-nonlinearity activation vector of the given layer; the final
    /// layer's activations are the logits.
    std::vector<double> activations(const ImageTensor& x, int layer_index) const;
    std::size_t activation_size(int layer_index) const;

    /// Continues the forward pass from a substituted activation vector at
    /// `layer_index`, returning the logits.
    std::vector<double> forward_from(int layer_index,
                                     const std::vector<double>& activation) const;

    // -- autodiff plumbing ---------------------------------------------

    /// Per-layer outputs of one forward pass, reused by backward().
    struct Trace {
        std::vector<std::vector<double>> outputs;
    };

    const std::vector<double>& forward_trace(const std::vector<double>& x,
                                             Trace& trace) const;

    struct GradientSink {
        std::vector<std::vector<double>> weight_grads;
        std::vector<std::vector<double>> bias_grads;
        void clear();
    };
    GradientSink make_gradient_sink() const;

    /// Backpropagates dL/dlogits to the input. An additional gradient can
    /// be injected at a hidden layer's post-activation output (used by the
    /// activation-targeting reversal objective). Parameter gradients are
    /// accumulated into `sink` when given; the input gradient is written to
    /// `input_grad` when given.
    void backward(const std::vector<double>& x, const Trace& trace,
                  const std::vector<double>& logit_grad, int inject_layer,
                  const std::vector<double>* inject_grad,
                  std::vector<double>* input_grad, GradientSink* sink) const;

    // -- parameters ------------------------------------------------------

    int num_param_layers() const;
    std::vector<std::vector<double>*> parameter_arrays();
    std::vector<const std::vector<double>*> parameter_arrays() const;

    // -- persistence -----------------------------------------------------

    void save(const std::filesystem::path& dir,
              const nlohmann::json& metadata = nlohmann::json::object()) const;
    static Classifier load(const std::filesystem::path& dir);
    static nlohmann::json load_metadata(const std::filesystem::path& dir);

    nlohmann::json arch_to_json() const;

  private:
    struct Layer {
        LayerKind kind;
        Shape3 in_shape, out_shape;
        int kernel = 0;
        std::vector<double> weights;
        std::vector<double> bias;
    };

    void build(const std::vector<LayerSpec>& arch);
    void init_params(RngSeed seed);
    void layer_forward(const Layer& layer, const std::vector<double>& in,
                       std::vector<double>& out) const;
    void layer_backward(const Layer& layer, const std::vector<double>& in,
                        const std::vector<double>& out,
                        const std::vector<double>& grad_out,
                        std::vector<double>& grad_in, std::vector<double>* gw,
                        std::vector<double>* gb) const;

    Shape3 input_{};
    int num_classes_ = 0;
    std::vector<Layer> layers_;
};

/// -sum_i label_i * ln(softmax(logits)_i), log-sum-exp stabilized.
double soft_cross_entropy(const std::vector<double>& logits, const SoftLabel& label);

std::vector<double> softmax(const std::vector<double>& logits);

/// Loss whose input gradient is requested.
struct InputLossSpec {
    enum class Kind {
        cross_entropy,  // CE against `label`
        logit_margin,   // -logit[target] + sum of the other logits
    };
    Kind kind = Kind::cross_entropy;
    SoftLabel label;
    int target_class = 0;
};

/// dLoss/dx, same layout as x.
std::vector<double> input_gradient(const Classifier& model,
                                   const InputLossSpec& loss, const ImageTensor& x);

/// Trains a copy of the model on soft labels with mini-batch cross entropy.
/// Deterministic per config.seed; throws TrainingError if the loss stops
/// being finite.
Classifier train(const Classifier& model, const LabeledDataset& train_set,
                 const TrainConfig& config);

/// Named presets: "tiny" (~4k params), "small" (~10k), "standard" (~50k at
/// 16x16 inputs).
std::vector<LayerSpec> arch_preset(const std::string& name, int num_classes);

}  // namespace lsplab
