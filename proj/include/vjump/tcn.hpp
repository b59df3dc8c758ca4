#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "vjump/nn.hpp"
#include "vjump/session.hpp"

namespace vjump {

struct SsTcnConfig {
    std::size_t num_layers = 10;
    std::size_t num_filters = 64;
    std::size_t kernel_size = 3;
    std::size_t in_channels = kNumChannels;
    std::size_t num_classes = 8;

    void validate() const;
    /// Samples seen by one output step: 1 + (k - 1) * sum of dilations.
    std::size_t receptive_field() const;

    friend bool operator==(const SsTcnConfig&, const SsTcnConfig&) = default;
};

struct MsTcnConfig {
    std::size_t num_stages = 4;
    SsTcnConfig stage;
    LossConfig loss;
    std::size_t epochs = 50;
    std::uint64_t seed = 0;
    double learning_rate = 5e-4;
    // Off by default.
    double dropout = 0.0;
    double weight_decay = 0.0;
    // Per-channel z-scoring of the raw input, statistics taken from the training sessions.
    bool normalize_input = true;

    void validate() const;
};

/// One single-stage TCN: 1x1 in -> residual dilated layers -> 1x1 out.
struct StageWeights {
    ConvKernel input;
    std::vector<ConvKernel> dilated;
    std::vector<ConvKernel> pointwise;
    ConvKernel output;

    friend bool operator==(const StageWeights&, const StageWeights&) = default;
};

struct ModelWeights {
    static constexpr std::uint32_t kVersion = 1;

    MsTcnConfig config;
    std::vector<StageWeights> stages;
    std::vector<double> input_mean;   // per channel, subtracted before stage 0
    std::vector<double> input_scale;  // per channel, divides after centering

    std::size_t parameter_count() const;
    /// Every trainable buffer in a fixed order (stage, in, layers, out; weights then bias).
    std::vector<std::span<double>> parameter_buffers();
    std::vector<std::span<const double>> parameter_buffers() const;
};

/// Closed-form parameter count of a configuration with `in_channels` raw inputs.
std::size_t mstcn_parameter_count(const MsTcnConfig& config);

/// Deterministic uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
ModelWeights build_mstcn(const MsTcnConfig& config, std::uint64_t seed);
/// Same shapes, all parameters zero (used as gradient accumulator).
ModelWeights zeros_like(const ModelWeights& weights);

Tensor2 sstcn_forward(const ModelWeights& weights, std::size_t stage_index, const Tensor2& input);
/// Per-stage probabilities; stage s > 0 consumes the softmax of stage s - 1.
std::vector<ProbSequence> mstcn_forward(const ModelWeights& weights, const Tensor2& input);

/// Forward pass that keeps the activations needed for an exact backward pass.
class MsTcnGraph {
public:
    explicit MsTcnGraph(const ModelWeights& weights) : weights_(&weights) {}

    /// Returns per-stage logits. With `rng` set and dropout > 0, applies training-mode dropout.
    const std::vector<Tensor2>& forward(const Tensor2& input, std::mt19937_64* rng = nullptr);
    const std::vector<ProbSequence>& probabilities() const { return probs_; }

    /// Gradients of a loss given dL/dlogits for every stage. Throws StateError without a forward pass.
    ModelWeights backward(std::span<const Tensor2> grad_logits) const;

private:
    struct LayerTrace {
        Tensor2 pre_activation;   // dilated conv output
        Tensor2 activation;       // relu(pre_activation)
        std::vector<double> keep; // dropout scale per element, empty when off
    };
    struct StageTrace {
        Tensor2 input;
        std::vector<Tensor2> hidden;  // hidden[l] feeds layer l; hidden.back() feeds output conv
        std::vector<LayerTrace> layers;
    };

    const ModelWeights* weights_;
    std::vector<StageTrace> traces_;
    std::vector<Tensor2> logits_;
    std::vector<ProbSequence> probs_;
};

struct LossAndGradients {
    double loss = 0.0;
    ModelWeights gradients;
};

/// Sum over stages of CE + lambda * TMSE and its exact gradient for one sequence.
/// `input` is already normalized.
LossAndGradients mstcn_loss_and_gradients(const ModelWeights& weights, const Tensor2& input,
                                          std::span<const int> labels,
                                          std::mt19937_64* dropout_rng = nullptr);

struct TrainResult {
    ModelWeights weights;
    std::vector<double> loss_history;  // mean session loss per epoch
};

/// Full-sequence Adam steps, one per session, sessions in the given order every epoch.
TrainResult train(const MsTcnConfig& config, std::span<const ImuSession> sessions);

struct Prediction {
    ProbSequence probs;
    LabelSequence labels;
};

/// Row-wise argmax; ties go to the lowest class index.
LabelSequence argmax_rows(const Tensor2& scores);
/// Applies the stored input normalization.
Tensor2 normalize_input(const ModelWeights& weights, const Tensor2& samples);
Prediction predict(const ModelWeights& weights, const ImuSession& session);

}  // namespace vjump
