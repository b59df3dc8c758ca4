#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vjump/tensor.hpp"

namespace vjump {

/// Per-sample class probabilities, one row per time step (T x J).
using ProbSequence = Tensor2;
/// Per-sample hard class labels.
using LabelSequence = std::vector<int>;

inline constexpr double kProbFloor = 1e-12;

/// 1-D convolution along time with zero "same" padding.
/// Weights are laid out as [tap][in_channel][out_channel].
struct ConvKernel {
    std::size_t kernel_size = 3;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t dilation = 1;
    AlignedVector weights;
    AlignedVector bias;

    static ConvKernel zeros(std::size_t kernel_size, std::size_t in_channels,
                            std::size_t out_channels, std::size_t dilation = 1);

    std::size_t parameter_count() const noexcept { return weights.size() + bias.size(); }
    double& weight(std::size_t tap, std::size_t in, std::size_t out) {
        return weights[(tap * in_channels + in) * out_channels + out];
    }
    double weight(std::size_t tap, std::size_t in, std::size_t out) const {
        return weights[(tap * in_channels + in) * out_channels + out];
    }
    /// Throws ValidationError on even kernel size, zero dilation or inconsistent storage.
    void validate() const;

    friend bool operator==(const ConvKernel&, const ConvKernel&) = default;
};

Tensor2 conv1d_dilated(const Tensor2& input, const ConvKernel& kernel);

/// Accumulates dL/dweights and dL/dbias into `grad_kernel` and returns dL/dinput.
Tensor2 conv1d_dilated_backward(const Tensor2& input, const ConvKernel& kernel,
                                const Tensor2& grad_output, ConvKernel& grad_kernel);

Tensor2 relu(const Tensor2& input);
/// Gradient mask of relu; the subgradient at exactly zero is 0.
Tensor2 relu_backward(const Tensor2& input, const Tensor2& grad_output);

ProbSequence softmax_rows(const Tensor2& logits);
/// Maps dL/dprobs to dL/dlogits through the row softmax.
Tensor2 softmax_backward(const ProbSequence& probs, const Tensor2& grad_probs);

struct LossConfig {
    double lambda_tmse = 0.15;
    double tau = 4.0;

    void validate() const;
};

double cross_entropy_loss(const ProbSequence& probs, std::span<const int> labels);
/// dCE/dlogits = (p - onehot) / T. The probability floor only guards the loss value.
Tensor2 cross_entropy_grad(const ProbSequence& probs, std::span<const int> labels);

/// Truncated MSE over adjacent-step log-probabilities; 0 when T < 2.
double tmse_loss(const ProbSequence& probs, const LossConfig& config);
/// Exact gradient of tmse_loss with respect to the logits that produced `probs`.
Tensor2 tmse_grad(const ProbSequence& probs, const LossConfig& config);

struct AdamState {
    std::size_t step = 0;
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
};

/// One bias-corrected Adam update over a list of parameter buffers. Moments are
/// allocated on the first call; later calls must pass the same shapes.
void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, AdamState& state);
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

}  // namespace vjump
