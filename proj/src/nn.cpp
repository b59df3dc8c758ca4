#include "vjump/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vjump/error.hpp"

namespace vjump {

namespace {

std::string shape(const Tensor2& t) {
    return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

void require_same_shape(const Tensor2& a, const Tensor2& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(std::string(what) + ": shape " + shape(a) + " vs " + shape(b));
    }
}

void require_labels(const ProbSequence& probs, std::span<const int> labels) {
    if (labels.size() != probs.rows()) {
        throw DimensionError("labels length " + std::to_string(labels.size()) +
                             " != sequence length " + std::to_string(probs.rows()));
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= probs.cols()) {
            throw ValidationError("label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(probs.cols()) + ")");
        }
    }
}

// Time offset of tap k relative to the output position.
std::ptrdiff_t tap_offset(const ConvKernel& kernel, std::size_t tap) {
    const auto half = static_cast<std::ptrdiff_t>(kernel.kernel_size / 2);
    return (static_cast<std::ptrdiff_t>(tap) - half) * static_cast<std::ptrdiff_t>(kernel.dilation);
}

// Output rows [first, last) read input rows [first + offset, last + offset).
struct TapRange {
    Eigen::Index first = 0;
    Eigen::Index count = 0;
    Eigen::Index offset = 0;
};

TapRange tap_range(std::ptrdiff_t offset, std::size_t length) {
    const auto n = static_cast<std::ptrdiff_t>(length);
    const std::ptrdiff_t first = std::max<std::ptrdiff_t>(0, -offset);
    const std::ptrdiff_t last = std::min<std::ptrdiff_t>(n, n - offset);
    return {first, std::max<std::ptrdiff_t>(0, last - first), offset};
}

ConstMatrixMap tap_weights(const ConvKernel& kernel, std::size_t tap) {
    return {kernel.weights.data() + tap * kernel.in_channels * kernel.out_channels,
            Eigen::Index(kernel.in_channels), Eigen::Index(kernel.out_channels)};
}

}  // namespace

ConvKernel ConvKernel::zeros(std::size_t kernel_size, std::size_t in_channels,
                             std::size_t out_channels, std::size_t dilation) {
    ConvKernel k;
    k.kernel_size = kernel_size;
    k.in_channels = in_channels;
    k.out_channels = out_channels;
    k.dilation = dilation;
    k.weights.assign(kernel_size * in_channels * out_channels, 0.0);
    k.bias.assign(out_channels, 0.0);
    return k;
}

void ConvKernel::validate() const {
    if (kernel_size == 0 || kernel_size % 2 == 0) {
        throw ValidationError("kernel_size must be odd, got " + std::to_string(kernel_size));
    }
    if (dilation < 1) throw ValidationError("dilation must be >= 1");
    if (weights.size() != kernel_size * in_channels * out_channels || bias.size() != out_channels) {
        throw DimensionError("ConvKernel storage does not match its declared shape");
    }
}

Tensor2 conv1d_dilated(const Tensor2& input, const ConvKernel& kernel) {
    kernel.validate();
    if (input.cols() != kernel.in_channels) {
        throw DimensionError("conv1d: input has " + std::to_string(input.cols()) +
                             " channels, kernel expects " + std::to_string(kernel.in_channels));
    }
    Tensor2 out(input.rows(), kernel.out_channels);
    auto o = out.mat();
    o.rowwise() = Eigen::Map<const Eigen::RowVectorXd>(kernel.bias.data(), Eigen::Index(kernel.out_channels));
    const auto x = input.mat();
    for (std::size_t tap = 0; tap < kernel.kernel_size; ++tap) {
        const auto r = tap_range(tap_offset(kernel, tap), input.rows());
        if (r.count == 0) continue;
        o.middleRows(r.first, r.count).noalias() +=
            x.middleRows(r.first + r.offset, r.count) * tap_weights(kernel, tap);
    }
    return out;
}

Tensor2 conv1d_dilated_backward(const Tensor2& input, const ConvKernel& kernel,
                                const Tensor2& grad_output, ConvKernel& grad_kernel) {
    kernel.validate();
    if (input.cols() != kernel.in_channels || grad_output.cols() != kernel.out_channels ||
        grad_output.rows() != input.rows()) {
        throw DimensionError("conv1d_backward: input " + shape(input) + ", grad " +
                             shape(grad_output) + " inconsistent with kernel");
    }
    if (grad_kernel.weights.size() != kernel.weights.size() ||
        grad_kernel.bias.size() != kernel.bias.size()) {
        throw DimensionError("conv1d_backward: gradient buffer shape mismatch");
    }
    Tensor2 grad_input(input.rows(), input.cols());
    auto gx = grad_input.mat();
    const auto x = input.mat();
    const auto g = grad_output.mat();
    Eigen::Map<Eigen::RowVectorXd>(grad_kernel.bias.data(), Eigen::Index(kernel.out_channels)) +=
        g.colwise().sum();
    for (std::size_t tap = 0; tap < kernel.kernel_size; ++tap) {
        const auto r = tap_range(tap_offset(kernel, tap), input.rows());
        if (r.count == 0) continue;
        MatrixMap gw(grad_kernel.weights.data() + tap * kernel.in_channels * kernel.out_channels,
                     Eigen::Index(kernel.in_channels), Eigen::Index(kernel.out_channels));
        gw.noalias() += x.middleRows(r.first + r.offset, r.count).transpose() *
                        g.middleRows(r.first, r.count);
        gx.middleRows(r.first + r.offset, r.count).noalias() +=
            g.middleRows(r.first, r.count) * tap_weights(kernel, tap).transpose();
    }
    return grad_input;
}

Tensor2 relu(const Tensor2& input) {
    Tensor2 out = input;
    for (double& v : out.data()) v = std::max(v, 0.0);
    return out;
}

Tensor2 relu_backward(const Tensor2& input, const Tensor2& grad_output) {
    require_same_shape(input, grad_output, "relu_backward");
    Tensor2 out = grad_output;
    const auto& x = input.data();
    auto& g = out.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(x[i] > 0.0)) g[i] = 0.0;
    }
    return out;
}

ProbSequence softmax_rows(const Tensor2& logits) {
    ProbSequence out(logits.rows(), logits.cols());
    for (std::size_t t = 0; t < logits.rows(); ++t) {
        const auto in = logits.row(t);
        auto p = out.row(t);
        const double m = *std::max_element(in.begin(), in.end());
        double sum = 0.0;
        for (std::size_t c = 0; c < in.size(); ++c) {
            p[c] = std::exp(in[c] - m);
            sum += p[c];
        }
        for (double& v : p) v /= sum;
    }
    return out;
}

Tensor2 softmax_backward(const ProbSequence& probs, const Tensor2& grad_probs) {
    require_same_shape(probs, grad_probs, "softmax_backward");
    Tensor2 out(probs.rows(), probs.cols());
    for (std::size_t t = 0; t < probs.rows(); ++t) {
        const auto p = probs.row(t);
        const auto g = grad_probs.row(t);
        double dot = 0.0;
        for (std::size_t c = 0; c < p.size(); ++c) dot += p[c] * g[c];
        auto o = out.row(t);
        for (std::size_t c = 0; c < p.size(); ++c) o[c] = p[c] * (g[c] - dot);
    }
    return out;
}

void LossConfig::validate() const {
    if (!(lambda_tmse >= 0.0)) throw ValidationError("lambda_tmse must be >= 0");
    if (!(tau > 0.0)) throw ValidationError("tau must be > 0");
}

double cross_entropy_loss(const ProbSequence& probs, std::span<const int> labels) {
    require_labels(probs, labels);
    if (probs.rows() == 0) return 0.0;
    double sum = 0.0;
    for (std::size_t t = 0; t < probs.rows(); ++t) {
        sum -= std::log(std::max(probs(t, static_cast<std::size_t>(labels[t])), kProbFloor));
    }
    return sum / static_cast<double>(probs.rows());
}

Tensor2 cross_entropy_grad(const ProbSequence& probs, std::span<const int> labels) {
    require_labels(probs, labels);
    Tensor2 grad = probs;
    if (probs.rows() == 0) return grad;
    const double scale = 1.0 / static_cast<double>(probs.rows());
    for (std::size_t t = 0; t < probs.rows(); ++t) {
        grad(t, static_cast<std::size_t>(labels[t])) -= 1.0;
    }
    for (double& v : grad.data()) v *= scale;
    return grad;
}

double tmse_loss(const ProbSequence& probs, const LossConfig& config) {
    config.validate();
    const std::size_t T = probs.rows();
    const std::size_t J = probs.cols();
    if (T < 2 || J == 0) return 0.0;
    double sum = 0.0;
    for (std::size_t t = 1; t < T; ++t) {
        for (std::size_t c = 0; c < J; ++c) {
            const double d = std::abs(std::log(std::max(probs(t, c), kProbFloor)) -
                                      std::log(std::max(probs(t - 1, c), kProbFloor)));
            const double clipped = std::min(d, config.tau);
            sum += clipped * clipped;
        }
    }
    return sum / static_cast<double>((T - 1) * J);
}

Tensor2 tmse_grad(const ProbSequence& probs, const LossConfig& config) {
    config.validate();
    const std::size_t T = probs.rows();
    const std::size_t J = probs.cols();
    Tensor2 grad(T, J);
    if (T < 2 || J == 0) return grad;
    // First the gradient with respect to the log-probabilities.
    Tensor2 g_log(T, J);
    const double norm = 2.0 / static_cast<double>((T - 1) * J);
    for (std::size_t t = 1; t < T; ++t) {
        for (std::size_t c = 0; c < J; ++c) {
            const double d = std::log(std::max(probs(t, c), kProbFloor)) -
                              std::log(std::max(probs(t - 1, c), kProbFloor));
            if (std::abs(d) >= config.tau) continue;
            g_log(t, c) += norm * d;
            g_log(t - 1, c) -= norm * d;
        }
    }
    // d log p_c / d z_k = [c == k] - p_k
    for (std::size_t t = 0; t < T; ++t) {
        const auto gl = g_log.row(t);
        double total = 0.0;
        for (double v : gl) total += v;
        const auto p = probs.row(t);
        auto out = grad.row(t);
        for (std::size_t k = 0; k < J; ++k) out[k] = gl[k] - p[k] * total;
    }
    return grad;
}

void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, AdamState& state) {
    if (params.size() != grads.size()) {
        throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameter buffers but " +
                             std::to_string(grads.size()) + " gradient buffers");
    }
    if (state.step == 0 && state.first_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.size(), 0.0);
            state.second_moment.emplace_back(p.size(), 0.0);
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw DimensionError("adam_step: optimizer state tracks " +
                             std::to_string(state.first_moment.size()) + " buffers, got " +
                             std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].size() != grads[i].size() || state.first_moment[i].size() != params[i].size()) {
            throw DimensionError("adam_step: buffer " + std::to_string(i) + " shape mismatch");
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        const auto p = params[i];
        const auto g = grads[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            p[j] -= state.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + state.epsilon);
        }
    }
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
    const std::span<double> p[] = {params};
    const std::span<const double> g[] = {grads};
    adam_step(std::span<const std::span<double>>(p), std::span<const std::span<const double>>(g), state);
}

}  // namespace vjump
