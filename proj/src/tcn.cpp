#include "vjump/tcn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vjump/error.hpp"

namespace vjump {

namespace {

std::size_t stage_in_channels(const MsTcnConfig& config, std::size_t stage) {
    return stage == 0 ? config.stage.in_channels : config.stage.num_classes;
}

void init_kernel(ConvKernel& kernel, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(kernel.kernel_size * kernel.in_channels));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : kernel.weights) w = dist(rng);
    for (double& b : kernel.bias) b = dist(rng);
}

template <typename Fn>
void for_each_kernel(const StageWeights& s, Fn&& fn) {
    fn(s.input);
    for (std::size_t l = 0; l < s.dilated.size(); ++l) {
        fn(s.dilated[l]);
        fn(s.pointwise[l]);
    }
    fn(s.output);
}

template <typename Fn>
void for_each_kernel(StageWeights& s, Fn&& fn) {
    fn(s.input);
    for (std::size_t l = 0; l < s.dilated.size(); ++l) {
        fn(s.dilated[l]);
        fn(s.pointwise[l]);
    }
    fn(s.output);
}

void add_inplace(Tensor2& a, const Tensor2& b) {
    a.mat() += b.mat();
}

}  // namespace

void SsTcnConfig::validate() const {
    if (num_layers < 1) throw ValidationError("num_layers must be >= 1");
    if (num_layers > 30) throw ValidationError("num_layers must be <= 30");
    if (num_filters < 1) throw ValidationError("num_filters must be >= 1");
    if (kernel_size % 2 == 0) throw ValidationError("kernel_size must be odd");
    if (in_channels < 1) throw ValidationError("in_channels must be >= 1");
    if (num_classes < 1) throw ValidationError("num_classes must be >= 1");
}

std::size_t SsTcnConfig::receptive_field() const {
    std::size_t rf = 1;
    for (std::size_t l = 0; l < num_layers; ++l) rf += (kernel_size - 1) * (std::size_t{1} << l);
    return rf;
}

void MsTcnConfig::validate() const {
    if (num_stages < 1) throw ValidationError("num_stages must be >= 1");
    stage.validate();
    loss.validate();
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must be in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ValidationError("weight_decay must be >= 0");
}

std::size_t ModelWeights::parameter_count() const {
    std::size_t n = 0;
    for (const auto& s : stages) for_each_kernel(s, [&](const ConvKernel& k) { n += k.parameter_count(); });
    return n;
}

std::vector<std::span<double>> ModelWeights::parameter_buffers() {
    std::vector<std::span<double>> out;
    for (auto& s : stages) {
        for_each_kernel(s, [&](ConvKernel& k) {
            out.emplace_back(k.weights);
            out.emplace_back(k.bias);
        });
    }
    return out;
}

std::vector<std::span<const double>> ModelWeights::parameter_buffers() const {
    std::vector<std::span<const double>> out;
    for (const auto& s : stages) {
        for_each_kernel(s, [&](const ConvKernel& k) {
            out.emplace_back(k.weights);
            out.emplace_back(k.bias);
        });
    }
    return out;
}

std::size_t mstcn_parameter_count(const MsTcnConfig& config) {
    const std::size_t F = config.stage.num_filters;
    const std::size_t J = config.stage.num_classes;
    const std::size_t K = config.stage.kernel_size;
    const std::size_t L = config.stage.num_layers;
    std::size_t total = 0;
    for (std::size_t s = 0; s < config.num_stages; ++s) {
        const std::size_t din = stage_in_channels(config, s);
        total += din * F + F;                       // 1x1 in
        total += L * ((K * F * F + F) + (F * F + F));  // dilated + 1x1 per layer
        total += F * J + J;                         // 1x1 out
    }
    return total;
}

ModelWeights build_mstcn(const MsTcnConfig& config, std::uint64_t seed) {
    config.validate();
    ModelWeights w;
    w.config = config;
    w.config.seed = seed;
    const std::size_t F = config.stage.num_filters;
    const std::size_t J = config.stage.num_classes;
    for (std::size_t s = 0; s < config.num_stages; ++s) {
        StageWeights stage;
        stage.input = ConvKernel::zeros(1, stage_in_channels(config, s), F);
        for (std::size_t l = 0; l < config.stage.num_layers; ++l) {
            stage.dilated.push_back(ConvKernel::zeros(config.stage.kernel_size, F, F, std::size_t{1} << l));
            stage.pointwise.push_back(ConvKernel::zeros(1, F, F));
        }
        stage.output = ConvKernel::zeros(1, F, J);
        w.stages.push_back(std::move(stage));
    }
    std::mt19937_64 rng(seed);
    for (auto& s : w.stages) for_each_kernel(s, [&](ConvKernel& k) { init_kernel(k, rng); });
    w.input_mean.assign(config.stage.in_channels, 0.0);
    w.input_scale.assign(config.stage.in_channels, 1.0);
    return w;
}

ModelWeights zeros_like(const ModelWeights& weights) {
    ModelWeights z = weights;
    for (auto buf : z.parameter_buffers()) std::fill(buf.begin(), buf.end(), 0.0);
    return z;
}

Tensor2 sstcn_forward(const ModelWeights& weights, std::size_t stage_index, const Tensor2& input) {
    if (stage_index >= weights.stages.size()) {
        throw DimensionError("stage index " + std::to_string(stage_index) + " out of range");
    }
    const StageWeights& s = weights.stages[stage_index];
    Tensor2 h = conv1d_dilated(input, s.input);
    for (std::size_t l = 0; l < s.dilated.size(); ++l) {
        const Tensor2 r = relu(conv1d_dilated(h, s.dilated[l]));
        add_inplace(h, conv1d_dilated(r, s.pointwise[l]));
    }
    return conv1d_dilated(h, s.output);
}

std::vector<ProbSequence> mstcn_forward(const ModelWeights& weights, const Tensor2& input) {
    std::vector<ProbSequence> out;
    out.reserve(weights.stages.size());
    for (std::size_t s = 0; s < weights.stages.size(); ++s) {
        out.push_back(softmax_rows(sstcn_forward(weights, s, s == 0 ? input : out.back())));
    }
    return out;
}

const std::vector<Tensor2>& MsTcnGraph::forward(const Tensor2& input, std::mt19937_64* rng) {
    const ModelWeights& w = *weights_;
    const double dropout = rng ? w.config.dropout : 0.0;
    traces_.clear();
    logits_.clear();
    probs_.clear();
    for (std::size_t s = 0; s < w.stages.size(); ++s) {
        const StageWeights& sw = w.stages[s];
        StageTrace tr;
        tr.input = s == 0 ? input : probs_.back();
        Tensor2 h = conv1d_dilated(tr.input, sw.input);
        for (std::size_t l = 0; l < sw.dilated.size(); ++l) {
            LayerTrace lt;
            lt.pre_activation = conv1d_dilated(h, sw.dilated[l]);
            lt.activation = relu(lt.pre_activation);
            Tensor2 branch = conv1d_dilated(lt.activation, sw.pointwise[l]);
            if (dropout > 0.0) {
                std::bernoulli_distribution keep(1.0 - dropout);
                lt.keep.resize(branch.size());
                for (std::size_t i = 0; i < branch.size(); ++i) {
                    lt.keep[i] = keep(*rng) ? 1.0 / (1.0 - dropout) : 0.0;
                    branch.data()[i] *= lt.keep[i];
                }
            }
            tr.hidden.push_back(h);
            add_inplace(h, branch);
            tr.layers.push_back(std::move(lt));
        }
        tr.hidden.push_back(h);
        logits_.push_back(conv1d_dilated(h, sw.output));
        probs_.push_back(softmax_rows(logits_.back()));
        traces_.push_back(std::move(tr));
    }
    return logits_;
}

ModelWeights MsTcnGraph::backward(std::span<const Tensor2> grad_logits) const {
    if (traces_.empty()) throw StateError("MsTcnGraph::backward called before forward");
    const ModelWeights& w = *weights_;
    if (grad_logits.size() != w.stages.size()) {
        throw DimensionError("backward: expected " + std::to_string(w.stages.size()) +
                             " stage gradients, got " + std::to_string(grad_logits.size()));
    }
    ModelWeights grads = zeros_like(w);
    Tensor2 carry;  // dL/dlogits contributed by the following stage
    for (std::size_t si = w.stages.size(); si-- > 0;) {
        const StageWeights& sw = w.stages[si];
        StageWeights& gw = grads.stages[si];
        const StageTrace& tr = traces_[si];
        Tensor2 g_logits = grad_logits[si];
        if (g_logits.rows() != logits_[si].rows() || g_logits.cols() != logits_[si].cols()) {
            throw DimensionError("backward: stage gradient shape mismatch");
        }
        if (!carry.empty()) add_inplace(g_logits, carry);

        Tensor2 gh = conv1d_dilated_backward(tr.hidden.back(), sw.output, g_logits, gw.output);
        for (std::size_t l = sw.dilated.size(); l-- > 0;) {
            const LayerTrace& lt = tr.layers[l];
            Tensor2 g_branch = gh;
            if (!lt.keep.empty()) {
                for (std::size_t i = 0; i < g_branch.size(); ++i) g_branch.data()[i] *= lt.keep[i];
            }
            const Tensor2 g_act = conv1d_dilated_backward(lt.activation, sw.pointwise[l], g_branch, gw.pointwise[l]);
            const Tensor2 g_pre = relu_backward(lt.pre_activation, g_act);
            add_inplace(gh, conv1d_dilated_backward(tr.hidden[l], sw.dilated[l], g_pre, gw.dilated[l]));
        }
        const Tensor2 g_input = conv1d_dilated_backward(tr.input, sw.input, gh, gw.input);
        if (si > 0) carry = softmax_backward(probs_[si - 1], g_input);
    }
    return grads;
}

LossAndGradients mstcn_loss_and_gradients(const ModelWeights& weights, const Tensor2& input,
                                          std::span<const int> labels, std::mt19937_64* dropout_rng) {
    MsTcnGraph graph(weights);
    graph.forward(input, dropout_rng);
    const auto& probs = graph.probabilities();
    const LossConfig& lc = weights.config.loss;
    LossAndGradients out;
    std::vector<Tensor2> g;
    g.reserve(probs.size());
    for (const auto& p : probs) {
        out.loss += cross_entropy_loss(p, labels) + lc.lambda_tmse * tmse_loss(p, lc);
        Tensor2 gs = cross_entropy_grad(p, labels);
        if (lc.lambda_tmse > 0.0) gs.mat() += lc.lambda_tmse * tmse_grad(p, lc).mat();
        g.push_back(std::move(gs));
    }
    out.gradients = graph.backward(g);
    return out;
}

Tensor2 normalize_input(const ModelWeights& weights, const Tensor2& samples) {
    if (samples.cols() != weights.config.stage.in_channels) {
        throw DimensionError("input has " + std::to_string(samples.cols()) + " channels, model expects " +
                             std::to_string(weights.config.stage.in_channels));
    }
    Tensor2 out = samples;
    if (weights.input_mean.size() != samples.cols() || weights.input_scale.size() != samples.cols()) {
        return out;
    }
    for (std::size_t t = 0; t < out.rows(); ++t) {
        auto r = out.row(t);
        for (std::size_t c = 0; c < r.size(); ++c) r[c] = (r[c] - weights.input_mean[c]) / weights.input_scale[c];
    }
    return out;
}

TrainResult train(const MsTcnConfig& config, std::span<const ImuSession> sessions) {
    config.validate();
    if (sessions.empty()) throw ValidationError("train: no sessions given");
    for (const auto& s : sessions) {
        s.validate();
        if (!s.labels) throw ValidationError("train: session '" + s.subject_id + "' has no labels");
        if (s.samples.cols() != config.stage.in_channels) {
            throw DimensionError("train: session '" + s.subject_id + "' has " +
                                 std::to_string(s.samples.cols()) + " channels, config expects " +
                                 std::to_string(config.stage.in_channels));
        }
        for (int y : *s.labels) {
            if (y < 0 || static_cast<std::size_t>(y) >= config.stage.num_classes) {
                throw ValidationError("train: label " + std::to_string(y) + " outside class range");
            }
        }
    }

    TrainResult result{build_mstcn(config, config.seed), {}};
    ModelWeights& w = result.weights;
    if (config.normalize_input) {
        const std::size_t C = config.stage.in_channels;
        std::vector<double> sum(C, 0.0), sq(C, 0.0);
        double n = 0.0;
        for (const auto& s : sessions) {
            for (std::size_t t = 0; t < s.length(); ++t) {
                for (std::size_t c = 0; c < C; ++c) {
                    sum[c] += s.samples(t, c);
                    sq[c] += s.samples(t, c) * s.samples(t, c);
                }
            }
            n += static_cast<double>(s.length());
        }
        for (std::size_t c = 0; c < C; ++c) {
            const double mean = sum[c] / n;
            const double var = std::max(sq[c] / n - mean * mean, 0.0);
            w.input_mean[c] = mean;
            w.input_scale[c] = var > 1e-12 ? std::sqrt(var) : 1.0;
        }
    }

    std::vector<Tensor2> inputs;
    inputs.reserve(sessions.size());
    for (const auto& s : sessions) inputs.push_back(normalize_input(w, s.samples));

    AdamState adam;
    adam.lr = config.learning_rate;
    std::mt19937_64 dropout_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::mt19937_64* rng = config.dropout > 0.0 ? &dropout_rng : nullptr;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (std::size_t i = 0; i < sessions.size(); ++i) {
            LossAndGradients lg = mstcn_loss_and_gradients(w, inputs[i], *sessions[i].labels, rng);
            epoch_loss += lg.loss;
            auto params = w.parameter_buffers();
            auto grads = lg.gradients.parameter_buffers();
            if (config.weight_decay > 0.0) {
                for (std::size_t b = 0; b < params.size(); ++b) {
                    for (std::size_t j = 0; j < params[b].size(); ++j) grads[b][j] += config.weight_decay * params[b][j];
                }
            }
            std::vector<std::span<const double>> cgrads(grads.begin(), grads.end());
            adam_step(params, cgrads, adam);
        }
        result.loss_history.push_back(epoch_loss / static_cast<double>(sessions.size()));
    }
    return result;
}

LabelSequence argmax_rows(const Tensor2& scores) {
    LabelSequence labels(scores.rows(), 0);
    for (std::size_t t = 0; t < scores.rows(); ++t) {
        const auto r = scores.row(t);
        labels[t] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
    }
    return labels;
}

Prediction predict(const ModelWeights& weights, const ImuSession& session) {
    if (session.samples.cols() != weights.config.stage.in_channels) {
        throw DimensionError("channel mismatch: session has " + std::to_string(session.samples.cols()) +
                             " channels, model expects " + std::to_string(weights.config.stage.in_channels));
    }
    if (session.samples.rows() == 0) throw ValidationError("predict: empty session");
    auto probs = mstcn_forward(weights, normalize_input(weights, session.samples));
    Prediction p;
    p.probs = std::move(probs.back());
    p.labels = argmax_rows(p.probs);
    return p;
}

}  // namespace vjump
