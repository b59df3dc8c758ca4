#include "vjump/regression.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "vjump/error.hpp"
#include "vjump/metrics.hpp"
#include "vjump/nn.hpp"

namespace vjump {

namespace {

void require_data(const Tensor2& X, std::span<const double> y) {
    if (X.rows() == 0) throw ValidationError("cannot fit on empty data");
    if (X.cols() == 0) throw ValidationError("cannot fit without features");
    if (X.rows() != y.size()) {
        throw DimensionError("X has " + std::to_string(X.rows()) + " rows but y has " + std::to_string(y.size()));
    }
    if (!X.all_finite()) throw ValidationError("X contains non-finite values");
    for (double v : y) {
        if (!std::isfinite(v)) throw ValidationError("y contains non-finite values");
    }
}

struct Split {
    bool valid = false;
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

// Mean that is exact when every value is identical.
double leaf_mean(std::span<const double> y, const std::vector<std::size_t>& idx) {
    const double anchor = y[idx.front()];
    double s = 0.0;
    for (std::size_t i : idx) s += y[i] - anchor;
    return anchor + s / static_cast<double>(idx.size());
}

bool is_pure(std::span<const double> y, const std::vector<std::size_t>& idx) {
    return std::all_of(idx.begin(), idx.end(), [&](std::size_t i) { return y[i] == y[idx.front()]; });
}

std::vector<std::size_t> choose_features(std::size_t p, std::size_t k, std::mt19937_64* rng) {
    std::vector<std::size_t> all(p);
    std::iota(all.begin(), all.end(), 0);
    if (k == 0 || k >= p || rng == nullptr) return all;
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, p - 1);
        std::swap(all[i], all[pick(*rng)]);
    }
    all.resize(k);
    std::sort(all.begin(), all.end());
    return all;
}

Split best_split(const Tensor2& X, std::span<const double> y, const std::vector<std::size_t>& idx,
                 const std::vector<std::size_t>& features) {
    Split best;
    const std::size_t n = idx.size();
    if (n < 2) return best;
    std::vector<std::pair<double, double>> xy(n);
    for (std::size_t f : features) {
        for (std::size_t i = 0; i < n; ++i) xy[i] = {X(idx[i], f), y[idx[i]]};
        std::sort(xy.begin(), xy.end());
        double total = 0.0;
        for (const auto& [x, v] : xy) total += v;
        double left = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            left += xy[i].second;
            if (!(xy[i].first < xy[i + 1].first)) continue;
            const double nl = static_cast<double>(i + 1);
            const double nr = static_cast<double>(n - i - 1);
            const double diff = left / nl - (total - left) / nr;
            // SSE(parent) - SSE(left) - SSE(right)
            const double gain = nl * nr / static_cast<double>(n) * diff * diff;
            if (!best.valid || gain > best.gain) {
                double thr = 0.5 * (xy[i].first + xy[i + 1].first);
                if (!(thr < xy[i + 1].first)) thr = xy[i].first;
                best = {true, static_cast<int>(f), thr, gain};
            }
        }
    }
    return best;
}

}  // namespace

double RegressionTree::predict(std::span<const double> x) const {
    if (nodes_.empty()) throw StateError("predict on an empty tree");
    std::size_t i = 0;
    while (nodes_[i].feature >= 0) {
        const auto& n = nodes_[i];
        i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes_[i].value;
}

std::size_t RegressionTree::leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.feature < 0; }));
}

std::size_t RegressionTree::depth() const {
    std::size_t d = 0;
    for (const auto& n : nodes_) d = std::max(d, n.depth);
    return d;
}

RegressionTree fit_tree(const Tensor2& X, std::span<const double> y, const TreeConfig& config,
                        std::mt19937_64* rng, std::span<const std::size_t> rows) {
    require_data(X, y);
    std::vector<std::size_t> root_idx;
    if (rows.empty()) {
        root_idx.resize(X.rows());
        std::iota(root_idx.begin(), root_idx.end(), 0);
    } else {
        root_idx.assign(rows.begin(), rows.end());
        for (std::size_t r : root_idx) {
            if (r >= X.rows()) throw DimensionError("fit_tree: row index out of range");
        }
    }

    struct Pending {
        std::vector<std::size_t> idx;
        Split split;
    };
    std::vector<RegressionTree::Node> nodes;
    std::vector<Pending> pending;  // parallel to nodes; only leaves keep their rows

    auto make_leaf = [&](std::vector<std::size_t> idx, std::size_t depth) {
        RegressionTree::Node node;
        node.value = leaf_mean(y, idx);
        node.samples = idx.size();
        node.depth = depth;
        Split split;
        if (depth < config.max_depth && idx.size() >= 2 && !is_pure(y, idx)) {
            split = best_split(X, y, idx, choose_features(X.cols(), config.features_per_split, rng));
            if (split.valid && !(split.gain > config.min_gain)) split.valid = false;
        }
        nodes.push_back(node);
        pending.push_back({std::move(idx), split});
    };

    make_leaf(std::move(root_idx), 0);
    std::size_t leaves = 1;
    while (config.max_leaf_nodes == 0 || leaves < config.max_leaf_nodes) {
        std::size_t best = nodes.size();
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            if (nodes[i].feature >= 0 || !pending[i].split.valid) continue;
            if (best == nodes.size() || pending[i].split.gain > pending[best].split.gain) best = i;
        }
        if (best == nodes.size()) break;
        const Split split = pending[best].split;
        std::vector<std::size_t> left, right;
        for (std::size_t r : pending[best].idx) {
            (X(r, static_cast<std::size_t>(split.feature)) <= split.threshold ? left : right).push_back(r);
        }
        pending[best].idx.clear();
        pending[best].idx.shrink_to_fit();
        const std::size_t depth = nodes[best].depth + 1;
        nodes[best].feature = split.feature;
        nodes[best].threshold = split.threshold;
        nodes[best].left = static_cast<int>(nodes.size());
        make_leaf(std::move(left), depth);
        nodes[best].right = static_cast<int>(nodes.size());
        make_leaf(std::move(right), depth);
        ++leaves;
    }
    return RegressionTree(std::move(nodes));
}

void RfConfig::validate() const {
    if (n_estimators < 1) throw ValidationError("n_estimators must be >= 1");
    if (max_depth < 1) throw ValidationError("max_depth must be >= 1");
    if (max_leaf_nodes == 1) throw ValidationError("max_leaf_nodes must be 0 (unlimited) or >= 2");
}

void GbtConfig::validate() const {
    if (!(eta > 0.0 && eta <= 1.0)) throw ValidationError("eta must be in (0, 1]");
    if (!(gamma >= 0.0)) throw ValidationError("gamma must be >= 0");
    if (max_depth < 1) throw ValidationError("max_depth must be >= 1");
}

void MlpRegConfig::validate() const {
    if (max_iter < 1) throw ValidationError("max_iter must be >= 1");
    if (hidden_layers.size() != 1 || hidden_layers[0] < 1) {
        throw ValidationError("the MLP regressor supports exactly one hidden layer");
    }
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
}

std::string_view TrainedRegressor::kind() const {
    switch (model.index()) {
        case 0: return "rf";
        case 1: return "gbt";
        default: return "mlp";
    }
}

TrainedRegressor fit_rf(const Tensor2& X, std::span<const double> y, const RfConfig& config) {
    config.validate();
    require_data(X, y);
    ForestModel forest;
    forest.config = config;
    const std::size_t p = X.cols();
    TreeConfig tc;
    tc.max_depth = config.max_depth;
    tc.max_leaf_nodes = config.max_leaf_nodes;
    tc.features_per_split = config.features_per_split == 0 ? (p + 2) / 3 : config.features_per_split;

    std::mt19937_64 master(config.seed);
    std::vector<std::uint64_t> tree_seeds(config.n_estimators);
    for (auto& s : tree_seeds) s = master();
    for (std::size_t t = 0; t < config.n_estimators; ++t) {
        std::mt19937_64 rng(tree_seeds[t]);
        std::vector<std::size_t> rows(X.rows());
        if (config.bootstrap) {
            std::uniform_int_distribution<std::size_t> pick(0, X.rows() - 1);
            for (auto& r : rows) r = pick(rng);
        } else {
            std::iota(rows.begin(), rows.end(), 0);
        }
        forest.trees.push_back(fit_tree(X, y, tc, &rng, rows));
    }
    return {{}, p, std::move(forest)};
}

TrainedRegressor fit_gbt(const Tensor2& X, std::span<const double> y, const GbtConfig& config) {
    config.validate();
    require_data(X, y);
    BoostedModel boost;
    boost.config = config;
    const std::size_t n = X.rows();
    boost.base_score = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    std::vector<double> f(n, boost.base_score), residual(n);
    auto mse = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += (y[i] - f[i]) * (y[i] - f[i]);
        return s / static_cast<double>(n);
    };
    boost.train_mse_history.push_back(mse());
    TreeConfig tc;
    tc.max_depth = config.max_depth;
    tc.min_gain = config.gamma;
    for (std::size_t m = 0; m < config.n_estimators; ++m) {
        for (std::size_t i = 0; i < n; ++i) residual[i] = y[i] - f[i];
        RegressionTree tree = fit_tree(X, residual, tc);
        for (std::size_t i = 0; i < n; ++i) f[i] += config.eta * tree.predict(X.row(i));
        boost.trees.push_back(std::move(tree));
        boost.train_mse_history.push_back(mse());
    }
    return {{}, X.cols(), std::move(boost)};
}

MlpNetwork MlpNetwork::initialize(std::size_t inputs, std::size_t hidden, std::uint64_t seed) {
    MlpNetwork net;
    net.inputs = inputs;
    net.hidden = hidden;
    std::mt19937_64 rng(seed);
    const double b1 = std::sqrt(6.0 / static_cast<double>(inputs + hidden));
    const double b2 = std::sqrt(6.0 / static_cast<double>(hidden + 1));
    std::uniform_real_distribution<double> u1(-b1, b1), u2(-b2, b2);
    net.w1.resize(inputs * hidden);
    net.b1.resize(hidden);
    net.w2.resize(hidden);
    for (double& w : net.w1) w = u1(rng);
    for (double& w : net.b1) w = u1(rng);
    for (double& w : net.w2) w = u2(rng);
    net.b2 = u2(rng);
    return net;
}

std::vector<double> MlpNetwork::forward(const Tensor2& X) const {
    if (X.cols() != inputs) throw DimensionError("MLP expects " + std::to_string(inputs) + " inputs");
    const ConstMatrixMap W1(w1.data(), Eigen::Index(inputs), Eigen::Index(hidden));
    RowMatrix Z = X.mat() * W1;
    Z.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b1.data(), Eigen::Index(hidden));
    const Eigen::VectorXd out =
        Z.cwiseMax(0.0) * Eigen::Map<const Eigen::VectorXd>(w2.data(), Eigen::Index(hidden));
    std::vector<double> y(out.size());
    for (Eigen::Index i = 0; i < out.size(); ++i) y[std::size_t(i)] = out[i] + b2;
    return y;
}

double MlpNetwork::loss_and_gradients(const Tensor2& X, std::span<const double> y, Gradients& g) const {
    if (X.cols() != inputs || X.rows() != y.size()) throw DimensionError("MLP loss: shape mismatch");
    const auto n = static_cast<double>(X.rows());
    const ConstMatrixMap W1(w1.data(), Eigen::Index(inputs), Eigen::Index(hidden));
    const Eigen::Map<const Eigen::VectorXd> W2(w2.data(), Eigen::Index(hidden));
    RowMatrix Z = X.mat() * W1;
    Z.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b1.data(), Eigen::Index(hidden));
    const RowMatrix A = Z.cwiseMax(0.0);
    Eigen::VectorXd r = A * W2;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) {
        r[i] += b2 - y[std::size_t(i)];
        loss += r[i] * r[i];
    }
    loss /= 2.0 * n;
    const Eigen::VectorXd dout = r / n;
    g.w2.resize(hidden);
    g.b1.resize(hidden);
    g.w1.resize(inputs * hidden);
    Eigen::Map<Eigen::VectorXd>(g.w2.data(), Eigen::Index(hidden)) = A.transpose() * dout;
    g.b2 = dout.sum();
    RowMatrix dZ = dout * W2.transpose();
    dZ = dZ.cwiseProduct((Z.array() > 0.0).cast<double>().matrix());
    MatrixMap(g.w1.data(), Eigen::Index(inputs), Eigen::Index(hidden)).noalias() = X.mat().transpose() * dZ;
    Eigen::Map<Eigen::RowVectorXd>(g.b1.data(), Eigen::Index(hidden)) = dZ.colwise().sum();
    return loss;
}

TrainedRegressor fit_mlp_regressor(const Tensor2& X, std::span<const double> y, const MlpRegConfig& config) {
    config.validate();
    require_data(X, y);
    const std::size_t n = X.rows(), p = X.cols();
    MlpModel model;
    model.config = config;
    model.x_mean.assign(p, 0.0);
    model.x_scale.assign(p, 1.0);
    for (std::size_t j = 0; j < p; ++j) {
        double s = 0.0, ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += X(i, j);
        const double mu = s / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) ss += (X(i, j) - mu) * (X(i, j) - mu);
        const double sd = std::sqrt(ss / static_cast<double>(n));
        model.x_mean[j] = mu;
        model.x_scale[j] = sd > 1e-12 ? sd : 1.0;
    }
    {
        const double mu = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
        double ss = 0.0;
        for (double v : y) ss += (v - mu) * (v - mu);
        const double sd = std::sqrt(ss / static_cast<double>(n));
        model.y_mean = mu;
        model.y_scale = sd > 1e-12 ? sd : 1.0;
    }
    Tensor2 Xs(n, p);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) Xs(i, j) = (X(i, j) - model.x_mean[j]) / model.x_scale[j];
    std::vector<double> ys(n);
    for (std::size_t i = 0; i < n; ++i) ys[i] = (y[i] - model.y_mean) / model.y_scale;

    model.net = MlpNetwork::initialize(p, config.hidden_layers[0], config.seed);
    AdamState adam;
    adam.lr = config.learning_rate;
    MlpNetwork::Gradients g;
    double best = std::numeric_limits<double>::infinity();
    std::size_t stale = 0;
    for (std::size_t it = 0; it < config.max_iter; ++it) {
        const double loss = model.net.loss_and_gradients(Xs, ys, g);
        ++model.iterations;
        const std::span<double> params[] = {model.net.w1, model.net.b1, model.net.w2, {&model.net.b2, 1}};
        const std::span<const double> grads[] = {g.w1, g.b1, g.w2, {&g.b2, 1}};
        adam_step(std::span<const std::span<double>>(params), std::span<const std::span<const double>>(grads), adam);
        if (loss > best - config.tol) {
            if (++stale >= config.n_iter_no_change) break;
        } else {
            stale = 0;
        }
        best = std::min(best, loss);
    }
    return {{}, p, std::move(model)};
}

TrainedRegressor fit_regressor(const Tensor2& X, std::span<const double> y, const RegressorSpec& spec,
                               std::string catalog_version) {
    TrainedRegressor model = std::visit(
        [&](const auto& cfg) -> TrainedRegressor {
            using T = std::decay_t<decltype(cfg)>;
            if constexpr (std::is_same_v<T, RfConfig>) return fit_rf(X, y, cfg);
            else if constexpr (std::is_same_v<T, GbtConfig>) return fit_gbt(X, y, cfg);
            else return fit_mlp_regressor(X, y, cfg);
        },
        spec);
    model.catalog_version = std::move(catalog_version);
    return model;
}

double predict(const TrainedRegressor& model, std::span<const double> x) {
    if (x.size() != model.input_dim) {
        throw DimensionError("regressor expects " + std::to_string(model.input_dim) + " features, got " +
                             std::to_string(x.size()));
    }
    return std::visit(
        [&](const auto& m) -> double {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, ForestModel>) {
                double s = 0.0;
                for (const auto& t : m.trees) s += t.predict(x);
                return s / static_cast<double>(m.trees.size());
            } else if constexpr (std::is_same_v<T, BoostedModel>) {
                double s = m.base_score;
                for (const auto& t : m.trees) s += m.config.eta * t.predict(x);
                return s;
            } else {
                Tensor2 row(1, x.size());
                for (std::size_t j = 0; j < x.size(); ++j) row(0, j) = (x[j] - m.x_mean[j]) / m.x_scale[j];
                return m.net.forward(row)[0] * m.y_scale + m.y_mean;
            }
        },
        model.model);
}

double predict(const TrainedRegressor& model, const FeatureVector& x) {
    if (x.catalog_version != model.catalog_version) {
        throw ValidationError("feature catalog version '" + x.catalog_version + "' does not match model's '" +
                              model.catalog_version + "'");
    }
    return predict(model, std::span<const double>(x.values));
}

std::vector<double> predict_rows(const TrainedRegressor& model, const Tensor2& X) {
    std::vector<double> out;
    out.reserve(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) out.push_back(predict(model, X.row(i)));
    return out;
}

std::vector<FeatureImportance> permutation_importance(const TrainedRegressor& model, const Tensor2& X,
                                                      std::span<const double> y, std::size_t repeats,
                                                      std::uint64_t seed) {
    if (X.rows() != y.size()) throw DimensionError("permutation_importance: X/y length mismatch");
    if (repeats < 1) throw ValidationError("permutation_importance: repeats must be >= 1");
    const double baseline = r_squared(y, predict_rows(model, X));
    std::mt19937_64 rng(seed);
    std::vector<FeatureImportance> out;
    Tensor2 shuffled = X;
    std::vector<double> column(X.rows());
    for (std::size_t j = 0; j < X.cols(); ++j) {
        double total = 0.0;
        for (std::size_t r = 0; r < repeats; ++r) {
            for (std::size_t i = 0; i < X.rows(); ++i) column[i] = X(i, j);
            std::shuffle(column.begin(), column.end(), rng);
            for (std::size_t i = 0; i < X.rows(); ++i) shuffled(i, j) = column[i];
            total += r_squared(y, predict_rows(model, shuffled));
        }
        for (std::size_t i = 0; i < X.rows(); ++i) shuffled(i, j) = X(i, j);
        out.push_back({j, baseline - total / static_cast<double>(repeats)});
    }
    std::stable_sort(out.begin(), out.end(), [](const FeatureImportance& a, const FeatureImportance& b) {
        return a.importance > b.importance;
    });
    return out;
}

}  // namespace vjump
