#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "vjump/features.hpp"
#include "vjump/tensor.hpp"

namespace vjump {

// ---------------------------------------------------------------------------
// CART regression tree
// ---------------------------------------------------------------------------

struct TreeConfig {
    std::size_t max_depth = 10;
    std::size_t max_leaf_nodes = 0;      // 0 = unlimited
    double min_gain = 0.0;               // squared-error reduction a split must exceed
    std::size_t features_per_split = 0;  // 0 = all features
};

class RegressionTree {
public:
    struct Node {
        int feature = -1;  // -1 for leaves
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        double value = 0.0;
        std::size_t samples = 0;
        std::size_t depth = 0;
    };

    RegressionTree() = default;
    explicit RegressionTree(std::vector<Node> nodes) : nodes_(std::move(nodes)) {}

    /// Goes left when x[feature] <= threshold.
    double predict(std::span<const double> x) const;
    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    std::size_t leaf_count() const;
    std::size_t depth() const;

    friend bool operator==(const RegressionTree&, const RegressionTree&) = default;

private:
    std::vector<Node> nodes_;
};

/// Best-first greedy CART on squared error. Split candidates are midpoints between consecutive
/// distinct feature values; ties keep the lowest feature index, then the lowest threshold.
/// `rows` selects (with repetition) the training rows; empty means all rows.
RegressionTree fit_tree(const Tensor2& X, std::span<const double> y, const TreeConfig& config,
                        std::mt19937_64* rng = nullptr, std::span<const std::size_t> rows = {});

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

struct RfConfig {
    std::size_t n_estimators = 50;
    std::size_t max_depth = 10;
    std::size_t max_leaf_nodes = 15;
    bool bootstrap = true;
    std::size_t features_per_split = 0;  // 0 = ceil(p / 3)
    std::uint64_t seed = 0;

    void validate() const;
};

struct GbtConfig {
    double eta = 0.1;
    std::size_t n_estimators = 100;
    std::size_t max_depth = 6;
    double gamma = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct MlpRegConfig {
    std::vector<std::size_t> hidden_layers = {100};
    std::size_t max_iter = 8000;
    double learning_rate = 1e-3;
    // Stop once the loss has not improved by more than tol for n_iter_no_change steps.
    double tol = 1e-7;
    std::size_t n_iter_no_change = 20;
    std::uint64_t seed = 0;

    void validate() const;
};

/// One hidden ReLU layer with a linear output on standardized inputs.
struct MlpNetwork {
    std::size_t inputs = 0;
    std::size_t hidden = 0;
    AlignedVector w1;  // inputs x hidden, row-major
    AlignedVector b1;  // hidden
    AlignedVector w2;  // hidden
    double b2 = 0.0;

    static MlpNetwork initialize(std::size_t inputs, std::size_t hidden, std::uint64_t seed);
    std::vector<double> forward(const Tensor2& X) const;

    struct Gradients {
        AlignedVector w1, b1, w2;
        double b2 = 0.0;
    };
    /// Loss = sum((f(x) - y)^2) / (2n), with exact gradients.
    double loss_and_gradients(const Tensor2& X, std::span<const double> y, Gradients& grads) const;
};

struct ForestModel {
    RfConfig config;
    std::vector<RegressionTree> trees;
};

struct BoostedModel {
    GbtConfig config;
    double base_score = 0.0;
    std::vector<RegressionTree> trees;
    std::vector<double> train_mse_history;  // after 0, 1, ..., n_estimators stages
};

struct MlpModel {
    MlpRegConfig config;
    MlpNetwork net;
    std::vector<double> x_mean;
    std::vector<double> x_scale;
    double y_mean = 0.0;
    double y_scale = 1.0;
    std::size_t iterations = 0;
};

struct TrainedRegressor {
    std::string catalog_version;  // empty when fit on raw matrices
    std::size_t input_dim = 0;
    std::variant<ForestModel, BoostedModel, MlpModel> model;

    std::string_view kind() const;
};

using RegressorSpec = std::variant<RfConfig, GbtConfig, MlpRegConfig>;

TrainedRegressor fit_rf(const Tensor2& X, std::span<const double> y, const RfConfig& config);
TrainedRegressor fit_gbt(const Tensor2& X, std::span<const double> y, const GbtConfig& config);
TrainedRegressor fit_mlp_regressor(const Tensor2& X, std::span<const double> y, const MlpRegConfig& config);
TrainedRegressor fit_regressor(const Tensor2& X, std::span<const double> y, const RegressorSpec& spec,
                               std::string catalog_version = {});

/// Throws DimensionError when x.size() != input_dim.
double predict(const TrainedRegressor& model, std::span<const double> x);
/// Also rejects a feature vector from another catalog version.
double predict(const TrainedRegressor& model, const FeatureVector& x);
std::vector<double> predict_rows(const TrainedRegressor& model, const Tensor2& X);

struct FeatureImportance {
    std::size_t feature = 0;
    double importance = 0.0;
};

/// Drop in R^2 after shuffling each column, averaged over `repeats`, sorted descending
/// (ties by feature index).
std::vector<FeatureImportance> permutation_importance(const TrainedRegressor& model, const Tensor2& X,
                                                      std::span<const double> y, std::size_t repeats = 10,
                                                      std::uint64_t seed = 0);

}  // namespace vjump
