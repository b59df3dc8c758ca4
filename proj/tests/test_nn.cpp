#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "vjump/error.hpp"
#include "vjump/nn.hpp"

using namespace vjump;

namespace {

Tensor2 random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Tensor2 t(rows, cols);
    for (double& v : t.data()) v = n(rng);
    return t;
}

ConvKernel random_kernel(std::size_t k, std::size_t in, std::size_t out, std::size_t dilation,
                         std::mt19937_64& rng) {
    ConvKernel kernel = ConvKernel::zeros(k, in, out, dilation);
    std::normal_distribution<double> n(0.0, 0.5);
    for (double& w : kernel.weights) w = n(rng);
    for (double& b : kernel.bias) b = n(rng);
    return kernel;
}

}  // namespace

TEST_CASE("conv1d: identity kernel and zero input") {
    std::mt19937_64 rng(1);
    const Tensor2 x = random_tensor(7, 3, rng);
    ConvKernel id = ConvKernel::zeros(1, 3, 3);
    for (std::size_t c = 0; c < 3; ++c) id.weight(0, c, c) = 1.0;
    CHECK(conv1d_dilated(x, id) == x);

    ConvKernel k = random_kernel(3, 3, 2, 2, rng);
    k.bias = {0.25, -1.5};
    const Tensor2 y = conv1d_dilated(Tensor2(5, 3), k);
    for (std::size_t t = 0; t < 5; ++t) {
        CHECK(y(t, 0) == 0.25);
        CHECK(y(t, 1) == -1.5);
    }
}

TEST_CASE("conv1d: dilated hand example matches the naive loop") {
    const std::vector<double> x = {1, 2, 3, 4, 5};
    ConvKernel k = ConvKernel::zeros(3, 1, 1, 2);
    k.weights = {1, 1, 1};
    const Tensor2 y = conv1d_dilated(Tensor2(5, 1, x), k);
    const auto expected = oracle::naive_conv1d(x, {1, 1, 1}, 2);
    // taps at t-2, t, t+2 with zero padding
    CHECK(expected == std::vector<double>{4, 6, 9, 6, 8});
    CHECK(y.data() == AlignedVector(expected.begin(), expected.end()));
}

TEST_CASE("conv1d: multichannel output matches naive per-channel sums") {
    std::mt19937_64 rng(2);
    const Tensor2 x = random_tensor(20, 3, rng);
    const ConvKernel k = random_kernel(5, 3, 2, 3, rng);
    const Tensor2 y = conv1d_dilated(x, k);
    for (std::size_t o = 0; o < 2; ++o) {
        std::vector<double> acc(20, k.bias[o]);
        for (std::size_t i = 0; i < 3; ++i) {
            std::vector<double> xi(20), wi(5);
            for (std::size_t t = 0; t < 20; ++t) xi[t] = x(t, i);
            for (std::size_t tap = 0; tap < 5; ++tap) wi[tap] = k.weight(tap, i, o);
            const auto part = oracle::naive_conv1d(xi, wi, 3);
            for (std::size_t t = 0; t < 20; ++t) acc[t] += part[t];
        }
        for (std::size_t t = 0; t < 20; ++t) CHECK(y(t, o) == doctest::Approx(acc[t]).epsilon(1e-12));
    }
}

TEST_CASE("conv1d: linearity in the input") {
    std::mt19937_64 rng(3);
    ConvKernel k = random_kernel(3, 4, 5, 4, rng);
    k.bias.assign(5, 0.0);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor2 a = random_tensor(33, 4, rng);
        const Tensor2 b = random_tensor(33, 4, rng);
        const double alpha = 1.7, beta = -0.3;
        Tensor2 mix(33, 4);
        mix.mat() = alpha * a.mat() + beta * b.mat();
        const Tensor2 lhs = conv1d_dilated(mix, k);
        Tensor2 rhs(33, 5);
        rhs.mat() = alpha * conv1d_dilated(a, k).mat() + beta * conv1d_dilated(b, k).mat();
        CHECK((lhs.mat() - rhs.mat()).norm() <= 1e-9 * std::max(1.0, rhs.mat().norm()));
    }
}

TEST_CASE("conv1d: errors") {
    ConvKernel k = ConvKernel::zeros(3, 2, 2);
    CHECK_THROWS_AS(conv1d_dilated(Tensor2(4, 3), k), DimensionError);
    ConvKernel even = ConvKernel::zeros(2, 2, 2);
    CHECK_THROWS_AS(conv1d_dilated(Tensor2(4, 2), even), ValidationError);
}

TEST_CASE("conv1d backward matches finite differences") {
    std::mt19937_64 rng(4);
    Tensor2 x = random_tensor(11, 2, rng);
    ConvKernel k = random_kernel(3, 2, 3, 2, rng);
    const Tensor2 upstream = random_tensor(11, 3, rng);
    auto loss = [&] {
        const Tensor2 y = conv1d_dilated(x, k);
        return (y.mat().array() * upstream.mat().array()).sum();
    };
    ConvKernel gk = ConvKernel::zeros(3, 2, 3, 2);
    const Tensor2 gx = conv1d_dilated_backward(x, k, upstream, gk);
    const auto fw = oracle::finite_difference(k.weights, loss);
    const auto fb = oracle::finite_difference(k.bias, loss);
    const auto fx = oracle::finite_difference(x.data(), loss);
    for (std::size_t i = 0; i < fw.size(); ++i) CHECK(oracle::relative_gradient_error(gk.weights[i], fw[i]) < 1e-6);
    for (std::size_t i = 0; i < fb.size(); ++i) CHECK(oracle::relative_gradient_error(gk.bias[i], fb[i]) < 1e-6);
    for (std::size_t i = 0; i < fx.size(); ++i) CHECK(oracle::relative_gradient_error(gx.data()[i], fx[i]) < 1e-6);
}

TEST_CASE("linear layer gradient matches the closed form") {
    // A 1x1 convolution with one output is y = Xw; L = (1/T)||Xw - y||^2.
    std::mt19937_64 rng(5);
    const std::size_t T = 40, D = 4;
    const Tensor2 X = random_tensor(T, D, rng);
    const Tensor2 target = random_tensor(T, 1, rng);
    ConvKernel k = random_kernel(1, D, 1, 1, rng);
    k.bias = {0.0};
    const Tensor2 pred = conv1d_dilated(X, k);
    Tensor2 upstream(T, 1);
    upstream.mat() = (pred.mat() - target.mat()) * (2.0 / T);
    ConvKernel gk = ConvKernel::zeros(1, D, 1);
    conv1d_dilated_backward(X, k, upstream, gk);
    const Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(k.weights.data(), D);
    const Eigen::VectorXd closed = X.mat().transpose() * (X.mat() * w - target.mat().col(0)) * (2.0 / T);
    for (std::size_t i = 0; i < D; ++i) CHECK(gk.weights[i] == doctest::Approx(closed[Eigen::Index(i)]).epsilon(1e-12));
}

TEST_CASE("relu forward and gradient mask") {
    const Tensor2 x(1, 3, {-1.0, 0.0, 2.0});
    CHECK(relu(x).data() == AlignedVector{0.0, 0.0, 2.0});
    const Tensor2 pos(1, 3, {0.0, 1.0, 3.5});
    CHECK(relu(pos) == pos);
    const Tensor2 g(1, 3, {5.0, 6.0, 7.0});
    CHECK(relu_backward(x, g).data() == AlignedVector{0.0, 0.0, 7.0});

    Tensor2 xs(1, 4, {-0.7, 0.3, 1.2, -2.0});
    const Tensor2 up(1, 4, {1.0, -2.0, 0.5, 3.0});
    auto loss = [&] { return (relu(xs).mat().array() * up.mat().array()).sum(); };
    const auto fd = oracle::finite_difference(xs.data(), loss);
    const Tensor2 an = relu_backward(xs, up);
    for (std::size_t i = 0; i < 4; ++i) CHECK(an.data()[i] == doctest::Approx(fd[i]).epsilon(1e-8));
}

TEST_CASE("softmax rows") {
    CHECK(softmax_rows(Tensor2(1, 2, {0.0, 0.0})).data() == AlignedVector{0.5, 0.5});
    for (double x : {-3.0, 0.0, 17.0, 1e4}) {
        const auto p = softmax_rows(Tensor2(1, 4, {x, x, x, x}));
        for (double v : p.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
    }
    const auto p = softmax_rows(Tensor2(1, 2, {std::log(1.0), std::log(3.0)}));
    CHECK(p(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(p(0, 1) == doctest::Approx(0.75).epsilon(1e-14));

    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-1e4, 1e4);
    Tensor2 extreme(200, 5);
    for (double& v : extreme.data()) v = u(rng);
    const auto q = softmax_rows(extreme);
    for (std::size_t t = 0; t < q.rows(); ++t) {
        double s = 0.0;
        for (double v : q.row(t)) {
            CHECK(v >= 0.0);
            s += v;
        }
        CHECK(std::abs(s - 1.0) <= 1e-9);
    }
}

TEST_CASE("cross entropy examples") {
    const std::vector<int> labels = {0, 1, 1};
    const ProbSequence perfect(3, 2, {1, 0, 0, 1, 0, 1});
    CHECK(cross_entropy_loss(perfect, labels) == 0.0);

    ProbSequence uniform(4, 8, 1.0 / 8.0);
    CHECK(cross_entropy_loss(uniform, std::vector<int>{0, 3, 7, 2}) == doctest::Approx(std::log(8.0)).epsilon(1e-14));

    const ProbSequence p(2, 2, {0.5, 0.5, 0.25, 0.75});
    CHECK(cross_entropy_loss(p, std::vector<int>{0, 1}) ==
          doctest::Approx((-std::log(0.5) - std::log(0.75)) / 2.0).epsilon(1e-14));
    CHECK(std::abs(cross_entropy_loss(p, std::vector<int>{0, 1}) - 0.49041) < 1e-5);

    CHECK_THROWS_AS(cross_entropy_loss(p, std::vector<int>{0}), DimensionError);
    // clamp keeps a zero probability finite
    const ProbSequence zero(1, 2, {0.0, 1.0});
    CHECK(cross_entropy_loss(zero, std::vector<int>{0}) == doctest::Approx(-std::log(kProbFloor)));
}

TEST_CASE("tmse examples and invariants") {
    const LossConfig cfg;
    const ProbSequence constant(5, 3, {0.2, 0.3, 0.5, 0.2, 0.3, 0.5, 0.2, 0.3, 0.5, 0.2, 0.3, 0.5, 0.2, 0.3, 0.5});
    CHECK(tmse_loss(constant, cfg) == 0.0);
    CHECK(tmse_loss(ProbSequence(6, 1, 1.0), cfg) == 0.0);
    CHECK(tmse_loss(ProbSequence(1, 3, 1.0 / 3.0), cfg) == 0.0);

    const ProbSequence p(2, 2, {0.5, 0.5, 0.9, 0.1});
    const double expected = (std::pow(std::log(1.8), 2) + std::pow(std::log(5.0), 2)) / 2.0;
    CHECK(tmse_loss(p, cfg) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(std::abs(tmse_loss(p, cfg) - 1.4679) < 1e-4);

    // truncation
    const ProbSequence jump(2, 2, {0.5, 0.5, 1.0 - 1e-6, 1e-6});
    const double clipped = (std::pow(std::log(2.0 * (1.0 - 1e-6)), 2) + 16.0) / 2.0;
    CHECK(tmse_loss(jump, cfg) == doctest::Approx(clipped).epsilon(1e-12));

    // consistent column permutation
    std::mt19937_64 rng(7);
    Tensor2 logits = random_tensor(30, 4, rng, 2.0);
    const ProbSequence q = softmax_rows(logits);
    ProbSequence permuted(30, 4);
    const std::size_t perm[] = {2, 0, 3, 1};
    for (std::size_t t = 0; t < 30; ++t)
        for (std::size_t c = 0; c < 4; ++c) permuted(t, c) = q(t, perm[c]);
    CHECK(tmse_loss(permuted, cfg) == doctest::Approx(tmse_loss(q, cfg)).epsilon(1e-14));

    CHECK_THROWS_AS(tmse_loss(q, LossConfig{0.15, 0.0}), ValidationError);
}

TEST_CASE("loss gradients with respect to logits match finite differences") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor2 logits = random_tensor(12, 3, rng, 1.5);
        std::vector<int> labels(12);
        std::uniform_int_distribution<int> cls(0, 2);
        for (int& y : labels) y = cls(rng);
        const LossConfig cfg{0.15, 0.8};  // small tau so truncation is exercised
        auto total = [&] {
            const auto p = softmax_rows(logits);
            return cross_entropy_loss(p, labels) + cfg.lambda_tmse * tmse_loss(p, cfg);
        };
        const auto p = softmax_rows(logits);
        Tensor2 g = cross_entropy_grad(p, labels);
        g.mat() += cfg.lambda_tmse * tmse_grad(p, cfg).mat();
        const auto fd = oracle::finite_difference(logits.data(), total);
        for (std::size_t i = 0; i < fd.size(); ++i) CHECK(oracle::relative_gradient_error(g.data()[i], fd[i]) < 1e-6);
    }
}

TEST_CASE("losses are non-negative") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = softmax_rows(random_tensor(10, 4, rng, 3.0));
        std::vector<int> labels(10, trial % 4);
        CHECK(cross_entropy_loss(p, labels) >= 0.0);
        CHECK(tmse_loss(p, LossConfig{}) >= 0.0);
    }
}

TEST_CASE("adam: zero gradient, first step, quadratic") {
    std::vector<double> w = {1.0, -2.0};
    AdamState s;
    adam_step(w, std::vector<double>{0.0, 0.0}, s);
    CHECK(w == std::vector<double>{1.0, -2.0});
    CHECK(s.step == 1);

    std::vector<double> w2 = {0.0, 0.0, 0.0};
    AdamState s2;
    s2.lr = 0.01;
    adam_step(w2, std::vector<double>{3.0, -0.02, 150.0}, s2);
    CHECK(w2[0] == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(w2[1] == doctest::Approx(0.01).epsilon(1e-5));
    CHECK(w2[2] == doctest::Approx(-0.01).epsilon(1e-6));

    std::vector<double> x = {0.0};
    AdamState s3;
    s3.lr = 0.1;
    for (int i = 0; i < 200; ++i) adam_step(x, std::vector<double>{2.0 * (x[0] - 3.0)}, s3);
    CHECK(std::abs(x[0] - 3.0) < 0.05);

    std::vector<double> a = {0.0, 0.0};
    CHECK_THROWS_AS(adam_step(a, std::vector<double>{1.0}, s3), DimensionError);
}
