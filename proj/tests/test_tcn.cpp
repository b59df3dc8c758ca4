#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "oracles.hpp"
#include "vjump/error.hpp"
#include "vjump/tcn.hpp"

using namespace vjump;

namespace {

MsTcnConfig small_config(std::size_t stages, std::size_t layers, std::size_t filters, std::size_t classes) {
    MsTcnConfig c;
    c.num_stages = stages;
    c.stage.num_layers = layers;
    c.stage.num_filters = filters;
    c.stage.num_classes = classes;
    return c;
}

Tensor2 random_input(std::size_t T, std::size_t C, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Tensor2 x(T, C);
    for (double& v : x.data()) v = g(rng);
    return x;
}

// 1000 samples: background interleaved with eight 60-sample bursts, each class with its own
// channel and frequency signature.
ImuSession overfit_session() {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> noise(0.0, 0.05);
    ImuSession s;
    s.subject_id = "fixture";
    s.samples = Tensor2(1000, kNumChannels);
    LabelSequence labels(1000, 0);
    const int order[] = {1, 3, 2, 4, 2, 1, 4, 3};
    for (int k = 0; k < 8; ++k) {
        const std::size_t start = 40 + std::size_t(k) * 120;
        for (std::size_t t = start; t < start + 60; ++t) labels[t] = order[k];
    }
    for (std::size_t t = 0; t < 1000; ++t) {
        for (std::size_t c = 0; c < kNumChannels; ++c) s.samples(t, c) = noise(rng);
        s.samples(t, 1) += 1.0;
        const int y = labels[t];
        if (y > 0) {
            const double ph = 2.0 * 3.14159265358979 * double(t) * 0.05 * double(y);
            s.samples(t, std::size_t(y)) += 2.0 * std::sin(ph);
            s.samples(t, 1) += 0.5 * double(y);
        }
    }
    s.labels = std::move(labels);
    return s;
}

double accuracy(const LabelSequence& a, const LabelSequence& b) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < a.size(); ++i) hit += a[i] == b[i];
    return double(hit) / double(a.size());
}

}  // namespace

TEST_CASE("build_mstcn is deterministic and matches the closed-form parameter count") {
    const MsTcnConfig def;
    const ModelWeights a = build_mstcn(def, 9);
    const ModelWeights b = build_mstcn(def, 9);
    const auto pa = a.parameter_buffers();
    const auto pb = b.parameter_buffers();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        REQUIRE(pa[i].size() == pb[i].size());
        CHECK(std::memcmp(pa[i].data(), pb[i].data(), pa[i].size_bytes()) == 0);
    }
    CHECK(!(build_mstcn(def, 10).stages == a.stages));

    // enumerate shapes independently
    std::size_t enumerated = 0;
    for (std::size_t s = 0; s < 4; ++s) {
        const std::size_t din = s == 0 ? 6 : 8;
        enumerated += din * 64 + 64;
        for (std::size_t l = 0; l < 10; ++l) enumerated += 3 * 64 * 64 + 64 + 64 * 64 + 64;
        enumerated += 64 * 8 + 8;
    }
    CHECK(mstcn_parameter_count(def) == enumerated);
    CHECK(a.parameter_count() == enumerated);
    CHECK(build_mstcn(small_config(1, 2, 4, 3), 0).stages.size() == 1);
}

TEST_CASE("receptive field") {
    CHECK(SsTcnConfig{}.receptive_field() == 2047);
    SsTcnConfig two;
    two.num_layers = 2;
    CHECK(two.receptive_field() == 7);
}

TEST_CASE("config validation") {
    MsTcnConfig c;
    c.num_stages = 0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = MsTcnConfig{};
    c.stage.num_layers = 0;
    CHECK_THROWS_AS(build_mstcn(c, 0), ValidationError);
    c = MsTcnConfig{};
    c.stage.kernel_size = 4;
    CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("forward: shapes, zero weights and softmax rows") {
    std::mt19937_64 rng(1);
    const MsTcnConfig cfg = small_config(3, 3, 8, 5);
    ModelWeights w = build_mstcn(cfg, 2);
    for (std::size_t T : {1, 2, 17, 64}) {
        const Tensor2 x = random_input(T, 6, rng);
        const Tensor2 logits = sstcn_forward(w, 0, x);
        CHECK(logits.rows() == T);
        CHECK(logits.cols() == 5);
        const auto probs = mstcn_forward(w, x);
        REQUIRE(probs.size() == 3);
        for (const auto& p : probs) {
            for (std::size_t t = 0; t < T; ++t) {
                double s = 0.0;
                for (double v : p.row(t)) s += v;
                CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
            }
        }
    }
    const Tensor2 x = random_input(20, 6, rng);
    CHECK_THROWS_AS(sstcn_forward(w, 0, random_input(20, 5, rng)), DimensionError);
    CHECK_THROWS_AS(sstcn_forward(w, 7, x), DimensionError);

    const ModelWeights z = zeros_like(w);
    CHECK(sstcn_forward(z, 0, x) == Tensor2(20, 5, 0.0));

    const ModelWeights one = build_mstcn(small_config(1, 3, 8, 5), 2);
    const auto p1 = mstcn_forward(one, x);
    REQUIRE(p1.size() == 1);
    CHECK(p1[0] == softmax_rows(sstcn_forward(one, 0, x)));
}

TEST_CASE("temporal locality") {
    auto check_locality = [](const MsTcnConfig& cfg, std::size_t T, std::size_t t0) {
        std::mt19937_64 rng(3);
        const ModelWeights w = build_mstcn(cfg, 4);
        Tensor2 x = random_input(T, 6, rng);
        const Tensor2 before = sstcn_forward(w, 0, x);
        for (std::size_t c = 0; c < 6; ++c) x(t0, c) += 1.0;
        const Tensor2 after = sstcn_forward(w, 0, x);
        const std::size_t half = cfg.stage.receptive_field() / 2;
        bool edge_changed = false;
        for (std::size_t t = 0; t < T; ++t) {
            const bool inside = t + half >= t0 && t <= t0 + half;
            bool changed = false;
            for (std::size_t j = 0; j < before.cols(); ++j) changed |= before(t, j) != after(t, j);
            if (!inside) CHECK_MESSAGE(!changed, "t = " << t);
            if (t == t0 + half || t + half == t0) edge_changed |= changed;
        }
        CHECK(edge_changed);
    };
    check_locality(small_config(1, 2, 4, 3), 40, 20);
    MsTcnConfig def;
    def.num_stages = 1;
    check_locality(def, 2600, 1300);
}

TEST_CASE("backward: gradients match finite differences") {
    std::mt19937_64 rng(5);
    for (std::size_t stages : {1, 2}) {
        CAPTURE(stages);
        const MsTcnConfig cfg = small_config(stages, 2, 4, 3);
        ModelWeights w = build_mstcn(cfg, 6);
        const Tensor2 x = random_input(32, 6, rng);
        std::vector<int> labels(32);
        for (std::size_t t = 0; t < 32; ++t) labels[t] = int((t / 8) % 3);

        const LossAndGradients lg = mstcn_loss_and_gradients(w, x, labels);
        auto loss = [&] { return mstcn_loss_and_gradients(w, x, labels).loss; };
        auto params = w.parameter_buffers();
        const auto grads = lg.gradients.parameter_buffers();
        double worst = 0.0;
        for (std::size_t b = 0; b < params.size(); ++b) {
            const auto numeric = oracle::finite_difference(params[b], loss, 1e-6);
            for (std::size_t i = 0; i < numeric.size(); ++i) {
                worst = std::max(worst, oracle::relative_gradient_error(grads[b][i], numeric[i]));
            }
        }
        CHECK(worst < 1e-5);
    }
}

TEST_CASE("backward before forward is a state error") {
    const ModelWeights w = build_mstcn(small_config(1, 2, 4, 3), 0);
    MsTcnGraph graph(w);
    std::vector<Tensor2> g(1, Tensor2(4, 3));
    CHECK_THROWS_AS(graph.backward(g), StateError);
}

TEST_CASE("train: preconditions and epochs = 0") {
    ImuSession s = overfit_session();
    MsTcnConfig cfg = small_config(2, 4, 16, 5);
    cfg.epochs = 0;
    cfg.seed = 3;
    const TrainResult r = train(cfg, std::span(&s, 1));
    CHECK(r.loss_history.empty());
    CHECK(r.weights.stages == build_mstcn(cfg, 3).stages);

    CHECK_THROWS_AS(train(cfg, std::span<const ImuSession>{}), ValidationError);
    ImuSession unlabeled = s;
    unlabeled.labels.reset();
    CHECK_THROWS_AS(train(cfg, std::span(&unlabeled, 1)), ValidationError);
}

TEST_CASE("train: loss is finite on random data") {
    std::mt19937_64 rng(8);
    ImuSession s;
    s.subject_id = "noise";
    s.samples = random_input(200, 6, rng);
    std::uniform_int_distribution<int> u(0, 4);
    s.labels = LabelSequence(200);
    for (int& y : *s.labels) y = u(rng);
    MsTcnConfig cfg = small_config(2, 3, 8, 5);
    cfg.epochs = 5;
    const TrainResult r = train(cfg, std::span(&s, 1));
    REQUIRE(r.loss_history.size() == 5);
    for (double l : r.loss_history) CHECK(std::isfinite(l));
}

TEST_CASE("train: a small model memorizes one session") {
    const ImuSession s = overfit_session();
    MsTcnConfig cfg = small_config(2, 4, 16, 5);
    cfg.epochs = 500;
    cfg.seed = 1;
    const TrainResult r = train(cfg, std::span(&s, 1));

    // loss decreases over the first 10 epochs, allowing 2 non-improving epochs
    int bumps = 0;
    for (std::size_t e = 1; e < 10; ++e) bumps += r.loss_history[e] >= r.loss_history[e - 1];
    CHECK(bumps <= 2);
    CHECK(r.loss_history.back() < r.loss_history.front());

    const Prediction p = predict(r.weights, s);
    const double final_acc = accuracy(p.labels, *s.labels);
    CHECK(final_acc >= 0.99);

    const auto stages = mstcn_forward(r.weights, normalize_input(r.weights, s.samples));
    const double first_acc = accuracy(argmax_rows(stages.front()), *s.labels);
    CHECK(final_acc >= first_acc);

    const Prediction again = predict(r.weights, s);
    CHECK(again.labels == p.labels);
    const TrainResult r2 = train(cfg, std::span(&s, 1));
    CHECK(r2.loss_history == r.loss_history);
    CHECK(r2.weights.stages == r.weights.stages);
}

TEST_CASE("predict: contracts") {
    const ModelWeights w = build_mstcn(small_config(2, 2, 4, 3), 0);
    ImuSession one;
    one.subject_id = "one";
    one.samples = Tensor2(1, 6, 0.5);
    const Prediction p = predict(w, one);
    CHECK(p.labels.size() == 1);
    CHECK(p.probs.rows() == 1);

    ImuSession five;
    five.samples = Tensor2(10, 5, 0.0);
    try {
        predict(w, five);
        FAIL("expected an error");
    } catch (const DimensionError& e) {
        CHECK(std::string(e.what()).find("channel mismatch") != std::string::npos);
    }

    const Tensor2 scores(3, 4, std::vector<double>{0.1, 0.7, 0.7, 0.2, 5, 1, 2, 3, -1, -1, -1, -1});
    CHECK(argmax_rows(scores) == LabelSequence{1, 0, 0});
    Tensor2 shifted = scores;
    for (double& v : shifted.data()) v += 123.0;
    CHECK(argmax_rows(shifted) == argmax_rows(scores));
}
