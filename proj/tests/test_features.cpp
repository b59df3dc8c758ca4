#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "vjump/error.hpp"
#include "vjump/features.hpp"

using namespace vjump;

namespace {

std::size_t index_of(std::string_view name) {
    const auto& cat = feature_catalog();
    for (std::size_t i = 0; i < cat.size(); ++i)
        if (cat[i].name == name) return i;
    FAIL("unknown feature " << name);
    return 0;
}

std::vector<double> sine(double hz, std::size_t W, double amp = 1.0, double fs = 100.0) {
    std::vector<double> x(W);
    for (std::size_t i = 0; i < W; ++i) x[i] = amp * std::sin(2.0 * std::numbers::pi * hz * double(i) / fs);
    return x;
}

Tensor2 random_window(std::mt19937_64& rng, std::size_t W = 300) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    Tensor2 w(W, 6);
    for (std::size_t c = 0; c < 6; ++c) {
        const double offset = u(rng), hz = 1.0 + 10.0 * std::abs(u(rng));
        for (std::size_t t = 0; t < W; ++t)
            w(t, c) = offset + std::sin(2.0 * std::numbers::pi * hz * double(t) / 100.0) + 0.3 * n(rng);
    }
    // an occasional spike
    w(W / 2, 1) += 5.0;
    return w;
}

}  // namespace

TEST_CASE("catalog shape") {
    const auto& cat = feature_catalog();
    CHECK(cat.size() == 24);
    std::size_t freq = 0;
    for (const auto& f : cat) freq += f.frequency_domain ? 1 : 0;
    CHECK(freq == 8);
    CHECK(index_of("max") == 0);
    index_of("std");
    index_of("spectral_entropy");
    CHECK(feature_names().size() == 145);
    CHECK(feature_names().front() == "ax_max");
    CHECK(feature_names()[24] == "ay_max");
    CHECK(feature_names().back() == "jump_type");
}

TEST_CASE("power spectrum") {
    CHECK_THROWS_AS(power_spectrum(std::vector<double>{1.0}), ValidationError);

    const auto zero = power_spectrum(std::vector<double>(300, 2.5));
    for (double p : zero.power) CHECK(std::abs(p) <= 1e-20);

    const auto s = power_spectrum(sine(5.0, 300));
    CHECK(s.power.size() == 151);
    CHECK(s.frequencies[1] == doctest::Approx(100.0 / 300.0));
    const auto peak = std::max_element(s.power.begin(), s.power.end()) - s.power.begin();
    CHECK(peak == 15);
    CHECK(s.frequencies[15] == doctest::Approx(5.0));

    std::mt19937_64 rng(21);
    std::normal_distribution<double> n(0.3, 2.0);
    for (std::size_t W : {2u, 3u, 64u, 299u, 300u}) {
        std::vector<double> x(W);
        for (double& v : x) v = n(rng);
        double mean = 0.0;
        for (double v : x) mean += v;
        mean /= double(W);
        double ss = 0.0;
        for (double v : x) ss += (v - mean) * (v - mean);
        const auto ps = power_spectrum(x);
        double total = 0.0;
        for (double p : ps.power) total += p;
        CHECK(std::abs(total - ss) <= 1e-6 * ss);
        CHECK(std::abs(oracle::direct_dft_total_power(x) - total) <= 1e-6 * ss);
    }
}

TEST_CASE("spectral entropy") {
    CHECK(spectral_entropy(std::vector<double>(300, 1.0)) == 0.0);
    CHECK(spectral_entropy_from_power(std::vector<double>{0.0, 2.0, 2.0, 2.0, 2.0}) == doctest::Approx(1.0));
    // A unit impulse has a flat spectrum; odd W avoids the unpaired Nyquist bin.
    std::vector<double> impulse(301, 0.0);
    impulse[0] = 1.0;
    CHECK(spectral_entropy(impulse) == doctest::Approx(1.0).epsilon(1e-12));

    const double h = spectral_entropy(sine(5.0, 300));
    CHECK(h < 0.2);
    // Bin-aligned sine: all energy in bin 15, leakage is rounding noise only
    // (numpy reference of the same definition: 2.3e-28).
    CHECK(h < 1e-20);
}

TEST_CASE("channel features: hand example [1, 2, 3, 4]") {
    const auto f = extract_channel_features(std::vector<double>{1, 2, 3, 4});
    CHECK(f[index_of("max")] == 4.0);
    CHECK(f[index_of("min")] == 1.0);
    CHECK(f[index_of("mean")] == 2.5);
    CHECK(f[index_of("median")] == 2.5);
    CHECK(f[index_of("peak_to_peak")] == 3.0);
    CHECK(f[index_of("mean_abs_diff")] == 1.0);
    CHECK(f[index_of("linear_slope")] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(f[index_of("variance")] == doctest::Approx(5.0 / 3.0).epsilon(1e-14));
    CHECK(f[index_of("std")] == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-14));
    CHECK(f[index_of("rms")] == doctest::Approx(std::sqrt(7.5)).epsilon(1e-14));
    CHECK(f[index_of("iqr")] == doctest::Approx(1.5).epsilon(1e-14));
    CHECK(std::abs(f[index_of("skewness")]) < 1e-14);
    CHECK(f[index_of("kurtosis")] == doctest::Approx(2.5625 / 1.5625 - 3.0).epsilon(1e-13));
    CHECK(f[index_of("zero_crossing_rate")] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(f[index_of("signal_energy")] == 30.0);
    CHECK(f[index_of("autocorr_lag1")] == doctest::Approx(0.25).epsilon(1e-14));
    // spectrum of [-1.5, -0.5, 0.5, 1.5]: bin 1 (25 Hz) power 4, bin 2 (50 Hz) power 1
    const double h = -(0.8 * std::log(0.8) + 0.2 * std::log(0.2)) / std::log(2.0);
    CHECK(f[index_of("spectral_entropy")] == doctest::Approx(h).epsilon(1e-12));
    CHECK(f[index_of("spectral_centroid")] == doctest::Approx(30.0).epsilon(1e-12));
    CHECK(f[index_of("spectral_spread")] == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(f[index_of("dominant_frequency")] == doctest::Approx(25.0));
    CHECK(f[index_of("dominant_magnitude")] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(f[index_of("spectral_rolloff_85")] == doctest::Approx(50.0));
    CHECK(f[index_of("band_power_0_5hz")] == 0.0);
    CHECK(f[index_of("band_power_5_20hz")] == 0.0);

    CHECK_THROWS_AS(extract_channel_features(std::vector<double>{1, 2, 3}), ValidationError);
}

TEST_CASE("channel features: degenerate windows") {
    for (double v : {0.0, 0.1, -7.3}) {
        const auto f = extract_channel_features(std::vector<double>(300, v));
        CHECK(f[index_of("std")] == 0.0);
        CHECK(f[index_of("skewness")] == 0.0);
        CHECK(f[index_of("kurtosis")] == 0.0);
        CHECK(f[index_of("autocorr_lag1")] == 0.0);
        CHECK(f[index_of("zero_crossing_rate")] == 0.0);
        for (std::size_t i = 16; i < 24; ++i) CHECK(f[i] == 0.0);
        if (v == 0.0) {
            for (double x : f) CHECK(x == 0.0);
        }
    }
}

TEST_CASE("feature vector contract") {
    const auto& vocab = ClassVocabulary::standard();
    const auto zero = extract_feature_vector(Tensor2(300, 6), vocab.index_of("CMJ"), vocab);
    REQUIRE(zero.values.size() == 145);
    for (std::size_t i = 0; i < 144; ++i) CHECK(zero.values[i] == 0.0);
    CHECK(zero.values[144] == 0.0);
    CHECK(zero.catalog_version == kFeatureCatalogVersion);
    CHECK(extract_feature_vector(Tensor2(300, 6), vocab.index_of("OS"), vocab).values[144] == 3.0);
    CHECK(extract_feature_vector(Tensor2(300, 6), vocab.index_of("Block"), vocab).values[144] == 2.0);

    CHECK_THROWS_AS(extract_feature_vector(Tensor2(300, 5), 1, vocab), DimensionError);
    CHECK_THROWS_AS(extract_feature_vector(Tensor2(300, 6), vocab.index_of("Squat"), vocab), ValidationError);
    CHECK_THROWS_AS(extract_feature_vector(Tensor2(300, 6), 0, vocab), ValidationError);
}

TEST_CASE("feature vector properties over random windows") {
    const auto& vocab = ClassVocabulary::standard();
    const auto& cat = feature_catalog();
    std::mt19937_64 rng(22);
    std::uniform_real_distribution<double> scale_dist(0.2, 5.0);
    std::uniform_int_distribution<std::size_t> ch(0, 5);
    for (int trial = 0; trial < 100; ++trial) {
        const Tensor2 w = random_window(rng);
        const auto fv = extract_feature_vector(w, 1 + trial % 4, vocab);
        REQUIRE(fv.values.size() == 145);
        for (double v : fv.values) CHECK(std::isfinite(v));
        CHECK(extract_feature_vector(w, 1 + trial % 4, vocab).values == fv.values);

        // swapping two channels swaps exactly their 24-blocks
        const std::size_t a = ch(rng), b = ch(rng);
        Tensor2 swapped = w;
        for (std::size_t t = 0; t < w.rows(); ++t) std::swap(swapped(t, a), swapped(t, b));
        const auto fs = extract_feature_vector(swapped, 1 + trial % 4, vocab);
        for (std::size_t c = 0; c < 6; ++c) {
            const std::size_t src = c == a ? b : (c == b ? a : c);
            for (std::size_t k = 0; k < 24; ++k) CHECK(fs.values[c * 24 + k] == fv.values[src * 24 + k]);
        }
        CHECK(fs.values[144] == fv.values[144]);

        // homogeneity of each feature under positive scaling
        const double s = trial % 2 == 0 ? 2.0 : scale_dist(rng);
        Tensor2 scaled = w;
        for (double& v : scaled.data()) v *= s;
        const auto fsc = extract_feature_vector(scaled, 1 + trial % 4, vocab);
        for (std::size_t c = 0; c < 6; ++c) {
            for (std::size_t k = 0; k < 24; ++k) {
                const double expected = fv.values[c * 24 + k] * std::pow(s, cat[k].homogeneity_degree);
                const double got = fsc.values[c * 24 + k];
                CHECK_MESSAGE(std::abs(got - expected) <= 1e-9 * std::max(1.0, std::abs(expected)),
                              cat[k].name << " scale " << s);
            }
        }
    }
}

TEST_CASE("no NaN for spikes and constants") {
    const auto& vocab = ClassVocabulary::standard();
    Tensor2 spike(300, 6, 1.0);
    spike(0, 0) = 1e6;
    spike(299, 5) = -1e6;
    const auto fv = extract_feature_vector(spike, 2, vocab);
    for (double v : fv.values) CHECK(std::isfinite(v));
}
