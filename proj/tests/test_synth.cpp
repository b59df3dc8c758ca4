#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "vjump/error.hpp"
#include "vjump/features.hpp"
#include "vjump/metrics.hpp"
#include "vjump/synth.hpp"

using namespace vjump;

namespace {

SyntheticConfig small(std::size_t subjects, double noise, std::uint64_t seed) {
    SyntheticConfig c;
    c.num_subjects = subjects;
    c.noise_std_g = noise;
    c.seed = seed;
    return c;
}

}  // namespace

TEST_CASE("flight time follows the projectile model") {
    CHECK(flight_time_s(0.45) == doctest::Approx(std::sqrt(8.0 * 0.45 / 9.81)).epsilon(1e-15));
    CHECK(flight_time_s(0.45) == doctest::Approx(0.606).epsilon(1e-3));
    CHECK(std::llround(flight_time_s(0.45) * 100.0) == 61);
    for (int c = 1; c <= 4; ++c) {
        CHECK(height_from_landing_peak(c, landing_peak_g(c, 0.37)) == doctest::Approx(0.37).epsilon(1e-12));
    }
}

TEST_CASE("default dataset shape") {
    const SyntheticDataset d = synth_generate(SyntheticConfig{});
    REQUIRE(d.sessions.size() == 10);
    CHECK(d.sessions[0].subject_id == "S01");
    CHECK(d.sessions[9].subject_id == "S10");
    CHECK(d.heights.size() == 260);
    for (const auto& s : d.sessions) {
        s.validate();
        CHECK(s.length() == 12000);
    }
    const auto& vocab = ClassVocabulary::standard();
    for (const auto& h : d.heights) {
        CHECK(h.height_m >= 0.15);
        CHECK(h.height_m <= 0.60);
        CHECK(vocab.is_height_eligible(h.segment.class_id));
    }
}

TEST_CASE("labels round-trip to the script") {
    const SyntheticDataset d = synth_generate(small(3, 0.05, 5));
    const auto& vocab = ClassVocabulary::standard();
    for (std::size_t k = 0; k < d.sessions.size(); ++k) {
        const auto segs = extract_segments(*d.sessions[k].labels, vocab);
        REQUIRE(segs.size() == d.scripts[k].activities.size());
        for (std::size_t j = 0; j < segs.size(); ++j) CHECK(segs[j] == d.scripts[k].activities[j].segment);
        // gaps of at least one second between labeled spans
        for (std::size_t j = 1; j < segs.size(); ++j) CHECK(segs[j].start >= segs[j - 1].end + 100);
    }
}

TEST_CASE("noiseless sessions match the template") {
    const SyntheticDataset d = synth_generate(small(2, 0.0, 9));
    for (std::size_t k = 0; k < d.sessions.size(); ++k) {
        const Tensor2& x = d.sessions[k].samples;
        for (const auto& a : d.scripts[k].activities) {
            if (a.flight_samples == 0) continue;
            CHECK(a.flight_time_s == std::sqrt(8.0 * a.height_m / kGravity));
            CHECK(a.flight_samples == std::size_t(std::llround(a.flight_time_s * 100.0)));
            for (std::size_t t = a.flight_start; t < a.flight_start + a.flight_samples; ++t) {
                CHECK(x(t, 0) == 0.0);
                CHECK(x(t, 1) == 0.0);
                CHECK(x(t, 2) == 0.0);
            }
            CHECK(x(a.flight_start - 1, 1) > 0.5);
            CHECK(x(a.flight_start + a.flight_samples, 1) > 0.5);
            double peak = 0.0;
            for (std::size_t t = a.segment.start; t < a.segment.end; ++t) peak = std::max(peak, x(t, 1));
            CHECK(peak == doctest::Approx(a.landing_peak_g).epsilon(1e-3));
        }
    }
}

TEST_CASE("determinism and the two-seed design") {
    const SyntheticDataset a = synth_generate(small(2, 0.05, 1));
    const SyntheticDataset b = synth_generate(small(2, 0.05, 1));
    CHECK(a.sessions == b.sessions);
    CHECK(a.heights == b.heights);

    SyntheticConfig c1 = small(2, 0.05, 1), c2 = small(2, 0.05, 2);
    c1.script_seed = c2.script_seed = 77;
    const SyntheticDataset x = synth_generate(c1);
    const SyntheticDataset y = synth_generate(c2);
    CHECK(x.heights == y.heights);
    CHECK(x.sessions[0].labels == y.sessions[0].labels);
    CHECK(!(x.sessions[0].samples == y.sessions[0].samples));

    const SyntheticDataset z = synth_generate(small(2, 0.05, 2));
    CHECK(!(z.heights == a.heights));
}

TEST_CASE("the landing-peak inverse recovers heights") {
    const SyntheticDataset d = synth_generate(SyntheticConfig{});
    std::vector<double> truth, oracle;
    for (const auto& h : d.heights) {
        const auto& s = *std::find_if(d.sessions.begin(), d.sessions.end(),
                                      [&](const ImuSession& x) { return x.subject_id == h.subject_id; });
        const Tensor2 w = roi_window(s.samples, select_roi(h.segment, s.length()));
        double peak = -1e9;
        for (std::size_t t = 0; t < w.rows(); ++t) peak = std::max(peak, w(t, kVerticalAccelChannel));
        truth.push_back(h.height_m);
        oracle.push_back(height_from_landing_peak(h.segment.class_id, peak));
    }
    CHECK(r_squared(truth, oracle) >= 0.7);
}

TEST_CASE("configuration errors") {
    SyntheticConfig c;
    c.session_duration_s = 30.0;
    CHECK_THROWS_AS(synth_generate(c), ValidationError);
    c = SyntheticConfig{};
    c.min_gap_s = 0.5;
    CHECK_THROWS_AS(synth_generate(c), ValidationError);
    c = SyntheticConfig{};
    c.jumps_per_subject["Spike"] = 1;
    CHECK_THROWS_AS(synth_generate(c), ValidationError);
    c = SyntheticConfig{};
    c.height_range["CMJ"] = {0.5, 0.2};
    CHECK_THROWS_AS(synth_generate(c), ValidationError);
    c = SyntheticConfig{};
    c.height_range["Squat"] = {0.1, 0.2};
    CHECK_THROWS_AS(synth_generate(c), ValidationError);
}
