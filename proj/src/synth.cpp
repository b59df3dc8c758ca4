#include "vjump/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "vjump/error.hpp"
#include "vjump/vocabulary.hpp"

namespace vjump {

namespace {

enum Channel : std::size_t { AX, AY, AZ, GX, GY, GZ };

constexpr std::size_t kPropulsion = 20;
constexpr std::size_t kLanding = 25;
constexpr std::size_t kLandingPeakOffset = 4;
constexpr double kGyroNoisePerG = 40.0;  // deg/s of gyro noise per g of accel noise
constexpr double kHopMin = 0.03;
constexpr double kHopMax = 0.08;

// Half-sine bump over n samples, strictly positive inside.
double bump(std::size_t i, std::size_t n) {
    return std::sin(std::numbers::pi * (static_cast<double>(i) + 0.5) / static_cast<double>(n));
}

double gauss(double x, double centre, double width) {
    const double z = (x - centre) / width;
    return std::exp(-z * z);
}

struct ClassIds {
    int cmj, smash, block, os, squat, dive, hop;
};

const ClassIds& ids() {
    static const ClassIds c = [] {
        const auto& v = ClassVocabulary::standard();
        return ClassIds{v.index_of("CMJ"), v.index_of("Smash"), v.index_of("Block"), v.index_of("OS"),
                        v.index_of("Squat"), v.index_of("Dive"), v.index_of("Hop")};
    }();
    return c;
}

struct SubjectStyle {
    double sway_amp[3];
    double sway_freq[3];
    double sway_phase[3];
    double tilt_x;
    double tilt_z;
    double gyro_sway;
};

struct Plan {
    int class_id = 0;
    double height = 0.0;
    double peak = 0.0;
    std::size_t pre = 0;
    std::size_t span = 0;
    std::size_t post = 0;
    std::size_t flight = 0;
    std::size_t start = 0;  // footprint start

    std::size_t footprint() const { return pre + span + post; }
    bool jumps() const { return flight > 0; }
};

struct Signal {
    Tensor2& x;
    std::size_t origin;

    double& at(std::size_t i, Channel c) { return x(origin + i, c); }
    void add(std::size_t i, Channel c, double v) { x(origin + i, c) += v; }
};

std::size_t samples_for(double seconds) {
    return static_cast<std::size_t>(std::llround(seconds * kSampleRateHz));
}

void render_pre(const Plan& p, Signal s) {
    const ClassIds& c = ids();
    const std::size_t n = p.pre;
    for (std::size_t i = 0; i < n; ++i) {
        if (p.class_id == c.cmj) {
            if (i < 40) s.add(i, AY, -0.45 * bump(i, 40));
            else s.add(i, AY, 0.35 * bump(i - 40, 20));
            s.add(i, GX, 40.0 * std::sin(2.0 * std::numbers::pi * double(i) / double(n)));
        } else if (p.class_id == c.smash) {
            for (std::size_t step : {10u, 55u, 100u}) {
                if (i >= step && i < step + 30) {
                    s.add(i, AY, 0.9 * bump(i - step, 30));
                    s.add(i, AX, 0.4 * bump(i - step, 30));
                }
            }
            if (i >= n - 20) s.add(i, GX, -80.0 * bump(i - (n - 20), 20));
            s.add(i, GZ, 25.0 * std::sin(2.0 * std::numbers::pi * double(i) / 90.0));
        } else if (p.class_id == c.block) {
            s.add(i, AY, -0.3 * bump(i, n));
            s.add(i, GZ, 15.0 * bump(i, n));
        } else if (p.class_id == c.os) {
            s.add(i, GY, 50.0 * std::sin(2.0 * std::numbers::pi * double(i) / double(n)));
            s.add(i, AY, 0.15 * bump(i, n));
            if (i >= n - 30) s.add(i, AY, -0.3 * bump(i - (n - 30), 30));
        } else if (p.class_id == c.hop) {
            s.add(i, AX, 0.6 * bump(i, n));
            s.add(i, AY, -0.2 * bump(i, n));
        } else if (p.class_id == c.dive) {
            s.add(i, AX, 0.5 * bump(i, n));
            s.add(i, AY, 0.3 * bump(i, n));
        }
    }
}

void render_jump_span(const Plan& p, Signal s, const SubjectStyle& style) {
    const ClassIds& c = ids();
    const double lift = 0.8 + 2.5 * p.height;
    for (std::size_t i = 0; i < kPropulsion; ++i) {
        s.at(i, AY) = 1.0 + lift * bump(i, kPropulsion);
        s.add(i, GX, 30.0 * bump(i, kPropulsion));
        if (p.class_id == c.smash) s.add(i, AX, 0.5 * bump(i, kPropulsion));
        if (p.class_id == c.hop) s.add(i, AX, 0.4 * bump(i, kPropulsion));
    }
    const std::size_t f0 = kPropulsion;
    const std::size_t nf = p.flight;
    for (std::size_t i = 0; i < nf; ++i) {
        // free fall: the accelerometer reads zero on every axis
        s.at(f0 + i, AX) = 0.0;
        s.at(f0 + i, AY) = 0.0;
        s.at(f0 + i, AZ) = 0.0;
        const double b = bump(i, nf);
        const double wave = std::sin(2.0 * std::numbers::pi * (double(i) + 0.5) / double(nf));
        if (p.class_id == c.cmj) {
            s.add(f0 + i, GX, 20.0 * wave);
        } else if (p.class_id == c.smash) {
            s.add(f0 + i, GX, -250.0 * b);
            s.add(f0 + i, GY, 60.0 * b);
        } else if (p.class_id == c.block) {
            s.add(f0 + i, GZ, 90.0 * wave);
        } else if (p.class_id == c.os) {
            s.add(f0 + i, GY, 180.0 * b);
        } else if (p.class_id == c.hop) {
            s.add(f0 + i, GZ, 30.0 * b);
        }
    }
    const std::size_t l0 = f0 + nf;
    for (std::size_t i = 0; i < kLanding; ++i) {
        const double x = static_cast<double>(i);
        s.at(l0 + i, AY) = 1.0 + (p.peak - 1.0) * (gauss(x, kLandingPeakOffset, 2.0) + 0.25 * gauss(x, 14.0, 2.5));
        s.at(l0 + i, AX) = style.tilt_x + 0.15 * (p.peak - 1.0) * gauss(x, 5.0, 2.0);
        s.at(l0 + i, AZ) = style.tilt_z;
        s.add(l0 + i, GX, -60.0 * gauss(x, 6.0, 3.0));
    }
}

void render_post(const Plan& p, Signal s) {
    const ClassIds& c = ids();
    for (std::size_t i = 0; i < p.post; ++i) {
        if (p.class_id == c.smash && i >= 15 && i < 40) {
            s.add(i, AY, 0.8 * bump(i - 15, 25));
        } else if (p.class_id == c.block && i >= 20 && i < 45) {
            s.add(i, AY, 0.6 * bump(i - 20, 25));
            s.add(i, AZ, 0.3 * bump(i - 20, 25));
        } else if (p.class_id == c.os && i >= 15 && i < 40) {
            s.add(i, AY, 0.7 * bump(i - 15, 25));
        }
    }
}

void render_squat(const Plan& p, Signal s) {
    for (std::size_t i = 0; i < p.span; ++i) {
        const double w = 2.0 * std::numbers::pi * double(i) / double(p.span);
        s.add(i, AY, -0.35 * std::sin(w));
        s.add(i, GX, 30.0 * std::sin(w));
    }
}

void render_dive(const Plan& p, Signal s, const SubjectStyle& style) {
    auto lying_blend = [&](std::size_t i, double t) {
        s.at(i, AY) = (1.0 - t) * s.at(i, AY) + t * 0.15;
        s.at(i, AZ) = (1.0 - t) * s.at(i, AZ) + t * -0.95;
    };
    for (std::size_t i = 0; i < p.span; ++i) {
        if (i < 20) s.add(i, AZ, -2.5 * bump(i, 20));
        if (i < 40) s.add(i, GX, 200.0 * bump(i, 40));
        if (i >= 20) lying_blend(i, std::min(1.0, double(i - 20) / 30.0));
    }
    const std::size_t o = p.span;
    for (std::size_t i = 0; i < p.post; ++i) {
        const double up = std::min(1.0, double(i) / 100.0);
        lying_blend(o + i, 1.0 - up);
        if (i < 100) s.add(o + i, GX, -100.0 * bump(i, 100));
    }
    (void)style;
}

void render_walking(Tensor2& x, std::size_t start, std::size_t length) {
    for (std::size_t i = 0; i < length; ++i) {
        const std::size_t k = i % 55;
        if (k < 30) {
            x(start + i, AY) += 0.5 * bump(k, 30);
            x(start + i, AX) += 0.25 * bump(k, 30);
        }
        x(start + i, GZ) += 20.0 * std::sin(2.0 * std::numbers::pi * double(i) / 110.0);
    }
}

Plan plan_activity(int class_id, const SyntheticConfig& config, std::mt19937_64& rng) {
    const ClassIds& c = ids();
    const auto& vocab = ClassVocabulary::standard();
    Plan p;
    p.class_id = class_id;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (vocab.is_height_eligible(class_id) || class_id == c.hop) {
        std::pair<double, double> range = config.default_height_range;
        if (class_id == c.hop) {
            range = {kHopMin, kHopMax};
        } else if (auto it = config.height_range.find(vocab.name(class_id)); it != config.height_range.end()) {
            range = it->second;
        }
        p.height = range.first + (range.second - range.first) * unit(rng);
        p.flight = std::max<std::size_t>(1, samples_for(flight_time_s(p.height)));
        const double modulation = 1.0 + 0.03 * (2.0 * unit(rng) - 1.0);
        p.peak = landing_peak_g(class_id, p.height) * modulation;
        p.span = kPropulsion + p.flight + kLanding;
    }
    if (class_id == c.cmj) {
        p.pre = 60, p.post = 40;
    } else if (class_id == c.smash) {
        p.pre = 150, p.post = 60;
    } else if (class_id == c.block) {
        p.pre = 30, p.post = 50;
    } else if (class_id == c.os) {
        p.pre = 100, p.post = 50;
    } else if (class_id == c.hop) {
        p.pre = 20, p.post = 20;
    } else if (class_id == c.squat) {
        p.span = 180;
    } else if (class_id == c.dive) {
        p.pre = 30, p.span = 250, p.post = 150;
    } else {
        throw ValidationError("the generator has no template for class '" + vocab.name(class_id) + "'");
    }
    return p;
}

std::mt19937_64 subject_rng(std::uint64_t seed, std::uint64_t salt, std::size_t subject) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(subject)};
    return std::mt19937_64(seq);
}

std::string subject_name(std::size_t index, std::size_t count) {
    const std::size_t width = std::max<std::size_t>(2, std::to_string(count).size());
    std::string digits = std::to_string(index + 1);
    return "S" + std::string(width - digits.size(), '0') + digits;
}

}  // namespace

void SyntheticConfig::validate() const {
    const auto& vocab = ClassVocabulary::standard();
    if (num_subjects < 1) throw ValidationError("num_subjects must be >= 1");
    if (!(session_duration_s > 0.0)) throw ValidationError("session_duration_s must be > 0");
    if (!(noise_std_g >= 0.0) || !std::isfinite(noise_std_g)) throw ValidationError("noise_std_g must be >= 0");
    if (!(min_gap_s >= 1.0)) throw ValidationError("min_gap_s must be >= 1 s");
    for (const auto& [name, count] : jumps_per_subject) {
        const int id = vocab.index_of(name);
        if (id == 0) throw ValidationError("the background class cannot be scripted");
    }
    auto check_range = [](const std::string& what, const std::pair<double, double>& r) {
        if (!(r.first > 0.0 && r.first <= r.second) || !std::isfinite(r.second)) {
            throw ValidationError("height range for " + what + " must satisfy 0 < min <= max");
        }
    };
    check_range("the default", default_height_range);
    for (const auto& [name, range] : height_range) {
        if (!vocab.is_height_eligible(vocab.index_of(name))) {
            throw ValidationError("class '" + name + "' does not carry a height");
        }
        check_range(name, range);
    }
}

double landing_gain(int class_id) {
    const ClassIds& c = ids();
    if (class_id == c.cmj) return 1.0;
    if (class_id == c.smash) return 1.1;
    if (class_id == c.block) return 0.95;
    if (class_id == c.os) return 1.05;
    if (class_id == c.hop) return 0.8;
    throw ValidationError("class " + std::to_string(class_id) + " has no landing model");
}

double landing_peak_g(int class_id, double height_m) { return landing_gain(class_id) * (3.0 + 8.0 * height_m); }

double height_from_landing_peak(int class_id, double peak_g) {
    return (peak_g / landing_gain(class_id) - 3.0) / 8.0;
}

double flight_time_s(double height_m) { return std::sqrt(8.0 * height_m / kGravity); }

SyntheticDataset synth_generate(const SyntheticConfig& config) {
    config.validate();
    const auto& vocab = ClassVocabulary::standard();
    const std::uint64_t script_seed = config.script_seed.value_or(config.seed);
    const std::size_t N = samples_for(config.session_duration_s);
    const std::size_t min_gap = samples_for(config.min_gap_s);

    SyntheticDataset data;
    for (std::size_t k = 0; k < config.num_subjects; ++k) {
        std::mt19937_64 srng = subject_rng(script_seed, 0x5c819u, k);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(srng); };

        SubjectStyle style{};
        for (int a = 0; a < 3; ++a) {
            style.sway_amp[a] = uniform(0.01, 0.03);
            style.sway_freq[a] = uniform(0.15, 0.5);
            style.sway_phase[a] = uniform(0.0, 2.0 * std::numbers::pi);
        }
        style.tilt_x = uniform(-0.05, 0.05);
        style.tilt_z = uniform(-0.05, 0.05);
        style.gyro_sway = uniform(1.0, 4.0);

        std::vector<int> order;
        for (const auto& [name, count] : config.jumps_per_subject) {
            order.insert(order.end(), count, vocab.index_of(name));
        }
        std::shuffle(order.begin(), order.end(), srng);
        std::vector<Plan> plans;
        for (int id : order) plans.push_back(plan_activity(id, config, srng));

        std::size_t required = (plans.size() + 1) * min_gap;
        for (const auto& p : plans) required += p.footprint();
        if (required > N) {
            throw ValidationError("scripted activities need " + std::to_string(required) +
                                  " samples but the session has " + std::to_string(N) +
                                  "; increase session_duration_s or reduce jumps_per_subject");
        }
        const std::size_t free = N - required;
        std::vector<double> weights(plans.size() + 1);
        for (double& w : weights) w = unit(srng);
        const double wsum = std::max(1e-12, std::accumulate(weights.begin(), weights.end(), 0.0));
        std::vector<std::size_t> gaps(weights.size());
        for (std::size_t g = 0; g < gaps.size(); ++g) {
            gaps[g] = min_gap + static_cast<std::size_t>(std::floor(double(free) * weights[g] / wsum));
        }

        const std::size_t C = kNumChannels;
        Tensor2 x(N, C);
        for (std::size_t t = 0; t < N; ++t) {
            const double sec = double(t) / kSampleRateHz;
            auto sway = [&](int a) {
                return style.sway_amp[a] * std::sin(2.0 * std::numbers::pi * style.sway_freq[a] * sec + style.sway_phase[a]);
            };
            x(t, AX) = style.tilt_x + sway(0);
            x(t, AY) = 1.0 + sway(1);
            x(t, AZ) = style.tilt_z + sway(2);
            x(t, GX) = style.gyro_sway * std::sin(2.0 * std::numbers::pi * 0.3 * sec + style.sway_phase[0]);
            x(t, GY) = style.gyro_sway * std::sin(2.0 * std::numbers::pi * 0.2 * sec + style.sway_phase[1]);
            x(t, GZ) = style.gyro_sway * std::sin(2.0 * std::numbers::pi * 0.25 * sec + style.sway_phase[2]);
        }

        SubjectScript script;
        script.subject_id = subject_name(k, config.num_subjects);
        script.length = N;
        LabelSequence labels(N, 0);
        std::size_t cursor = 0;
        for (std::size_t j = 0; j <= plans.size(); ++j) {
            const std::size_t gap = gaps[j];
            if (config.walking && gap >= 500 && unit(srng) < 0.5) {
                const std::size_t len = std::min<std::size_t>(gap - 200, 400);
                render_walking(x, cursor + (gap - len) / 2, len);
            }
            cursor += gap;
            if (j == plans.size()) break;
            Plan& p = plans[j];
            p.start = cursor;
            render_pre(p, {x, p.start});
            const std::size_t span_start = p.start + p.pre;
            if (p.jumps()) {
                render_jump_span(p, {x, span_start}, style);
            } else if (p.class_id == ids().squat) {
                render_squat(p, {x, span_start});
            } else {
                render_dive(p, {x, span_start}, style);
            }
            render_post(p, {x, span_start + p.span});
            std::fill(labels.begin() + std::ptrdiff_t(span_start),
                      labels.begin() + std::ptrdiff_t(span_start + p.span), p.class_id);

            ScriptedActivity act;
            act.segment = {span_start, span_start + p.span, p.class_id};
            act.height_m = p.height;
            if (p.jumps()) {
                act.flight_time_s = flight_time_s(p.height);
                act.flight_start = span_start + kPropulsion;
                act.flight_samples = p.flight;
                act.landing_peak_g = p.peak;
            }
            if (vocab.is_height_eligible(p.class_id)) {
                data.heights.push_back({script.subject_id, act.segment, p.height});
            }
            script.activities.push_back(act);
            cursor += p.footprint();
        }

        if (config.noise_std_g > 0.0) {
            std::mt19937_64 nrng = subject_rng(config.seed, 0x9015eu, k);
            std::normal_distribution<double> accel(0.0, config.noise_std_g);
            std::normal_distribution<double> gyro(0.0, kGyroNoisePerG * config.noise_std_g);
            for (std::size_t t = 0; t < N; ++t) {
                for (std::size_t c = 0; c < 3; ++c) x(t, c) += accel(nrng);
                for (std::size_t c = 3; c < 6; ++c) x(t, c) += gyro(nrng);
            }
        }

        ImuSession session;
        session.subject_id = script.subject_id;
        session.samples = std::move(x);
        session.labels = std::move(labels);
        data.sessions.push_back(std::move(session));
        data.scripts.push_back(std::move(script));
    }
    return data;
}

}  // namespace vjump
