#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vjump/io.hpp"
#include "vjump/session.hpp"

namespace vjump {

inline constexpr double kGravity = 9.81;

struct SyntheticConfig {
    std::size_t num_subjects = 10;
    /// Activities per subject, by class name.
    std::map<std::string, std::size_t> jumps_per_subject = {
        {"CMJ", 8}, {"Smash", 7}, {"Block", 7}, {"OS", 4}, {"Squat", 2}, {"Dive", 1}, {"Hop", 2}};
    double session_duration_s = 120.0;
    double noise_std_g = 0.05;
    /// Noise seed; also the script seed unless `script_seed` is set.
    std::uint64_t seed = 42;
    std::optional<std::uint64_t> script_seed;
    /// Height range per height-eligible class; classes not listed use `default_height_range`.
    std::map<std::string, std::pair<double, double>> height_range;
    std::pair<double, double> default_height_range = {0.15, 0.60};
    double min_gap_s = 1.0;
    /// Whether long gaps may contain walking bouts.
    bool walking = true;

    void validate() const;
};

/// One scripted activity, in sample indices of its session.
struct ScriptedActivity {
    Segment segment;             // labeled span (takeoff onset to landing end for jumps)
    double height_m = 0.0;       // 0 for activities without flight
    double flight_time_s = 0.0;  // sqrt(8 h / g)
    std::size_t flight_start = 0;
    std::size_t flight_samples = 0;
    double landing_peak_g = 0.0;  // peak vertical acceleration at landing
};

struct SubjectScript {
    std::string subject_id;
    std::size_t length = 0;
    std::vector<ScriptedActivity> activities;
};

struct SyntheticDataset {
    std::vector<ImuSession> sessions;
    std::vector<HeightRecord> heights;
    std::vector<SubjectScript> scripts;
};

/// Class-dependent gain of the landing spike.
double landing_gain(int class_id);
/// Nominal peak: gain * (3 + 8 h) g; the generator adds a small per-jump modulation.
double landing_peak_g(int class_id, double height_m);
/// Inverse of landing_peak_g.
double height_from_landing_peak(int class_id, double peak_g);
double flight_time_s(double height_m);

SyntheticDataset synth_generate(const SyntheticConfig& config);

}  // namespace vjump
