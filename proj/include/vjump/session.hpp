#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "vjump/nn.hpp"
#include "vjump/tensor.hpp"

namespace vjump {

inline constexpr std::size_t kNumChannels = 6;
inline constexpr double kSampleRateHz = 100.0;
/// Accelerometer in g, gyroscope in deg/s. The vertical axis is y.
inline constexpr std::array<std::string_view, kNumChannels> kChannelNames = {"ax", "ay", "az",
                                                                             "gx", "gy", "gz"};
inline constexpr std::size_t kVerticalAccelChannel = 1;

/// One participant's continuous recording.
struct ImuSession {
    std::string subject_id;
    double sample_rate_hz = kSampleRateHz;
    double start_time_s = 0.0;  // timestamp of the first sample
    Tensor2 samples;  // N x 6
    std::optional<LabelSequence> labels;

    std::size_t length() const noexcept { return samples.rows(); }
    /// Throws ValidationError unless N >= 1, 6 channels, finite samples and matching label length.
    void validate() const;

    friend bool operator==(const ImuSession&, const ImuSession&) = default;
};

}  // namespace vjump
