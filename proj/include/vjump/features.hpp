#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vjump/session.hpp"
#include "vjump/tensor.hpp"
#include "vjump/vocabulary.hpp"

namespace vjump {

inline constexpr std::size_t kFeaturesPerChannel = 24;
inline constexpr std::size_t kFeatureVectorLength = kFeaturesPerChannel * kNumChannels + 1;  // 145
inline constexpr std::string_view kFeatureCatalogVersion = "har24-v1";

struct FeatureInfo {
    std::string_view name;
    // f(a * x) = a^degree * f(x) for a > 0
    int homogeneity_degree;
    bool frequency_domain;
};

/// 16 time-domain then 8 frequency-domain features, in extraction order.
const std::array<FeatureInfo, kFeaturesPerChannel>& feature_catalog();

struct PowerSpectrum {
    std::vector<double> frequencies;  // k * fs / W, k = 0 .. W/2
    std::vector<double> power;        // one-sided; sums to sum((x - mean)^2)
};

/// One-sided power spectrum of the mean-removed signal. Throws ValidationError if W < 2.
PowerSpectrum power_spectrum(std::span<const double> signal, double fs = kSampleRateHz);
/// Normalized Shannon entropy of the non-DC bins, in [0, 1]. 0 for an all-zero spectrum.
double spectral_entropy_from_power(std::span<const double> power);
double spectral_entropy(std::span<const double> signal, double fs = kSampleRateHz);

/// The 24 catalog features of one channel. Throws ValidationError if W < 4.
std::array<double, kFeaturesPerChannel> extract_channel_features(std::span<const double> signal,
                                                                 double fs = kSampleRateHz);

struct FeatureVector {
    std::vector<double> values;
    std::string catalog_version{kFeatureCatalogVersion};
};

/// "ax_max", ..., "gz_band_power_5_20hz", "jump_type".
const std::vector<std::string>& feature_names();

/// 24 features for each of ax..gz, then the jump type as the ordinal among height-eligible classes.
FeatureVector extract_feature_vector(const Tensor2& window, int class_id, const ClassVocabulary& vocab,
                                     double fs = kSampleRateHz);

}  // namespace vjump
