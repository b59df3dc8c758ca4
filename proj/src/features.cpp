#include "vjump/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>

#include <fftw3.h>

#include "vjump/error.hpp"

namespace vjump {

namespace {

enum Feature : std::size_t {
    kMax, kMin, kMean, kMedian, kStd, kVariance, kRms, kPeakToPeak, kIqr, kSkewness, kKurtosis,
    kMeanAbsDiff, kZeroCrossingRate, kSignalEnergy, kAutocorrLag1, kLinearSlope,
    kSpectralEntropy, kSpectralCentroid, kSpectralSpread, kDominantFrequency, kDominantMagnitude,
    kSpectralRolloff85, kBandPower0to5, kBandPower5to20,
};

// fftw planning is not thread-safe; executing an existing plan on new aligned arrays is.
class PlanCache {
public:
    fftw_plan get(std::size_t n) {
        std::lock_guard lock(mutex_);
        auto it = plans_.find(n);
        if (it != plans_.end()) return it->second;
        double* in = fftw_alloc_real(n);
        fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
        fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
        fftw_free(in);
        fftw_free(out);
        plans_.emplace(n, plan);
        return plan;
    }
    ~PlanCache() {
        for (auto& [n, p] : plans_) fftw_destroy_plan(p);
    }

private:
    std::mutex mutex_;
    std::map<std::size_t, fftw_plan> plans_;
};

PlanCache& plan_cache() {
    static PlanCache cache;
    return cache;
}

struct FftwDeleter {
    void operator()(void* p) const { fftw_free(p); }
};

double quantile(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

const std::array<FeatureInfo, kFeaturesPerChannel>& feature_catalog() {
    static const std::array<FeatureInfo, kFeaturesPerChannel> catalog = {{
        {"max", 1, false},
        {"min", 1, false},
        {"mean", 1, false},
        {"median", 1, false},
        {"std", 1, false},
        {"variance", 2, false},
        {"rms", 1, false},
        {"peak_to_peak", 1, false},
        {"iqr", 1, false},
        {"skewness", 0, false},
        {"kurtosis", 0, false},
        {"mean_abs_diff", 1, false},
        {"zero_crossing_rate", 0, false},
        {"signal_energy", 2, false},
        {"autocorr_lag1", 0, false},
        {"linear_slope", 1, false},
        {"spectral_entropy", 0, true},
        {"spectral_centroid", 0, true},
        {"spectral_spread", 0, true},
        {"dominant_frequency", 0, true},
        {"dominant_magnitude", 1, true},
        {"spectral_rolloff_85", 0, true},
        {"band_power_0_5hz", 2, true},
        {"band_power_5_20hz", 2, true},
    }};
    return catalog;
}

PowerSpectrum power_spectrum(std::span<const double> signal, double fs) {
    const std::size_t W = signal.size();
    if (W < 2) throw ValidationError("power_spectrum needs at least 2 samples, got " + std::to_string(W));
    if (!(fs > 0.0)) throw ValidationError("sampling rate must be positive");
    const double mean = std::accumulate(signal.begin(), signal.end(), 0.0) / static_cast<double>(W);
    const std::size_t bins = W / 2 + 1;

    std::unique_ptr<double, FftwDeleter> in(fftw_alloc_real(W));
    std::unique_ptr<fftw_complex, FftwDeleter> out(fftw_alloc_complex(bins));
    for (std::size_t i = 0; i < W; ++i) in.get()[i] = signal[i] - mean;
    fftw_execute_dft_r2c(plan_cache().get(W), in.get(), out.get());

    PowerSpectrum ps;
    ps.frequencies.resize(bins);
    ps.power.resize(bins);
    const double inv_w = 1.0 / static_cast<double>(W);
    for (std::size_t k = 0; k < bins; ++k) {
        const double re = out.get()[k][0];
        const double im = out.get()[k][1];
        // Interior bins stand for a +/- frequency pair.
        const bool paired = k != 0 && !(W % 2 == 0 && k == W / 2);
        ps.power[k] = (paired ? 2.0 : 1.0) * (re * re + im * im) * inv_w;
        ps.frequencies[k] = static_cast<double>(k) * fs * inv_w;
    }
    return ps;
}

double spectral_entropy_from_power(std::span<const double> power) {
    if (power.size() < 3) return 0.0;  // needs at least two non-DC bins
    const auto bins = power.subspan(1);
    const double total = std::accumulate(bins.begin(), bins.end(), 0.0);
    if (!(total > 0.0)) return 0.0;
    double h = 0.0;
    for (double p : bins) {
        const double q = p / total;
        if (q > 0.0) h -= q * std::log(q);
    }
    return std::clamp(h / std::log(static_cast<double>(bins.size())), 0.0, 1.0);
}

double spectral_entropy(std::span<const double> signal, double fs) {
    return spectral_entropy_from_power(power_spectrum(signal, fs).power);
}

std::array<double, kFeaturesPerChannel> extract_channel_features(std::span<const double> x, double fs) {
    const std::size_t W = x.size();
    if (W < 4) throw ValidationError("feature extraction needs at least 4 samples, got " + std::to_string(W));
    std::array<double, kFeaturesPerChannel> f{};
    const double n = static_cast<double>(W);

    const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double max_abs = std::max(std::abs(*mn), std::abs(*mx));
    // Deviations below this are rounding residue of the mean, not signal.
    const double tiny = 1e-12 * max_abs;

    double m2 = 0.0, m3 = 0.0, m4 = 0.0, sumsq = 0.0, mad = 0.0, lag1 = 0.0;
    std::vector<double> d(W);
    for (std::size_t i = 0; i < W; ++i) {
        d[i] = x[i] - mean;
        const double d2 = d[i] * d[i];
        m2 += d2;
        m3 += d2 * d[i];
        m4 += d2 * d2;
        sumsq += x[i] * x[i];
        if (i > 0) {
            mad += std::abs(x[i] - x[i - 1]);
            lag1 += d[i] * d[i - 1];
        }
    }
    const double ss = m2;  // sum of squared deviations
    m2 /= n;
    m3 /= n;
    m4 /= n;
    const bool flat = m2 <= tiny * tiny;

    std::vector<double> sorted(x.begin(), x.end());
    std::sort(sorted.begin(), sorted.end());

    f[kMax] = *mx;
    f[kMin] = *mn;
    f[kMean] = mean;
    f[kMedian] = quantile(sorted, 0.5);
    f[kVariance] = flat ? 0.0 : ss / (n - 1.0);
    f[kStd] = std::sqrt(f[kVariance]);
    f[kRms] = std::sqrt(sumsq / n);
    f[kPeakToPeak] = *mx - *mn;
    f[kIqr] = quantile(sorted, 0.75) - quantile(sorted, 0.25);
    f[kSkewness] = flat ? 0.0 : m3 / std::pow(m2, 1.5);
    f[kKurtosis] = flat ? 0.0 : m4 / (m2 * m2) - 3.0;
    f[kMeanAbsDiff] = mad / (n - 1.0);
    f[kSignalEnergy] = sumsq;
    f[kAutocorrLag1] = flat ? 0.0 : lag1 / ss;

    std::size_t crossings = 0;
    if (!flat) {
        int last_sign = 0;
        for (double v : d) {
            if (std::abs(v) <= tiny) continue;
            const int s = v > 0.0 ? 1 : -1;
            if (last_sign != 0 && s != last_sign) ++crossings;
            last_sign = s;
        }
    }
    f[kZeroCrossingRate] = static_cast<double>(crossings) / (n - 1.0);

    const double t_mean = (n - 1.0) / 2.0;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < W; ++i) {
        const double ti = static_cast<double>(i) - t_mean;
        sxy += ti * d[i];
        sxx += ti * ti;
    }
    f[kLinearSlope] = flat ? 0.0 : sxy / sxx;

    if (!flat) {
        const PowerSpectrum ps = power_spectrum(x, fs);
        const std::size_t bins = ps.power.size();
        double total = 0.0;
        for (std::size_t k = 1; k < bins; ++k) total += ps.power[k];
        if (total > 0.0) {
            f[kSpectralEntropy] = spectral_entropy_from_power(ps.power);
            double centroid = 0.0;
            std::size_t peak = 1;
            for (std::size_t k = 1; k < bins; ++k) {
                centroid += ps.frequencies[k] * ps.power[k] / total;
                if (ps.power[k] > ps.power[peak]) peak = k;
            }
            double spread = 0.0, cumulative = 0.0, band_lo = 0.0, band_hi = 0.0;
            double rolloff = ps.frequencies.back();
            bool rolled = false;
            for (std::size_t k = 1; k < bins; ++k) {
                const double df = ps.frequencies[k] - centroid;
                spread += df * df * ps.power[k] / total;
                cumulative += ps.power[k];
                if (!rolled && cumulative >= 0.85 * total) {
                    rolloff = ps.frequencies[k];
                    rolled = true;
                }
                if (ps.frequencies[k] < 5.0) band_lo += ps.power[k];
                else if (ps.frequencies[k] < 20.0) band_hi += ps.power[k];
            }
            f[kSpectralCentroid] = centroid;
            f[kSpectralSpread] = std::sqrt(spread);
            f[kDominantFrequency] = ps.frequencies[peak];
            f[kDominantMagnitude] = std::sqrt(ps.power[peak]);
            f[kSpectralRolloff85] = rolloff;
            f[kBandPower0to5] = band_lo;
            f[kBandPower5to20] = band_hi;
        }
    }
    return f;
}

const std::vector<std::string>& feature_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        out.reserve(kFeatureVectorLength);
        for (auto ch : kChannelNames) {
            for (const auto& info : feature_catalog()) out.push_back(std::string(ch) + "_" + std::string(info.name));
        }
        out.emplace_back("jump_type");
        return out;
    }();
    return names;
}

FeatureVector extract_feature_vector(const Tensor2& window, int class_id, const ClassVocabulary& vocab, double fs) {
    if (window.cols() != kNumChannels) {
        throw DimensionError("feature window has " + std::to_string(window.cols()) + " channels, expected 6");
    }
    const int ordinal = vocab.eligible_ordinal(class_id);
    FeatureVector fv;
    fv.values.reserve(kFeatureVectorLength);
    std::vector<double> channel(window.rows());
    for (std::size_t c = 0; c < kNumChannels; ++c) {
        for (std::size_t t = 0; t < window.rows(); ++t) channel[t] = window(t, c);
        const auto f = extract_channel_features(channel, fs);
        fv.values.insert(fv.values.end(), f.begin(), f.end());
    }
    fv.values.push_back(static_cast<double>(ordinal));
    return fv;
}

}  // namespace vjump
