#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "vjump/segmentation.hpp"

namespace vjump {

/// Bland-Altman agreement over differences d = truth - prediction.
struct AgreementStats {
    double mean_diff = 0.0;
    double std_diff = 0.0;  // sample std (ddof = 1)
    double loa_low = 0.0;   // mean - 1.96 std
    double loa_high = 0.0;  // mean + 1.96 std
    std::size_t n = 0;
};

AgreementStats agreement_from_diffs(std::span<const double> diffs);
/// Per-subject counts; diff = truth - pred, so over-counting gives a negative mean.
AgreementStats limits_of_agreement(std::span<const int> pred_counts, std::span<const int> truth_counts);

struct PrecisionRecall {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

PrecisionRecall precision_recall(const ClassCounts& counts);

struct SegMetrics {
    double iou_threshold = kDefaultIouThreshold;
    std::map<int, PrecisionRecall> per_class;
    PrecisionRecall overall;  // micro average over summed counts
};

SegMetrics precision_recall_f1(const MatchResult& match);
/// Same, from counts already summed over several matches.
SegMetrics precision_recall_f1(const std::map<int, ClassCounts>& per_class, double iou_threshold);

double r_squared(std::span<const double> truth, std::span<const double> pred);
double rmse(std::span<const double> truth, std::span<const double> pred);
/// Mean absolute percentage error as a fraction.
double mape(std::span<const double> truth, std::span<const double> pred);
double pearson_r(std::span<const double> truth, std::span<const double> pred);

struct RegMetrics {
    double r2 = 0.0;
    double rmse = 0.0;
    double mape = 0.0;
    double pearson_r = 0.0;
    std::size_t n = 0;
};

RegMetrics regression_metrics(std::span<const double> truth, std::span<const double> pred);

struct BlandAltmanPoint {
    double mean = 0.0;  // (truth + pred) / 2
    double diff = 0.0;  // truth - pred
};

struct BlandAltman {
    std::vector<BlandAltmanPoint> points;
    AgreementStats stats;
};

BlandAltman bland_altman_points(std::span<const double> truth, std::span<const double> pred);

}  // namespace vjump
