#include "vjump/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vjump/error.hpp"

namespace vjump {

namespace {

void require_pair(std::span<const double> a, std::span<const double> b, std::size_t min_n, const char* what) {
    if (a.size() != b.size()) {
        throw DimensionError(std::string(what) + ": length " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()));
    }
    if (a.size() < min_n) {
        throw ValidationError(std::string(what) + " needs at least " + std::to_string(min_n) + " values");
    }
}

double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

AgreementStats agreement_from_diffs(std::span<const double> diffs) {
    if (diffs.size() < 2) throw ValidationError("limits of agreement need at least 2 differences");
    AgreementStats s;
    s.n = diffs.size();
    s.mean_diff = mean_of(diffs);
    double ss = 0.0;
    for (double d : diffs) ss += (d - s.mean_diff) * (d - s.mean_diff);
    s.std_diff = std::sqrt(ss / static_cast<double>(s.n - 1));
    s.loa_low = s.mean_diff - 1.96 * s.std_diff;
    s.loa_high = s.mean_diff + 1.96 * s.std_diff;
    return s;
}

AgreementStats limits_of_agreement(std::span<const int> pred_counts, std::span<const int> truth_counts) {
    if (pred_counts.size() != truth_counts.size()) {
        throw DimensionError("limits_of_agreement: " + std::to_string(pred_counts.size()) + " predictions vs " +
                             std::to_string(truth_counts.size()) + " truths");
    }
    std::vector<double> diffs(pred_counts.size());
    for (std::size_t i = 0; i < diffs.size(); ++i) diffs[i] = double(truth_counts[i]) - double(pred_counts[i]);
    return agreement_from_diffs(diffs);
}

PrecisionRecall precision_recall(const ClassCounts& c) {
    PrecisionRecall m;
    m.tp = c.tp;
    m.fp = c.fp;
    m.fn = c.fn;
    m.precision = ratio(c.tp, c.tp + c.fp);
    m.recall = ratio(c.tp, c.tp + c.fn);
    const double denom = m.precision + m.recall;
    m.f1 = denom > 0.0 ? 2.0 * m.precision * m.recall / denom : 0.0;
    return m;
}

SegMetrics precision_recall_f1(const std::map<int, ClassCounts>& per_class, double iou_threshold) {
    SegMetrics m;
    m.iou_threshold = iou_threshold;
    ClassCounts total;
    for (const auto& [cls, counts] : per_class) {
        m.per_class[cls] = precision_recall(counts);
        total += counts;
    }
    m.overall = precision_recall(total);
    return m;
}

SegMetrics precision_recall_f1(const MatchResult& match) {
    return precision_recall_f1(match.per_class, match.threshold);
}

double r_squared(std::span<const double> truth, std::span<const double> pred) {
    require_pair(truth, pred, 2, "r_squared");
    const double mu = mean_of(truth);
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
        ss_tot += (truth[i] - mu) * (truth[i] - mu);
    }
    if (!(ss_tot > 0.0)) throw ValidationError("r_squared: truth values are constant");
    return 1.0 - ss_res / ss_tot;
}

double rmse(std::span<const double> truth, std::span<const double> pred) {
    require_pair(truth, pred, 1, "rmse");
    double s = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) s += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    return std::sqrt(s / static_cast<double>(truth.size()));
}

double mape(std::span<const double> truth, std::span<const double> pred) {
    require_pair(truth, pred, 1, "mape");
    double s = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] == 0.0) throw ValidationError("mape: truth value " + std::to_string(i) + " is zero");
        s += std::abs(truth[i] - pred[i]) / std::abs(truth[i]);
    }
    return s / static_cast<double>(truth.size());
}

double pearson_r(std::span<const double> truth, std::span<const double> pred) {
    require_pair(truth, pred, 2, "pearson_r");
    const double mt = mean_of(truth), mp = mean_of(pred);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        sxy += (truth[i] - mt) * (pred[i] - mp);
        sxx += (truth[i] - mt) * (truth[i] - mt);
        syy += (pred[i] - mp) * (pred[i] - mp);
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) throw ValidationError("pearson_r: constant series");
    return std::clamp(sxy / (std::sqrt(sxx) * std::sqrt(syy)), -1.0, 1.0);
}

RegMetrics regression_metrics(std::span<const double> truth, std::span<const double> pred) {
    RegMetrics m;
    m.n = truth.size();
    m.r2 = r_squared(truth, pred);
    m.rmse = rmse(truth, pred);
    m.mape = mape(truth, pred);
    m.pearson_r = pearson_r(truth, pred);
    return m;
}

BlandAltman bland_altman_points(std::span<const double> truth, std::span<const double> pred) {
    require_pair(truth, pred, 2, "bland_altman_points");
    BlandAltman ba;
    std::vector<double> diffs;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ba.points.push_back({(truth[i] + pred[i]) / 2.0, truth[i] - pred[i]});
        diffs.push_back(truth[i] - pred[i]);
    }
    ba.stats = agreement_from_diffs(diffs);
    return ba;
}

}  // namespace vjump
