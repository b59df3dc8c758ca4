#include "vjump/segmentation.hpp"

#include <algorithm>
#include <string>

#include "vjump/error.hpp"

namespace vjump {

std::vector<Segment> extract_segments(std::span<const int> labels, const ClassVocabulary& vocab) {
    std::vector<Segment> out;
    std::size_t t = 0;
    while (t < labels.size()) {
        const int c = labels[t];
        if (!vocab.contains(c)) {
            throw ValidationError("label " + std::to_string(c) + " at sample " + std::to_string(t) +
                                  " is outside the vocabulary");
        }
        std::size_t end = t + 1;
        while (end < labels.size() && labels[end] == c) ++end;
        if (c != 0) out.push_back({t, end, c});
        t = end;
    }
    return out;
}

LabelSequence segments_to_labels(std::span<const Segment> segments, std::size_t length,
                                 const ClassVocabulary& vocab) {
    LabelSequence labels(length, 0);
    std::vector<bool> used(length, false);
    for (const auto& s : segments) {
        if (s.start >= s.end || s.end > length) {
            throw ValidationError("segment [" + std::to_string(s.start) + ", " + std::to_string(s.end) +
                                  ") outside [0, " + std::to_string(length) + ")");
        }
        if (!vocab.contains(s.class_id) || s.class_id == 0) {
            throw ValidationError("segment class " + std::to_string(s.class_id) + " is not a foreground class");
        }
        for (std::size_t t = s.start; t < s.end; ++t) {
            if (used[t]) throw ValidationError("overlapping segments at sample " + std::to_string(t));
            used[t] = true;
            labels[t] = s.class_id;
        }
    }
    return labels;
}

std::vector<Segment> min_duration_filter(std::span<const Segment> segments, std::size_t min_len) {
    std::vector<Segment> out;
    std::copy_if(segments.begin(), segments.end(), std::back_inserter(out),
                 [&](const Segment& s) { return s.length() >= min_len; });
    return out;
}

std::vector<Segment> height_eligible_only(std::span<const Segment> segments, const ClassVocabulary& vocab) {
    std::vector<Segment> out;
    std::copy_if(segments.begin(), segments.end(), std::back_inserter(out),
                 [&](const Segment& s) { return vocab.is_height_eligible(s.class_id); });
    return out;
}

Roi select_roi(const Segment& segment, std::size_t length, std::size_t width) {
    if (segment.start >= segment.end || segment.end > length) {
        throw ValidationError("select_roi: segment outside the recording");
    }
    if (width == 0) throw ValidationError("select_roi: width must be positive");
    const auto mid = static_cast<std::ptrdiff_t>(segment.midpoint());
    const std::ptrdiff_t lo = mid - static_cast<std::ptrdiff_t>(width / 2);
    const std::ptrdiff_t hi = lo + static_cast<std::ptrdiff_t>(width);
    const auto n = static_cast<std::ptrdiff_t>(length);
    Roi roi;
    roi.segment = segment;
    roi.window_start = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(lo, 0, n));
    roi.window_end = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(hi, 0, n));
    roi.left_pad = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -lo));
    roi.right_pad = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, hi - n));
    // Windows wider than the recording pad on both sides.
    roi.left_pad = std::min(roi.left_pad, width);
    roi.right_pad = width - roi.left_pad - (roi.window_end - roi.window_start);
    return roi;
}

Tensor2 roi_window(const Tensor2& samples, const Roi& roi) {
    if (roi.window_end > samples.rows() || roi.window_start > roi.window_end) {
        throw DimensionError("roi_window: window exceeds the recording");
    }
    Tensor2 out(roi.width(), samples.cols());
    for (std::size_t t = roi.window_start; t < roi.window_end; ++t) {
        const auto src = samples.row(t);
        std::copy(src.begin(), src.end(), out.row(roi.left_pad + (t - roi.window_start)).begin());
    }
    return out;
}

double iou(const Segment& a, const Segment& b) {
    const std::size_t lo = std::max(a.start, b.start);
    const std::size_t hi = std::min(a.end, b.end);
    const std::size_t inter = hi > lo ? hi - lo : 0;
    const std::size_t uni = a.length() + b.length() - inter;
    if (uni == 0) return 0.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

MatchResult match_segments(std::span<const Segment> pred, std::span<const Segment> truth, double threshold) {
    MatchResult result;
    result.threshold = threshold;
    std::vector<MatchedPair> candidates;
    for (std::size_t p = 0; p < pred.size(); ++p) {
        for (std::size_t t = 0; t < truth.size(); ++t) {
            if (pred[p].class_id != truth[t].class_id) continue;
            const double v = iou(pred[p], truth[t]);
            if (v > 0.0 && v >= threshold) candidates.push_back({p, t, v});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [&](const MatchedPair& a, const MatchedPair& b) {
        if (a.iou != b.iou) return a.iou > b.iou;
        if (truth[a.truth_index].start != truth[b.truth_index].start)
            return truth[a.truth_index].start < truth[b.truth_index].start;
        if (pred[a.pred_index].start != pred[b.pred_index].start)
            return pred[a.pred_index].start < pred[b.pred_index].start;
        return std::pair(a.truth_index, a.pred_index) < std::pair(b.truth_index, b.pred_index);
    });
    std::vector<bool> pred_used(pred.size(), false), truth_used(truth.size(), false);
    for (const auto& c : candidates) {
        if (pred_used[c.pred_index] || truth_used[c.truth_index]) continue;
        pred_used[c.pred_index] = truth_used[c.truth_index] = true;
        result.pairs.push_back(c);
        ++result.per_class[truth[c.truth_index].class_id].tp;
    }
    for (std::size_t p = 0; p < pred.size(); ++p) {
        if (!pred_used[p]) ++result.per_class[pred[p].class_id].fp;
    }
    for (std::size_t t = 0; t < truth.size(); ++t) {
        if (!truth_used[t]) ++result.per_class[truth[t].class_id].fn;
    }
    for (const auto& [cls, counts] : result.per_class) result.overall += counts;
    return result;
}

JumpCounts jump_counts(std::span<const Segment> segments, const ClassVocabulary& vocab) {
    JumpCounts counts;
    for (int c : vocab.eligible_classes()) counts.per_class[c] = 0;
    for (const auto& s : segments) {
        if (!vocab.is_height_eligible(s.class_id)) continue;
        ++counts.per_class[s.class_id];
        ++counts.total;
    }
    return counts;
}

}  // namespace vjump
