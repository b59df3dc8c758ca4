#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "vjump/nn.hpp"
#include "vjump/tensor.hpp"
#include "vjump/vocabulary.hpp"

namespace vjump {

inline constexpr std::size_t kDefaultRoiWidth = 300;     // 3 s at 100 Hz
inline constexpr std::size_t kDefaultMinDuration = 10;   // 0.1 s at 100 Hz
inline constexpr double kDefaultIouThreshold = 0.1;

/// Half-open run [start, end) of one non-background class.
struct Segment {
    std::size_t start = 0;
    std::size_t end = 0;
    int class_id = 0;

    std::size_t length() const noexcept { return end - start; }
    std::size_t midpoint() const noexcept { return (start + end) / 2; }

    friend auto operator<=>(const Segment&, const Segment&) = default;
};

/// Fixed-width analysis window around a segment. [window_start, window_end) is the part
/// inside the recording; left_pad/right_pad zeros complete it to the full width.
struct Roi {
    Segment segment;
    std::size_t window_start = 0;
    std::size_t window_end = 0;
    std::size_t left_pad = 0;
    std::size_t right_pad = 0;

    std::size_t width() const noexcept { return window_end - window_start + left_pad + right_pad; }

    friend bool operator==(const Roi&, const Roi&) = default;
};

std::vector<Segment> extract_segments(std::span<const int> labels, const ClassVocabulary& vocab);
/// Throws ValidationError on overlapping or out-of-range segments.
LabelSequence segments_to_labels(std::span<const Segment> segments, std::size_t length,
                                 const ClassVocabulary& vocab);
std::vector<Segment> min_duration_filter(std::span<const Segment> segments,
                                         std::size_t min_len = kDefaultMinDuration);
/// Keeps segments whose class carries a height (CMJ, Smash, Block, OS).
std::vector<Segment> height_eligible_only(std::span<const Segment> segments, const ClassVocabulary& vocab);

Roi select_roi(const Segment& segment, std::size_t length, std::size_t width = kDefaultRoiWidth);
/// Copies the ROI out of an N x C recording, zero-filling the padding.
Tensor2 roi_window(const Tensor2& samples, const Roi& roi);

double iou(const Segment& a, const Segment& b);

struct MatchedPair {
    std::size_t pred_index = 0;
    std::size_t truth_index = 0;
    double iou = 0.0;
};

struct ClassCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    ClassCounts& operator+=(const ClassCounts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
    friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

struct MatchResult {
    double threshold = kDefaultIouThreshold;
    std::vector<MatchedPair> pairs;  // in greedy acceptance order
    ClassCounts overall;
    std::map<int, ClassCounts> per_class;
};

/// Greedy one-to-one, class-aware matching in descending IoU. Ties go to the earlier truth
/// start, then the earlier prediction start. Pairs need iou >= threshold and a non-empty overlap.
MatchResult match_segments(std::span<const Segment> pred, std::span<const Segment> truth,
                           double threshold = kDefaultIouThreshold);

struct JumpCounts {
    std::map<int, std::size_t> per_class;  // every height-eligible class, zero included
    std::size_t total = 0;
};

JumpCounts jump_counts(std::span<const Segment> segments, const ClassVocabulary& vocab);

}  // namespace vjump
