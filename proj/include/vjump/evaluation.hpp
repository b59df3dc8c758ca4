#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vjump/features.hpp"
#include "vjump/io.hpp"
#include "vjump/metrics.hpp"
#include "vjump/regression.hpp"
#include "vjump/segmentation.hpp"
#include "vjump/synth.hpp"
#include "vjump/tcn.hpp"

namespace vjump {

struct LosoFold {
    std::size_t index = 0;
    std::vector<std::string> train_subjects;
    std::string test_subject;
};

/// One fold per subject, in sorted subject-id order.
std::vector<LosoFold> loso_split(std::span<const std::string> subject_ids);

/// Everything a height model may look at for one detected jump.
struct JumpContext {
    const ImuSession* session = nullptr;
    Segment segment;
    FeatureVector features;
};

using Segmenter = std::function<LabelSequence(const ImuSession&)>;
using SegmenterFactory = std::function<Segmenter(std::span<const ImuSession> train)>;
using HeightModel = std::function<double(const JumpContext&)>;
using HeightModelFactory = std::function<HeightModel(const Tensor2& X, std::span<const double> y)>;
using ProgressLog = std::function<void(const std::string&)>;

/// Trains an MS-TCN on the training sessions and segments by row-wise argmax.
SegmenterFactory tcn_segmenter(const MsTcnConfig& config, ProgressLog log = {});
HeightModelFactory feature_regressor(const RegressorSpec& spec);

struct PipelineConfig {
    MsTcnConfig tcn;
    RegressorSpec regressor = RfConfig{};
    std::size_t roi_width = kDefaultRoiWidth;
    std::size_t min_duration = kDefaultMinDuration;
    double iou_threshold = kDefaultIouThreshold;
};

struct JumpResult {
    std::string subject_id;
    Segment truth;
    Segment predicted;
    double truth_height = 0.0;
    double predicted_height = 0.0;
};

struct FoldResult {
    std::size_t index = 0;
    std::string test_subject;
    std::size_t truth_jumps = 0;
    std::size_t predicted_jumps = 0;
    std::map<int, std::size_t> truth_per_class;
    std::map<int, std::size_t> predicted_per_class;
    std::map<int, ClassCounts> counts;
    std::size_t training_jumps = 0;
};

struct EvalReport {
    SegMetrics seg;
    std::optional<AgreementStats> count_loa;
    std::map<int, AgreementStats> count_loa_per_class;
    std::optional<RegMetrics> reg;
    std::optional<BlandAltman> bland_altman;
    std::vector<JumpResult> jumps;
    std::vector<FoldResult> folds;
    nlohmann::json config_echo;
};

/// LOSO: per fold, segment the held-out subject, match eligible predictions to the truth,
/// and predict heights of true-positive jumps with a model fit on the training subjects'
/// annotated jumps. Metrics are pooled across folds.
EvalReport run_pipeline_eval(std::span<const ImuSession> sessions, std::span<const HeightRecord> heights,
                             const PipelineConfig& config, const SegmenterFactory& segmenter,
                             const HeightModelFactory& height_model, ProgressLog log = {});
/// Same, with the MS-TCN segmenter and the configured feature regressor.
EvalReport run_pipeline_eval(std::span<const ImuSession> sessions, std::span<const HeightRecord> heights,
                             const PipelineConfig& config, ProgressLog log = {});

nlohmann::json to_json(const MsTcnConfig& config);
nlohmann::json to_json(const RegressorSpec& spec);
nlohmann::json to_json(const SyntheticConfig& config);
nlohmann::json to_json(const PipelineConfig& config);
nlohmann::json report_to_json(const EvalReport& report);
/// `subject_id,label,truth_m,predicted_m,mean_m,diff_m` per true-positive jump.
std::string bland_altman_csv(const EvalReport& report);

}  // namespace vjump
