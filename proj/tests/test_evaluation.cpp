#include <doctest.h>

#include <algorithm>
#include <set>

#include "vjump/error.hpp"
#include "vjump/evaluation.hpp"

using namespace vjump;

namespace {

SyntheticDataset small_dataset(std::size_t subjects) {
    SyntheticConfig c;
    c.num_subjects = subjects;
    c.seed = 3;
    return synth_generate(c);
}

SegmenterFactory oracle_segmenter() {
    return [](std::span<const ImuSession>) -> Segmenter { return [](const ImuSession& s) { return *s.labels; }; };
}

HeightModelFactory oracle_heights(const std::vector<HeightRecord>& heights) {
    return [&heights](const Tensor2&, std::span<const double>) -> HeightModel {
        return [&heights](const JumpContext& j) {
            for (const auto& h : heights) {
                if (h.subject_id == j.session->subject_id && h.segment == j.segment) return h.height_m;
            }
            FAIL("no height for segment");
            return 0.0;
        };
    };
}

}  // namespace

TEST_CASE("loso_split partitions subjects") {
    std::vector<std::string> ids;
    for (int i = 10; i >= 1; --i) ids.push_back("P" + std::to_string(100 + i));
    const auto folds = loso_split(ids);
    REQUIRE(folds.size() == 10);
    std::set<std::string> tested;
    for (std::size_t k = 0; k < folds.size(); ++k) {
        const auto& f = folds[k];
        CHECK(f.index == k);
        CHECK(f.train_subjects.size() == 9);
        CHECK(std::find(f.train_subjects.begin(), f.train_subjects.end(), f.test_subject) == f.train_subjects.end());
        CHECK(tested.insert(f.test_subject).second);
        std::set<std::string> all(f.train_subjects.begin(), f.train_subjects.end());
        all.insert(f.test_subject);
        CHECK(all == std::set<std::string>(ids.begin(), ids.end()));
    }
    CHECK(folds.front().test_subject == "P101");
    CHECK(loso_split(std::vector<std::string>{"b", "a"}).size() == 2);
    CHECK_THROWS_AS(loso_split(std::vector<std::string>{"a", "b", "a"}), ValidationError);
    CHECK_THROWS_AS(loso_split(std::vector<std::string>{"a"}), ValidationError);
}

TEST_CASE("pipeline with oracle stages is perfect") {
    const SyntheticDataset d = small_dataset(3);
    PipelineConfig cfg;
    const EvalReport r = run_pipeline_eval(d.sessions, d.heights, cfg, oracle_segmenter(), oracle_heights(d.heights));
    CHECK(r.seg.overall.f1 == 1.0);
    CHECK(r.seg.overall.tp == d.heights.size());
    REQUIRE(r.reg);
    CHECK(r.reg->r2 == 1.0);
    CHECK(r.reg->rmse == 0.0);
    REQUIRE(r.count_loa);
    CHECK(r.count_loa->mean_diff == 0.0);
    CHECK(r.count_loa->std_diff == 0.0);
    CHECK(r.jumps.size() == d.heights.size());
    CHECK(r.folds.size() == 3);
    for (const auto& f : r.folds) CHECK(f.training_jumps == 2 * 26);
}

TEST_CASE("pipeline report keys and config echo") {
    const SyntheticDataset d = small_dataset(2);
    PipelineConfig cfg;
    cfg.roi_width = 256;
    cfg.iou_threshold = 0.3;
    cfg.tcn.seed = 99;
    const EvalReport r = run_pipeline_eval(d.sessions, d.heights, cfg, oracle_segmenter(), oracle_heights(d.heights));
    const auto j = report_to_json(r);
    for (const char* key : {"seg_metrics", "count_loa", "reg_metrics", "bland_altman_points", "config_echo"}) {
        CHECK_MESSAGE(j.contains(key), key);
    }
    CHECK(j["config_echo"]["iou_threshold"] == 0.3);
    CHECK(j["config_echo"]["roi_width"] == 256);
    CHECK(j["config_echo"]["tcn"]["seed"] == 99);
    CHECK(j["config_echo"]["regressor"]["kind"] == "rf");
    CHECK(j["config_echo"]["feature_catalog_version"] == kFeatureCatalogVersion);
    CHECK(j["seg_metrics"]["iou_threshold"] == 0.3);
    CHECK(j["count_loa"]["per_class"].size() == 4);
    CHECK(j["bland_altman_points"]["points"].size() == r.jumps.size());

    const std::string csv = bland_altman_csv(r);
    CHECK(csv.rfind("subject_id,label,truth_m,predicted_m,mean_m,diff_m\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == std::ptrdiff_t(r.jumps.size() + 1));
}

TEST_CASE("over-counting segmenter gives a negative count bias") {
    const SyntheticDataset d = small_dataset(3);
    // adds one spurious CMJ at the very start of every test session
    SegmenterFactory extra = [](std::span<const ImuSession>) -> Segmenter {
        return [](const ImuSession& s) {
            LabelSequence l = *s.labels;
            std::fill(l.begin(), l.begin() + 30, 1);
            return l;
        };
    };
    const EvalReport r = run_pipeline_eval(d.sessions, d.heights, PipelineConfig{}, extra, oracle_heights(d.heights));
    REQUIRE(r.count_loa);
    CHECK(r.count_loa->mean_diff == -1.0);
    CHECK(r.seg.overall.fp == 3);
    CHECK(r.seg.overall.fn == 0);
}

TEST_CASE("pipeline rejects inconsistent inputs") {
    SyntheticDataset d = small_dataset(2);
    std::vector<HeightRecord> missing(d.heights.begin() + 1, d.heights.end());
    CHECK_THROWS_AS(run_pipeline_eval(d.sessions, missing, PipelineConfig{}, oracle_segmenter(), oracle_heights(d.heights)),
                    ValidationError);
    std::vector<ImuSession> dup = {d.sessions[0], d.sessions[0]};
    CHECK_THROWS_AS(run_pipeline_eval(dup, d.heights, PipelineConfig{}, oracle_segmenter(), oracle_heights(d.heights)),
                    ValidationError);
}
