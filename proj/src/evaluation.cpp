#include "vjump/evaluation.hpp"

#include <algorithm>
#include <set>

#include "vjump/error.hpp"
#include "vjump/vocabulary.hpp"

namespace vjump {

using nlohmann::json;

namespace {

struct AnnotatedJump {
    Segment segment;
    double height = 0.0;
    FeatureVector features;
};

const HeightRecord* find_height(std::span<const HeightRecord> heights, const std::string& subject, const Segment& s) {
    for (const auto& h : heights) {
        if (h.subject_id == subject && h.segment == s) return &h;
    }
    return nullptr;
}

json stats_json(const AgreementStats& s) {
    return {{"mean_diff", s.mean_diff}, {"std_diff", s.std_diff}, {"loa_low", s.loa_low},
            {"loa_high", s.loa_high}, {"n", s.n}};
}

json pr_json(const PrecisionRecall& m) {
    return {{"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
}

}  // namespace

std::vector<LosoFold> loso_split(std::span<const std::string> subject_ids) {
    std::vector<std::string> ids(subject_ids.begin(), subject_ids.end());
    std::sort(ids.begin(), ids.end());
    if (const auto dup = std::adjacent_find(ids.begin(), ids.end()); dup != ids.end()) {
        throw ValidationError("duplicate subject id '" + *dup + "'");
    }
    if (ids.size() < 2) throw ValidationError("leave-one-subject-out needs at least 2 subjects");
    std::vector<LosoFold> folds;
    for (std::size_t k = 0; k < ids.size(); ++k) {
        LosoFold f;
        f.index = k;
        f.test_subject = ids[k];
        for (std::size_t j = 0; j < ids.size(); ++j) {
            if (j != k) f.train_subjects.push_back(ids[j]);
        }
        folds.push_back(std::move(f));
    }
    return folds;
}

SegmenterFactory tcn_segmenter(const MsTcnConfig& config, ProgressLog log) {
    return [config, log](std::span<const ImuSession> train_sessions) -> Segmenter {
        auto result = std::make_shared<TrainResult>(train(config, train_sessions));
        if (log && !result->loss_history.empty()) {
            log("  segmenter trained: loss " + format_number(result->loss_history.front()) + " -> " +
                format_number(result->loss_history.back()));
        }
        return [result](const ImuSession& s) { return predict(result->weights, s).labels; };
    };
}

HeightModelFactory feature_regressor(const RegressorSpec& spec) {
    return [spec](const Tensor2& X, std::span<const double> y) -> HeightModel {
        auto model = std::make_shared<TrainedRegressor>(fit_regressor(X, y, spec, std::string(kFeatureCatalogVersion)));
        return [model](const JumpContext& jump) { return predict(*model, jump.features); };
    };
}

EvalReport run_pipeline_eval(std::span<const ImuSession> sessions, std::span<const HeightRecord> heights,
                             const PipelineConfig& config, const SegmenterFactory& segmenter,
                             const HeightModelFactory& height_model, ProgressLog log) {
    const ClassVocabulary& vocab = ClassVocabulary::standard();
    if (!(config.iou_threshold > 0.0 && config.iou_threshold <= 1.0)) {
        throw ValidationError("iou threshold must be in (0, 1]");
    }
    if (config.roi_width < 2) throw ValidationError("roi width must be >= 2");
    std::vector<std::string> ids;
    std::map<std::string, const ImuSession*> by_id;
    for (const auto& s : sessions) {
        s.validate();
        if (!s.labels) throw ValidationError("session '" + s.subject_id + "' has no labels");
        ids.push_back(s.subject_id);
        by_id[s.subject_id] = &s;
    }
    const auto folds = loso_split(ids);
    for (const auto& h : heights) {
        if (!by_id.count(h.subject_id)) throw ValidationError("height record for unknown subject '" + h.subject_id + "'");
    }

    // Annotated jumps of every subject, with their features, computed once.
    std::map<std::string, std::vector<AnnotatedJump>> annotated;
    for (const auto& s : sessions) {
        auto& jumps = annotated[s.subject_id];
        for (const Segment& seg : height_eligible_only(extract_segments(*s.labels, vocab), vocab)) {
            const HeightRecord* h = find_height(heights, s.subject_id, seg);
            if (!h) {
                throw ValidationError("no height for " + vocab.name(seg.class_id) + " [" + std::to_string(seg.start) +
                                      ", " + std::to_string(seg.end) + ") of subject '" + s.subject_id + "'");
            }
            const Tensor2 window = roi_window(s.samples, select_roi(seg, s.length(), config.roi_width));
            jumps.push_back({seg, h->height_m, extract_feature_vector(window, seg.class_id, vocab)});
        }
    }

    EvalReport report;
    std::map<int, ClassCounts> pooled;
    std::vector<int> pred_counts, truth_counts;
    std::map<int, std::vector<int>> pred_class_counts, truth_class_counts;
    for (const LosoFold& fold : folds) {
        if (log) log("fold " + std::to_string(fold.index + 1) + "/" + std::to_string(folds.size()) + ": test " + fold.test_subject);
        const ImuSession& test = *by_id.at(fold.test_subject);
        std::vector<ImuSession> train_sessions;
        for (const auto& id : fold.train_subjects) train_sessions.push_back(*by_id.at(id));

        const Segmenter seg = segmenter(train_sessions);
        const LabelSequence labels = seg(test);
        if (labels.size() != test.length()) {
            throw DimensionError("segmenter returned " + std::to_string(labels.size()) + " labels for " +
                                 std::to_string(test.length()) + " samples");
        }
        const std::vector<Segment> predicted = height_eligible_only(
            min_duration_filter(extract_segments(labels, vocab), config.min_duration), vocab);
        const auto& truth_jumps = annotated.at(fold.test_subject);
        std::vector<Segment> truth;
        for (const auto& j : truth_jumps) truth.push_back(j.segment);
        const MatchResult match = match_segments(predicted, truth, config.iou_threshold);

        FoldResult fr;
        fr.index = fold.index;
        fr.test_subject = fold.test_subject;
        fr.truth_jumps = truth.size();
        fr.predicted_jumps = predicted.size();
        fr.counts = match.per_class;
        const JumpCounts pc = jump_counts(predicted, vocab);
        const JumpCounts tc = jump_counts(truth, vocab);
        fr.predicted_per_class = pc.per_class;
        fr.truth_per_class = tc.per_class;
        for (const auto& [cls, c] : match.per_class) pooled[cls] += c;
        pred_counts.push_back(int(predicted.size()));
        truth_counts.push_back(int(truth.size()));
        for (int cls : vocab.eligible_classes()) {
            pred_class_counts[cls].push_back(int(pc.per_class.at(cls)));
            truth_class_counts[cls].push_back(int(tc.per_class.at(cls)));
        }

        if (!match.pairs.empty()) {
            std::vector<const AnnotatedJump*> training;
            for (const auto& id : fold.train_subjects) {
                for (const auto& j : annotated.at(id)) training.push_back(&j);
            }
            fr.training_jumps = training.size();
            if (training.empty()) throw ValidationError("no annotated jumps to train the height model on");
            Tensor2 X(training.size(), kFeatureVectorLength);
            std::vector<double> y;
            for (std::size_t i = 0; i < training.size(); ++i) {
                std::copy(training[i]->features.values.begin(), training[i]->features.values.end(), X.row(i).begin());
                y.push_back(training[i]->height);
            }
            const HeightModel model = height_model(X, y);

            std::vector<MatchedPair> pairs = match.pairs;
            std::sort(pairs.begin(), pairs.end(),
                      [](const MatchedPair& a, const MatchedPair& b) { return a.truth_index < b.truth_index; });
            for (const auto& pair : pairs) {
                const Segment& p = predicted[pair.pred_index];
                JumpContext ctx;
                ctx.session = &test;
                ctx.segment = p;
                ctx.features = extract_feature_vector(roi_window(test.samples, select_roi(p, test.length(), config.roi_width)),
                                                      p.class_id, vocab);
                report.jumps.push_back({test.subject_id, truth[pair.truth_index], p,
                                        truth_jumps[pair.truth_index].height, model(ctx)});
            }
        }
        if (log) {
            log("  jumps: truth " + std::to_string(fr.truth_jumps) + ", predicted " + std::to_string(fr.predicted_jumps) +
                ", matched " + std::to_string(match.overall.tp));
        }
        report.folds.push_back(std::move(fr));
    }

    report.seg = precision_recall_f1(pooled, config.iou_threshold);
    report.count_loa = limits_of_agreement(pred_counts, truth_counts);
    for (int cls : vocab.eligible_classes()) {
        report.count_loa_per_class[cls] = limits_of_agreement(pred_class_counts[cls], truth_class_counts[cls]);
    }
    std::vector<double> t, p;
    for (const auto& j : report.jumps) {
        t.push_back(j.truth_height);
        p.push_back(j.predicted_height);
    }
    if (t.size() >= 2) {
        try {
            report.reg = regression_metrics(t, p);
        } catch (const ValidationError& e) {
            if (log) log(std::string("regression metrics unavailable: ") + e.what());
        }
        report.bland_altman = bland_altman_points(t, p);
    }
    report.config_echo = to_json(config);
    report.config_echo["feature_catalog_version"] = kFeatureCatalogVersion;
    report.config_echo["subjects"] = ids;
    return report;
}

EvalReport run_pipeline_eval(std::span<const ImuSession> sessions, std::span<const HeightRecord> heights,
                             const PipelineConfig& config, ProgressLog log) {
    return run_pipeline_eval(sessions, heights, config, tcn_segmenter(config.tcn, log),
                             feature_regressor(config.regressor), log);
}

json to_json(const MsTcnConfig& c) {
    return {{"num_stages", c.num_stages},
            {"num_layers", c.stage.num_layers},
            {"num_filters", c.stage.num_filters},
            {"kernel_size", c.stage.kernel_size},
            {"in_channels", c.stage.in_channels},
            {"num_classes", c.stage.num_classes},
            {"lambda_tmse", c.loss.lambda_tmse},
            {"tau", c.loss.tau},
            {"epochs", c.epochs},
            {"seed", c.seed},
            {"learning_rate", c.learning_rate},
            {"dropout", c.dropout},
            {"weight_decay", c.weight_decay},
            {"normalize_input", c.normalize_input}};
}

json to_json(const RegressorSpec& spec) {
    return std::visit(
        [](const auto& c) -> json {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, RfConfig>) {
                return {{"kind", "rf"}, {"n_estimators", c.n_estimators}, {"max_depth", c.max_depth},
                        {"max_leaf_nodes", c.max_leaf_nodes}, {"bootstrap", c.bootstrap},
                        {"features_per_split", c.features_per_split}, {"seed", c.seed}};
            } else if constexpr (std::is_same_v<T, GbtConfig>) {
                return {{"kind", "gbt"}, {"eta", c.eta}, {"n_estimators", c.n_estimators},
                        {"max_depth", c.max_depth}, {"gamma", c.gamma}, {"seed", c.seed}};
            } else {
                return {{"kind", "mlp"}, {"hidden_layers", c.hidden_layers}, {"max_iter", c.max_iter},
                        {"learning_rate", c.learning_rate}, {"tol", c.tol},
                        {"n_iter_no_change", c.n_iter_no_change}, {"seed", c.seed}};
            }
        },
        spec);
}

json to_json(const SyntheticConfig& c) {
    json heights = json::object();
    for (const auto& [name, r] : c.height_range) heights[name] = {r.first, r.second};
    json j = {{"num_subjects", c.num_subjects},
              {"jumps_per_subject", c.jumps_per_subject},
              {"session_duration_s", c.session_duration_s},
              {"noise_std_g", c.noise_std_g},
              {"seed", c.seed},
              {"height_range", heights},
              {"default_height_range", {c.default_height_range.first, c.default_height_range.second}},
              {"min_gap_s", c.min_gap_s},
              {"walking", c.walking}};
    j["script_seed"] = c.script_seed ? json(*c.script_seed) : json(nullptr);
    return j;
}

json to_json(const PipelineConfig& c) {
    return {{"tcn", to_json(c.tcn)},
            {"regressor", to_json(c.regressor)},
            {"roi_width", c.roi_width},
            {"min_duration", c.min_duration},
            {"iou_threshold", c.iou_threshold}};
}

json report_to_json(const EvalReport& r) {
    const ClassVocabulary& vocab = ClassVocabulary::standard();
    json seg = {{"iou_threshold", r.seg.iou_threshold}, {"overall", pr_json(r.seg.overall)}};
    json per_class = json::object();
    for (const auto& [cls, m] : r.seg.per_class) per_class[vocab.name(cls)] = pr_json(m);
    seg["per_class"] = per_class;

    json loa = {{"overall", r.count_loa ? stats_json(*r.count_loa) : json(nullptr)}};
    json loa_classes = json::object();
    for (const auto& [cls, s] : r.count_loa_per_class) loa_classes[vocab.name(cls)] = stats_json(s);
    loa["per_class"] = loa_classes;

    json reg = nullptr;
    if (r.reg) {
        reg = {{"r2", r.reg->r2}, {"rmse", r.reg->rmse}, {"mape", r.reg->mape},
               {"pearson_r", r.reg->pearson_r}, {"n", r.reg->n}};
    }
    json ba = json::object();
    ba["points"] = json::array();
    if (r.bland_altman) {
        for (const auto& p : r.bland_altman->points) ba["points"].push_back({{"mean", p.mean}, {"diff", p.diff}});
        ba["stats"] = stats_json(r.bland_altman->stats);
    } else {
        ba["stats"] = nullptr;
    }

    json folds = json::array();
    for (const auto& f : r.folds) {
        json counts = json::object();
        for (const auto& [cls, c] : f.counts) counts[vocab.name(cls)] = {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}};
        folds.push_back({{"index", f.index},
                         {"test_subject", f.test_subject},
                         {"truth_jumps", f.truth_jumps},
                         {"predicted_jumps", f.predicted_jumps},
                         {"training_jumps", f.training_jumps},
                         {"match_counts", counts}});
    }
    json jumps = json::array();
    for (const auto& j : r.jumps) {
        jumps.push_back({{"subject_id", j.subject_id},
                         {"label", vocab.name(j.truth.class_id)},
                         {"truth_segment", {j.truth.start, j.truth.end}},
                         {"predicted_segment", {j.predicted.start, j.predicted.end}},
                         {"truth_height_m", j.truth_height},
                         {"predicted_height_m", j.predicted_height}});
    }
    return {{"seg_metrics", seg},
            {"count_loa", loa},
            {"reg_metrics", reg},
            {"bland_altman_points", ba},
            {"config_echo", r.config_echo},
            {"folds", folds},
            {"jumps", jumps}};
}

std::string bland_altman_csv(const EvalReport& r) {
    const ClassVocabulary& vocab = ClassVocabulary::standard();
    std::string out = "subject_id,label,truth_m,predicted_m,mean_m,diff_m\n";
    for (const auto& j : r.jumps) {
        out += j.subject_id + ',' + vocab.name(j.truth.class_id) + ',' + format_number(j.truth_height) + ',' +
               format_number(j.predicted_height) + ',' + format_number((j.truth_height + j.predicted_height) / 2.0) +
               ',' + format_number(j.truth_height - j.predicted_height) + '\n';
    }
    return out;
}

}  // namespace vjump
