#include "vjump/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <map>
#include <ostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "vjump/checkpoint.hpp"
#include "vjump/error.hpp"
#include "vjump/evaluation.hpp"
#include "vjump/features.hpp"
#include "vjump/io.hpp"
#include "vjump/synth.hpp"

namespace vjump {

namespace fs = std::filesystem;
using nlohmann::json;

MsTcnConfig tcn_preset(std::string_view name) {
    MsTcnConfig c;
    if (name == "full") return c;
    if (name == "desk") {
        c.num_stages = 2;
        c.stage.num_layers = 8;
        c.stage.num_filters = 16;
        c.epochs = 25;
        c.learning_rate = 5e-3;
        return c;
    }
    throw ValidationError("unknown tcn preset '" + std::string(name) + "' (expected desk or full)");
}

namespace {

const ClassVocabulary& vocab() { return ClassVocabulary::standard(); }

// ---------------------------------------------------------------------------
// Data directories
// ---------------------------------------------------------------------------

bool is_session_file(const fs::path& p) {
    static const std::set<std::string> reserved = {"heights.csv", "features.csv", "bland_altman.csv",
                                                   "importance.csv"};
    if (p.extension() != ".csv" || reserved.count(p.filename().string())) return false;
    return !p.stem().string().ends_with("_segments");
}

std::vector<fs::path> session_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && is_session_file(e.path())) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) { return a.stem() < b.stem(); });
    if (files.empty()) throw ValidationError("no session CSV files in " + dir.string());
    return files;
}

struct SubjectFilter {
    std::vector<std::string> include;
    std::vector<std::string> exclude;

    bool keep(const std::string& id) const {
        if (!include.empty() && std::find(include.begin(), include.end(), id) == include.end()) return false;
        return std::find(exclude.begin(), exclude.end(), id) == exclude.end();
    }
};

std::vector<ImuSession> load_sessions(const fs::path& dir, const SubjectFilter& filter) {
    std::vector<ImuSession> sessions;
    std::set<std::string> seen;
    for (const auto& f : session_files(dir)) {
        seen.insert(f.stem().string());
        if (filter.keep(f.stem().string())) sessions.push_back(read_session_csv(f, vocab()));
    }
    for (const auto& id : filter.include) {
        if (!seen.count(id)) throw ValidationError("subject '" + id + "' not found in " + dir.string());
    }
    if (sessions.empty()) throw ValidationError("no sessions left after subject selection");
    return sessions;
}

std::vector<HeightRecord> load_heights(const fs::path& dir) { return read_heights(dir / "heights.csv", vocab()); }

fs::path segments_path(const fs::path& dir, const std::string& subject) { return dir / (subject + "_segments.csv"); }

// ---------------------------------------------------------------------------
// Feature tables
// ---------------------------------------------------------------------------

struct FeatureRow {
    std::string subject_id;
    Segment segment;
    double height_m = 0.0;
    std::vector<double> values;
};

// Round-trip exact, so a table read back gives the same model inputs.
std::string exact_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string features_header() {
    std::string h = "subject_id,start_sample,end_sample,label,height_m";
    for (const auto& n : feature_names()) h += ',' + n;
    return h;
}

std::string format_features_csv(std::span<const FeatureRow> rows) {
    std::string out = features_header() + '\n';
    for (const auto& r : rows) {
        out += r.subject_id + ',' + std::to_string(r.segment.start) + ',' + std::to_string(r.segment.end) + ',' +
               vocab().name(r.segment.class_id) + ',' + exact_number(r.height_m);
        for (double v : r.values) out += ',' + exact_number(v);
        out += '\n';
    }
    return out;
}

std::vector<std::string> split_commas(std::string_view line) {
    std::vector<std::string> fields;
    std::size_t pos = 0;
    while (true) {
        const std::size_t next = line.find(',', pos);
        fields.emplace_back(line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    return fields;
}

double parse_double(const std::string& s, const std::string& file, std::size_t line) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) {
        throw ParseError(file, line, "not a finite number: '" + s + "'");
    }
    return v;
}

std::size_t parse_index(const std::string& s, const std::string& file, std::size_t line) {
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        throw ParseError(file, line, "not a sample index: '" + s + "'");
    }
    return std::stoull(s);
}

std::vector<FeatureRow> read_features_csv(const fs::path& path) {
    const std::string file = path.string();
    const std::string text = read_text_file(path);
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        std::string l = text.substr(pos, nl - pos);
        if (!l.empty() && l.back() == '\r') l.pop_back();
        lines.push_back(std::move(l));
        pos = nl + 1;
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.empty()) throw ParseError(file, 1, "missing header");
    if (lines[0] != features_header()) {
        throw ParseError(file, 1, "header does not match feature catalog " + std::string(kFeatureCatalogVersion));
    }
    const std::size_t columns = 5 + kFeatureVectorLength;
    std::vector<FeatureRow> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::size_t ln = i + 1;
        const auto f = split_commas(lines[i]);
        if (f.size() != columns) {
            throw ParseError(file, ln, "expected " + std::to_string(columns) + " fields, found " + std::to_string(f.size()));
        }
        FeatureRow r;
        r.subject_id = f[0];
        r.segment.start = parse_index(f[1], file, ln);
        r.segment.end = parse_index(f[2], file, ln);
        const auto cls = vocab().find(f[3]);
        if (!cls || !vocab().is_height_eligible(*cls)) {
            throw ParseError(file, ln, "label '" + f[3] + "' is not a height-eligible class");
        }
        r.segment.class_id = *cls;
        if (r.segment.end <= r.segment.start) throw ParseError(file, ln, "end_sample must exceed start_sample");
        r.height_m = parse_double(f[4], file, ln);
        for (std::size_t k = 5; k < columns; ++k) r.values.push_back(parse_double(f[k], file, ln));
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw ValidationError(file + ": no feature rows");
    return rows;
}

void rows_to_matrix(std::span<const FeatureRow> rows, Tensor2& X, std::vector<double>& y) {
    X = Tensor2(rows.size(), kFeatureVectorLength);
    y.clear();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy(rows[i].values.begin(), rows[i].values.end(), X.row(i).begin());
        y.push_back(rows[i].height_m);
    }
}

const HeightRecord& height_of(std::span<const HeightRecord> heights, const std::string& subject, const Segment& s) {
    for (const auto& h : heights) {
        if (h.subject_id == subject && h.segment == s) return h;
    }
    throw ValidationError("no height for " + vocab().name(s.class_id) + " [" + std::to_string(s.start) + ", " +
                          std::to_string(s.end) + ") of subject '" + subject + "'");
}

std::vector<Segment> truth_jumps(const ImuSession& s) {
    if (!s.labels) throw ValidationError("session '" + s.subject_id + "' has no labels");
    return height_eligible_only(extract_segments(*s.labels, vocab()), vocab());
}

std::vector<Segment> predicted_jumps(const fs::path& pred_dir, const ImuSession& s, std::size_t min_duration) {
    const auto segs = read_annotations(segments_path(pred_dir, s.subject_id), vocab(), s.length());
    return height_eligible_only(min_duration_filter(segs, min_duration), vocab());
}

FeatureRow feature_row(const ImuSession& s, const Segment& seg, double height, std::size_t roi_width) {
    const Tensor2 window = roi_window(s.samples, select_roi(seg, s.length(), roi_width));
    return {s.subject_id, seg, height, extract_feature_vector(window, seg.class_id, vocab()).values};
}

// ---------------------------------------------------------------------------
// Option groups
// ---------------------------------------------------------------------------

struct TcnOptions {
    std::string preset = "desk";
    std::size_t stages = 0, layers = 0, filters = 0, epochs = 0;
    double lr = 0.0, lambda_tmse = 0.0, tau = 0.0, dropout = 0.0, weight_decay = 0.0;
    std::map<std::string, CLI::Option*> opts;

    void add(CLI::App* app) {
        app->add_option("--tcn-preset", preset, "Segmenter size: desk or full")
            ->check(CLI::IsMember({"desk", "full"}));
        opts["stages"] = app->add_option("--stages", stages, "Override: number of stages");
        opts["layers"] = app->add_option("--layers", layers, "Override: dilated layers per stage");
        opts["filters"] = app->add_option("--filters", filters, "Override: filters per layer");
        opts["epochs"] = app->add_option("--epochs", epochs, "Override: training epochs");
        opts["lr"] = app->add_option("--lr", lr, "Override: Adam learning rate");
        opts["lambda_tmse"] = app->add_option("--lambda-tmse", lambda_tmse, "Override: smoothing loss weight");
        opts["tau"] = app->add_option("--tau", tau, "Override: smoothing loss truncation");
        opts["dropout"] = app->add_option("--dropout", dropout, "Override: feature dropout");
        opts["weight_decay"] = app->add_option("--weight-decay", weight_decay, "Override: L2 weight decay");
    }

    bool given(const std::string& k) const { return opts.at(k)->count() > 0; }

    MsTcnConfig resolve(std::uint64_t seed) const {
        MsTcnConfig c = tcn_preset(preset);
        if (given("stages")) c.num_stages = stages;
        if (given("layers")) c.stage.num_layers = layers;
        if (given("filters")) c.stage.num_filters = filters;
        if (given("epochs")) c.epochs = epochs;
        if (given("lr")) c.learning_rate = lr;
        if (given("lambda_tmse")) c.loss.lambda_tmse = lambda_tmse;
        if (given("tau")) c.loss.tau = tau;
        if (given("dropout")) c.dropout = dropout;
        if (given("weight_decay")) c.weight_decay = weight_decay;
        c.stage.num_classes = vocab().size();
        c.seed = seed;
        c.validate();
        return c;
    }
};

struct RegOptions {
    std::string kind = "rf";
    std::size_t n_estimators = 0, max_depth = 0, max_leaf_nodes = 0, hidden = 0, max_iter = 0;
    double eta = 0.0, gamma = 0.0, lr = 0.0;
    std::map<std::string, CLI::Option*> opts;

    void add(CLI::App* app) {
        app->add_option("--kind", kind, "Height regressor: rf, gbt or mlp")->check(CLI::IsMember({"rf", "gbt", "mlp"}));
        opts["n_estimators"] = app->add_option("--n-estimators", n_estimators, "Trees (rf, gbt)");
        opts["max_depth"] = app->add_option("--max-depth", max_depth, "Tree depth limit (rf, gbt)");
        opts["max_leaf_nodes"] = app->add_option("--max-leaf-nodes", max_leaf_nodes, "Leaves per tree (rf)");
        opts["eta"] = app->add_option("--eta", eta, "Shrinkage (gbt)");
        opts["gamma"] = app->add_option("--gamma", gamma, "Minimum split gain (gbt)");
        opts["hidden"] = app->add_option("--hidden", hidden, "Hidden units (mlp)");
        opts["max_iter"] = app->add_option("--max-iter", max_iter, "Adam iterations (mlp)");
        opts["lr"] = app->add_option("--reg-lr", lr, "Adam learning rate (mlp)");
    }

    bool given(const std::string& k) const { return opts.at(k)->count() > 0; }

    void reject_unused(std::initializer_list<const char*> unused) const {
        for (const char* k : unused) {
            if (given(k)) throw ValidationError(std::string(opts.at(k)->get_name()) + " does not apply to --kind " + kind);
        }
    }

    RegressorSpec resolve(std::uint64_t seed) const {
        if (kind == "rf") {
            reject_unused({"eta", "gamma", "hidden", "max_iter", "lr"});
            RfConfig c;
            if (given("n_estimators")) c.n_estimators = n_estimators;
            if (given("max_depth")) c.max_depth = max_depth;
            if (given("max_leaf_nodes")) c.max_leaf_nodes = max_leaf_nodes;
            c.seed = seed;
            c.validate();
            return c;
        }
        if (kind == "gbt") {
            reject_unused({"max_leaf_nodes", "hidden", "max_iter", "lr"});
            GbtConfig c;
            if (given("n_estimators")) c.n_estimators = n_estimators;
            if (given("max_depth")) c.max_depth = max_depth;
            if (given("eta")) c.eta = eta;
            if (given("gamma")) c.gamma = gamma;
            c.seed = seed;
            c.validate();
            return c;
        }
        reject_unused({"n_estimators", "max_depth", "max_leaf_nodes", "eta", "gamma"});
        MlpRegConfig c;
        if (given("hidden")) c.hidden_layers = {hidden};
        if (given("max_iter")) c.max_iter = max_iter;
        if (given("lr")) c.learning_rate = lr;
        c.seed = seed;
        c.validate();
        return c;
    }
};

// ---------------------------------------------------------------------------
// Run context and manifest
// ---------------------------------------------------------------------------

struct Globals {
    std::uint64_t seed = 42;
    std::string out = ".";
    bool quiet = false;
};

class Run {
public:
    Run(std::string command, const Globals& g, std::ostream& out, std::ostream& err)
        : command_(std::move(command)), globals_(g), out_(out), err_(err), start_(std::chrono::steady_clock::now()) {
        fs::create_directories(out_dir());
    }

    fs::path out_dir() const { return globals_.out; }
    std::uint64_t seed() const { return globals_.seed; }
    std::ostream& out() { return out_; }

    ProgressLog log() {
        if (globals_.quiet) return {};
        return [this](const std::string& m) { err_ << m << '\n' << std::flush; };
    }
    void note(const std::string& m) {
        if (!globals_.quiet) err_ << m << '\n' << std::flush;
    }

    void input(const fs::path& p) { inputs_.push_back(p.string()); }
    fs::path output(const std::string& name) {
        const fs::path p = out_dir() / name;
        outputs_.push_back(p.string());
        return p;
    }

    json config = json::object();
    json extra = json::object();

    void write_manifest(const CLI::App& app, const CLI::App& sub) {
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char stamp[32];
        std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        json m = {{"command", command_},
                  {"tool_version", kToolVersion},
                  {"artifact_versions",
                   {{"feature_catalog", kFeatureCatalogVersion}, {"checkpoint_format", 1}, {"report_schema", 1}}},
                  {"seed", globals_.seed},
                  {"options", options_json(app, sub)},
                  {"config", config},
                  {"inputs", inputs_},
                  {"outputs", outputs_},
                  {"wall_clock_s", elapsed},
                  {"finished_at", stamp}};
        for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
        write_file_atomic(out_dir() / "manifest.json", m.dump(2) + "\n");
    }

private:
    // Merged flag/config-file values as the parser saw them.
    static json options_json(const CLI::App& app, const CLI::App& sub) {
        json j = json::object();
        const auto collect = [&j](const CLI::App& a) {
            for (const CLI::Option* opt : a.get_options()) {
                const std::string name = opt->get_single_name();
                if (name.empty() || name == "help" || name == "config" || name == "version") continue;
                if (opt->count() > 0) {
                    const auto& res = opt->results();
                    std::string v;
                    for (std::size_t i = 0; i < res.size(); ++i) v += (i ? "," : "") + res[i];
                    j[name] = v;
                } else {
                    j[name] = opt->get_default_str();
                }
            }
        };
        collect(app);
        collect(sub);
        return j;
    }

    std::string command_;
    Globals globals_;
    std::ostream& out_;
    std::ostream& err_;
    std::chrono::steady_clock::time_point start_;
    std::vector<std::string> inputs_;
    std::vector<std::string> outputs_;
};

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct SynthArgs {
    std::size_t subjects = 10;
    double duration = 120.0;
    double noise = 0.05;
    double min_gap = 1.0;
    std::uint64_t script_seed = 0;
    CLI::Option* script_seed_opt = nullptr;
    bool no_walking = false;
};

void cmd_synth(Run& run, const SynthArgs& a) {
    SyntheticConfig c;
    c.num_subjects = a.subjects;
    c.session_duration_s = a.duration;
    c.noise_std_g = a.noise;
    c.min_gap_s = a.min_gap;
    c.seed = run.seed();
    if (a.script_seed_opt->count() > 0) c.script_seed = a.script_seed;
    c.walking = !a.no_walking;
    c.validate();
    const SyntheticDataset ds = synth_generate(c);
    for (const auto& s : ds.sessions) write_session_csv(s, run.output(s.subject_id + ".csv"), vocab());
    write_heights(ds.heights, run.output("heights.csv"), vocab());
    run.config = to_json(c);
    run.extra["height_records"] = ds.heights.size();
    run.note("wrote " + std::to_string(ds.sessions.size()) + " sessions and " + std::to_string(ds.heights.size()) +
             " height records to " + run.out_dir().string());
}

struct DataArgs {
    std::string data;
    SubjectFilter filter;

    void add(CLI::App* app, bool required = true) {
        auto* d = app->add_option("--data", data, "Directory of session CSVs (and heights.csv)");
        if (required) d->required();
        app->add_option("--include", filter.include, "Only these subject ids (comma separated)")->delimiter(',');
        app->add_option("--exclude", filter.exclude, "Skip these subject ids (comma separated)")->delimiter(',');
    }
};

void cmd_train(Run& run, const DataArgs& d, const TcnOptions& t) {
    const auto sessions = load_sessions(d.data, d.filter);
    std::vector<std::string> ids;
    for (const auto& s : sessions) ids.push_back(s.subject_id);
    const MsTcnConfig c = t.resolve(run.seed());
    run.note("training MS-TCN on " + std::to_string(sessions.size()) + " sessions, " + std::to_string(c.epochs) +
             " epochs");
    const TrainResult r = train(c, sessions);
    save_checkpoint(r.weights, run.output("model.ckpt"));
    run.input(d.data);
    run.config = to_json(c);
    run.extra["subjects"] = ids;
    run.extra["loss_history"] = r.loss_history;
}

struct PredictArgs {
    std::string model;
    std::vector<std::string> sessions;
    std::string data;
    std::size_t min_duration = kDefaultMinDuration;
};

void cmd_predict(Run& run, const PredictArgs& a) {
    std::vector<fs::path> paths(a.sessions.begin(), a.sessions.end());
    if (!a.data.empty()) {
        for (const auto& p : session_files(a.data)) paths.push_back(p);
    }
    if (paths.empty()) throw ValidationError("predict: give --session or --data");
    const ModelWeights w = load_mstcn_checkpoint(a.model);
    run.input(a.model);
    for (const auto& p : paths) {
        const ImuSession s = read_session_csv(p, vocab());
        run.input(p);
        const Prediction pred = predict(w, s);
        const auto segs = min_duration_filter(extract_segments(pred.labels, vocab()), a.min_duration);
        write_annotations(segs, run.output(s.subject_id + "_segments.csv"), vocab());
        run.note(s.subject_id + ": " + std::to_string(segs.size()) + " segments");
    }
    run.config = {{"min_duration", a.min_duration}};
}

struct EvalSegArgs {
    DataArgs data;
    std::string pred;
    std::size_t min_duration = kDefaultMinDuration;
    double iou = kDefaultIouThreshold;
};

void cmd_eval_seg(Run& run, const EvalSegArgs& a) {
    const auto sessions = load_sessions(a.data.data, a.data.filter);
    std::map<int, ClassCounts> pooled;
    std::vector<int> pred_counts, truth_counts;
    json subjects = json::array();
    for (const auto& s : sessions) {
        const auto truth = truth_jumps(s);
        const auto pred = predicted_jumps(a.pred, s, a.min_duration);
        run.input(segments_path(a.pred, s.subject_id));
        const MatchResult m = match_segments(pred, truth, a.iou);
        for (const auto& [cls, c] : m.per_class) pooled[cls] += c;
        pred_counts.push_back(int(pred.size()));
        truth_counts.push_back(int(truth.size()));
        subjects.push_back({{"subject_id", s.subject_id}, {"truth_jumps", truth.size()},
                            {"predicted_jumps", pred.size()}, {"tp", m.overall.tp}});
    }
    EvalReport r;
    r.seg = precision_recall_f1(pooled, a.iou);
    if (sessions.size() >= 2) r.count_loa = limits_of_agreement(pred_counts, truth_counts);
    const json full = report_to_json(r);
    const json result = {{"seg_metrics", full["seg_metrics"]},
                         {"count_loa", full["count_loa"]["overall"]},
                         {"subjects", subjects}};
    write_file_atomic(run.output("seg_metrics.json"), dump(result));
    run.input(a.data.data);
    run.config = {{"min_duration", a.min_duration}, {"iou_threshold", a.iou}};
    run.out() << "segments: tp " << r.seg.overall.tp << " fp " << r.seg.overall.fp << " fn " << r.seg.overall.fn
              << " f1 " << format_number(r.seg.overall.f1) << '\n';
}

struct FeatureArgs {
    DataArgs data;
    std::string segments;
    std::size_t roi_width = kDefaultRoiWidth;
    std::size_t min_duration = kDefaultMinDuration;
    double iou = kDefaultIouThreshold;
};

void cmd_extract_features(Run& run, const FeatureArgs& a) {
    const auto sessions = load_sessions(a.data.data, a.data.filter);
    const auto heights = load_heights(a.data.data);
    std::vector<FeatureRow> rows;
    for (const auto& s : sessions) {
        const auto truth = truth_jumps(s);
        if (a.segments.empty()) {
            for (const Segment& seg : truth) {
                rows.push_back(feature_row(s, seg, height_of(heights, s.subject_id, seg).height_m, a.roi_width));
            }
            continue;
        }
        // Detected jumps that match an annotated one, labelled with the matched true height.
        const auto pred = predicted_jumps(a.segments, s, a.min_duration);
        std::vector<MatchedPair> pairs = match_segments(pred, truth, a.iou).pairs;
        std::sort(pairs.begin(), pairs.end(),
                  [](const MatchedPair& x, const MatchedPair& y) { return x.truth_index < y.truth_index; });
        for (const auto& p : pairs) {
            const double h = height_of(heights, s.subject_id, truth[p.truth_index]).height_m;
            rows.push_back(feature_row(s, pred[p.pred_index], h, a.roi_width));
        }
    }
    if (rows.empty()) throw ValidationError("extract-features: no jumps to describe");
    write_file_atomic(run.output("features.csv"), format_features_csv(rows));
    run.input(a.data.data);
    if (!a.segments.empty()) run.input(a.segments);
    run.config = {{"roi_width", a.roi_width}, {"source", a.segments.empty() ? "annotations" : "detections"}};
    if (!a.segments.empty()) {
        run.config["min_duration"] = a.min_duration;
        run.config["iou_threshold"] = a.iou;
    }
    run.extra["rows"] = rows.size();
    run.note("wrote " + std::to_string(rows.size()) + " feature rows");
}

void cmd_fit_reg(Run& run, const std::string& features, const RegOptions& r) {
    const auto rows = read_features_csv(features);
    Tensor2 X;
    std::vector<double> y;
    rows_to_matrix(rows, X, y);
    const RegressorSpec spec = r.resolve(run.seed());
    const TrainedRegressor model = fit_regressor(X, y, spec, std::string(kFeatureCatalogVersion));
    save_checkpoint(model, run.output("regressor.ckpt"));
    run.input(features);
    run.config = to_json(spec);
    run.extra["training_rows"] = rows.size();
    run.extra["training_r2"] = r_squared(y, predict_rows(model, X));
}

void cmd_eval_reg(Run& run, const std::string& model_path, const std::string& features) {
    const TrainedRegressor model = load_regressor_checkpoint(model_path);
    const auto rows = read_features_csv(features);
    EvalReport r;
    std::vector<double> t, p;
    for (const auto& row : rows) {
        const double h = predict(model, FeatureVector{row.values, std::string(kFeatureCatalogVersion)});
        r.jumps.push_back({row.subject_id, row.segment, row.segment, row.height_m, h});
        t.push_back(row.height_m);
        p.push_back(h);
    }
    r.reg = regression_metrics(t, p);
    r.bland_altman = bland_altman_points(t, p);
    const json full = report_to_json(r);
    const json result = {{"reg_metrics", full["reg_metrics"]}, {"bland_altman", full["bland_altman_points"]["stats"]}};
    write_file_atomic(run.output("reg_metrics.json"), dump(result));
    write_file_atomic(run.output("bland_altman.csv"), bland_altman_csv(r));
    run.input(model_path);
    run.input(features);
    run.config = {{"regressor", model.kind()}};
    run.out() << "heights: n " << r.reg->n << " r2 " << format_number(r.reg->r2) << " rmse "
              << format_number(r.reg->rmse) << '\n';
}

void cmd_importance(Run& run, const std::string& model_path, const std::string& features, std::size_t repeats,
                    std::size_t top) {
    const TrainedRegressor model = load_regressor_checkpoint(model_path);
    const auto rows = read_features_csv(features);
    Tensor2 X;
    std::vector<double> y;
    rows_to_matrix(rows, X, y);
    const auto imp = permutation_importance(model, X, y, repeats, run.seed());
    const auto& names = feature_names();
    std::string csv = "rank,feature_index,feature,importance\n";
    for (std::size_t i = 0; i < imp.size(); ++i) {
        csv += std::to_string(i + 1) + ',' + std::to_string(imp[i].feature) + ',' + names.at(imp[i].feature) + ',' +
               exact_number(imp[i].importance) + '\n';
        if (i < top) run.out() << i + 1 << ' ' << names.at(imp[i].feature) << ' ' << format_number(imp[i].importance) << '\n';
    }
    write_file_atomic(run.output("importance.csv"), csv);
    run.input(model_path);
    run.input(features);
    run.config = {{"repeats", repeats}};
}

struct PipelineArgs {
    std::string data;
    std::size_t roi_width = kDefaultRoiWidth;
    std::size_t min_duration = kDefaultMinDuration;
    double iou = kDefaultIouThreshold;
};

void cmd_pipeline(Run& run, const PipelineArgs& a, const TcnOptions& t, const RegOptions& r) {
    const auto sessions = load_sessions(a.data, {});
    const auto heights = load_heights(a.data);
    PipelineConfig c;
    c.tcn = t.resolve(run.seed());
    c.regressor = r.resolve(run.seed());
    c.roi_width = a.roi_width;
    c.min_duration = a.min_duration;
    c.iou_threshold = a.iou;
    const EvalReport report = run_pipeline_eval(sessions, heights, c, run.log());
    write_file_atomic(run.output("report.json"), dump(report_to_json(report)));
    write_file_atomic(run.output("bland_altman.csv"), bland_altman_csv(report));
    run.input(a.data);
    run.config = to_json(c);
    auto& o = run.out();
    o << "segments: tp " << report.seg.overall.tp << " fp " << report.seg.overall.fp << " fn "
      << report.seg.overall.fn << " f1 " << format_number(report.seg.overall.f1) << '\n';
    if (report.count_loa) {
        o << "count loa: " << format_number(report.count_loa->mean_diff) << " +/- "
          << format_number(1.96 * report.count_loa->std_diff) << '\n';
    }
    if (report.reg) {
        o << "heights: n " << report.reg->n << " r2 " << format_number(report.reg->r2) << " rmse "
          << format_number(report.reg->rmse) << " mape " << format_number(report.reg->mape) << '\n';
    }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Volleyball jump detection and height estimation from waist IMU data", "vjump"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.fallthrough();
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.set_config("--config", "", "Key-value config file; command-line flags take precedence");
    app.set_version_flag("--version", std::string(kToolVersion));

    Globals g;
    app.add_option("--seed", g.seed, "Seed for every random choice");
    app.add_option("--out", g.out, "Output directory");
    app.add_flag("--quiet", g.quiet, "No progress messages on stderr");

    SynthArgs synth;
    auto* s_synth = app.add_subcommand("synth", "Generate a labelled synthetic dataset");
    s_synth->add_option("--subjects", synth.subjects, "Number of subjects");
    s_synth->add_option("--duration", synth.duration, "Session length in seconds");
    s_synth->add_option("--noise", synth.noise, "Accelerometer noise std in g");
    s_synth->add_option("--min-gap", synth.min_gap, "Minimum pause between activities in seconds");
    synth.script_seed_opt = s_synth->add_option("--script-seed", synth.script_seed, "Separate seed for the activity script");
    s_synth->add_flag("--no-walking", synth.no_walking, "No walking bouts between activities");

    DataArgs train_data;
    TcnOptions train_tcn;
    auto* s_train = app.add_subcommand("train", "Train the MS-TCN segmenter");
    train_data.add(s_train);
    train_tcn.add(s_train);

    PredictArgs pred;
    auto* s_predict = app.add_subcommand("predict", "Segment sessions with a trained MS-TCN");
    s_predict->add_option("--model", pred.model, "MS-TCN checkpoint")->required();
    s_predict->add_option("--session", pred.sessions, "Session CSV (repeatable)");
    s_predict->add_option("--data", pred.data, "Directory of session CSVs");
    s_predict->add_option("--min-duration", pred.min_duration, "Drop segments shorter than this many samples");

    EvalSegArgs evseg;
    auto* s_evseg = app.add_subcommand("eval-seg", "Score predicted segments against the annotations");
    evseg.data.add(s_evseg);
    s_evseg->add_option("--pred", evseg.pred, "Directory of <subject>_segments.csv files")->required();
    s_evseg->add_option("--min-duration", evseg.min_duration, "Drop segments shorter than this many samples");
    s_evseg->add_option("--iou", evseg.iou, "IoU threshold for a true positive");

    FeatureArgs feat;
    auto* s_feat = app.add_subcommand("extract-features", "Write the feature table of annotated or detected jumps");
    feat.data.add(s_feat);
    s_feat->add_option("--segments", feat.segments, "Use detected jumps from this directory instead of annotations");
    s_feat->add_option("--roi-width", feat.roi_width, "Analysis window in samples");
    s_feat->add_option("--min-duration", feat.min_duration, "Drop detected segments shorter than this");
    s_feat->add_option("--iou", feat.iou, "IoU threshold for matching detections");

    std::string fit_features;
    RegOptions fit_reg;
    auto* s_fit = app.add_subcommand("fit-reg", "Fit a jump-height regressor on a feature table");
    s_fit->add_option("--features", fit_features, "features.csv")->required();
    fit_reg.add(s_fit);

    std::string er_model, er_features;
    auto* s_evreg = app.add_subcommand("eval-reg", "Score a height regressor on a feature table");
    s_evreg->add_option("--model", er_model, "Regressor checkpoint")->required();
    s_evreg->add_option("--features", er_features, "features.csv")->required();

    std::string im_model, im_features;
    std::size_t im_repeats = 10, im_top = 10;
    auto* s_imp = app.add_subcommand("importance", "Permutation importance of each feature");
    s_imp->add_option("--model", im_model, "Regressor checkpoint")->required();
    s_imp->add_option("--features", im_features, "features.csv")->required();
    s_imp->add_option("--repeats", im_repeats, "Shuffles per feature");
    s_imp->add_option("--top", im_top, "Features printed to stdout");

    PipelineArgs pipe;
    TcnOptions pipe_tcn;
    RegOptions pipe_reg;
    auto* s_pipe = app.add_subcommand("pipeline", "Leave-one-subject-out detection and height evaluation");
    s_pipe->add_option("--data", pipe.data, "Directory of session CSVs and heights.csv")->required();
    pipe_tcn.add(s_pipe);
    pipe_reg.add(s_pipe);
    s_pipe->add_option("--roi-width", pipe.roi_width, "Analysis window in samples");
    s_pipe->add_option("--min-duration", pipe.min_duration, "Drop segments shorter than this many samples");
    s_pipe->add_option("--iou", pipe.iou, "IoU threshold for a true positive");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << '\n';
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    CLI::App* sub = app.get_subcommands().front();
    try {
        Run run(sub->get_name(), g, out, err);
        if (sub == s_synth) cmd_synth(run, synth);
        else if (sub == s_train) cmd_train(run, train_data, train_tcn);
        else if (sub == s_predict) cmd_predict(run, pred);
        else if (sub == s_evseg) cmd_eval_seg(run, evseg);
        else if (sub == s_feat) cmd_extract_features(run, feat);
        else if (sub == s_fit) cmd_fit_reg(run, fit_features, fit_reg);
        else if (sub == s_evreg) cmd_eval_reg(run, er_model, er_features);
        else if (sub == s_imp) cmd_importance(run, im_model, im_features, im_repeats, im_top);
        else if (sub == s_pipe) cmd_pipeline(run, pipe, pipe_tcn, pipe_reg);
        run.write_manifest(app, *sub);
        return 0;
    } catch (const IoError& e) {
        err << "I/O error: " << e.what() << '\n';
        return 2;
    } catch (const fs::filesystem_error& e) {
        err << "I/O error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace vjump
