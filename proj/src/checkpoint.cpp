#include "vjump/checkpoint.hpp"

#include <bit>
#include <cstring>

#include <json.hpp>

#include "vjump/error.hpp"
#include "vjump/io.hpp"

namespace vjump {

static_assert(std::endian::native == std::endian::little, "checkpoints are stored little-endian");

using nlohmann::json;

namespace {

template <typename T>
void put(std::string& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

void put_string(std::string& out, std::string_view s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.append(s);
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <typename T>
    T get(const char* what) {
        need(sizeof(T), what);
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    std::string get_string(const char* what) {
        const auto n = get<std::uint32_t>(what);
        need(n, what);
        std::string s(bytes_.substr(pos_, n));
        pos_ += n;
        return s;
    }

    std::vector<double> get_doubles(std::uint64_t n, const char* what) {
        if (n > (bytes_.size() - pos_) / sizeof(double)) need(bytes_.size(), what);
        std::vector<double> v(n);
        std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(double));
        pos_ += n * sizeof(double);
        return v;
    }

    bool at_end() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) {
            throw FormatError(std::string("checkpoint truncated while reading ") + what + " at byte " +
                              std::to_string(pos_));
        }
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

void expect_kind(const Checkpoint& c, std::string_view kind) {
    if (c.kind != kind) {
        throw FormatError("checkpoint holds a '" + c.kind + "' model, expected '" + std::string(kind) + "'");
    }
}

json parse_config(const Checkpoint& c) {
    try {
        return json::parse(c.config_json);
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint config is not valid JSON: ") + e.what());
    }
}

template <typename T>
T field(const json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw FormatError(std::string("checkpoint config lacks a valid '") + key + "'");
    }
}

void put_kernel(Checkpoint& c, const std::string& name, const ConvKernel& k) {
    c.arrays[name + ".w"] = std::vector<double>(k.weights.begin(), k.weights.end());
    c.arrays[name + ".b"] = std::vector<double>(k.bias.begin(), k.bias.end());
}

void get_kernel(const Checkpoint& c, const std::string& name, ConvKernel& k) {
    const auto& w = c.array(name + ".w");
    const auto& b = c.array(name + ".b");
    if (w.size() != k.weights.size() || b.size() != k.bias.size()) {
        throw FormatError("checkpoint array '" + name + "' does not match the configured shape");
    }
    k.weights.assign(w.begin(), w.end());
    k.bias.assign(b.begin(), b.end());
}

std::string kernel_name(std::size_t stage, const std::string& part) {
    return "stage" + std::to_string(stage) + "." + part;
}

void put_trees(Checkpoint& c, const std::vector<RegressionTree>& trees) {
    for (std::size_t t = 0; t < trees.size(); ++t) {
        std::vector<double> feature, threshold, left, right, value, samples, depth;
        for (const auto& n : trees[t].nodes()) {
            feature.push_back(n.feature);
            threshold.push_back(n.threshold);
            left.push_back(n.left);
            right.push_back(n.right);
            value.push_back(n.value);
            samples.push_back(static_cast<double>(n.samples));
            depth.push_back(static_cast<double>(n.depth));
        }
        const std::string p = "tree" + std::to_string(t) + ".";
        c.arrays[p + "feature"] = feature;
        c.arrays[p + "threshold"] = threshold;
        c.arrays[p + "left"] = left;
        c.arrays[p + "right"] = right;
        c.arrays[p + "value"] = value;
        c.arrays[p + "samples"] = samples;
        c.arrays[p + "depth"] = depth;
    }
}

std::vector<RegressionTree> get_trees(const Checkpoint& c, std::size_t count, std::size_t input_dim) {
    std::vector<RegressionTree> trees;
    for (std::size_t t = 0; t < count; ++t) {
        const std::string p = "tree" + std::to_string(t) + ".";
        const auto& feature = c.array(p + "feature");
        const std::size_t n = feature.size();
        const auto& threshold = c.array(p + "threshold");
        const auto& left = c.array(p + "left");
        const auto& right = c.array(p + "right");
        const auto& value = c.array(p + "value");
        const auto& samples = c.array(p + "samples");
        const auto& depth = c.array(p + "depth");
        for (const auto* a : {&threshold, &left, &right, &value, &samples, &depth}) {
            if (a->size() != n) throw FormatError("tree " + std::to_string(t) + " arrays differ in length");
        }
        if (n == 0) throw FormatError("tree " + std::to_string(t) + " is empty");
        std::vector<RegressionTree::Node> nodes(n);
        for (std::size_t i = 0; i < n; ++i) {
            auto& node = nodes[i];
            node.feature = static_cast<int>(feature[i]);
            node.threshold = threshold[i];
            node.left = static_cast<int>(left[i]);
            node.right = static_cast<int>(right[i]);
            node.value = value[i];
            node.samples = static_cast<std::size_t>(samples[i]);
            node.depth = static_cast<std::size_t>(depth[i]);
            if (node.feature >= 0) {
                // children always follow their parent, which also rules out cycles
                const bool ok = std::size_t(node.feature) < input_dim && node.left > int(i) && node.right > int(i) &&
                                std::size_t(node.left) < n && std::size_t(node.right) < n;
                if (!ok) throw FormatError("tree " + std::to_string(t) + " node " + std::to_string(i) + " is malformed");
            }
        }
        trees.emplace_back(std::move(nodes));
    }
    return trees;
}

double scalar(const Checkpoint& c, const std::string& name) {
    const auto& a = c.array(name);
    if (a.size() != 1) throw FormatError("checkpoint array '" + name + "' should hold one value");
    return a[0];
}

}  // namespace

const std::vector<double>& Checkpoint::array(const std::string& name) const {
    const auto it = arrays.find(name);
    if (it == arrays.end()) throw FormatError("checkpoint lacks array '" + name + "'");
    return it->second;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    std::string out(kCheckpointMagic);
    put<std::uint32_t>(out, kCheckpointVersion);
    put_string(out, ckpt.kind);
    put_string(out, ckpt.config_json);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.arrays.size()));
    for (const auto& [name, values] : ckpt.arrays) {
        put_string(out, name);
        put<std::uint64_t>(out, values.size());
        out.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double));
    }
    return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
    if (bytes.size() < kCheckpointMagic.size() || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
        throw FormatError("not a checkpoint file (bad magic bytes)");
    }
    Reader r(bytes.substr(kCheckpointMagic.size()));
    const auto version = r.get<std::uint32_t>("format version");
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
    }
    Checkpoint c;
    c.kind = r.get_string("kind tag");
    c.config_json = r.get_string("config");
    const auto count = r.get<std::uint32_t>("array count");
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.get_string("array name");
        const auto n = r.get<std::uint64_t>("array length");
        c.arrays[std::move(name)] = r.get_doubles(n, "array data");
    }
    if (!r.at_end()) throw FormatError("checkpoint has trailing bytes");
    return c;
}

Checkpoint to_checkpoint(const ModelWeights& w) {
    const MsTcnConfig& cfg = w.config;
    Checkpoint c;
    c.kind = "mstcn";
    const json j = {
        {"weights_version", ModelWeights::kVersion},
        {"num_stages", cfg.num_stages},
        {"num_layers", cfg.stage.num_layers},
        {"num_filters", cfg.stage.num_filters},
        {"kernel_size", cfg.stage.kernel_size},
        {"in_channels", cfg.stage.in_channels},
        {"num_classes", cfg.stage.num_classes},
        {"lambda_tmse", cfg.loss.lambda_tmse},
        {"tau", cfg.loss.tau},
        {"epochs", cfg.epochs},
        {"seed", cfg.seed},
        {"learning_rate", cfg.learning_rate},
        {"dropout", cfg.dropout},
        {"weight_decay", cfg.weight_decay},
        {"normalize_input", cfg.normalize_input},
    };
    c.config_json = j.dump();
    for (std::size_t s = 0; s < w.stages.size(); ++s) {
        const StageWeights& st = w.stages[s];
        put_kernel(c, kernel_name(s, "input"), st.input);
        for (std::size_t l = 0; l < st.dilated.size(); ++l) {
            put_kernel(c, kernel_name(s, "dilated" + std::to_string(l)), st.dilated[l]);
            put_kernel(c, kernel_name(s, "pointwise" + std::to_string(l)), st.pointwise[l]);
        }
        put_kernel(c, kernel_name(s, "output"), st.output);
    }
    c.arrays["input_mean"] = w.input_mean;
    c.arrays["input_scale"] = w.input_scale;
    return c;
}

ModelWeights mstcn_from_checkpoint(const Checkpoint& c) {
    expect_kind(c, "mstcn");
    const json j = parse_config(c);
    if (field<std::uint32_t>(j, "weights_version") != ModelWeights::kVersion) {
        throw FormatError("model weights version mismatch");
    }
    MsTcnConfig cfg;
    cfg.num_stages = field<std::size_t>(j, "num_stages");
    cfg.stage.num_layers = field<std::size_t>(j, "num_layers");
    cfg.stage.num_filters = field<std::size_t>(j, "num_filters");
    cfg.stage.kernel_size = field<std::size_t>(j, "kernel_size");
    cfg.stage.in_channels = field<std::size_t>(j, "in_channels");
    cfg.stage.num_classes = field<std::size_t>(j, "num_classes");
    cfg.loss.lambda_tmse = field<double>(j, "lambda_tmse");
    cfg.loss.tau = field<double>(j, "tau");
    cfg.epochs = field<std::size_t>(j, "epochs");
    cfg.seed = field<std::uint64_t>(j, "seed");
    cfg.learning_rate = field<double>(j, "learning_rate");
    cfg.dropout = field<double>(j, "dropout");
    cfg.weight_decay = field<double>(j, "weight_decay");
    cfg.normalize_input = field<bool>(j, "normalize_input");
    try {
        cfg.validate();
    } catch (const ValidationError& e) {
        throw FormatError(std::string("checkpoint config is invalid: ") + e.what());
    }
    ModelWeights w = zeros_like(build_mstcn(cfg, cfg.seed));
    for (std::size_t s = 0; s < w.stages.size(); ++s) {
        StageWeights& st = w.stages[s];
        get_kernel(c, kernel_name(s, "input"), st.input);
        for (std::size_t l = 0; l < st.dilated.size(); ++l) {
            get_kernel(c, kernel_name(s, "dilated" + std::to_string(l)), st.dilated[l]);
            get_kernel(c, kernel_name(s, "pointwise" + std::to_string(l)), st.pointwise[l]);
        }
        get_kernel(c, kernel_name(s, "output"), st.output);
    }
    w.input_mean = c.array("input_mean");
    w.input_scale = c.array("input_scale");
    if (w.input_mean.size() != cfg.stage.in_channels || w.input_scale.size() != cfg.stage.in_channels) {
        throw FormatError("checkpoint input normalization has the wrong length");
    }
    return w;
}

Checkpoint to_checkpoint(const TrainedRegressor& model) {
    Checkpoint c;
    c.kind = std::string(model.kind());
    json j = {{"catalog_version", model.catalog_version}, {"input_dim", model.input_dim}};
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, ForestModel>) {
                j["n_estimators"] = m.config.n_estimators;
                j["max_depth"] = m.config.max_depth;
                j["max_leaf_nodes"] = m.config.max_leaf_nodes;
                j["bootstrap"] = m.config.bootstrap;
                j["features_per_split"] = m.config.features_per_split;
                j["seed"] = m.config.seed;
                j["trees"] = m.trees.size();
                put_trees(c, m.trees);
            } else if constexpr (std::is_same_v<T, BoostedModel>) {
                j["eta"] = m.config.eta;
                j["n_estimators"] = m.config.n_estimators;
                j["max_depth"] = m.config.max_depth;
                j["gamma"] = m.config.gamma;
                j["seed"] = m.config.seed;
                j["trees"] = m.trees.size();
                c.arrays["base_score"] = {m.base_score};
                c.arrays["eta"] = {m.config.eta};
                c.arrays["train_mse_history"] = m.train_mse_history;
                put_trees(c, m.trees);
            } else {
                j["hidden_layers"] = m.config.hidden_layers;
                j["max_iter"] = m.config.max_iter;
                j["learning_rate"] = m.config.learning_rate;
                j["tol"] = m.config.tol;
                j["n_iter_no_change"] = m.config.n_iter_no_change;
                j["seed"] = m.config.seed;
                j["iterations"] = m.iterations;
                j["inputs"] = m.net.inputs;
                j["hidden"] = m.net.hidden;
                c.arrays["w1"] = std::vector<double>(m.net.w1.begin(), m.net.w1.end());
                c.arrays["b1"] = std::vector<double>(m.net.b1.begin(), m.net.b1.end());
                c.arrays["w2"] = std::vector<double>(m.net.w2.begin(), m.net.w2.end());
                c.arrays["b2"] = {m.net.b2};
                c.arrays["x_mean"] = m.x_mean;
                c.arrays["x_scale"] = m.x_scale;
                c.arrays["y_mean"] = {m.y_mean};
                c.arrays["y_scale"] = {m.y_scale};
            }
        },
        model.model);
    c.config_json = j.dump();
    return c;
}

TrainedRegressor regressor_from_checkpoint(const Checkpoint& c) {
    if (c.kind != "rf" && c.kind != "gbt" && c.kind != "mlp") {
        throw FormatError("checkpoint holds a '" + c.kind + "' model, expected a regressor (rf, gbt or mlp)");
    }
    const json j = parse_config(c);
    TrainedRegressor model;
    model.catalog_version = field<std::string>(j, "catalog_version");
    model.input_dim = field<std::size_t>(j, "input_dim");
    if (c.kind == "rf") {
        ForestModel m;
        m.config.n_estimators = field<std::size_t>(j, "n_estimators");
        m.config.max_depth = field<std::size_t>(j, "max_depth");
        m.config.max_leaf_nodes = field<std::size_t>(j, "max_leaf_nodes");
        m.config.bootstrap = field<bool>(j, "bootstrap");
        m.config.features_per_split = field<std::size_t>(j, "features_per_split");
        m.config.seed = field<std::uint64_t>(j, "seed");
        m.trees = get_trees(c, field<std::size_t>(j, "trees"), model.input_dim);
        if (m.trees.empty()) throw FormatError("forest checkpoint has no trees");
        model.model = std::move(m);
    } else if (c.kind == "gbt") {
        BoostedModel m;
        m.config.eta = scalar(c, "eta");
        m.config.n_estimators = field<std::size_t>(j, "n_estimators");
        m.config.max_depth = field<std::size_t>(j, "max_depth");
        m.config.gamma = field<double>(j, "gamma");
        m.config.seed = field<std::uint64_t>(j, "seed");
        m.base_score = scalar(c, "base_score");
        m.train_mse_history = c.array("train_mse_history");
        m.trees = get_trees(c, field<std::size_t>(j, "trees"), model.input_dim);
        model.model = std::move(m);
    } else {
        MlpModel m;
        m.config.hidden_layers = field<std::vector<std::size_t>>(j, "hidden_layers");
        m.config.max_iter = field<std::size_t>(j, "max_iter");
        m.config.learning_rate = field<double>(j, "learning_rate");
        m.config.tol = field<double>(j, "tol");
        m.config.n_iter_no_change = field<std::size_t>(j, "n_iter_no_change");
        m.config.seed = field<std::uint64_t>(j, "seed");
        m.iterations = field<std::size_t>(j, "iterations");
        m.net.inputs = field<std::size_t>(j, "inputs");
        m.net.hidden = field<std::size_t>(j, "hidden");
        const auto& w1 = c.array("w1");
        const auto& b1 = c.array("b1");
        const auto& w2 = c.array("w2");
        if (m.net.inputs != model.input_dim || w1.size() != m.net.inputs * m.net.hidden ||
            b1.size() != m.net.hidden || w2.size() != m.net.hidden) {
            throw FormatError("MLP checkpoint arrays do not match the stored shape");
        }
        m.net.w1.assign(w1.begin(), w1.end());
        m.net.b1.assign(b1.begin(), b1.end());
        m.net.w2.assign(w2.begin(), w2.end());
        m.net.b2 = scalar(c, "b2");
        m.x_mean = c.array("x_mean");
        m.x_scale = c.array("x_scale");
        if (m.x_mean.size() != model.input_dim || m.x_scale.size() != model.input_dim) {
            throw FormatError("MLP checkpoint standardization has the wrong length");
        }
        m.y_mean = scalar(c, "y_mean");
        m.y_scale = scalar(c, "y_scale");
        model.model = std::move(m);
    }
    return model;
}

void save_checkpoint(const ModelWeights& weights, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_checkpoint(to_checkpoint(weights)));
}

void save_checkpoint(const TrainedRegressor& model, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_checkpoint(to_checkpoint(model)));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    try {
        return deserialize_checkpoint(read_text_file(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

ModelWeights load_mstcn_checkpoint(const std::filesystem::path& path) {
    return mstcn_from_checkpoint(read_checkpoint(path));
}

TrainedRegressor load_regressor_checkpoint(const std::filesystem::path& path) {
    return regressor_from_checkpoint(read_checkpoint(path));
}

}  // namespace vjump
