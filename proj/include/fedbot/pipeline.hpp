#pragma once

// Config-driven pipeline behind the `fedbot` command line tool. Each command
// reads its inputs from the output directory tree written by the previous
// ones and writes its own files atomically:
//
//   <out>/data/device_<k>/...              synth
//   <out>/models/<kind>/node_<i>.fbm       train
//   <out>/metrics/<kind>_node_metrics.*    train
//   <out>/cross_eval/<kind>_matrix.*       cross-eval
//   <out>/score/scorecard.*                score
//   <out>/federation/<kind>_report.*       federate
//   <out>/report/long.csv                  report

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedbot/dataset.hpp"
#include "fedbot/error.hpp"
#include "fedbot/evaluation.hpp"
#include "fedbot/federation.hpp"
#include "fedbot/io.hpp"
#include "fedbot/models/model.hpp"
#include "fedbot/models/serialize.hpp"
#include "fedbot/parallel.hpp"

namespace fedbot {

/// How training time is measured. `work` replaces wall-clock seconds with a
/// deterministic effort count (work units x 1e-9) so whole runs reproduce
/// byte for byte.
enum class TimingMode { Wall, Work };

struct RunConfig {
    std::optional<std::filesystem::path> data_root;
    std::optional<SyntheticFederationSpec> synthetic;
    LabelMode label_mode = LabelMode::Multiclass;
    double train_fraction = 0.8;
    bool stratified = true;
    std::vector<ModelKind> models = {ModelKind::Tree, ModelKind::Knn, ModelKind::Logistic};
    std::vector<ModelKind> federate_models = {ModelKind::Tree};
    TreeParams tree;
    bool tree_scale = false;
    KnnParams knn;
    LogisticParams logistic;
    ScoreWeights weights;
    std::filesystem::path out = "out";
    std::optional<std::uint64_t> seed;
    int jobs = 1;
    TimingMode timing = TimingMode::Wall;
    bool performance_weights = false;
    /// False when the synthetic generator inherits the run seed.
    bool synthetic_seed_explicit = false;

    /// Sets the run seed; an inherited synthetic seed follows it.
    void set_seed(std::uint64_t s) {
        seed = s;
        if (synthetic && !synthetic_seed_explicit) synthetic->seed = s;
    }

    void validate() const {
        if (data_root.has_value() == synthetic.has_value())
            throw ConfigError("config needs exactly one data source: data_root or synthetic");
        if (!seed) throw ConfigError("config needs an explicit seed");
        if (!(train_fraction > 0.0 && train_fraction < 1.0))
            throw ConfigError("train_fraction must lie strictly between 0 and 1");
        if (models.empty()) throw ConfigError("at least one model must be selected");
        if (jobs < 1) throw ConfigError("jobs must be >= 1");
        weights.validate();
        tree.validate();
        knn.validate();
        logistic.validate();
        if (synthetic) synthetic->validate();
    }

    TrainerSpec trainer(ModelKind kind) const {
        switch (kind) {
        case ModelKind::Tree: return TrainerSpec::tree(tree, tree_scale);
        case ModelKind::Knn: return TrainerSpec::knn(knn);
        case ModelKind::Logistic: return TrainerSpec::logistic(logistic);
        }
        throw ConfigError("unknown model kind");
    }

    SplitSpec split_for(int node_id) const {
        return {train_fraction, derive_seed(*seed, static_cast<std::uint64_t>(node_id)), stratified};
    }
};

namespace detail {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

inline std::vector<ModelKind> parse_models(const nlohmann::json& j) {
    std::vector<ModelKind> out;
    for (const auto& m : j) {
        auto kind = parse_model_kind(m.get<std::string>());
        if (std::find(out.begin(), out.end(), kind) == out.end()) out.push_back(kind);
    }
    return out;
}

inline nlohmann::json model_names(const std::vector<ModelKind>& kinds) {
    auto a = nlohmann::json::array();
    for (auto k : kinds) a.push_back(std::string(to_string(k)));
    return a;
}

} // namespace detail

inline RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig c;
    try {
        if (!j.is_object()) throw ConfigError("config must be a JSON object");
        if (j.contains("data_root")) c.data_root = j.at("data_root").get<std::string>();
        if (j.contains("synthetic")) {
            const auto& s = j.at("synthetic");
            SyntheticFederationSpec spec;
            detail::read_opt(s, "n_nodes", spec.n_nodes);
            detail::read_opt(s, "rows_per_node", spec.rows_per_node);
            detail::read_opt(s, "n_features", spec.n_features);
            detail::read_opt(s, "n_classes", spec.n_classes);
            detail::read_opt(s, "class_separation", spec.class_separation);
            detail::read_opt(s, "node_shift", spec.node_shift);
            detail::read_opt(s, "seed", spec.seed);
            c.synthetic = spec;
            c.synthetic_seed_explicit = s.contains("seed");
        }
        if (j.contains("label_mode")) c.label_mode = parse_label_mode(j.at("label_mode").get<std::string>());
        if (j.contains("split")) {
            detail::read_opt(j.at("split"), "train_fraction", c.train_fraction);
            detail::read_opt(j.at("split"), "stratified", c.stratified);
        }
        if (j.contains("models")) c.models = detail::parse_models(j.at("models"));
        if (j.contains("federate_models")) c.federate_models = detail::parse_models(j.at("federate_models"));
        if (j.contains("tree")) {
            const auto& t = j.at("tree");
            if (t.contains("max_depth") && !t.at("max_depth").is_null()) c.tree.max_depth = t.at("max_depth").get<int>();
            detail::read_opt(t, "min_samples_split", c.tree.min_samples_split);
            detail::read_opt(t, "scale", c.tree_scale);
        }
        if (j.contains("knn")) detail::read_opt(j.at("knn"), "k", c.knn.k);
        if (j.contains("logistic")) {
            const auto& l = j.at("logistic");
            detail::read_opt(l, "learning_rate", c.logistic.learning_rate);
            detail::read_opt(l, "epochs", c.logistic.epochs);
            detail::read_opt(l, "l2", c.logistic.l2);
            detail::read_opt(l, "tolerance", c.logistic.tolerance);
        }
        if (j.contains("weights")) {
            detail::read_opt(j.at("weights"), "accuracy", c.weights.accuracy_weight);
            detail::read_opt(j.at("weights"), "training_time", c.weights.training_time_weight);
        }
        if (j.contains("out")) c.out = j.at("out").get<std::string>();
        if (j.contains("seed")) c.set_seed(j.at("seed").get<std::uint64_t>());
        detail::read_opt(j, "jobs", c.jobs);
        if (j.contains("timing")) {
            auto t = j.at("timing").get<std::string>();
            if (t == "wall") c.timing = TimingMode::Wall;
            else if (t == "work") c.timing = TimingMode::Work;
            else throw ConfigError("timing must be wall or work");
        }
        detail::read_opt(j, "performance_weights", c.performance_weights);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ConfigError(path.string() + ": not valid JSON");
    return config_from_json(j);
}

/// Resolved configuration for provenance. The output location is omitted so
/// identical runs into different directories produce identical reports.
inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j;
    if (c.data_root) j["data_root"] = c.data_root->string();
    if (c.synthetic) {
        const auto& s = *c.synthetic;
        j["synthetic"] = {{"n_nodes", s.n_nodes},
                          {"rows_per_node", s.rows_per_node},
                          {"n_features", s.n_features},
                          {"n_classes", s.n_classes},
                          {"class_separation", s.class_separation},
                          {"node_shift", s.node_shift},
                          {"seed", s.seed}};
    }
    j["label_mode"] = to_string(c.label_mode);
    j["split"] = {{"train_fraction", c.train_fraction}, {"stratified", c.stratified}};
    j["models"] = detail::model_names(c.models);
    j["federate_models"] = detail::model_names(c.federate_models);
    j["tree"] = {{"max_depth", c.tree.max_depth ? nlohmann::json(*c.tree.max_depth) : nlohmann::json(nullptr)},
                 {"min_samples_split", c.tree.min_samples_split},
                 {"scale", c.tree_scale}};
    j["knn"] = {{"k", c.knn.k}};
    j["logistic"] = {{"learning_rate", c.logistic.learning_rate},
                     {"epochs", c.logistic.epochs},
                     {"l2", c.logistic.l2},
                     {"tolerance", c.logistic.tolerance}};
    j["weights"] = {{"accuracy", c.weights.accuracy_weight}, {"training_time", c.weights.training_time_weight}};
    j["seed"] = c.seed ? nlohmann::json(*c.seed) : nlohmann::json(nullptr);
    j["timing"] = c.timing == TimingMode::Wall ? "wall" : "work";
    j["performance_weights"] = c.performance_weights;
    return j;
}

// ---------------------------------------------------------------------------
// Paths and shared loading

namespace paths {
namespace fs = std::filesystem;
inline fs::path data(const RunConfig& c) { return c.out / "data"; }
inline fs::path model_dir(const RunConfig& c, ModelKind k) { return c.out / "models" / std::string(to_string(k)); }
inline fs::path model_file(const RunConfig& c, ModelKind k, int node) {
    return model_dir(c, k) / ("node_" + std::to_string(node) + ".fbm");
}
inline fs::path metrics(const RunConfig& c, ModelKind k, const char* ext) {
    return c.out / "metrics" / (std::string(to_string(k)) + "_node_metrics" + ext);
}
inline fs::path matrix(const RunConfig& c, const std::string& name, const char* ext) {
    return c.out / "cross_eval" / (name + "_matrix" + ext);
}
inline fs::path scorecard(const RunConfig& c, const char* ext) { return c.out / "score" / (std::string("scorecard") + ext); }
inline fs::path federation(const RunConfig& c, const std::string& name, const char* ext) {
    return c.out / "federation" / (name + "_report" + ext);
}
inline fs::path long_report(const RunConfig& c) { return c.out / "report" / "long.csv"; }
} // namespace paths

inline std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline nlohmann::json with_provenance(nlohmann::json body, const RunConfig& c) {
    body["config"] = to_json(c);
    body["seed"] = c.seed ? nlohmann::json(*c.seed) : nlohmann::json(nullptr);
    return body;
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path))
        throw DataError("missing input " + path.string() + " (run the earlier pipeline step first)");
    auto j = nlohmann::json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) throw DataError(path.string() + ": corrupt JSON");
    return j;
}

inline Dataset to_binary(Dataset ds) {
    for (auto& y : ds.labels) y = y == 0 ? 0 : 1;
    ds.label_mode = LabelMode::Binary;
    return ds;
}

/// Node datasets for the configured source: the N-BaIoT root, or the
/// synthetic federation previously written by `synth`.
inline std::vector<Dataset> load_nodes(const RunConfig& c) {
    const auto root = c.data_root ? *c.data_root : paths::data(c);
    if (!c.data_root && !std::filesystem::is_directory(root))
        throw DataError("missing input " + root.string() + " (run synth first)");
    return load_federation(root, c.label_mode).nodes;
}

inline std::vector<TrainTestSplit> split_nodes(const RunConfig& c, const std::vector<Dataset>& nodes) {
    std::vector<TrainTestSplit> out(nodes.size());
    parallel_for(nodes.size(), c.jobs, [&](std::size_t i) { out[i] = split(nodes[i], c.split_for(nodes[i].node_id)); });
    return out;
}

inline std::vector<Dataset> test_sets(const std::vector<TrainTestSplit>& splits) {
    std::vector<Dataset> out;
    for (const auto& s : splits) out.push_back(s.test);
    return out;
}

inline TrainedModel load_model_file(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path))
        throw DataError("missing input " + path.string() + " (run train first)");
    auto text = read_file(path);
    try {
        return deserialize_model(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    } catch (const FormatError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Commands

inline void cmd_synth(const RunConfig& c) {
    c.validate();
    if (!c.synthetic) throw ConfigError("synth needs a synthetic data source in the config");
    auto nodes = generate_synthetic_federation(*c.synthetic);
    parallel_for(nodes.size(), c.jobs, [&](std::size_t i) {
        write_device_dir(nodes[i], paths::data(c) / ("device_" + std::to_string(nodes[i].node_id)));
    });
    write_file_atomic(paths::data(c) / "synthetic.json", dump(with_provenance({{"nodes", nodes.size()}}, c)));
}

inline void cmd_train(const RunConfig& c) {
    c.validate();
    const auto nodes = load_nodes(c);
    const auto splits = split_nodes(c, nodes);
    for (auto kind : c.models) {
        const auto spec = c.trainer(kind);
        std::vector<NodeMetrics> metrics(splits.size());
        parallel_for(splits.size(), c.jobs, [&](std::size_t i) {
            auto update = local_train_round(splits[i].train, spec);
            auto model = deserialize_model(update.payload);
            const double seconds =
                c.timing == TimingMode::Wall ? update.training_time : static_cast<double>(update.work_units) * 1e-9;
            metrics[i] = {update.node_id, accuracy(model, splits[i].test), std::max(seconds, 1e-9),
                          update.train_rows};
            write_file_atomic(paths::model_file(c, kind, update.node_id),
                              std::string_view(reinterpret_cast<const char*>(update.payload.data()),
                                               update.payload.size()));
        });
        write_file_atomic(paths::metrics(c, kind, ".csv"), to_csv(std::span<const NodeMetrics>(metrics)));
        auto rows = nlohmann::json::array();
        for (const auto& m : metrics)
            rows.push_back({{"node", m.node_id},
                            {"accuracy", m.accuracy},
                            {"training_time", m.training_time},
                            {"train_rows", m.train_rows}});
        write_file_atomic(paths::metrics(c, kind, ".json"),
                          dump(with_provenance({{"model", to_string(kind)},
                                                {"timing", c.timing == TimingMode::Wall ? "wall" : "work"},
                                                {"scaled", spec.scale},
                                                {"nodes", std::move(rows)}},
                                               c)));
    }
}

inline std::vector<NodeMetrics> read_node_metrics(const RunConfig& c, ModelKind kind) {
    auto j = read_json(paths::metrics(c, kind, ".json"));
    std::vector<NodeMetrics> out;
    try {
        for (const auto& n : j.at("nodes"))
            out.push_back({n.at("node").get<int>(), n.at("accuracy").get<double>(),
                           n.at("training_time").get<double>(), n.at("train_rows").get<std::size_t>()});
    } catch (const nlohmann::json::exception& e) {
        throw DataError(paths::metrics(c, kind, ".json").string() + ": " + e.what());
    }
    return out;
}

inline std::vector<TrainedModel> load_models(const RunConfig& c, ModelKind kind, const std::vector<Dataset>& nodes) {
    std::vector<TrainedModel> models(nodes.size());
    parallel_for(nodes.size(), c.jobs,
                 [&](std::size_t i) { models[i] = load_model_file(paths::model_file(c, kind, nodes[i].node_id)); });
    return models;
}

inline void cmd_cross_eval(const RunConfig& c) {
    c.validate();
    const auto nodes = load_nodes(c);
    const auto tests = test_sets(split_nodes(c, nodes));
    for (auto kind : c.models) {
        auto models = load_models(c, kind, nodes);
        auto m = evaluate_matrix(models, tests, std::string(to_string(kind)), c.jobs);
        write_file_atomic(paths::matrix(c, m.model, ".csv"), to_csv(m));
        write_file_atomic(paths::matrix(c, m.model, ".json"), dump(with_provenance(to_json(m), c)));
    }
}

inline void cmd_score(const RunConfig& c) {
    c.validate();
    std::vector<ModelMetrics> all;
    for (auto kind : c.models) all.push_back({std::string(to_string(kind)), read_node_metrics(c, kind)});
    auto card = score_models(all, c.weights);
    write_file_atomic(paths::scorecard(c, ".csv"), to_csv(card));
    write_file_atomic(paths::scorecard(c, ".json"), dump(with_provenance(to_json(card), c)));
}

inline AccuracyMatrix read_matrix_json(const std::filesystem::path& path) {
    auto j = read_json(path);
    AccuracyMatrix m;
    try {
        m.model = j.at("model").get<std::string>();
        auto rows = j.at("values").get<std::vector<std::vector<double>>>();
        m.values = Matrix(0, rows.empty() ? 0 : rows.front().size());
        for (const auto& r : rows) {
            if (r.size() != m.values.cols()) throw DataError(path.string() + ": ragged matrix");
            m.values.append_row(r);
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    m.validate();
    return m;
}

/// Report for a published matrix file (no models): average column only.
inline FederationReport cmd_federate_matrix(const RunConfig& c, const std::filesystem::path& matrix_csv) {
    if (!std::filesystem::is_regular_file(matrix_csv)) throw DataError("missing input " + matrix_csv.string());
    auto m = accuracy_matrix_from_csv(read_file(matrix_csv), matrix_csv.stem().string(), matrix_csv.string());
    auto report = report_from_matrix(m);
    write_file_atomic(paths::federation(c, report.model, ".csv"), to_csv(report));
    auto body = to_json(report);
    body["source_matrix"] = matrix_csv.filename().string();
    write_file_atomic(paths::federation(c, report.model, ".json"), dump(with_provenance(std::move(body), c)));
    return report;
}

inline void cmd_federate(const RunConfig& c) {
    c.validate();
    const auto nodes = load_nodes(c);
    const auto splits = split_nodes(c, nodes);
    const auto tests = test_sets(splits);
    for (auto kind : c.federate_models) {
        const auto metrics = read_node_metrics(c, kind);
        if (metrics.size() != nodes.size()) throw DataError("node metrics do not match the loaded node count");
        std::vector<ModelUpdate> updates;
        std::vector<std::size_t> raw;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const auto path = paths::model_file(c, kind, nodes[i].node_id);
            if (!std::filesystem::is_regular_file(path))
                throw DataError("missing input " + path.string() + " (run train first)");
            auto text = read_file(path);
            ModelUpdate u;
            u.node_id = nodes[i].node_id;
            u.payload.assign(text.begin(), text.end());
            u.payload_bytes = u.payload.size();
            u.training_time = metrics[i].training_time;
            u.train_rows = metrics[i].train_rows;
            updates.push_back(std::move(u));
            raw.push_back(csv_byte_size(splits[i].train));
        }
        auto ensemble = aggregate(updates);
        auto matrix = read_matrix_json(paths::matrix(c, std::string(to_string(kind)), ".json"));
        if (c.performance_weights) ensemble = with_performance_weights(std::move(ensemble), matrix);
        auto report = evaluate_federation(ensemble, matrix, tests, c.jobs);
        report.communication = communication_cost(updates, raw);
        auto body = to_json(report);
        body["member_weights"] = ensemble.member_weights;
        body["weighting"] = c.performance_weights ? "performance (extension)" : "equal";
        write_file_atomic(paths::federation(c, report.model, ".csv"), to_csv(report));
        write_file_atomic(paths::federation(c, report.model, ".json"), dump(with_provenance(std::move(body), c)));
    }
}

/// Long-format `model,node,metric,value` rows from every report present.
inline void cmd_report(const RunConfig& c) {
    namespace fs = std::filesystem;
    std::string out = "model,node,metric,value\n";
    auto row = [&](const std::string& model, const std::string& node, const std::string& metric, double v) {
        out += model + ',' + node + ',' + metric + ',';
        append_double(out, v);
        out += '\n';
    };
    std::size_t sources = 0;
    for (auto kind : c.models) {
        const std::string name(to_string(kind));
        if (fs::is_regular_file(paths::metrics(c, kind, ".json"))) {
            ++sources;
            for (const auto& m : read_node_metrics(c, kind)) {
                const auto node = std::to_string(m.node_id);
                row(name, node, "accuracy", m.accuracy);
                row(name, node, "training_time", m.training_time);
                row(name, node, "train_rows", static_cast<double>(m.train_rows));
            }
        }
        if (fs::is_regular_file(paths::matrix(c, name, ".json"))) {
            ++sources;
            auto m = read_matrix_json(paths::matrix(c, name, ".json"));
            for (std::size_t i = 0; i < m.n_nodes(); ++i)
                for (std::size_t j = 0; j < m.n_nodes(); ++j)
                    row(name, std::to_string(i + 1), "accuracy_on_node_" + std::to_string(j + 1), m.values(i, j));
        }
    }
    if (fs::is_regular_file(paths::scorecard(c, ".json"))) {
        ++sources;
        auto j = read_json(paths::scorecard(c, ".json"));
        for (const auto& e : j.at("entries"))
            for (const char* key : {"weighted_avg_accuracy", "weighted_avg_time", "normalized_accuracy",
                                    "normalized_training_time", "score"})
                row(e.at("model").get<std::string>(), "all", key, e.at(key).get<double>());
    }
    if (fs::is_directory(c.out / "federation")) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(c.out / "federation"))
            if (entry.path().extension() == ".json") files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            ++sources;
            auto j = read_json(f);
            const auto model = j.at("model").get<std::string>();
            for (const auto& n : j.at("nodes")) {
                const auto node = std::to_string(n.at("node").get<int>());
                row(model, node, "avg_accuracy_per_node", n.at("avg_accuracy_per_node").get<double>());
                if (!n.at("ensemble_accuracy").is_null())
                    row(model, node, "ensemble_accuracy", n.at("ensemble_accuracy").get<double>());
            }
            if (j.contains("communication") && !j.at("communication").is_null()) {
                const auto& s = j.at("communication");
                row(model, "all", "total_update_bytes", s.at("total_update_bytes").get<double>());
                row(model, "all", "total_raw_train_bytes", s.at("total_raw_train_bytes").get<double>());
                row(model, "all", "communication_ratio", s.at("ratio").get<double>());
            }
        }
    }
    if (sources == 0) throw DataError("report: no pipeline outputs found under " + c.out.string());
    write_file_atomic(paths::long_report(c), out);
}

/// synth (synthetic sources only), train, cross-eval, score (two or more
/// models), federate, report.
inline void cmd_all(const RunConfig& c) {
    c.validate();
    if (c.synthetic) cmd_synth(c);
    cmd_train(c);
    cmd_cross_eval(c);
    if (c.models.size() >= 2) cmd_score(c);
    bool can_federate = true;
    for (auto k : c.federate_models)
        can_federate &= std::find(c.models.begin(), c.models.end(), k) != c.models.end();
    if (can_federate) cmd_federate(c);
    cmd_report(c);
    write_file_atomic(c.out / "run_config.json", dump(to_json(c)));
}

} // namespace fedbot
