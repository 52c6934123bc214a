#pragma once

// The classifier contract shared by all three lightweight models.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "fedbot/dataset.hpp"
#include "fedbot/error.hpp"
#include "fedbot/preprocess.hpp"
#include "fedbot/models/knn.hpp"
#include "fedbot/models/logistic.hpp"
#include "fedbot/models/tree.hpp"

namespace fedbot {

enum class ModelKind : std::uint8_t { Tree = 1, Knn = 2, Logistic = 3 };

inline std::string_view to_string(ModelKind kind) {
    switch (kind) {
    case ModelKind::Tree: return "tree";
    case ModelKind::Knn: return "knn";
    case ModelKind::Logistic: return "logistic";
    }
    return "unknown";
}

inline ModelKind parse_model_kind(std::string_view text) {
    if (text == "tree") return ModelKind::Tree;
    if (text == "knn") return ModelKind::Knn;
    if (text == "logistic") return ModelKind::Logistic;
    throw ConfigError("unknown model '" + std::string(text) + "' (expected tree|knn|logistic)");
}

struct TrainedModel {
    std::variant<DecisionTree, KnnModel, LogisticModel> state;
    std::size_t n_features = 0;
    LabelMode label_mode = LabelMode::Multiclass;
    int training_node_id = 1;
    /// Applied to every input row before the classifier sees it.
    std::optional<Scaler> scaler;

    ModelKind kind() const noexcept { return static_cast<ModelKind>(state.index() + 1); }
    int n_classes() const noexcept { return class_count(label_mode); }

    friend bool operator==(const TrainedModel&, const TrainedModel&) = default;
};

inline ClassId predict(const TrainedModel& model, std::span<const double> row) {
    if (row.size() != model.n_features)
        throw DataError("predict: row has " + std::to_string(row.size()) + " features, model expects " +
                        std::to_string(model.n_features));
    std::vector<double> scaled;
    if (model.scaler) {
        scaled.resize(row.size());
        model.scaler->transform_row(row, scaled);
        row = scaled;
    }
    return std::visit(
        [&](const auto& m) -> ClassId {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, DecisionTree>) return tree_predict(m, row);
            else if constexpr (std::is_same_v<T, KnnModel>) return knn_predict(m, row);
            else return logistic_predict(m, row);
        },
        model.state);
}

inline std::vector<ClassId> predict_batch(const TrainedModel& model, const Matrix& rows) {
    if (rows.cols() != model.n_features && rows.rows() > 0)
        throw DataError("predict_batch: rows have " + std::to_string(rows.cols()) + " features, model expects " +
                        std::to_string(model.n_features));
    std::vector<ClassId> out(rows.rows());
    for (std::size_t i = 0; i < rows.rows(); ++i) out[i] = predict(model, rows.row(i));
    return out;
}

namespace detail {

inline TrainedModel wrap(auto state, const Dataset& train) {
    TrainedModel m;
    m.state = std::move(state);
    m.n_features = train.n_features();
    m.label_mode = train.label_mode;
    m.training_node_id = train.node_id;
    return m;
}

} // namespace detail

inline TrainedModel train_decision_tree(const Dataset& train, const TreeParams& params,
                                        std::uint64_t* work = nullptr) {
    if (train.empty()) throw DataError("cannot train a decision tree on an empty dataset");
    return detail::wrap(grow_tree(train.features, train.labels, class_count(train.label_mode), params, work), train);
}

inline TrainedModel train_knn(Dataset train, const KnnParams& params) {
    Dataset meta;
    meta.features = Matrix(0, train.n_features());
    meta.label_mode = train.label_mode;
    meta.node_id = train.node_id;
    return detail::wrap(fit_knn(std::move(train), params), meta);
}

inline TrainedModel train_logistic(const Dataset& train, const LogisticParams& params,
                                   LogisticTrace* trace = nullptr) {
    return detail::wrap(fit_logistic(train, params, trace), train);
}

/// Which classifier to fit and with what settings. `scale` standardizes the
/// training split and embeds the fitted scaler in the model; it is required
/// for the distance/gradient based models and optional for trees.
struct TrainerSpec {
    std::variant<TreeParams, KnnParams, LogisticParams> params;
    bool scale = false;

    static TrainerSpec tree(TreeParams p = {}, bool scale = false) { return {p, scale}; }
    static TrainerSpec knn(KnnParams p = {}) { return {p, true}; }
    static TrainerSpec logistic(LogisticParams p = {}) { return {p, true}; }

    ModelKind kind() const noexcept { return static_cast<ModelKind>(params.index() + 1); }

    void validate() const {
        std::visit([](const auto& p) { p.validate(); }, params);
        if (!scale && kind() != ModelKind::Tree)
            throw ConfigError(std::string(to_string(kind())) + " requires feature scaling");
    }
};

/// Training data after the optional scaling step.
struct PreparedTrain {
    std::optional<Scaler> scaler;
    Dataset data;
};

inline PreparedTrain prepare_training(const TrainerSpec& spec, const Dataset& train) {
    spec.validate();
    if (!spec.scale) return {std::nullopt, train};
    auto scaler = fit_scaler(train);
    return {scaler, apply_scaler(scaler, train)};
}

/// Deterministic effort count for one fit: rows x columns scanned (tree),
/// values stored (knn), or rows x weights per gradient pass (logistic).
struct FitOutcome {
    TrainedModel model;
    std::uint64_t work_units = 0;
};

/// Fits on already-prepared data; the scaler is attached by the caller.
inline FitOutcome fit_prepared(const TrainerSpec& spec, Dataset data) {
    FitOutcome out;
    switch (spec.kind()) {
    case ModelKind::Tree:
        out.model = train_decision_tree(data, std::get<TreeParams>(spec.params), &out.work_units);
        break;
    case ModelKind::Knn:
        out.work_units = data.size() * data.n_features();
        out.model = train_knn(std::move(data), std::get<KnnParams>(spec.params));
        break;
    case ModelKind::Logistic: {
        LogisticTrace trace;
        out.model = train_logistic(data, std::get<LogisticParams>(spec.params), &trace);
        out.work_units = trace.passes * data.size() * (data.n_features() + 1) *
                         static_cast<std::uint64_t>(class_count(data.label_mode));
        break;
    }
    }
    return out;
}

inline TrainedModel fit(const TrainerSpec& spec, const Dataset& train) {
    auto prepared = prepare_training(spec, train);
    auto out = fit_prepared(spec, std::move(prepared.data));
    out.model.scaler = std::move(prepared.scaler);
    return std::move(out.model);
}

} // namespace fedbot
