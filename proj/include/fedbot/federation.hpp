#pragma once

// Node/edge simulation: nodes fit local models and ship serialized updates;
// the edge deserializes them into a majority-vote ensemble (the general
// model) and the simulator tallies the bytes exchanged.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedbot/dataset.hpp"
#include "fedbot/error.hpp"
#include "fedbot/evaluation.hpp"
#include "fedbot/io.hpp"
#include "fedbot/models/model.hpp"
#include "fedbot/models/serialize.hpp"
#include "fedbot/parallel.hpp"

namespace fedbot {

/// The only artifact that leaves a node: model bytes plus bookkeeping.
struct ModelUpdate {
    int node_id = 1;
    Bytes payload;
    std::size_t payload_bytes = 0;
    double training_time = 0.0;
    std::size_t train_rows = 0;
    std::uint64_t work_units = 0;
};

/// Fits on the node's train split and packages the serialized model.
inline ModelUpdate local_train_round(const Dataset& train, const TrainerSpec& spec) {
    if (train.empty()) throw DataError("node " + std::to_string(train.node_id) + ": empty training split");
    TimedFit fitted;
    try {
        fitted = timed_train(spec, train);
    } catch (const DataError& e) {
        throw DataError("node " + std::to_string(train.node_id) + ": " + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError("node " + std::to_string(train.node_id) + ": " + e.what());
    }
    ModelUpdate u;
    u.node_id = train.node_id;
    u.payload = serialize_model(fitted.model);
    u.payload_bytes = u.payload.size();
    u.training_time = fitted.seconds;
    u.train_rows = train.size();
    u.work_units = fitted.work_units;
    return u;
}

struct EnsembleModel {
    std::vector<TrainedModel> members;
    std::vector<int> member_nodes;
    std::vector<double> member_weights;

    std::size_t n_features() const { return members.front().n_features; }
    LabelMode label_mode() const { return members.front().label_mode; }
    int n_classes() const { return members.front().n_classes(); }

    void validate() const {
        if (members.empty()) throw DataError("ensemble needs at least one member");
        if (member_weights.size() != members.size() || member_nodes.size() != members.size())
            throw DataError("ensemble member/weight count mismatch");
        double total = 0.0;
        for (double w : member_weights) {
            if (!(w >= 0.0)) throw DataError("ensemble weights must be non-negative");
            total += w;
        }
        if (!(total > 0.0)) throw DataError("ensemble weights must have a positive sum");
        for (const auto& m : members)
            if (m.n_features != n_features() || m.label_mode != label_mode())
                throw DataError("ensemble members disagree on feature count or label mode");
    }
};

/// Deserializes every update into an equally weighted member, in node-id order.
inline EnsembleModel aggregate(std::span<const ModelUpdate> updates) {
    if (updates.empty()) throw DataError("aggregate: no model updates");
    std::vector<const ModelUpdate*> ordered;
    for (const auto& u : updates) ordered.push_back(&u);
    std::stable_sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->node_id < b->node_id; });

    EnsembleModel e;
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        const auto& u = *ordered[i];
        if (i > 0 && ordered[i - 1]->node_id == u.node_id)
            throw DataError("aggregate: duplicate update from node " + std::to_string(u.node_id));
        if (u.payload_bytes != u.payload.size())
            throw DataError("aggregate: node " + std::to_string(u.node_id) + " reports a wrong payload size");
        try {
            e.members.push_back(deserialize_model(u.payload));
        } catch (const FormatError& err) {
            throw DataError("aggregate: node " + std::to_string(u.node_id) + ": " + err.what());
        }
        e.member_nodes.push_back(u.node_id);
        e.member_weights.push_back(1.0);
    }
    e.validate();
    return e;
}

/// Extension beyond equal weighting: each member weighted by its accuracy on
/// its own node (the matrix diagonal).
inline EnsembleModel with_performance_weights(EnsembleModel e, const AccuracyMatrix& matrix) {
    if (matrix.n_nodes() != e.members.size()) throw DataError("performance weights: matrix size mismatch");
    e.member_weights = diagonal(matrix);
    e.validate();
    return e;
}

/// Weighted vote tally per class for one row.
inline std::vector<double> ensemble_votes(const EnsembleModel& e, std::span<const double> row) {
    if (row.size() != e.n_features())
        throw DataError("ensemble_predict: row has " + std::to_string(row.size()) + " features, ensemble expects " +
                        std::to_string(e.n_features()));
    std::vector<double> tally(static_cast<std::size_t>(e.n_classes()), 0.0);
    for (std::size_t m = 0; m < e.members.size(); ++m)
        tally[static_cast<std::size_t>(predict(e.members[m], row))] += e.member_weights[m];
    return tally;
}

/// Majority vote; ties resolve to the lowest class id.
inline ClassId ensemble_predict(const EnsembleModel& e, std::span<const double> row) {
    auto tally = ensemble_votes(e, row);
    return argmax_lowest(std::span<const double>(tally));
}

inline double ensemble_accuracy(const EnsembleModel& e, const Dataset& test) {
    if (test.empty()) throw DataError("ensemble accuracy: empty test set");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < test.size(); ++i) hits += ensemble_predict(e, test.features.row(i)) == test.labels[i];
    return static_cast<double>(hits) / static_cast<double>(test.size());
}

// ---------------------------------------------------------------------------
// Communication accounting

struct CommunicationSummary {
    std::uint64_t total_update_bytes = 0;
    /// CSV size of the training data that stayed on the nodes.
    std::uint64_t total_raw_train_bytes = 0;
    double ratio = 0.0;
};

inline CommunicationSummary communication_cost(std::span<const ModelUpdate> updates,
                                               std::span<const std::size_t> raw_train_bytes) {
    if (updates.empty()) throw DataError("communication_cost: no updates");
    if (updates.size() != raw_train_bytes.size())
        throw DataError("communication_cost: one raw size per update required");
    CommunicationSummary s;
    for (const auto& u : updates) s.total_update_bytes += u.payload_bytes;
    for (auto b : raw_train_bytes) s.total_raw_train_bytes += b;
    if (s.total_raw_train_bytes == 0) throw DataError("communication_cost: raw training size is zero");
    s.ratio = static_cast<double>(s.total_update_bytes) / static_cast<double>(s.total_raw_train_bytes);
    return s;
}

// ---------------------------------------------------------------------------
// Reports

struct NodeFederationResult {
    int node_id = 1;
    /// Mean accuracy of this node's model over every node's test split.
    double avg_accuracy = 0.0;
    /// Absent when only a published matrix was supplied.
    std::optional<double> ensemble_accuracy;
};

struct FederationReport {
    std::string model;
    std::vector<NodeFederationResult> nodes;
    std::optional<CommunicationSummary> communication;
};

/// Average column only, from a matrix without models.
inline FederationReport report_from_matrix(const AccuracyMatrix& matrix) {
    matrix.validate();
    FederationReport r;
    r.model = matrix.model;
    auto avg = row_average(matrix);
    for (std::size_t i = 0; i < avg.size(); ++i) r.nodes.push_back({static_cast<int>(i + 1), avg[i], std::nullopt});
    return r;
}

inline FederationReport evaluate_federation(const EnsembleModel& e, const AccuracyMatrix& matrix,
                                            std::span<const Dataset> tests, int jobs = 1) {
    e.validate();
    if (e.members.size() != matrix.n_nodes() || tests.size() != matrix.n_nodes())
        throw DataError("evaluate_federation: " + std::to_string(e.members.size()) + " members, " +
                        std::to_string(matrix.n_nodes()) + "-node matrix, " + std::to_string(tests.size()) +
                        " test sets");
    auto report = report_from_matrix(matrix);
    std::vector<double> acc(tests.size());
    parallel_for(tests.size(), jobs, [&](std::size_t j) { acc[j] = ensemble_accuracy(e, tests[j]); });
    for (std::size_t j = 0; j < tests.size(); ++j) report.nodes[j].ensemble_accuracy = acc[j];
    return report;
}

inline std::string to_csv(const FederationReport& r) {
    std::string out = "node,avg_accuracy_per_node,ensemble_accuracy\n";
    for (const auto& n : r.nodes) {
        out += std::to_string(n.node_id) + ',';
        append_double(out, n.avg_accuracy);
        out += ',';
        if (n.ensemble_accuracy) append_double(out, *n.ensemble_accuracy);
        else out += "NA";
        out += '\n';
    }
    return out;
}

inline nlohmann::json to_json(const CommunicationSummary& s) {
    return {{"total_update_bytes", s.total_update_bytes},
            {"total_raw_train_bytes", s.total_raw_train_bytes},
            {"ratio", s.ratio}};
}

inline nlohmann::json to_json(const FederationReport& r) {
    auto nodes = nlohmann::json::array();
    for (const auto& n : r.nodes)
        nodes.push_back({{"node", n.node_id},
                         {"avg_accuracy_per_node", n.avg_accuracy},
                         {"ensemble_accuracy", n.ensemble_accuracy ? nlohmann::json(*n.ensemble_accuracy)
                                                                   : nlohmann::json(nullptr)}});
    nlohmann::json j{{"model", r.model}, {"nodes", std::move(nodes)}};
    j["communication"] = r.communication ? to_json(*r.communication) : nlohmann::json(nullptr);
    return j;
}

// ---------------------------------------------------------------------------
// Simulation driver

struct FederationOptions {
    /// Train -> aggregate cycles. Local data is static, so extra rounds
    /// reproduce the first; the loop is where iterative schemes would plug in.
    int rounds = 1;
    int jobs = 1;
    bool performance_weights = false;
};

struct FederationRun {
    std::vector<ModelUpdate> updates;
    EnsembleModel ensemble;
    AccuracyMatrix matrix;
    FederationReport report;
};

inline FederationRun run_federation(std::span<const TrainTestSplit> nodes, const TrainerSpec& spec,
                                    const FederationOptions& options = {}) {
    if (nodes.size() < 2) throw DataError("federation needs at least 2 nodes");
    if (options.rounds < 1) throw ConfigError("federation rounds must be >= 1");
    FederationRun run;
    std::vector<Dataset> tests;
    std::vector<std::size_t> raw;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& n = nodes[i];
        if (i > 0 && n.train.node_id <= nodes[i - 1].train.node_id)
            throw DataError("federation nodes must be in ascending node-id order");
        tests.push_back(n.test);
        raw.push_back(csv_byte_size(n.train));
    }
    for (int round = 0; round < options.rounds; ++round) {
        run.updates.assign(nodes.size(), {});
        parallel_for(nodes.size(), options.jobs,
                     [&](std::size_t i) { run.updates[i] = local_train_round(nodes[i].train, spec); });
        run.ensemble = aggregate(run.updates);
    }
    run.matrix = evaluate_matrix(run.ensemble.members, tests, std::string(to_string(spec.kind())), options.jobs);
    if (options.performance_weights) run.ensemble = with_performance_weights(std::move(run.ensemble), run.matrix);
    run.report = evaluate_federation(run.ensemble, run.matrix, tests, options.jobs);
    run.report.communication = communication_cost(run.updates, raw);
    return run;
}

} // namespace fedbot
