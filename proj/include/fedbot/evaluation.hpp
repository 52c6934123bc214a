#pragma once

// Accuracy, timing, cross-node matrices and the accuracy/time model score.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <mutex>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedbot/dataset.hpp"
#include "fedbot/error.hpp"
#include "fedbot/io.hpp"
#include "fedbot/matrix.hpp"
#include "fedbot/models/model.hpp"
#include "fedbot/parallel.hpp"

namespace fedbot {

/// Fraction of rows whose prediction equals the label.
inline double accuracy(const TrainedModel& model, const Dataset& test) {
    if (test.empty()) throw DataError("accuracy: empty test set");
    if (test.n_features() != model.n_features)
        throw DataError("accuracy: test set has " + std::to_string(test.n_features()) + " features, model expects " +
                        std::to_string(model.n_features));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < test.size(); ++i) hits += predict(model, test.features.row(i)) == test.labels[i];
    return static_cast<double>(hits) / static_cast<double>(test.size());
}

struct TimedFit {
    TrainedModel model;
    /// Wall-clock seconds of the fit call alone (scaling excluded).
    double seconds = 0.0;
    std::uint64_t work_units = 0;
};

namespace detail {
inline std::mutex& timing_mutex() {
    static std::mutex m;
    return m;
}
} // namespace detail

/// Fits with a monotonic clock around the classifier fit only. Timed fits are
/// single-flight across the process so concurrent work cannot skew them.
inline TimedFit timed_train(const TrainerSpec& spec, const Dataset& train) {
    auto prepared = prepare_training(spec, train);
    std::lock_guard lock(detail::timing_mutex());
    const auto start = std::chrono::steady_clock::now();
    auto outcome = fit_prepared(spec, std::move(prepared.data));
    const auto stop = std::chrono::steady_clock::now();
    outcome.model.scaler = std::move(prepared.scaler);
    const double seconds = std::chrono::duration<double>(stop - start).count();
    return {std::move(outcome.model), std::max(seconds, 1e-9), outcome.work_units};
}

// ---------------------------------------------------------------------------
// Cross-node evaluation

/// Row = training node, column = evaluation node.
struct AccuracyMatrix {
    std::string model;
    Matrix values;

    std::size_t n_nodes() const noexcept { return values.rows(); }

    void validate() const {
        if (values.rows() != values.cols()) throw DataError("accuracy matrix must be square");
        for (double v : values.values())
            if (!(v >= 0.0 && v <= 1.0)) throw DataError("accuracy matrix entry outside [0, 1]");
    }

    friend bool operator==(const AccuracyMatrix&, const AccuracyMatrix&) = default;
};

/// Entry (i, j) = accuracy of models[i] on tests[j].
inline AccuracyMatrix evaluate_matrix(std::span<const TrainedModel> models, std::span<const Dataset> tests,
                                      std::string model_name, int jobs = 1) {
    if (models.size() < 2) throw DataError("cross-node evaluation needs at least 2 nodes");
    if (models.size() != tests.size())
        throw DataError("cross-node evaluation: " + std::to_string(models.size()) + " models for " +
                        std::to_string(tests.size()) + " test sets");
    for (std::size_t j = 0; j < tests.size(); ++j)
        if (tests[j].n_features() != models[0].n_features)
            throw DataError("node " + std::to_string(j + 1) + " has a different feature dimension");
    const auto n = models.size();
    AccuracyMatrix m{std::move(model_name), Matrix(n, n)};
    parallel_for(n * n, jobs, [&](std::size_t cell) {
        m.values(cell / n, cell % n) = accuracy(models[cell / n], tests[cell % n]);
    });
    return m;
}

/// Trains one model per node on its train split, then evaluates every model
/// on every node's held-out test split.
inline AccuracyMatrix cross_node_matrix(const TrainerSpec& spec, std::span<const TrainTestSplit> nodes, int jobs = 1) {
    if (nodes.size() < 2) throw DataError("cross-node evaluation needs at least 2 nodes");
    std::vector<TrainedModel> models(nodes.size());
    std::vector<Dataset> tests;
    tests.reserve(nodes.size());
    for (const auto& n : nodes) tests.push_back(n.test);
    parallel_for(nodes.size(), jobs, [&](std::size_t i) { models[i] = fit(spec, nodes[i].train); });
    return evaluate_matrix(models, tests, std::string(to_string(spec.kind())), jobs);
}

inline std::vector<double> row_average(const AccuracyMatrix& m) {
    std::vector<double> out(m.values.rows());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double sum = 0.0;
        for (double v : m.values.row(i)) sum += v;
        out[i] = sum / static_cast<double>(m.values.cols());
    }
    return out;
}

inline std::vector<double> diagonal(const AccuracyMatrix& m) {
    std::vector<double> out(m.n_nodes());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = m.values(i, i);
    return out;
}

// ---------------------------------------------------------------------------
// Scoring

inline double weighted_average(std::span<const double> values, std::span<const double> weights) {
    if (values.size() != weights.size()) throw ConfigError("weighted_average: length mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (weights[i] < 0.0) throw ConfigError("weighted_average: negative weight");
        num += weights[i] * values[i];
        den += weights[i];
    }
    if (!(den > 0.0)) throw ConfigError("weighted_average: weights sum to zero");
    return num / den;
}

/// (v - min) / (max - min), or one minus that when `invert`. All-equal input
/// maps to 0.5 everywhere.
inline std::vector<double> min_max_normalize(std::span<const double> values, bool invert) {
    if (values.size() < 2) throw ConfigError("min_max_normalize needs at least 2 values");
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double min = *lo, range = *hi - *lo;
    std::vector<double> out(values.size(), 0.5);
    if (!(range > 0.0)) return out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = (values[i] - min) / range;
        out[i] = invert ? 1.0 - v : v;
    }
    return out;
}

struct ScoreWeights {
    double accuracy_weight = 0.5;
    double training_time_weight = 0.5;

    void validate() const {
        if (!(accuracy_weight >= 0.0 && accuracy_weight <= 1.0 && training_time_weight >= 0.0 &&
              training_time_weight <= 1.0))
            throw ConfigError("score weights must lie in [0, 1]");
        if (std::abs(accuracy_weight + training_time_weight - 1.0) > 1e-12)
            throw ConfigError("score weights must sum to 1");
    }
};

inline double score(double normalized_accuracy, double normalized_training_time, const ScoreWeights& w) {
    w.validate();
    if (!(normalized_accuracy >= 0.0 && normalized_accuracy <= 1.0) ||
        !(normalized_training_time >= 0.0 && normalized_training_time <= 1.0))
        throw ConfigError("score inputs must lie in [0, 1]");
    return w.accuracy_weight * normalized_accuracy + w.training_time_weight * normalized_training_time;
}

struct NodeMetrics {
    int node_id = 1;
    double accuracy = 0.0;
    double training_time = 0.0;
    std::size_t train_rows = 0;

    friend bool operator==(const NodeMetrics&, const NodeMetrics&) = default;
};

struct ModelMetrics {
    std::string model;
    std::vector<NodeMetrics> nodes;
};

struct ScoreEntry {
    std::string model;
    double weighted_avg_accuracy = 0.0;
    double weighted_avg_time = 0.0;
    double normalized_accuracy = 0.0;
    double normalized_training_time = 0.0;
    double score = 0.0;
};

struct ScoreCard {
    /// Descending by score; equal scores fall back to normalized accuracy,
    /// then input order.
    std::vector<ScoreEntry> entries;
    ScoreWeights weights;
};

/// Row-count weighted averages per model, min-max normalized across models
/// (time inverted so faster is better), combined by the weighted score.
inline ScoreCard score_models(std::span<const ModelMetrics> models, const ScoreWeights& w) {
    w.validate();
    if (models.size() < 2) throw ConfigError("score_models needs at least 2 models");
    auto node_set = [](const ModelMetrics& m) {
        std::set<int> ids;
        for (const auto& n : m.nodes) ids.insert(n.node_id);
        if (ids.size() != m.nodes.size()) throw DataError("model " + m.model + " lists a node twice");
        return ids;
    };
    const auto reference = node_set(models[0]);
    if (reference.empty()) throw DataError("model " + models[0].model + " has no node metrics");

    ScoreCard card;
    card.weights = w;
    std::vector<double> accs, times;
    for (const auto& m : models) {
        if (node_set(m) != reference) throw DataError("model " + m.model + " covers a different node set");
        std::vector<double> a, t, rows;
        for (const auto& n : m.nodes) {
            if (!(n.accuracy >= 0.0 && n.accuracy <= 1.0)) throw DataError("node accuracy outside [0, 1]");
            if (!(n.training_time > 0.0)) throw DataError("node training time must be positive");
            a.push_back(n.accuracy);
            t.push_back(n.training_time);
            rows.push_back(static_cast<double>(n.train_rows));
        }
        ScoreEntry e;
        e.model = m.model;
        e.weighted_avg_accuracy = weighted_average(a, rows);
        e.weighted_avg_time = weighted_average(t, rows);
        accs.push_back(e.weighted_avg_accuracy);
        times.push_back(e.weighted_avg_time);
        card.entries.push_back(std::move(e));
    }
    const auto na = min_max_normalize(accs, false);
    const auto nt = min_max_normalize(times, true);
    for (std::size_t i = 0; i < card.entries.size(); ++i) {
        auto& e = card.entries[i];
        e.normalized_accuracy = na[i];
        e.normalized_training_time = nt[i];
        e.score = score(na[i], nt[i], w);
    }
    std::stable_sort(card.entries.begin(), card.entries.end(), [](const ScoreEntry& a, const ScoreEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.normalized_accuracy > b.normalized_accuracy;
    });
    return card;
}

// ---------------------------------------------------------------------------
// Report formats

inline std::string to_csv(const AccuracyMatrix& m) {
    std::string out = "train_node";
    for (std::size_t j = 0; j < m.n_nodes(); ++j) out += ",node_" + std::to_string(j + 1);
    out += '\n';
    for (std::size_t i = 0; i < m.n_nodes(); ++i) {
        out += "node_" + std::to_string(i + 1);
        for (double v : m.values.row(i)) {
            out += ',';
            append_double(out, v);
        }
        out += '\n';
    }
    return out;
}

inline AccuracyMatrix accuracy_matrix_from_csv(std::string_view text, std::string model, const std::string& source) {
    auto table = parse_csv_labeled(text, source);
    AccuracyMatrix m{std::move(model), std::move(table)};
    m.validate();
    return m;
}

inline nlohmann::json to_json(const AccuracyMatrix& m) {
    auto rows = nlohmann::json::array();
    for (std::size_t i = 0; i < m.n_nodes(); ++i) {
        auto r = m.values.row(i);
        rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    return {{"model", m.model},
            {"n_nodes", m.n_nodes()},
            {"rows", "training node"},
            {"columns", "evaluation node"},
            {"values", std::move(rows)},
            {"row_average", row_average(m)}};
}

inline std::string to_csv(const ScoreCard& card) {
    std::string out =
        "model,weighted_avg_accuracy,weighted_avg_time,normalized_accuracy,normalized_training_time,score\n";
    for (const auto& e : card.entries) {
        out += e.model;
        for (double v : {e.weighted_avg_accuracy, e.weighted_avg_time, e.normalized_accuracy,
                         e.normalized_training_time, e.score}) {
            out += ',';
            append_double(out, v);
        }
        out += '\n';
    }
    return out;
}

inline nlohmann::json to_json(const ScoreCard& card) {
    auto entries = nlohmann::json::array();
    for (const auto& e : card.entries)
        entries.push_back({{"model", e.model},
                           {"weighted_avg_accuracy", e.weighted_avg_accuracy},
                           {"weighted_avg_time", e.weighted_avg_time},
                           {"normalized_accuracy", e.normalized_accuracy},
                           {"normalized_training_time", e.normalized_training_time},
                           {"score", e.score}});
    return {{"weights",
             {{"accuracy_weight", card.weights.accuracy_weight},
              {"training_time_weight", card.weights.training_time_weight}}},
            {"entries", std::move(entries)}};
}

inline std::string to_csv(std::span<const NodeMetrics> metrics) {
    std::string out = "node,accuracy,training_time,train_rows\n";
    for (const auto& m : metrics) {
        out += std::to_string(m.node_id) + ',';
        append_double(out, m.accuracy);
        out += ',';
        append_double(out, m.training_time);
        out += ',' + std::to_string(m.train_rows) + '\n';
    }
    return out;
}

inline std::vector<NodeMetrics> node_metrics_from_csv(std::string_view text, const std::string& source) {
    auto table = parse_csv(text, source);
    if (table.header != std::vector<std::string>{"node", "accuracy", "training_time", "train_rows"})
        throw DataError(source + ":1: unexpected node metrics header");
    std::vector<NodeMetrics> out;
    for (std::size_t i = 0; i < table.rows.rows(); ++i) {
        auto r = table.rows.row(i);
        out.push_back({static_cast<int>(r[0]), r[1], r[2], static_cast<std::size_t>(r[3])});
    }
    return out;
}

} // namespace fedbot
