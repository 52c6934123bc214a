#pragma once

// Multinomial (softmax) logistic regression trained by full-batch gradient
// descent on mean cross-entropy + (l2/2)||W||^2. The weight matrix is
// n_classes x (n_features + 1) with the bias in the last column.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "fedbot/dataset.hpp"
#include "fedbot/error.hpp"
#include "fedbot/matrix.hpp"
#include "fedbot/models/tree.hpp"

namespace fedbot {

struct LogisticParams {
    double learning_rate = 0.1;
    int epochs = 200;
    double l2 = 1e-4;
    /// Training stops once an accepted step lowers the loss by less than this.
    double tolerance = 1e-6;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("logistic learning_rate must be > 0");
        if (epochs < 1) throw ConfigError("logistic epochs must be >= 1");
        if (!(l2 >= 0.0)) throw ConfigError("logistic l2 must be >= 0");
        if (!(tolerance > 0.0)) throw ConfigError("logistic tolerance must be > 0");
    }
};

struct LogisticModel {
    Matrix weights;

    std::size_t n_classes() const noexcept { return weights.rows(); }
    friend bool operator==(const LogisticModel&, const LogisticModel&) = default;
};

/// Class probabilities for one row (max-shifted for stability).
inline std::vector<double> softmax_probabilities(const Matrix& weights, std::span<const double> row) {
    const std::size_t k = weights.rows();
    const std::size_t d = weights.cols() - 1;
    std::vector<double> z(k);
    for (std::size_t c = 0; c < k; ++c) {
        auto w = weights.row(c);
        double acc = w[d];
        for (std::size_t j = 0; j < d; ++j) acc += w[j] * row[j];
        z[c] = acc;
    }
    const double top = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (auto& v : z) {
        v = std::exp(v - top);
        sum += v;
    }
    for (auto& v : z) v /= sum;
    return z;
}

/// Regularized loss at `weights`; fills `gradient` (same shape) when non-null.
inline double logistic_loss(const Matrix& weights, const Matrix& features, std::span<const ClassId> labels, double l2,
                            Matrix* gradient = nullptr) {
    const std::size_t n = features.rows();
    const std::size_t d = features.cols();
    const std::size_t k = weights.rows();
    if (gradient) *gradient = Matrix(k, d + 1);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        auto x = features.row(i);
        auto p = softmax_probabilities(weights, x);
        const auto y = static_cast<std::size_t>(labels[i]);
        loss -= std::log(std::max(p[y], std::numeric_limits<double>::min()));
        if (gradient) {
            p[y] -= 1.0;
            for (std::size_t c = 0; c < k; ++c) {
                auto g = gradient->row(c);
                const double pc = p[c];
                for (std::size_t j = 0; j < d; ++j) g[j] += pc * x[j];
                g[d] += pc;
            }
        }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    loss *= inv_n;
    double norm_sq = 0.0;
    for (double w : weights.values()) norm_sq += w * w;
    loss += 0.5 * l2 * norm_sq;
    if (gradient) {
        auto g = gradient->values();
        auto w = weights.values();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = g[i] * inv_n + l2 * w[i];
    }
    return loss;
}

struct LogisticTrace {
    /// Loss after initialization and after every accepted step.
    std::vector<double> losses;
    int rejected_steps = 0;
    /// Full passes over the data (loss + gradient evaluations).
    std::uint64_t passes = 0;
};

/// Starts from zero weights. A step that would raise the loss is rejected and
/// the learning rate halved, so accepted losses never increase.
inline LogisticModel fit_logistic(const Dataset& train, const LogisticParams& params, LogisticTrace* trace = nullptr) {
    params.validate();
    if (train.empty()) throw DataError("cannot train logistic regression on an empty dataset");
    std::size_t present = 0;
    for (auto c : class_histogram(train)) present += c > 0;
    if (present < 2) throw DataError("logistic regression needs at least 2 classes in the training data");

    const std::size_t k = static_cast<std::size_t>(class_count(train.label_mode));
    const std::size_t d = train.n_features();
    LogisticModel model{Matrix(k, d + 1)};
    LogisticTrace local;
    LogisticTrace& t = trace ? *trace : local;
    t = {};

    Matrix grad;
    double loss = logistic_loss(model.weights, train.features, train.labels, params.l2, &grad);
    ++t.passes;
    t.losses.push_back(loss);
    double rate = params.learning_rate;

    Matrix candidate(k, d + 1), candidate_grad;
    for (int epoch = 0; epoch < params.epochs; ++epoch) {
        auto w = model.weights.values();
        auto g = grad.values();
        auto cw = candidate.values();
        for (std::size_t i = 0; i < w.size(); ++i) cw[i] = w[i] - rate * g[i];
        const double next = logistic_loss(candidate, train.features, train.labels, params.l2, &candidate_grad);
        ++t.passes;
        if (!(next <= loss)) {
            ++t.rejected_steps;
            rate *= 0.5;
            continue;
        }
        std::swap(model.weights, candidate);
        std::swap(grad, candidate_grad);
        const double delta = loss - next;
        loss = next;
        t.losses.push_back(loss);
        if (delta < params.tolerance) break;
    }
    return model;
}

inline ClassId logistic_predict(const LogisticModel& model, std::span<const double> row) {
    auto p = softmax_probabilities(model.weights, row);
    return argmax_lowest(std::span<const double>(p));
}

} // namespace fedbot
