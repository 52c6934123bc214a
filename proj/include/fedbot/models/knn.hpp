#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedbot/dataset.hpp"
#include "fedbot/error.hpp"
#include "fedbot/matrix.hpp"
#include "fedbot/models/tree.hpp"

namespace fedbot {

struct KnnParams {
    int k = 5;

    void validate() const {
        if (k < 1) throw ConfigError("knn k must be >= 1");
    }
};

/// Lazy learner: the (already scaled) training rows and their labels.
struct KnnModel {
    Matrix features;
    std::vector<ClassId> labels;
    int k = 5;
    int n_classes = 0;

    friend bool operator==(const KnnModel&, const KnnModel&) = default;
};

/// Takes the rows by value so callers that are done with them can move them in.
inline KnnModel fit_knn(Dataset train, const KnnParams& params) {
    params.validate();
    if (static_cast<std::size_t>(params.k) > train.size())
        throw DataError("knn k=" + std::to_string(params.k) + " exceeds " + std::to_string(train.size()) +
                        " training rows");
    return KnnModel{std::move(train.features), std::move(train.labels), params.k, class_count(train.label_mode)};
}

/// Indices of the k stored rows nearest to `row` under Euclidean distance;
/// equal distances prefer the lower row index.
inline std::vector<std::size_t> knn_neighbors(const KnnModel& model, std::span<const double> row) {
    const std::size_t n = model.features.rows();
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto stored = model.features.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < stored.size(); ++j) {
            const double diff = stored[j] - row[j];
            acc += diff * diff;
        }
        dist[i] = {acc, i};
    }
    const auto k = static_cast<std::size_t>(model.k);
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    std::vector<std::size_t> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = dist[i].second;
    return out;
}

inline ClassId knn_predict(const KnnModel& model, std::span<const double> row) {
    std::vector<std::size_t> votes(static_cast<std::size_t>(model.n_classes), 0);
    for (auto i : knn_neighbors(model, row)) ++votes[static_cast<std::size_t>(model.labels[i])];
    return argmax_lowest(std::span<const std::size_t>(votes));
}

} // namespace fedbot
