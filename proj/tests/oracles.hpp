#pragma once

// Independent reference computations used only by tests. They deliberately
// take the slow, direct route (enumerate, recount, sort everything) rather
// than reusing the library's incremental algorithms.

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <vector>

#include "fedbot/matrix.hpp"

namespace fedbot::oracle {

struct SplitResult {
    int feature = -1;
    double threshold = 0.0;
    double decrease = 0.0;
};

inline double gini_from_labels(const std::vector<int>& labels, int n_classes) {
    if (labels.empty()) return 0.0;
    std::vector<double> counts(static_cast<std::size_t>(n_classes), 0.0);
    for (int y : labels) counts[static_cast<std::size_t>(y)] += 1.0;
    double s = 0.0;
    for (double c : counts) s += (c / labels.size()) * (c / labels.size());
    return 1.0 - s;
}

/// Every (column, midpoint) pair, partitioning rows from scratch each time.
inline std::optional<SplitResult> brute_force_split(const Matrix& x, const std::vector<int>& y, int n_classes) {
    std::vector<int> all(y.begin(), y.end());
    const double parent = gini_from_labels(all, n_classes);
    const double n = static_cast<double>(y.size());
    std::optional<SplitResult> best;
    double best_decrease = 1e-12;
    for (std::size_t col = 0; col < x.cols(); ++col) {
        std::set<double> distinct;
        for (std::size_t i = 0; i < x.rows(); ++i) distinct.insert(x(i, col));
        std::vector<double> v(distinct.begin(), distinct.end());
        for (std::size_t t = 0; t + 1 < v.size(); ++t) {
            double thr = (v[t] + v[t + 1]) / 2.0;
            if (!(thr >= v[t] && thr < v[t + 1])) thr = v[t];
            std::vector<int> left, right;
            for (std::size_t i = 0; i < x.rows(); ++i) (x(i, col) <= thr ? left : right).push_back(y[i]);
            const double child = (left.size() / n) * gini_from_labels(left, n_classes) +
                                 (right.size() / n) * gini_from_labels(right, n_classes);
            const double dec = parent - child;
            if (dec > best_decrease) {
                best_decrease = dec;
                best = SplitResult{static_cast<int>(col), thr, dec};
            }
        }
    }
    return best;
}

/// k nearest by fully sorting all (distance, index) pairs, then majority vote.
inline int knn_all_pairs(const Matrix& train, const std::vector<int>& labels, int k, int n_classes,
                         const std::vector<double>& query) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t i = 0; i < train.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < train.cols(); ++j) s += (train(i, j) - query[j]) * (train(i, j) - query[j]);
        d.emplace_back(std::sqrt(s), i);
    }
    std::stable_sort(d.begin(), d.end(), [](auto& a, auto& b) { return a.first < b.first; });
    std::vector<int> votes(static_cast<std::size_t>(n_classes), 0);
    for (int i = 0; i < k; ++i) ++votes[static_cast<std::size_t>(labels[d[static_cast<std::size_t>(i)].second])];
    int best = 0;
    for (int c = n_classes - 1; c >= 0; --c)
        if (votes[static_cast<std::size_t>(c)] >= votes[static_cast<std::size_t>(best)]) best = c;
    return best;
}

/// Plurality over member predictions with the lowest class winning ties.
inline int vote_tally(const std::vector<int>& predictions, int n_classes) {
    std::vector<int> counts(static_cast<std::size_t>(n_classes), 0);
    for (int p : predictions) ++counts[static_cast<std::size_t>(p)];
    int best_count = -1, best = 0;
    for (int c = 0; c < n_classes; ++c)
        if (counts[static_cast<std::size_t>(c)] > best_count) {
            best_count = counts[static_cast<std::size_t>(c)];
            best = c;
        }
    return best;
}

/// Central finite-difference gradient of f at w.
template <typename F>
Matrix finite_difference_gradient(F&& f, const Matrix& w, double h = 1e-5) {
    Matrix g(w.rows(), w.cols());
    Matrix probe = w;
    for (std::size_t i = 0; i < w.rows(); ++i)
        for (std::size_t j = 0; j < w.cols(); ++j) {
            const double orig = probe(i, j);
            probe(i, j) = orig + h;
            const double up = f(probe);
            probe(i, j) = orig - h;
            const double down = f(probe);
            probe(i, j) = orig;
            g(i, j) = (up - down) / (2 * h);
        }
    return g;
}

} // namespace fedbot::oracle
