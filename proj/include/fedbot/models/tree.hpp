#pragma once

// CART classification tree with Gini impurity and midpoint thresholds.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedbot/dataset.hpp"
#include "fedbot/error.hpp"
#include "fedbot/matrix.hpp"

namespace fedbot {

struct TreeParams {
    /// Depth cap; nullopt means unlimited. Depth 0 is a single leaf.
    std::optional<int> max_depth;
    int min_samples_split = 2;

    void validate() const {
        if (min_samples_split < 2) throw ConfigError("min_samples_split must be >= 2");
        if (max_depth && *max_depth < 0) throw ConfigError("max_depth must be >= 0");
    }
};

/// One node of a flattened tree. Internal nodes route `x[feature] <= threshold`
/// to `left`; leaves hold per-class training counts.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    std::vector<std::uint32_t> class_counts;

    bool is_leaf() const noexcept { return feature < 0; }
    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Flattened tree; nodes[0] is the root and children always follow their parent.
struct DecisionTree {
    std::vector<TreeNode> nodes;
    int n_classes = 0;

    std::size_t depth() const {
        std::size_t best = 0;
        std::vector<std::pair<std::uint32_t, std::size_t>> stack{{0, 0}};
        while (!stack.empty()) {
            auto [i, d] = stack.back();
            stack.pop_back();
            best = std::max(best, d);
            if (!nodes[i].is_leaf()) {
                stack.emplace_back(nodes[i].left, d + 1);
                stack.emplace_back(nodes[i].right, d + 1);
            }
        }
        return best;
    }

    std::size_t leaf_count() const {
        return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](auto& n) { return n.is_leaf(); }));
    }

    friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

/// Index of the largest count; ties go to the lowest class id.
template <typename T>
ClassId argmax_lowest(std::span<const T> values) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < values.size(); ++c)
        if (values[c] > values[best]) best = c;
    return static_cast<ClassId>(best);
}

/// 1 - sum p_i^2.
template <typename Count>
double gini_impurity(std::span<const Count> class_counts) {
    double total = 0.0;
    for (auto c : class_counts) total += static_cast<double>(c);
    if (!(total > 0.0)) throw ConfigError("gini_impurity needs a positive total count");
    double sum_sq = 0.0;
    for (auto c : class_counts) {
        const double p = static_cast<double>(c) / total;
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

inline double gini_impurity(const std::vector<std::size_t>& class_counts) {
    return gini_impurity(std::span<const std::size_t>(class_counts));
}

struct Split {
    int feature = -1;
    double threshold = 0.0;
    double impurity_decrease = 0.0;
};

/// Decreases at or below this are treated as no gain; candidates must beat
/// the incumbent by more than it, which keeps ties on the earliest candidate.
inline constexpr double kSplitEpsilon = 1e-12;

/// Midpoint of two consecutive distinct values that still separates them.
inline double midpoint_threshold(double lo, double hi) {
    const double mid = 0.5 * (lo + hi);
    return (mid >= lo && mid < hi) ? mid : lo;
}

namespace detail {

/// Best split over `rows` of `features`. Gini terms are evaluated from
/// integer sums of squared class counts: n*Gini = n - sum(c^2)/n.
inline std::optional<Split> best_split_over(const Matrix& features, std::span<const ClassId> labels,
                                            std::span<const std::size_t> rows,
                                            std::span<const std::size_t> candidate_columns, int n_classes,
                                            std::uint64_t* work = nullptr) {
    const std::size_t n = rows.size();
    if (n < 2) return std::nullopt;
    const auto k = static_cast<std::size_t>(n_classes);

    std::vector<std::uint64_t> total(k, 0);
    for (auto r : rows) ++total[static_cast<std::size_t>(labels[r])];
    std::uint64_t total_sq = 0;
    for (auto c : total) total_sq += c * c;
    const double dn = static_cast<double>(n);
    const double parent = 1.0 - static_cast<double>(total_sq) / (dn * dn);
    if (parent <= 0.0) return std::nullopt;

    std::optional<Split> best;
    double best_decrease = kSplitEpsilon;
    std::vector<std::pair<double, ClassId>> column(n);
    std::vector<std::uint64_t> left(k);

    for (auto col : candidate_columns) {
        for (std::size_t i = 0; i < n; ++i) column[i] = {features(rows[i], col), labels[rows[i]]};
        std::sort(column.begin(), column.end(), [](auto& a, auto& b) { return a.first < b.first; });
        if (work) *work += n;

        std::fill(left.begin(), left.end(), 0);
        std::uint64_t left_sq = 0, right_sq = total_sq;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const auto c = static_cast<std::size_t>(column[i].second);
            const std::uint64_t right_c = total[c] - left[c];
            left_sq += 2 * left[c] + 1;
            right_sq -= 2 * right_c - 1;
            ++left[c];
            if (!(column[i].first < column[i + 1].first)) continue;

            const double nl = static_cast<double>(i + 1);
            const double nr = dn - nl;
            const double weighted =
                ((nl - static_cast<double>(left_sq) / nl) + (nr - static_cast<double>(right_sq) / nr)) / dn;
            const double decrease = parent - weighted;
            if (decrease > best_decrease) {
                best_decrease = decrease;
                best = Split{static_cast<int>(col), midpoint_threshold(column[i].first, column[i + 1].first),
                             decrease};
            }
        }
    }
    return best;
}

} // namespace detail

/// Split maximizing the weighted Gini decrease over all candidate columns and
/// midpoints between consecutive distinct values. Ties keep the lowest column,
/// then the lowest threshold. Returns nullopt when nothing decreases impurity.
inline std::optional<Split> find_best_split(const Matrix& features, std::span<const ClassId> labels,
                                            std::span<const std::size_t> candidate_columns, int n_classes) {
    std::vector<std::size_t> rows(features.rows());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    std::vector<std::size_t> columns(candidate_columns.begin(), candidate_columns.end());
    std::sort(columns.begin(), columns.end());
    return detail::best_split_over(features, labels, rows, columns, n_classes);
}

inline std::optional<Split> find_best_split(const Matrix& features, std::span<const ClassId> labels,
                                            std::span<const std::size_t> candidate_columns) {
    ClassId top = 0;
    for (auto y : labels) top = std::max(top, y);
    return find_best_split(features, labels, candidate_columns, top + 1);
}

/// Grows a tree until nodes are pure, hit the depth cap, fall under
/// min_samples_split, or admit no impurity decrease.
inline DecisionTree grow_tree(const Matrix& features, std::span<const ClassId> labels, int n_classes,
                              const TreeParams& params, std::uint64_t* work = nullptr) {
    params.validate();
    if (features.rows() == 0) throw DataError("cannot train a decision tree on an empty dataset");

    DecisionTree tree;
    tree.n_classes = n_classes;
    std::vector<std::size_t> columns(features.cols());
    for (std::size_t j = 0; j < columns.size(); ++j) columns[j] = j;

    struct Pending {
        std::uint32_t node;
        std::vector<std::size_t> rows;
        int depth;
    };
    std::vector<std::size_t> all(features.rows());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    tree.nodes.emplace_back();
    std::vector<Pending> stack;
    stack.push_back({0, std::move(all), 0});

    while (!stack.empty()) {
        Pending item = std::move(stack.back());
        stack.pop_back();

        std::optional<Split> split;
        const bool may_split = static_cast<int>(item.rows.size()) >= params.min_samples_split &&
                               (!params.max_depth || item.depth < *params.max_depth);
        if (may_split) split = detail::best_split_over(features, labels, item.rows, columns, n_classes, work);

        if (!split) {
            auto& leaf = tree.nodes[item.node];
            leaf.class_counts.assign(static_cast<std::size_t>(n_classes), 0);
            for (auto r : item.rows) ++leaf.class_counts[static_cast<std::size_t>(labels[r])];
            continue;
        }

        std::vector<std::size_t> left_rows, right_rows;
        for (auto r : item.rows)
            (features(r, static_cast<std::size_t>(split->feature)) <= split->threshold ? left_rows : right_rows)
                .push_back(r);

        const auto left = static_cast<std::uint32_t>(tree.nodes.size());
        const auto right = left + 1;
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        auto& node = tree.nodes[item.node];
        node.feature = split->feature;
        node.threshold = split->threshold;
        node.left = left;
        node.right = right;
        // Right pushed first so the left subtree is expanded first.
        stack.push_back({right, std::move(right_rows), item.depth + 1});
        stack.push_back({left, std::move(left_rows), item.depth + 1});
    }
    return tree;
}

inline const TreeNode& tree_leaf(const DecisionTree& tree, std::span<const double> row) {
    std::uint32_t i = 0;
    while (!tree.nodes[i].is_leaf()) {
        const auto& node = tree.nodes[i];
        i = row[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
    }
    return tree.nodes[i];
}

inline ClassId tree_predict(const DecisionTree& tree, std::span<const double> row) {
    return argmax_lowest(std::span<const std::uint32_t>(tree_leaf(tree, row).class_counts));
}

} // namespace fedbot
