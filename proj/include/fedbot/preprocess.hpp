#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedbot/dataset.hpp"
#include "fedbot/error.hpp"

namespace fedbot {

/// Per-column standardization. Constant columns carry std = 1 so they map to 0.
struct Scaler {
    std::vector<double> means;
    std::vector<double> stds;

    std::size_t n_features() const noexcept { return means.size(); }

    void transform_row(std::span<const double> in, std::span<double> out) const {
        for (std::size_t j = 0; j < means.size(); ++j) out[j] = (in[j] - means[j]) / stds[j];
    }

    void inverse_row(std::span<const double> in, std::span<double> out) const {
        for (std::size_t j = 0; j < means.size(); ++j) out[j] = in[j] * stds[j] + means[j];
    }

    friend bool operator==(const Scaler&, const Scaler&) = default;
};

/// Sample mean and population (divide-by-n) standard deviation per column.
inline Scaler fit_scaler(const Dataset& train) {
    if (train.empty()) throw DataError("cannot fit a scaler on an empty dataset");
    const auto n = train.size();
    const auto d = train.n_features();
    Scaler s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (std::size_t i = 0; i < n; ++i) {
        auto r = train.features.row(i);
        for (std::size_t j = 0; j < d; ++j) s.means[j] += r[j];
    }
    for (auto& m : s.means) m /= static_cast<double>(n);
    // Two-pass variance.
    for (std::size_t i = 0; i < n; ++i) {
        auto r = train.features.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            const double dev = r[j] - s.means[j];
            s.stds[j] += dev * dev;
        }
    }
    for (auto& v : s.stds) {
        v = std::sqrt(v / static_cast<double>(n));
        if (!(v > 0.0)) v = 1.0;
    }
    return s;
}

inline Dataset apply_scaler(const Scaler& s, const Dataset& ds) {
    if (ds.n_features() != s.n_features())
        throw DataError("scaler expects " + std::to_string(s.n_features()) + " columns, dataset has " +
                        std::to_string(ds.n_features()));
    Dataset out = ds;
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto r = out.features.row(i);
        s.transform_row(r, r);
    }
    return out;
}

inline Dataset inverse_scaler(const Scaler& s, const Dataset& ds) {
    if (ds.n_features() != s.n_features()) throw DataError("scaler column-count mismatch");
    Dataset out = ds;
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto r = out.features.row(i);
        s.inverse_row(r, r);
    }
    return out;
}

inline nlohmann::json to_json(const Scaler& s) {
    return {{"n_features", s.n_features()}, {"means", s.means}, {"stds", s.stds}};
}

inline Scaler scaler_from_json(const nlohmann::json& j) {
    Scaler s;
    try {
        s.means = j.at("means").get<std::vector<double>>();
        s.stds = j.at("stds").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad scaler document: ") + e.what());
    }
    if (s.means.size() != s.stds.size()) throw FormatError("scaler means/stds length mismatch");
    for (double v : s.stds)
        if (!(v > 0.0) || !std::isfinite(v)) throw FormatError("scaler std must be positive");
    return s;
}

} // namespace fedbot
