#pragma once

// Traffic datasets: N-BaIoT style per-device CSV loading, train/test
// splitting and synthetic non-IID federations.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fedbot/error.hpp"
#include "fedbot/io.hpp"
#include "fedbot/matrix.hpp"
#include "fedbot/random.hpp"

namespace fedbot {

using ClassId = int;

enum class LabelMode : std::uint8_t { Binary = 0, Multiclass = 1 };

inline constexpr int kMulticlassCount = 11;

constexpr int class_count(LabelMode mode) noexcept {
    return mode == LabelMode::Binary ? 2 : kMulticlassCount;
}

inline std::string_view to_string(LabelMode mode) {
    return mode == LabelMode::Binary ? "binary" : "multiclass";
}

inline LabelMode parse_label_mode(std::string_view text) {
    if (text == "binary") return LabelMode::Binary;
    if (text == "multiclass") return LabelMode::Multiclass;
    throw ConfigError("unknown label mode '" + std::string(text) + "' (expected binary|multiclass)");
}

/// Attack classes in label order 1..10 (Bashlite then Mirai families).
inline constexpr std::array<std::string_view, 10> kAttackClasses = {
    "gafgyt.combo", "gafgyt.junk", "gafgyt.scan", "gafgyt.tcp", "gafgyt.udp",
    "mirai.ack",    "mirai.scan",  "mirai.syn",   "mirai.udp",  "mirai.udpplain",
};

inline std::optional<ClassId> attack_class_id(std::string_view name) {
    for (std::size_t i = 0; i < kAttackClasses.size(); ++i)
        if (kAttackClasses[i] == name) return static_cast<ClassId>(i + 1);
    return std::nullopt;
}

struct Dataset {
    Matrix features;
    std::vector<ClassId> labels;
    std::vector<std::string> feature_names;
    int node_id = 1;
    LabelMode label_mode = LabelMode::Multiclass;
    /// Original device number the rows came from, when loaded from disk.
    std::optional<int> source_device;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t n_features() const noexcept { return features.cols(); }
    bool empty() const noexcept { return labels.empty(); }

    Dataset subset(std::span<const std::size_t> indices) const {
        Dataset out;
        out.features = features.select_rows(indices);
        out.labels.reserve(indices.size());
        for (auto i : indices) out.labels.push_back(labels[i]);
        out.feature_names = feature_names;
        out.node_id = node_id;
        out.label_mode = label_mode;
        out.source_device = source_device;
        return out;
    }

    /// Throws DataError when any invariant is broken.
    void validate() const {
        if (features.rows() != labels.size())
            throw DataError("dataset row count " + std::to_string(features.rows()) +
                            " differs from label count " + std::to_string(labels.size()));
        if (!feature_names.empty() && feature_names.size() != features.cols())
            throw DataError("dataset has " + std::to_string(feature_names.size()) + " feature names for " +
                            std::to_string(features.cols()) + " columns");
        const int k = class_count(label_mode);
        for (auto y : labels)
            if (y < 0 || y >= k)
                throw DataError("label " + std::to_string(y) + " invalid for " + std::string(to_string(label_mode)) +
                                " mode");
        for (double v : features.values())
            if (!std::isfinite(v)) throw DataError("non-finite feature value");
    }

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Per-class row counts, indexed by class id.
inline std::vector<std::size_t> class_histogram(const Dataset& ds) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(class_count(ds.label_mode)), 0);
    for (auto y : ds.labels) ++counts[static_cast<std::size_t>(y)];
    return counts;
}

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
    std::vector<std::string> header;
    Matrix rows;
};

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            cells.push_back(line.substr(start));
            break;
        }
        cells.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return cells;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"'))
        s.remove_suffix(1);
    return s;
}

} // namespace detail

/// Parses a header row plus numeric rows. Blank lines are ignored.
inline CsvTable parse_csv(std::string_view text, const std::string& source) {
    CsvTable table;
    std::size_t line_no = 0;
    bool have_header = false;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split_commas(line);
        if (!have_header) {
            for (auto c : cells) table.header.emplace_back(detail::trim(c));
            table.rows = Matrix(0, table.header.size());
            have_header = true;
            continue;
        }
        if (cells.size() != table.header.size())
            throw DataError(source + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(table.header.size()) + " cells, found " + std::to_string(cells.size()));
        std::vector<double> row(cells.size());
        for (std::size_t j = 0; j < cells.size(); ++j) {
            if (!parse_double(cells[j], row[j]) || !std::isfinite(row[j]))
                throw DataError(source + ":" + std::to_string(line_no) + ": non-numeric cell '" +
                                std::string(detail::trim(cells[j])) + "' in column " + table.header[j]);
        }
        table.rows.append_row(row);
    }
    if (!have_header) throw DataError(source + ": empty file");
    if (table.rows.empty()) throw DataError(source + ": no data rows");
    return table;
}

/// Square-ish table whose first column holds row labels (e.g. `node_3`);
/// returns the numeric cells only.
inline Matrix parse_csv_labeled(std::string_view text, const std::string& source) {
    Matrix out;
    std::size_t line_no = 0, pos = 0, width = 0;
    bool have_header = false;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        auto line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split_commas(line);
        if (!have_header) {
            if (cells.size() < 2) throw DataError(source + ":1: expected a label column plus values");
            width = cells.size() - 1;
            out = Matrix(0, width);
            have_header = true;
            continue;
        }
        if (cells.size() != width + 1)
            throw DataError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(width + 1) +
                            " cells, found " + std::to_string(cells.size()));
        std::vector<double> row(width);
        for (std::size_t j = 0; j < width; ++j)
            if (!parse_double(cells[j + 1], row[j]) || !std::isfinite(row[j]))
                throw DataError(source + ":" + std::to_string(line_no) + ": non-numeric cell '" +
                                std::string(detail::trim(cells[j + 1])) + "'");
        out.append_row(row);
    }
    if (!have_header) throw DataError(source + ": empty file");
    return out;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
    return parse_csv(read_file(path), path.string());
}

/// Header plus one line per row, using shortest round-trip number text.
inline std::string to_csv(const std::vector<std::string>& header, const Matrix& rows) {
    std::string out;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (j) out += ',';
        out += header[j];
    }
    out += '\n';
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        auto r = rows.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            if (j) out += ',';
            append_double(out, r[j]);
        }
        out += '\n';
    }
    return out;
}

inline std::vector<std::string> default_feature_names(std::size_t n) {
    std::vector<std::string> names;
    names.reserve(n);
    for (std::size_t j = 0; j < n; ++j) names.push_back("feature_" + std::to_string(j));
    return names;
}

/// Size in bytes of the dataset's features encoded as CSV (header included).
inline std::size_t csv_byte_size(const Dataset& ds) {
    auto names = ds.feature_names.empty() ? default_feature_names(ds.n_features()) : ds.feature_names;
    return to_csv(names, ds.features).size();
}

// ---------------------------------------------------------------------------
// Device directories

inline constexpr std::string_view kManifestName = "manifest.txt";

/// Class name -> file name entries of a device manifest, in file order.
using Manifest = std::vector<std::pair<std::string, std::string>>;

inline Manifest parse_manifest(std::string_view text, const std::string& source) {
    Manifest entries;
    std::size_t line_no = 0, pos = 0;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        auto line = detail::trim(text.substr(pos, eol - pos));
        pos = eol + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw DataError(source + ":" + std::to_string(line_no) + ": expected 'class = file'");
        std::string key(detail::trim(line.substr(0, eq)));
        std::string value(detail::trim(line.substr(eq + 1)));
        if (key.empty() || value.empty())
            throw DataError(source + ":" + std::to_string(line_no) + ": empty key or file name");
        for (auto& [k, v] : entries)
            if (k == key) throw DataError(source + ":" + std::to_string(line_no) + ": duplicate class '" + key + "'");
        entries.emplace_back(std::move(key), std::move(value));
    }
    return entries;
}

namespace detail {

inline std::optional<std::filesystem::path> find_class_file(const std::filesystem::path& dir, std::string_view name,
                                                            int device_id) {
    const std::string plain = std::string(name) + ".csv";
    const std::string prefixed = std::to_string(device_id) + "." + plain;
    for (const auto& candidate : {plain, prefixed})
        if (std::filesystem::is_regular_file(dir / candidate)) return dir / candidate;
    return std::nullopt;
}

/// Resolves (label, file) pairs for a device directory.
inline std::vector<std::pair<ClassId, std::filesystem::path>> resolve_class_files(const std::filesystem::path& dir,
                                                                                 int device_id, LabelMode mode) {
    std::vector<std::pair<ClassId, std::filesystem::path>> files;
    const auto manifest_path = dir / kManifestName;
    if (std::filesystem::is_regular_file(manifest_path)) {
        auto manifest = parse_manifest(read_file(manifest_path), manifest_path.string());
        bool has_benign = false;
        for (const auto& [name, file] : manifest) {
            ClassId label;
            if (name == "benign") {
                label = 0;
                has_benign = true;
            } else if (auto id = attack_class_id(name)) {
                label = mode == LabelMode::Binary ? 1 : *id;
            } else if (mode == LabelMode::Binary) {
                label = 1;
            } else {
                throw DataError(manifest_path.string() + ": unknown attack class '" + name + "' in multiclass mode");
            }
            auto path = dir / file;
            if (!std::filesystem::is_regular_file(path))
                throw DataError("missing data: " + path.string() + " listed in manifest does not exist");
            files.emplace_back(label, path);
        }
        if (!has_benign) throw DataError("missing data: " + manifest_path.string() + " lists no benign file");
        if (files.size() < 2) throw DataError("missing data: " + manifest_path.string() + " lists no attack file");
        return files;
    }

    auto benign = find_class_file(dir, "benign", device_id);
    if (!benign) throw DataError("missing data: no benign file in " + dir.string());
    files.emplace_back(0, *benign);
    std::string missing;
    for (std::size_t i = 0; i < kAttackClasses.size(); ++i) {
        auto path = find_class_file(dir, kAttackClasses[i], device_id);
        if (!path) {
            if (!missing.empty()) missing += ", ";
            missing += kAttackClasses[i];
            continue;
        }
        files.emplace_back(mode == LabelMode::Binary ? 1 : static_cast<ClassId>(i + 1), *path);
    }
    if (!missing.empty()) throw DataError("missing data: " + dir.string() + " has no file for " + missing);
    return files;
}

} // namespace detail

/// Loads one device directory: a benign file plus one file per attack class,
/// labeled by source file. Columns are reordered to the benign file's order.
/// A `manifest.txt` of `class = file` lines overrides file discovery.
inline Dataset load_device(const std::filesystem::path& dir, int device_id, LabelMode mode) {
    if (!std::filesystem::is_directory(dir)) throw DataError("missing data: no device directory " + dir.string());
    auto files = detail::resolve_class_files(dir, device_id, mode);

    Dataset ds;
    ds.node_id = device_id;
    ds.label_mode = mode;
    ds.source_device = device_id;

    std::unordered_map<std::string, std::size_t> column_of;
    for (std::size_t f = 0; f < files.size(); ++f) {
        const auto& [label, path] = files[f];
        auto table = read_csv(path);
        if (f == 0) {
            ds.feature_names = table.header;
            for (std::size_t j = 0; j < table.header.size(); ++j)
                if (!column_of.emplace(table.header[j], j).second)
                    throw DataError(path.string() + ":1: duplicate column '" + table.header[j] + "'");
            ds.features = Matrix(0, table.header.size());
        }
        if (table.header.size() != ds.feature_names.size())
            throw DataError(path.string() + ":1: header mismatch, " + std::to_string(table.header.size()) +
                            " columns vs " + std::to_string(ds.feature_names.size()) + " in benign file");
        std::vector<std::size_t> target(table.header.size());
        std::vector<bool> seen(table.header.size(), false);
        for (std::size_t j = 0; j < table.header.size(); ++j) {
            auto it = column_of.find(table.header[j]);
            if (it == column_of.end() || seen[it->second])
                throw DataError(path.string() + ":1: header mismatch at column '" + table.header[j] + "'");
            seen[it->second] = true;
            target[j] = it->second;
        }
        ds.features.reserve_rows(ds.features.rows() + table.rows.rows());
        std::vector<double> row(table.header.size());
        for (std::size_t i = 0; i < table.rows.rows(); ++i) {
            auto src = table.rows.row(i);
            for (std::size_t j = 0; j < src.size(); ++j) row[target[j]] = src[j];
            ds.features.append_row(row);
            ds.labels.push_back(label);
        }
    }
    ds.validate();
    return ds;
}

struct LoadedFederation {
    std::vector<Dataset> nodes;
    /// Device number and reason for each device that was left out.
    std::vector<std::pair<int, std::string>> skipped;
};

/// Loads every `device_<k>` directory under `root` in ascending k. Devices
/// with missing class files are skipped; the rest become nodes 1..n.
inline LoadedFederation load_federation(const std::filesystem::path& root, LabelMode mode) {
    if (!std::filesystem::is_directory(root)) throw DataError("data root " + root.string() + " is not a directory");
    std::map<int, std::filesystem::path> devices;
    for (const auto& entry : std::filesystem::directory_iterator(root)) {
        if (!entry.is_directory()) continue;
        auto name = entry.path().filename().string();
        constexpr std::string_view prefix = "device_";
        if (name.rfind(prefix, 0) != 0) continue;
        int k = 0;
        auto digits = std::string_view(name).substr(prefix.size());
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), k);
        if (ec != std::errc{} || ptr != digits.data() + digits.size()) continue;
        devices.emplace(k, entry.path());
    }
    LoadedFederation fed;
    for (const auto& [k, path] : devices) {
        try {
            auto ds = load_device(path, k, mode);
            ds.node_id = static_cast<int>(fed.nodes.size()) + 1;
            fed.nodes.push_back(std::move(ds));
        } catch (const DataError& e) {
            if (std::string_view(e.what()).rfind("missing data", 0) != 0) throw;
            fed.skipped.emplace_back(k, e.what());
        }
    }
    if (fed.nodes.empty()) throw DataError("no loadable device_<k> directories under " + root.string());
    return fed;
}

/// Writes `ds` as a device directory: one CSV per present class plus a manifest.
inline void write_device_dir(const Dataset& ds, const std::filesystem::path& dir) {
    auto names = ds.feature_names.empty() ? default_feature_names(ds.n_features()) : ds.feature_names;
    const int k = class_count(ds.label_mode);
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    std::string manifest;
    for (int c = 0; c < k; ++c) {
        const auto& rows = by_class[static_cast<std::size_t>(c)];
        if (rows.empty()) continue;
        std::string cls = c == 0 ? "benign"
                          : ds.label_mode == LabelMode::Binary ? "attack"
                                                               : std::string(kAttackClasses[static_cast<std::size_t>(c - 1)]);
        write_file_atomic(dir / (cls + ".csv"), to_csv(names, ds.features.select_rows(rows)));
        manifest += cls + " = " + cls + ".csv\n";
    }
    write_file_atomic(dir / kManifestName, manifest);
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitSpec {
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
    bool stratified = true;
};

struct TrainTestSplit {
    Dataset train;
    Dataset test;
};

/// Row indices assigned to train and test, each in ascending order.
struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

inline SplitIndices split_indices(const Dataset& ds, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
        throw ConfigError("train_fraction must lie strictly between 0 and 1");
    if (ds.empty()) throw DataError("cannot split an empty dataset");

    Rng rng(spec.seed);
    SplitIndices out;
    auto take = [&](std::vector<std::size_t> pool, bool clamp) {
        rng.shuffle(std::span(pool));
        auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(pool.size())));
        if (clamp) n_train = std::clamp<std::size_t>(n_train, 1, pool.size() - 1);
        out.train.insert(out.train.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_train));
        out.test.insert(out.test.end(), pool.begin() + static_cast<std::ptrdiff_t>(n_train), pool.end());
    };

    if (spec.stratified) {
        std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(class_count(ds.label_mode)));
        for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
        for (std::size_t c = 0; c < by_class.size(); ++c) {
            if (by_class[c].empty()) continue;
            if (by_class[c].size() < 2)
                throw DataError("stratified split needs at least 2 rows of class " + std::to_string(c));
            take(std::move(by_class[c]), true);
        }
    } else {
        std::vector<std::size_t> all(ds.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        take(std::move(all), false);
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

inline TrainTestSplit split(const Dataset& ds, const SplitSpec& spec) {
    auto idx = split_indices(ds, spec);
    return {ds.subset(idx.train), ds.subset(idx.test)};
}

// ---------------------------------------------------------------------------
// Synthetic federations

struct SyntheticFederationSpec {
    int n_nodes = 7;
    int rows_per_node = 2000;
    int n_features = 115;
    int n_classes = kMulticlassCount;
    /// Per-feature standard deviation of the class means (noise has unit variance).
    double class_separation = 3.0;
    /// Per-feature standard deviation of each node's mean displacement.
    double node_shift = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_nodes < 2) throw ConfigError("synthetic federation needs n_nodes >= 2");
        if (rows_per_node < 1 || n_features < 1) throw ConfigError("synthetic counts must be positive");
        if (n_classes < 2 || n_classes > kMulticlassCount)
            throw ConfigError("synthetic n_classes must lie in [2, 11]");
        if (!(class_separation > 0.0) || !std::isfinite(class_separation))
            throw ConfigError("class_separation must be positive");
        if (!(node_shift >= 0.0) || !std::isfinite(node_shift))
            throw ConfigError("node_shift must be finite and non-negative");
    }
};

/// Gaussian class clusters shared by all nodes, each node displaced by its own
/// offset. Labels cycle through all classes before shuffling, so every class
/// appears once rows_per_node >= n_classes.
inline std::vector<Dataset> generate_synthetic_federation(const SyntheticFederationSpec& spec) {
    spec.validate();
    const auto d = static_cast<std::size_t>(spec.n_features);
    const auto k = static_cast<std::size_t>(spec.n_classes);
    const auto mode = spec.n_classes == 2 ? LabelMode::Binary : LabelMode::Multiclass;

    Rng mean_rng(derive_seed(spec.seed, 0));
    Matrix class_means(k, d);
    for (double& v : class_means.values()) v = spec.class_separation * mean_rng.normal();

    auto names = default_feature_names(d);
    std::vector<Dataset> nodes;
    nodes.reserve(static_cast<std::size_t>(spec.n_nodes));
    for (int n = 1; n <= spec.n_nodes; ++n) {
        Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(n)));
        std::vector<double> offset(d);
        for (double& v : offset) v = spec.node_shift * rng.normal();

        Dataset ds;
        ds.node_id = n;
        ds.source_device = n;
        ds.label_mode = mode;
        ds.feature_names = names;
        ds.labels.resize(static_cast<std::size_t>(spec.rows_per_node));
        for (std::size_t i = 0; i < ds.labels.size(); ++i) ds.labels[i] = static_cast<ClassId>(i % k);
        rng.shuffle(std::span(ds.labels));

        ds.features = Matrix(ds.labels.size(), d);
        for (std::size_t i = 0; i < ds.labels.size(); ++i) {
            auto mean = class_means.row(static_cast<std::size_t>(ds.labels[i]));
            auto row = ds.features.row(i);
            for (std::size_t j = 0; j < d; ++j) row[j] = mean[j] + offset[j] + rng.normal();
        }
        nodes.push_back(std::move(ds));
    }
    return nodes;
}

} // namespace fedbot
