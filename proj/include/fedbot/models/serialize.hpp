#pragma once

// Versioned binary model format, little-endian throughout:
//
//   "FBML" | u16 version | u8 kind | u8 label_mode | u32 n_features
//   | u32 n_classes | i32 training_node_id | u8 has_scaler
//   | [f64 means[n_features], f64 stds[n_features]]
//   | u64 payload_len | payload | u32 crc32(all preceding bytes)
//
// Payloads:
//   tree:     u32 node_count, then per node u8 tag (0 leaf, 1 split);
//             leaf: u32 counts[n_classes]; split: u32 feature, f64 threshold, u32 left, u32 right
//   knn:      u32 k, u64 rows, f64 features[rows * n_features], u8 labels[rows]
//   logistic: f64 weights[n_classes * (n_features + 1)], row-major

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "fedbot/error.hpp"
#include "fedbot/models/model.hpp"

namespace fedbot {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::array<std::uint8_t, 4> kModelMagic = {'F', 'B', 'M', 'L'};
inline constexpr std::uint16_t kModelFormatVersion = 1;

namespace detail {

class ByteWriter {
public:
    explicit ByteWriter(Bytes& out) : out_(out) {}

    template <typename T>
    void put(T value) {
        static_assert(std::is_integral_v<T>);
        using U = std::make_unsigned_t<T>;
        auto u = static_cast<U>(value);
        for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
    }
    void put_f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
    void put_bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }

private:
    Bytes& out_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

    template <typename T>
    T get() {
        static_assert(std::is_integral_v<T>);
        need(sizeof(T));
        std::make_unsigned_t<T> u = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            u |= static_cast<std::make_unsigned_t<T>>(static_cast<std::make_unsigned_t<T>>(in_[pos_ + i]) << (8 * i));
        pos_ += sizeof(T);
        return static_cast<T>(u);
    }
    double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
    std::span<const std::uint8_t> get_bytes(std::size_t n) {
        need(n);
        auto s = in_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const noexcept { return in_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) throw FormatError("model payload truncated");
    }
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks.
    std::size_t off = 0;
    while (off < bytes.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
        crc = ::crc32(crc, bytes.data() + off, chunk);
        off += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

inline std::uint32_t checked_u32(std::uint64_t v, const char* what) {
    if (v > std::numeric_limits<std::uint32_t>::max()) throw FormatError(std::string(what) + " exceeds u32 range");
    return static_cast<std::uint32_t>(v);
}

inline void write_payload(ByteWriter& w, const DecisionTree& tree) {
    w.put(checked_u32(tree.nodes.size(), "tree node count"));
    for (const auto& node : tree.nodes) {
        if (node.is_leaf()) {
            w.put<std::uint8_t>(0);
            for (auto c : node.class_counts) w.put(c);
        } else {
            w.put<std::uint8_t>(1);
            w.put(static_cast<std::uint32_t>(node.feature));
            w.put_f64(node.threshold);
            w.put(node.left);
            w.put(node.right);
        }
    }
}

inline void write_payload(ByteWriter& w, const KnnModel& knn) {
    w.put(static_cast<std::uint32_t>(knn.k));
    w.put(static_cast<std::uint64_t>(knn.labels.size()));
    for (double v : knn.features.values()) w.put_f64(v);
    for (auto y : knn.labels) w.put(static_cast<std::uint8_t>(y));
}

inline void write_payload(ByteWriter& w, const LogisticModel& lr) {
    for (double v : lr.weights.values()) w.put_f64(v);
}

inline DecisionTree read_tree(ByteReader& r, std::size_t n_features, int n_classes) {
    DecisionTree tree;
    tree.n_classes = n_classes;
    const auto count = r.get<std::uint32_t>();
    if (count == 0) throw FormatError("tree has no nodes");
    // Each node occupies at least 5 bytes; reject counts the payload cannot hold.
    if (count > r.remaining()) throw FormatError("tree node count exceeds payload");
    tree.nodes.resize(count);
    std::vector<bool> referenced(count, false);
    for (std::uint32_t i = 0; i < count; ++i) {
        auto& node = tree.nodes[i];
        const auto tag = r.get<std::uint8_t>();
        if (tag == 0) {
            node.class_counts.resize(static_cast<std::size_t>(n_classes));
            std::uint64_t total = 0;
            for (auto& c : node.class_counts) total += (c = r.get<std::uint32_t>());
            if (total == 0) throw FormatError("tree leaf with zero counts");
        } else if (tag == 1) {
            const auto feature = r.get<std::uint32_t>();
            if (feature >= n_features) throw FormatError("tree feature index out of range");
            node.feature = static_cast<int>(feature);
            node.threshold = r.get_f64();
            node.left = r.get<std::uint32_t>();
            node.right = r.get<std::uint32_t>();
            if (node.left <= i || node.right <= i || node.left >= count || node.right >= count ||
                node.left == node.right || referenced[node.left] || referenced[node.right])
                throw FormatError("tree child index invalid");
            referenced[node.left] = referenced[node.right] = true;
        } else {
            throw FormatError("unknown tree node tag");
        }
    }
    for (std::uint32_t i = 1; i < count; ++i)
        if (!referenced[i]) throw FormatError("tree node unreachable");
    return tree;
}

inline KnnModel read_knn(ByteReader& r, std::size_t n_features, int n_classes) {
    KnnModel knn;
    knn.n_classes = n_classes;
    knn.k = static_cast<int>(r.get<std::uint32_t>());
    const auto rows = r.get<std::uint64_t>();
    if (n_features > 0 && rows > r.remaining() / (8 * n_features)) throw FormatError("knn row count exceeds payload");
    if (knn.k < 1 || static_cast<std::uint64_t>(knn.k) > rows) throw FormatError("knn k invalid");
    std::vector<double> values(static_cast<std::size_t>(rows) * n_features);
    for (auto& v : values) v = r.get_f64();
    knn.features = Matrix(static_cast<std::size_t>(rows), n_features, std::move(values));
    knn.labels.resize(static_cast<std::size_t>(rows));
    for (auto& y : knn.labels) {
        y = r.get<std::uint8_t>();
        if (y >= n_classes) throw FormatError("knn label out of range");
    }
    return knn;
}

inline LogisticModel read_logistic(ByteReader& r, std::size_t n_features, int n_classes) {
    const auto k = static_cast<std::size_t>(n_classes);
    std::vector<double> values(k * (n_features + 1));
    for (auto& v : values) v = r.get_f64();
    return LogisticModel{Matrix(k, n_features + 1, std::move(values))};
}

} // namespace detail

inline Bytes serialize_model(const TrainedModel& model) {
    Bytes out;
    detail::ByteWriter w(out);
    w.put_bytes(kModelMagic);
    w.put(kModelFormatVersion);
    w.put(static_cast<std::uint8_t>(model.kind()));
    w.put(static_cast<std::uint8_t>(model.label_mode));
    w.put(detail::checked_u32(model.n_features, "n_features"));
    w.put(static_cast<std::uint32_t>(model.n_classes()));
    w.put(static_cast<std::int32_t>(model.training_node_id));
    w.put<std::uint8_t>(model.scaler ? 1 : 0);
    if (model.scaler) {
        for (double v : model.scaler->means) w.put_f64(v);
        for (double v : model.scaler->stds) w.put_f64(v);
    }
    Bytes payload;
    detail::ByteWriter pw(payload);
    std::visit([&](const auto& m) { detail::write_payload(pw, m); }, model.state);
    w.put(static_cast<std::uint64_t>(payload.size()));
    w.put_bytes(payload);
    w.put(detail::crc32_of(out));
    return out;
}

inline TrainedModel deserialize_model(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kModelMagic.size() + 2 + 4) throw FormatError("model payload truncated");
    if (!std::equal(kModelMagic.begin(), kModelMagic.end(), bytes.begin())) throw FormatError("bad model magic");
    const auto body = bytes.first(bytes.size() - 4);
    detail::ByteReader tail(bytes.last(4));
    detail::ByteReader r(body);
    r.get_bytes(kModelMagic.size());
    const auto version = r.get<std::uint16_t>();
    if (version != kModelFormatVersion)
        throw FormatError("unsupported model format version " + std::to_string(version));
    if (tail.get<std::uint32_t>() != detail::crc32_of(body)) throw FormatError("model checksum mismatch");

    TrainedModel model;
    const auto kind = r.get<std::uint8_t>();
    const auto mode = r.get<std::uint8_t>();
    if (mode > 1) throw FormatError("unknown label mode tag");
    model.label_mode = static_cast<LabelMode>(mode);
    model.n_features = r.get<std::uint32_t>();
    if (r.get<std::uint32_t>() != static_cast<std::uint32_t>(model.n_classes()))
        throw FormatError("class count does not match label mode");
    model.training_node_id = r.get<std::int32_t>();
    const auto has_scaler = r.get<std::uint8_t>();
    if (has_scaler > 1) throw FormatError("bad scaler flag");
    if (has_scaler) {
        if (model.n_features > r.remaining() / 16) throw FormatError("model payload truncated");
        Scaler s{std::vector<double>(model.n_features), std::vector<double>(model.n_features)};
        for (auto& v : s.means) v = r.get_f64();
        for (auto& v : s.stds) {
            v = r.get_f64();
            if (!(v > 0.0)) throw FormatError("scaler std must be positive");
        }
        model.scaler = std::move(s);
    }
    const auto payload_len = r.get<std::uint64_t>();
    if (payload_len != r.remaining()) throw FormatError("payload length mismatch");
    detail::ByteReader p(r.get_bytes(static_cast<std::size_t>(payload_len)));
    switch (kind) {
    case static_cast<std::uint8_t>(ModelKind::Tree):
        model.state = detail::read_tree(p, model.n_features, model.n_classes());
        break;
    case static_cast<std::uint8_t>(ModelKind::Knn):
        model.state = detail::read_knn(p, model.n_features, model.n_classes());
        break;
    case static_cast<std::uint8_t>(ModelKind::Logistic):
        model.state = detail::read_logistic(p, model.n_features, model.n_classes());
        break;
    default: throw FormatError("unknown model kind tag " + std::to_string(kind));
    }
    if (p.remaining() != 0) throw FormatError("trailing bytes in model payload");
    return model;
}

/// Human-readable dump for inspection; not a wire format.
inline nlohmann::json to_json(const TrainedModel& model) {
    nlohmann::json j;
    j["kind"] = to_string(model.kind());
    j["label_mode"] = to_string(model.label_mode);
    j["n_features"] = model.n_features;
    j["n_classes"] = model.n_classes();
    j["training_node_id"] = model.training_node_id;
    j["scaler"] = model.scaler ? to_json(*model.scaler) : nlohmann::json(nullptr);
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, DecisionTree>) {
                auto nodes = nlohmann::json::array();
                for (const auto& n : m.nodes) {
                    if (n.is_leaf()) nodes.push_back({{"leaf", n.class_counts}});
                    else
                        nodes.push_back(
                            {{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}});
                }
                j["depth"] = m.depth();
                j["nodes"] = std::move(nodes);
            } else if constexpr (std::is_same_v<T, KnnModel>) {
                j["k"] = m.k;
                j["stored_rows"] = m.labels.size();
            } else {
                auto rows = nlohmann::json::array();
                for (std::size_t c = 0; c < m.weights.rows(); ++c) {
                    auto r = m.weights.row(c);
                    rows.push_back(std::vector<double>(r.begin(), r.end()));
                }
                j["weights"] = std::move(rows);
            }
        },
        model.state);
    return j;
}

} // namespace fedbot
