#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>
#include <numeric>

#include "fedbot/dataset.hpp"
#include "fedbot/models/model.hpp"
#include "fedbot/evaluation.hpp"
#include "test_util.hpp"

namespace fedbot {
namespace {

using test::TempDir;
using test::write_text;

TEST(LoadDevice, BinaryBenignPlusOneAttack) {
    TempDir dir("binary");
    auto dev = dir.path() / "device_1";
    write_text(dev / "benign.csv", "a,b\n1,2\n3,4\n5,6\n");
    write_text(dev / "mirai.ack.csv", "a,b\n7,8\n9,10\n");
    write_text(dev / "manifest.txt", "# two classes only\nbenign = benign.csv\nmirai.ack = mirai.ack.csv\n");
    auto ds = load_device(dev, 1, LabelMode::Binary);
    EXPECT_EQ(ds.size(), 5u);
    EXPECT_EQ(ds.labels, (std::vector<ClassId>{0, 0, 0, 1, 1}));
    EXPECT_EQ(ds.feature_names, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(ds.source_device, 1);
}

TEST(LoadDevice, ColumnsCanonicalizedToBenignOrder) {
    TempDir dir("reorder");
    auto dev = dir.path() / "device_2";
    write_text(dev / "benign.csv", "a,b,c\n1,2,3\n");
    write_text(dev / "x.csv", "c,a,b\n30,10,20\n");
    write_text(dev / "manifest.txt", "benign = benign.csv\nattack = x.csv\n");
    auto ds = load_device(dev, 2, LabelMode::Binary);
    ASSERT_EQ(ds.size(), 2u);
    EXPECT_EQ(ds.features(1, 0), 10.0);
    EXPECT_EQ(ds.features(1, 1), 20.0);
    EXPECT_EQ(ds.features(1, 2), 30.0);
}

std::size_t write_full_device(const std::filesystem::path& dev, int device_id, bool prefixed) {
    std::size_t rows = 0;
    auto name = [&](std::string_view cls) {
        return (prefixed ? std::to_string(device_id) + "." : std::string()) + std::string(cls) + ".csv";
    };
    std::string benign = "x,y\n";
    for (int i = 0; i < 4; ++i) benign += std::to_string(i) + ",0\n";
    rows += 4;
    write_text(dev / name("benign"), benign);
    for (std::size_t c = 0; c < kAttackClasses.size(); ++c) {
        std::string body = "x,y\n";
        for (std::size_t i = 0; i < c + 1; ++i) body += std::to_string(100 * (c + 1) + i) + "," + std::to_string(c + 1) + "\n";
        rows += c + 1;
        write_text(dev / name(kAttackClasses[c]), body);
    }
    return rows;
}

TEST(LoadDevice, MulticlassElevenFiles) {
    TempDir dir("multi");
    auto dev = dir.path() / "device_4";
    // 4 benign rows plus 1..10 rows per attack class.
    const std::size_t expected_rows = 4 + 55;
    EXPECT_EQ(write_full_device(dev, 4, true), expected_rows);
    auto ds = load_device(dev, 4, LabelMode::Multiclass);
    EXPECT_EQ(ds.size(), expected_rows);
    auto hist = class_histogram(ds);
    ASSERT_EQ(hist.size(), 11u);
    EXPECT_EQ(hist[0], 4u);
    for (std::size_t c = 1; c <= 10; ++c) EXPECT_EQ(hist[c], c);
    // Second column carries the class id in every fixture row.
    for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(ds.features(i, 1), ds.labels[i]);
}

TEST(LoadDevice, MissingAttackFilesReportMissingData) {
    TempDir dir("missing");
    auto dev = dir.path() / "device_3";
    write_full_device(dev, 3, false);
    for (auto cls : {"mirai.ack", "mirai.scan", "mirai.syn", "mirai.udp", "mirai.udpplain"})
        std::filesystem::remove(dev / (std::string(cls) + ".csv"));
    try {
        load_device(dev, 3, LabelMode::Multiclass);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("missing data"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("mirai.ack"), std::string::npos);
    }
}

TEST(LoadDevice, MissingBenignFile) {
    TempDir dir("nobenign");
    auto dev = dir.path() / "device_7";
    write_text(dev / "mirai.ack.csv", "a\n1\n");
    EXPECT_THROW(load_device(dev, 7, LabelMode::Binary), DataError);
}

TEST(LoadDevice, ErrorsCarryFileAndLine) {
    TempDir dir("errors");
    auto dev = dir.path() / "device_1";
    write_text(dev / "benign.csv", "a,b\n1,2\n3,oops\n");
    write_text(dev / "x.csv", "a,b\n1,2\n");
    write_text(dev / "manifest.txt", "benign = benign.csv\nattack = x.csv\n");
    try {
        load_device(dev, 1, LabelMode::Binary);
        FAIL();
    } catch (const DataError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("benign.csv:3"), std::string::npos) << msg;
        EXPECT_NE(msg.find("oops"), std::string::npos) << msg;
    }

    write_text(dev / "benign.csv", "a,b\n1,2\n");
    write_text(dev / "x.csv", "a,z\n1,2\n");
    EXPECT_THROW(load_device(dev, 1, LabelMode::Binary), DataError);

    write_text(dev / "x.csv", "");
    try {
        load_device(dev, 1, LabelMode::Binary);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("empty file"), std::string::npos);
    }
}

TEST(LoadDevice, BinaryOrderInsensitiveOverAttackFiles) {
    TempDir dir("perm");
    auto dev = dir.path() / "device_1";
    write_text(dev / "benign.csv", "a,b\n1,1\n2,2\n");
    write_text(dev / "p.csv", "a,b\n3,3\n");
    write_text(dev / "q.csv", "b,a\n4,4\n5,6\n");
    write_text(dev / "r.csv", "a,b\n7,7\n");
    std::vector<std::string> order = {"p", "q", "r"};
    std::multiset<std::pair<std::vector<double>, ClassId>> reference;
    bool first = true;
    do {
        std::string manifest = "benign = benign.csv\n";
        for (auto& o : order) manifest += o + " = " + o + ".csv\n";
        write_text(dev / "manifest.txt", manifest);
        auto ds = load_device(dev, 1, LabelMode::Binary);
        std::multiset<std::pair<std::vector<double>, ClassId>> rows;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            auto r = ds.features.row(i);
            rows.emplace(std::vector<double>(r.begin(), r.end()), ds.labels[i]);
        }
        if (first) reference = rows;
        EXPECT_EQ(rows, reference);
        first = false;
    } while (std::next_permutation(order.begin(), order.end()));
}

TEST(LoadFederation, SkipsIncompleteDevicesAndRenumbers) {
    TempDir dir("fed");
    for (int k : {1, 2, 3, 4}) write_full_device(dir.path() / ("device_" + std::to_string(k)), k, false);
    std::filesystem::remove(dir.path() / "device_3" / "mirai.syn.csv");
    auto fed = load_federation(dir.path(), LabelMode::Multiclass);
    ASSERT_EQ(fed.nodes.size(), 3u);
    EXPECT_EQ(fed.nodes[2].node_id, 3);
    EXPECT_EQ(fed.nodes[2].source_device, 4);
    ASSERT_EQ(fed.skipped.size(), 1u);
    EXPECT_EQ(fed.skipped[0].first, 3);
}

TEST(WriteDeviceDir, RoundTripsThroughLoader) {
    SyntheticFederationSpec spec;
    spec.n_nodes = 2;
    spec.rows_per_node = 60;
    spec.n_features = 4;
    spec.seed = 5;
    auto nodes = generate_synthetic_federation(spec);
    TempDir dir("rt");
    write_device_dir(nodes[0], dir.path() / "device_1");
    auto back = load_device(dir.path() / "device_1", 1, LabelMode::Multiclass);
    ASSERT_EQ(back.size(), nodes[0].size());
    // Rows come back grouped by class; compare as multisets.
    auto rows_of = [](const Dataset& d) {
        std::multiset<std::pair<std::vector<double>, ClassId>> s;
        for (std::size_t i = 0; i < d.size(); ++i) {
            auto r = d.features.row(i);
            s.emplace(std::vector<double>(r.begin(), r.end()), d.labels[i]);
        }
        return s;
    };
    EXPECT_EQ(rows_of(back), rows_of(nodes[0]));
}

// ---------------------------------------------------------------------------

Dataset labeled(std::vector<ClassId> labels, LabelMode mode = LabelMode::Binary) {
    Dataset ds;
    ds.label_mode = mode;
    ds.features = Matrix(labels.size(), 1);
    for (std::size_t i = 0; i < labels.size(); ++i) ds.features(i, 0) = static_cast<double>(i);
    ds.labels = std::move(labels);
    return ds;
}

TEST(Split, TenRowsEightTwo) {
    auto ds = labeled({0, 1, 0, 1, 0, 1, 0, 1, 0, 1});
    auto idx = split_indices(ds, {0.8, 7, false});
    EXPECT_EQ(idx.train.size(), 8u);
    EXPECT_EQ(idx.test.size(), 2u);
    std::vector<std::size_t> all = idx.train;
    all.insert(all.end(), idx.test.begin(), idx.test.end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expected(10);
    std::iota(expected.begin(), expected.end(), 0);
    EXPECT_EQ(all, expected);
}

TEST(Split, DeterministicUnderSeed) {
    auto ds = test::random_dataset(200, 3, 2, 1);
    auto a = split(ds, {0.8, 7, true});
    auto b = split(ds, {0.8, 7, true});
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.test, b.test);
    auto c = split(ds, {0.8, 8, true});
    EXPECT_NE(a.train, c.train);
}

TEST(Split, StratifiedFiftyFifty) {
    std::vector<ClassId> labels(100);
    for (std::size_t i = 0; i < 100; ++i) labels[i] = i < 50 ? 0 : 1;
    auto s = split(labeled(labels), {0.8, 3, true});
    auto hist = class_histogram(s.train);
    EXPECT_EQ(hist[0], 40u);
    EXPECT_EQ(hist[1], 40u);
    EXPECT_EQ(s.test.size(), 20u);
}

TEST(Split, Errors) {
    Dataset empty;
    EXPECT_THROW(split(empty, {}), DataError);
    EXPECT_THROW(split(labeled({0, 0, 1}), {0.8, 1, true}), DataError);
    EXPECT_NO_THROW(split(labeled({0, 0, 1}), {0.8, 1, false}));
    EXPECT_THROW(split(labeled({0, 1}), {1.0, 1, false}), ConfigError);
    EXPECT_THROW(split(labeled({0, 1}), {0.0, 1, false}), ConfigError);
}

TEST(Split, PartitionPropertyAcrossSeeds) {
    auto ds = test::random_dataset(137, 2, 11, 9);
    // Make the row content identify the row.
    for (std::size_t i = 0; i < ds.size(); ++i) ds.features(i, 0) = static_cast<double>(i);
    const auto global = class_histogram(ds);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        for (bool stratified : {true, false}) {
            if (stratified && std::any_of(global.begin(), global.end(), [](auto c) { return c == 1; })) continue;
            auto idx = split_indices(ds, {0.8, seed, stratified});
            std::vector<std::size_t> all = idx.train;
            all.insert(all.end(), idx.test.begin(), idx.test.end());
            std::sort(all.begin(), all.end());
            ASSERT_EQ(all.size(), ds.size());
            for (std::size_t i = 0; i < all.size(); ++i) ASSERT_EQ(all[i], i);
            if (stratified) {
                auto tr = class_histogram(ds.subset(idx.train));
                for (std::size_t c = 0; c < global.size(); ++c) {
                    if (global[c] > 0) {
                        EXPECT_LE(std::abs(static_cast<double>(tr[c]) - 0.8 * global[c]), 1.0);
                    }
                }
            } else {
                EXPECT_EQ(idx.train.size(), static_cast<std::size_t>(std::llround(0.8 * ds.size())));
            }
        }
    }
}

// ---------------------------------------------------------------------------

TEST(Synthetic, NodeCountAndIds) {
    SyntheticFederationSpec spec;
    spec.rows_per_node = 50;
    spec.n_features = 5;
    auto nodes = generate_synthetic_federation(spec);
    ASSERT_EQ(nodes.size(), 7u);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        EXPECT_EQ(nodes[i].node_id, static_cast<int>(i + 1));
        EXPECT_EQ(nodes[i].size(), 50u);
        EXPECT_NO_THROW(nodes[i].validate());
    }
}

TEST(Synthetic, DeterministicUnderSeed) {
    SyntheticFederationSpec spec;
    spec.rows_per_node = 40;
    spec.n_features = 6;
    spec.seed = 77;
    auto a = generate_synthetic_federation(spec);
    auto b = generate_synthetic_federation(spec);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].features, b[i].features);
    spec.seed = 78;
    auto c = generate_synthetic_federation(spec);
    EXPECT_NE(a[0].features, c[0].features);
}

TEST(Synthetic, AllClassesPresentWhenEnoughRows) {
    for (int classes : {2, 5, 11}) {
        SyntheticFederationSpec spec;
        spec.n_classes = classes;
        spec.rows_per_node = 10 * classes;
        spec.n_features = 3;
        for (const auto& node : generate_synthetic_federation(spec)) {
            auto hist = class_histogram(node);
            for (int c = 0; c < classes; ++c) EXPECT_GT(hist[static_cast<std::size_t>(c)], 0u);
        }
    }
}

TEST(Synthetic, NoShiftTransfersAcrossNodes) {
    SyntheticFederationSpec spec;
    spec.n_nodes = 2;
    spec.rows_per_node = 1100;
    spec.n_features = 20;
    spec.class_separation = 4.0;
    spec.node_shift = 0.0;
    spec.seed = 11;
    auto nodes = generate_synthetic_federation(spec);
    auto model = train_decision_tree(nodes[0], {});
    EXPECT_GT(accuracy(model, nodes[1]), 0.95);
}

TEST(Synthetic, InvalidSpecs) {
    SyntheticFederationSpec spec;
    spec.n_nodes = 1;
    EXPECT_THROW(generate_synthetic_federation(spec), ConfigError);
    spec = {};
    spec.class_separation = 0.0;
    EXPECT_THROW(generate_synthetic_federation(spec), ConfigError);
    spec = {};
    spec.node_shift = std::numeric_limits<double>::infinity();
    EXPECT_THROW(generate_synthetic_federation(spec), ConfigError);
    spec = {};
    spec.n_classes = 12;
    EXPECT_THROW(generate_synthetic_federation(spec), ConfigError);
}

TEST(Csv, ShortestRoundTripFormatting) {
    Matrix m(1, 3);
    m(0, 0) = 0.1;
    m(0, 1) = 1.0 / 3.0;
    m(0, 2) = -2.5e-300;
    auto text = to_csv({"a", "b", "c"}, m);
    auto table = parse_csv(text, "mem");
    EXPECT_EQ(table.rows, m);
}

} // namespace
} // namespace fedbot
