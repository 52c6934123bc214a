#include <gtest/gtest.h>

#include "fedbot/evaluation.hpp"
#include "fedbot/models/model.hpp"
#include "fedbot/models/serialize.hpp"
#include "test_util.hpp"

namespace fedbot {
namespace {

std::vector<TrainerSpec> all_specs() {
    return {TrainerSpec::tree(), TrainerSpec::tree({}, true), TrainerSpec::knn(), TrainerSpec::logistic()};
}

TEST(Model, KindNames) {
    for (auto k : {ModelKind::Tree, ModelKind::Knn, ModelKind::Logistic}) EXPECT_EQ(parse_model_kind(to_string(k)), k);
    EXPECT_THROW(parse_model_kind("svm"), ConfigError);
}

TEST(Model, BatchEqualsSinglePredictions) {
    auto train = test::random_dataset(300, 5, 11, 1);
    auto probe = test::random_dataset(100, 5, 11, 2);
    for (const auto& spec : all_specs()) {
        auto model = fit(spec, train);
        auto batch = predict_batch(model, probe.features);
        for (std::size_t i = 0; i < probe.size(); ++i) EXPECT_EQ(batch[i], predict(model, probe.features.row(i)));
    }
}

TEST(Model, ArgmaxTieGoesToLowest) {
    std::vector<int> counts{2, 2};
    EXPECT_EQ(argmax_lowest(std::span<const int>(counts)), 0);
    std::vector<int> later{0, 3, 1, 3};
    EXPECT_EQ(argmax_lowest(std::span<const int>(later)), 1);
}

TEST(Model, DimensionMismatchRejected) {
    auto model = fit(TrainerSpec::tree(), test::random_dataset(20, 4, 2, 3));
    std::vector<double> row(5, 0.0);
    EXPECT_THROW(predict(model, row), DataError);
}

TEST(Model, ScalerIsAppliedInsidePredict) {
    auto train = test::random_dataset(200, 3, 2, 4, 1000.0);
    auto model = fit(TrainerSpec::knn({1}), train);
    ASSERT_TRUE(model.scaler);
    // Raw (unscaled) training rows must come back with their own labels.
    EXPECT_EQ(accuracy(model, train), 1.0);
}

TEST(Serialize, RoundTripEveryKind) {
    auto train = test::random_dataset(1000, 8, 11, 5);
    auto probe = test::random_dataset(300, 8, 11, 6);
    for (const auto& spec : all_specs()) {
        auto model = fit(spec, train);
        model.training_node_id = 4;
        auto bytes = serialize_model(model);
        auto back = deserialize_model(bytes);
        EXPECT_EQ(back, model) << to_string(spec.kind());
        EXPECT_EQ(predict_batch(back, probe.features), predict_batch(model, probe.features));
        EXPECT_EQ(serialize_model(back), bytes);
    }
}

TEST(Serialize, SizeIsAFunctionOfTheModel) {
    auto train = test::random_dataset(400, 6, 11, 7);
    for (const auto& spec : all_specs()) {
        auto a = serialize_model(fit(spec, train));
        auto b = serialize_model(fit(spec, train));
        EXPECT_EQ(a, b);
    }
}

TEST(Serialize, DepthZeroTreeIsTiny) {
    auto train = test::random_dataset(500, 115, 11, 8);
    TreeParams p;
    p.max_depth = 0;
    auto bytes = serialize_model(fit(TrainerSpec::tree(p), train));
    EXPECT_LT(bytes.size(), 128u);
}

TEST(Serialize, CorruptionIsDetected) {
    auto train = test::random_dataset(100, 4, 11, 9);
    for (const auto& spec : all_specs()) {
        const auto good = serialize_model(fit(spec, train));

        auto flipped = good;
        flipped.back() ^= 0x01;
        EXPECT_THROW(deserialize_model(flipped), FormatError);

        auto body = good;
        body[body.size() / 2] ^= 0x80;
        EXPECT_THROW(deserialize_model(body), FormatError);

        for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{9}, good.size() / 2, good.size() - 1}) {
            Bytes truncated(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(cut));
            EXPECT_THROW(deserialize_model(truncated), FormatError) << "cut " << cut;
        }

        auto versioned = good;
        versioned[4] = 2;
        try {
            deserialize_model(versioned);
            FAIL();
        } catch (const FormatError& e) {
            EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
        }

        auto magic = good;
        magic[0] = 'X';
        EXPECT_THROW(deserialize_model(magic), FormatError);
    }
}

TEST(Serialize, JsonDumpDescribesModel) {
    auto train = test::random_dataset(60, 3, 2, 10);
    auto j = to_json(fit(TrainerSpec::tree(), train));
    EXPECT_EQ(j["kind"], "tree");
    EXPECT_EQ(j["n_features"], 3);
    EXPECT_TRUE(j.contains("nodes"));
    auto k = to_json(fit(TrainerSpec::knn(), train));
    EXPECT_EQ(k["stored_rows"], 60);
    EXPECT_TRUE(k["scaler"].is_object());
}

} // namespace
} // namespace fedbot
