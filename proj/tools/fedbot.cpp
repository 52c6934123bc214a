// fedbot: federated botnet-detection simulator.
//
//   fedbot synth      --config run.json
//   fedbot train      --config run.json --model tree --model knn
//   fedbot cross-eval --config run.json
//   fedbot score      --config run.json --weights 0.5:0.5
//   fedbot federate   --config run.json            (or --matrix table.csv)
//   fedbot report     --config run.json
//   fedbot all        --config run.json
//
// Exit codes: 0 success, 1 usage/config, 2 data, 3 internal.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedbot/pipeline.hpp"

namespace {

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    std::optional<std::string> label_mode;
    std::vector<std::string> models;
    std::optional<std::string> weights;
    std::optional<std::string> out;
    std::optional<std::string> data_root;
    std::optional<std::string> timing;
    std::string matrix;
    bool performance_weights = false;
};

fedbot::ScoreWeights parse_weights(const std::string& text) {
    auto colon = text.find(':');
    double acc = 0.0, time = 0.0;
    if (colon == std::string::npos || !fedbot::parse_double(std::string_view(text).substr(0, colon), acc) ||
        !fedbot::parse_double(std::string_view(text).substr(colon + 1), time))
        throw fedbot::ConfigError("--weights expects acc:time, e.g. 0.5:0.5");
    fedbot::ScoreWeights w{acc, time};
    w.validate();
    return w;
}

fedbot::RunConfig resolve(const Flags& f) {
    fedbot::RunConfig c = f.config.empty() ? fedbot::RunConfig{} : fedbot::load_config(f.config);
    if (f.seed) c.set_seed(*f.seed);
    if (f.jobs) c.jobs = *f.jobs;
    if (f.label_mode) c.label_mode = fedbot::parse_label_mode(*f.label_mode);
    if (!f.models.empty()) {
        c.models.clear();
        for (const auto& m : f.models) {
            auto kind = fedbot::parse_model_kind(m);
            if (std::find(c.models.begin(), c.models.end(), kind) == c.models.end()) c.models.push_back(kind);
        }
        c.federate_models = c.models;
    }
    if (f.weights) c.weights = parse_weights(*f.weights);
    if (f.out) c.out = *f.out;
    if (f.data_root) {
        c.data_root = *f.data_root;
        c.synthetic.reset();
    }
    if (f.timing) {
        if (*f.timing == "wall") c.timing = fedbot::TimingMode::Wall;
        else if (*f.timing == "work") c.timing = fedbot::TimingMode::Work;
        else throw fedbot::ConfigError("--timing expects wall or work");
    }
    if (f.performance_weights) c.performance_weights = true;
    return c;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated botnet-detection simulator: local lightweight classifiers, cross-node evaluation, "
                 "majority-vote aggregation"};
    app.require_subcommand(1);
    Flags f;
    app.add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--seed", f.seed, "Run seed (overrides config)");
    app.add_option("--jobs", f.jobs, "Concurrent per-node workers")->check(CLI::PositiveNumber);
    app.add_option("--label-mode", f.label_mode, "binary|multiclass")
        ->check(CLI::IsMember({"binary", "multiclass"}));
    app.add_option("--model", f.models, "tree|knn|logistic (repeatable)")
        ->check(CLI::IsMember({"tree", "knn", "logistic"}));
    app.add_option("--weights", f.weights, "Score weights acc:time, summing to 1");
    app.add_option("--out", f.out, "Output directory");
    app.add_option("--data-root", f.data_root, "N-BaIoT root with device_<k> directories");
    app.add_option("--timing", f.timing, "wall|work")->check(CLI::IsMember({"wall", "work"}));
    app.add_flag("--performance-weights", f.performance_weights,
                 "Weight ensemble members by their own-node accuracy (extension)");

    auto* synth = app.add_subcommand("synth", "Write a synthetic non-IID federation as device CSVs");
    auto* train = app.add_subcommand("train", "Train per-node models and record node metrics");
    auto* cross = app.add_subcommand("cross-eval", "Cross-node accuracy matrix per model");
    auto* score = app.add_subcommand("score", "Accuracy/time score card across models");
    auto* federate = app.add_subcommand("federate", "Aggregate node models by majority vote and evaluate");
    federate->add_option("--matrix", f.matrix, "Evaluate a published accuracy-matrix CSV instead of models")
        ->check(CLI::ExistingFile);
    auto* report = app.add_subcommand("report", "Long-format CSV of all outputs");
    auto* all = app.add_subcommand("all", "Run every step in order");
    for (auto* sub : {synth, train, cross, score, federate, report, all}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        auto c = resolve(f);
        if (*synth) fedbot::cmd_synth(c);
        else if (*train) fedbot::cmd_train(c);
        else if (*cross) fedbot::cmd_cross_eval(c);
        else if (*score) fedbot::cmd_score(c);
        else if (*federate) {
            if (!f.matrix.empty()) fedbot::cmd_federate_matrix(c, f.matrix);
            else fedbot::cmd_federate(c);
        } else if (*report) fedbot::cmd_report(c);
        else if (*all) fedbot::cmd_all(c);
        return 0;
    } catch (const fedbot::ConfigError& e) {
        std::cerr << "fedbot: " << e.what() << '\n';
        return 1;
    } catch (const fedbot::DataError& e) {
        std::cerr << "fedbot: " << e.what() << '\n';
        return 2;
    } catch (const fedbot::FormatError& e) {
        std::cerr << "fedbot: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "fedbot: internal error: " << e.what() << '\n';
        return 3;
    }
}
