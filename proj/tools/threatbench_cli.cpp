// SPDX-License-Identifier: Apache-2.0
//
// threatbench command line: prepare scenario datasets, train and evaluate
// single pipelines, run the full benchmark grid, and render result tables.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "threatbench/bench.hpp"

namespace fs = std::filesystem;

namespace {

tb::ExperimentConfig load_config(const std::string& path) {
    return tb::parse_experiment_config(tb::ConfigFile::parse_file(path));
}

int cmd_prepare(const std::string& config_path, const std::string& out_override) {
    tb::ExperimentConfig cfg = load_config(config_path);
    if (!out_override.empty()) cfg.output_dir = out_override;

    tb::LabeledDataset threat, pool;
    if (cfg.source == "csv") {
        threat = tb::load_csv(cfg.threat_csv);
        pool = tb::load_csv(cfg.nonthreat_csv);
    } else {
        threat = tb::synth_class(cfg.synth_n_threat, 1, cfg.synth, cfg.synth_seed);
        pool = tb::synth_class(cfg.synth_pool_size, 0, cfg.synth, cfg.synth_seed);
    }
    const fs::path dir = fs::path(cfg.output_dir) / "prepared";
    fs::create_directories(dir);
    const std::string pool_id = cfg.source == "csv" ? cfg.nonthreat_csv : "synth";
    for (std::size_t si = 0; si < cfg.scenarios.size(); ++si) {
        for (std::uint64_t seed : cfg.seeds) {
            const tb::ScenarioSpec spec{cfg.scenarios[si], pool_id, tb::derive_seed(seed, {si, 1})};
            const tb::LabeledDataset scenario = tb::build_scenario(threat, pool, spec);
            const tb::SplitPair split =
                tb::stratified_split(scenario, cfg.test_fraction, tb::derive_seed(seed, {si, 2}));
            const std::string stem =
                tb::scenario_id_for(cfg.scenarios[si]) + "_seed" + std::to_string(seed);
            tb::save_csv((dir / (stem + "_full.csv")).string(), scenario);
            tb::save_csv((dir / (stem + "_train.csv")).string(), split.train);
            tb::save_csv((dir / (stem + "_test.csv")).string(), split.test);
            std::cout << stem << ": " << scenario.size() << " docs (" << scenario.count(1)
                      << " threat / " << scenario.count(0) << " nonthreat), train "
                      << split.train.size() << ", test " << split.test.size() << "\n";
        }
    }
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& method,
              const std::string& train_csv, const std::string& out_prefix, std::uint64_t seed) {
    const tb::ExperimentConfig cfg = load_config(config_path);
    const tb::LabeledDataset train = tb::load_csv(train_csv);
    const tb::TrainedPipeline pipeline = tb::train_pipeline(method, cfg, train, seed);
    if (const fs::path parent = fs::path(out_prefix).parent_path(); !parent.empty()) {
        fs::create_directories(parent);
    }
    tb::save_pipeline(pipeline, out_prefix);
    std::cout << "trained " << pipeline.method << " on " << train.size() << " docs -> "
              << out_prefix << ".model\n";
    if (!pipeline.train_loss_trace.empty()) {
        std::cout << "epoch loss:";
        for (double l : pipeline.train_loss_trace) std::cout << ' ' << l;
        std::cout << "\n";
    }
    if (pipeline.total_params > 0) {
        std::cout << "trainable parameters: " << pipeline.trainable_params << " / "
                  << pipeline.total_params << " ("
                  << tb::format_pct(100.0 * static_cast<double>(pipeline.trainable_params) /
                                    static_cast<double>(pipeline.total_params))
                  << "%)\n";
    }
    return 0;
}

int cmd_evaluate(const std::string& model_prefix, const std::string& test_csv) {
    const tb::TrainedPipeline pipeline = tb::load_pipeline(model_prefix);
    const tb::LabeledDataset test = tb::load_csv(test_csv);
    std::vector<int> labels;
    for (const auto& d : test.docs) labels.push_back(d.label);
    const tb::MetricReport rep = tb::report(tb::pipeline_scores(pipeline, test), labels);
    std::cout << pipeline.method << " on " << test_csv << "\n";
    std::cout << tb::metric_csv_header() << "\n" << tb::metric_csv_row(rep) << "\n";
    std::cout << tb::metric_json(rep) << "\n";
    return 0;
}

int cmd_bench(const std::string& config_path, long long seed_override,
              const std::string& out_override) {
    tb::ExperimentConfig cfg = load_config(config_path);
    if (seed_override >= 0) cfg.seeds = {static_cast<std::uint64_t>(seed_override)};
    if (!out_override.empty()) cfg.output_dir = out_override;
    const tb::ResultTable table = tb::run_experiment(cfg, &std::cout);
    tb::write_output_dir(cfg, table);
    std::size_t failures = 0;
    for (const auto& r : table.rows) {
        if (!r.ok) ++failures;
    }
    std::cout << "wrote " << cfg.output_dir << " (" << table.rows.size() << " rows, " << failures
              << " failed)\n";
    return failures == table.rows.size() ? 1 : 0;
}

int cmd_report(const std::string& results_path, const std::string& format,
               const std::string& out_path) {
    std::ifstream in(results_path, std::ios::binary);
    if (!in) {
        std::cerr << "report: cannot open " << results_path << "\n";
        return 1;
    }
    const tb::ResultTable table = tb::parse_results_csv(in);
    const std::string rendered = tb::emit_table(table, format);
    if (out_path.empty()) {
        std::cout << rendered;
    } else {
        std::ofstream out(out_path, std::ios::binary);
        out << rendered;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"threatbench: desk-scale threatening-text classification benchmark"};
    app.require_subcommand(1);

    std::string config_path, out_dir, method, train_csv, test_csv, model_prefix, results_path;
    std::string format = "markdown";
    long long seed = -1;

    CLI::App* prepare = app.add_subcommand("prepare", "build scenario datasets and splits as CSV");
    prepare->add_option("--config", config_path, "config file")->required();
    prepare->add_option("--out", out_dir, "output directory override");

    CLI::App* train = app.add_subcommand("train", "train one method on a CSV dataset");
    train->add_option("--config", config_path, "config file")->required();
    train->add_option("--method", method, "method name")->required();
    train->add_option("--train", train_csv, "training CSV (text,label)")->required();
    train->add_option("--out", model_prefix, "output model path prefix")->required();
    train->add_option("--seed", seed, "training seed (default 1)");

    CLI::App* evaluate = app.add_subcommand("evaluate", "evaluate a saved model on a CSV dataset");
    evaluate->add_option("--model", model_prefix, "model path prefix")->required();
    evaluate->add_option("--test", test_csv, "test CSV (text,label)")->required();

    CLI::App* bench = app.add_subcommand("bench", "run the full experiment grid");
    bench->add_option("--config", config_path, "config file")->required();
    bench->add_option("--seed", seed, "override run.seeds with a single seed");
    bench->add_option("--out", out_dir, "output directory override");

    CLI::App* report = app.add_subcommand("report", "render tables from a results.csv");
    report->add_option("--results", results_path, "results.csv path")->required();
    report->add_option("--format", format, "markdown or csv");
    report->add_option("--out", out_dir, "write to file instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (prepare->parsed()) return cmd_prepare(config_path, out_dir);
        if (train->parsed()) {
            return cmd_train(config_path, method, train_csv, model_prefix,
                             seed < 0 ? 1 : static_cast<std::uint64_t>(seed));
        }
        if (evaluate->parsed()) return cmd_evaluate(model_prefix, test_csv);
        if (bench->parsed()) return cmd_bench(config_path, seed, out_dir);
        if (report->parsed()) return cmd_report(results_path, format, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
