// Copyright (c) 2026, The mmcl Authors
// SPDX-License-Identifier: Apache-2.0
//
// mmcl: run, ablate and sweep curriculum-training experiments.
//
// Exit codes: 0 success, 1 I/O or usage failure, 2 config error, 3 numeric abort.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mmcl/experiment.hpp"
#include "mmcl/synth_data.hpp"

namespace {

using nlohmann::json;

json read_config_document(const std::string& path, std::optional<std::uint64_t> seed) {
    std::ifstream in(path);
    if (!in) throw mmcl::ConfigError("<file>", "cannot open " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw mmcl::ConfigError("<file>", e.what());
    }
    if (seed) j["seed"] = *seed;
    return j;
}

std::vector<double> parse_values(const std::string& list) {
    std::vector<double> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw mmcl::ConfigError("values", "'" + item + "' is not a number");
        }
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-paced multimodal curriculum training experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "runs/latest";
    std::optional<std::uint64_t> seed;

    auto* run = app.add_subcommand("run", "Train one configuration and write its reports");
    run->add_option("config", config_path, "JSON run configuration")->required();
    run->add_option("--out", out_dir, "Output directory");
    run->add_option("--seed", seed, "Override the run seed");

    std::vector<std::string> grid;
    auto* ablate = app.add_subcommand("ablate", "Run the cross-product of config overrides");
    ablate->add_option("config", config_path, "Base JSON run configuration")->required();
    ablate->add_option("--grid", grid, "Axes as field=v1,v2;field2=v3,v4; repeatable (none: baseline only)")
        ->expected(1)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    ablate->add_option("--out", out_dir, "Output directory");
    ablate->add_option("--seed", seed, "Override the run seed");

    std::string values;
    auto* sweep = app.add_subcommand("sweep-gamma", "Run one configuration per EMA smoothing factor");
    sweep->add_option("config", config_path, "Base JSON run configuration")->required();
    sweep->add_option("--values", values, "Comma-separated gamma values in [0, 1)")->required();
    sweep->add_option("--out", out_dir, "Output directory");
    sweep->add_option("--seed", seed, "Override the run seed");

    std::string dataset_out;
    auto* gen = app.add_subcommand("generate", "Generate the configured dataset and export it");
    gen->add_option("config", config_path, "JSON run configuration")->required();
    gen->add_option("--out", dataset_out, "Dataset file")->required();
    gen->add_option("--seed", seed, "Override the run seed");

    CLI11_PARSE(app, argc, argv);

    try {
        const json doc = read_config_document(config_path, seed);
        if (*run) {
            const mmcl::RunResult result = mmcl::execute(mmcl::parse_config(doc));
            mmcl::write_run(result, out_dir);
            std::cout << "final_test_accuracy " << result.final_test_accuracy << " -> " << out_dir << "\n";
        } else if (*ablate) {
            std::string joined;
            for (const auto& g : grid) joined += g + ";";
            const auto axes = mmcl::parse_grid(joined);
            const auto rows = mmcl::ablate(doc, axes);
            std::filesystem::create_directories(out_dir);
            mmcl::write_file_atomic(std::filesystem::path(out_dir) / "ablation.csv", mmcl::ablation_csv(axes, rows));
            std::cout << rows.size() << " cells -> " << out_dir << "/ablation.csv\n";
        } else if (*sweep) {
            const auto rows = mmcl::sweep_gamma(doc, parse_values(values));
            std::filesystem::create_directories(out_dir);
            mmcl::write_file_atomic(std::filesystem::path(out_dir) / "sweep.csv", mmcl::sweep_csv(rows));
            std::cout << rows.size() << " runs -> " << out_dir << "/sweep.csv\n";
        } else if (*gen) {
            const mmcl::RunConfig cfg = mmcl::parse_config(doc);
            mmcl::save_dataset(mmcl::generate(cfg.dataset), dataset_out);
            std::cout << cfg.dataset.n_samples << " samples -> " << dataset_out << "\n";
        }
    } catch (const mmcl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const mmcl::NumericAbort& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
