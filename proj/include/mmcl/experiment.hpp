// Copyright (c) 2026, The mmcl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration, single runs, ablation grids and gamma sweeps, plus the
// CSV/JSON report writers used by the command line tool.
//
// records.csv   epoch,mean_loss,accuracy,mean_v,mean_d_task,mean_d_fuse,
//               psi_loss,psi_consistency,psi_stability,
//               gate_0,gain_0,omega_0,...,gate_{M-1},gain_{M-1},omega_{M-1},
//               modality_alignment
// difficulty.csv sample_id,true_difficulty,d_task,d_fuse,v
// summary.json  config, final_train_accuracy, final_test_accuracy,
//               epochs_run, seed, wall_seconds (+ gmr diagnostics)
// ablation.csv  <one column per axis>,final_train_accuracy,final_test_accuracy
// sweep.csv     gamma,final_train_accuracy,final_test_accuracy

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmcl/spl_trainer.hpp"
#include "mmcl/synth_data.hpp"

namespace mmcl {

/// Invalid configuration; `field` is the dotted path of the offending key.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& message);
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

struct RunConfig {
    DatasetSpec dataset;
    /// When set, the dataset is read from this file instead of generated.
    std::string dataset_path;
    /// Unset means the dataset follows the run seed.
    std::optional<std::uint64_t> dataset_seed;
    /// Hidden widths per modality.
    std::vector<std::vector<std::size_t>> encoder_hidden;
    Activation activation = Activation::relu;
    FusionStrategy fusion;
    CurriculumConfig curriculum;
    EtaSchedule schedule;
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double lr = 0.1;
    std::uint64_t seed = 0;

    /// Throws ConfigError naming the first invalid field.
    void validate() const;
};

RunConfig parse_config(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& config);
RunConfig load_config(const std::filesystem::path& path);

struct RunResult {
    RunConfig config;
    std::vector<TrainRecord> records;
    std::vector<SampleCurriculum> difficulty;
    double final_train_accuracy = 0.0;
    double final_test_accuracy = 0.0;
    double final_mean_gmr = 0.0;
    double wall_seconds = 0.0;
    double resolved_eta0 = 0.0;
};

/// Trains and evaluates one configuration without touching the filesystem.
RunResult execute(const RunConfig& config);

std::string records_csv(const RunResult& result);
std::string difficulty_csv(const RunResult& result);
nlohmann::json summary_json(const RunResult& result);

/// Writes records.csv, difficulty.csv and summary.json into `dir`; each file
/// is written to a temporary name and renamed into place.
void write_run(const RunResult& result, const std::filesystem::path& dir);

struct AblationAxis {
    std::string field;  // dotted config path, e.g. curriculum.sdc_enabled
    std::vector<nlohmann::json> values;
};

/// Parses "field=v1,v2;field2=v3,v4". Values are read as JSON literals when
/// possible and as strings otherwise. An empty string yields no axes.
std::vector<AblationAxis> parse_grid(const std::string& grid);

/// Returns a copy of `base` (a config document) with `field` replaced.
/// Throws ConfigError when the field does not exist in the resolved schema.
nlohmann::json with_override(const nlohmann::json& base, const std::string& field, const nlohmann::json& value);

struct AblationRow {
    std::vector<nlohmann::json> values;
    double final_train_accuracy = 0.0;
    double final_test_accuracy = 0.0;
};

/// Cross-product of the axes, all cells sharing the base seed. No axes gives
/// one baseline row.
std::vector<AblationRow> ablate(const nlohmann::json& base, const std::vector<AblationAxis>& axes);
std::string ablation_csv(const std::vector<AblationAxis>& axes, const std::vector<AblationRow>& rows);

struct SweepRow {
    double gamma = 0.0;
    double final_train_accuracy = 0.0;
    double final_test_accuracy = 0.0;
};

std::vector<SweepRow> sweep_gamma(const nlohmann::json& base, const std::vector<double>& values);
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Writes `contents` to `path` through a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace mmcl
