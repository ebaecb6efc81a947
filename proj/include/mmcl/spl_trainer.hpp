// Copyright (c) 2026, The mmcl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Self-paced multimodal training loop. Every sample gets a task difficulty
// (sample curriculum) and a fusion effectiveness (modality curriculum); their
// product W reweights the sample's task loss L, and the self-paced weight v
// minimizes v * W * L + eta(t) * (1 - v)^2 over v in [0, 1]. Parameters are
// then updated by SGD on v * W * L with v and W held fixed.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmcl/fusion.hpp"
#include "mmcl/numerics.hpp"
#include "mmcl/sample_curriculum.hpp"
#include "mmcl/synth_data.hpp"

namespace mmcl {

/// Raised when a loss or curriculum metric becomes NaN or infinite.
class NumericAbort : public std::runtime_error {
public:
    NumericAbort(std::size_t sample_id, std::string metric, double value);
    std::size_t sample_id() const noexcept { return sample_id_; }
    const std::string& metric() const noexcept { return metric_; }

private:
    std::size_t sample_id_;
    std::string metric_;
};

/// argmin over v in [0, 1] of v * w_factor * task_loss + eta * (1 - v)^2.
double solve_v(double w_factor, double task_loss, double eta);

enum class EtaKind { linear, exponential };

EtaKind parse_eta_kind(const std::string& name);
std::string to_string(EtaKind kind);

struct EtaSchedule {
    /// Nonpositive means "not yet resolved": the trainer sets it to half the
    /// median W * L of the first batch it sees.
    double eta0 = 0.0;
    double growth = 0.5;
    EtaKind kind = EtaKind::linear;
};

/// linear: eta0 (1 + growth t); exponential: eta0 (1 + growth)^t.
double eta_at(const EtaSchedule& schedule, std::size_t t);

struct CurriculumConfig {
    bool sdc_enabled = true;
    bool mdc_enabled = true;
    /// false: v = 1 for every sample (plain reweighted training).
    bool self_paced_enabled = true;
    MetricMask metrics_enabled = kAllMetrics;
    bool gmr_enabled = true;
    bool hmir_enabled = true;
    bool gating_enabled = true;
    double gamma = 0.995;
    double gate_threshold = 0.5;
    double mu = 1.0;
    MetricOrientation orientation;
};

struct TrainOptions {
    CurriculumConfig curriculum;
    FusionStrategy fusion;
    std::size_t batch_size = 32;
    double lr = 0.1;
    std::uint64_t seed = 0;
};

/// Per-modality encoders plus whatever the fusion strategy owns.
struct MultimodalModel {
    std::vector<MlpEncoder> encoders;
    std::optional<MlpEncoder> head;  // concat strategy only
    FusionStrategy fusion;
    /// Fusion weights used when labels are unavailable (evaluation): the mean
    /// adjusted weights and the mean-gate active set of the last epoch.
    std::vector<double> eval_omega_star;
    std::vector<std::size_t> eval_active;

    /// encoder_dims[m] lists input, hidden..., output widths for modality m.
    static MultimodalModel create(const std::vector<std::vector<std::size_t>>& encoder_dims,
                                  Activation activation, const FusionStrategy& fusion, std::uint64_t seed);

    std::size_t num_modalities() const { return encoders.size(); }
    std::size_t num_classes() const { return encoders.front().output_dim(); }

    /// Fused class distribution without label information.
    std::vector<double> predict(const SyntheticSample& sample) const;
    /// Per-modality logits, used for the alignment diagnostic.
    std::vector<std::vector<double>> unimodal_logits(const SyntheticSample& sample) const;
};

struct TrainRecord {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double accuracy = 0.0;
    double mean_v = 0.0;
    double mean_d_task = 0.0;
    double mean_d_fuse = 0.0;
    MetricTriple psi{};
    std::vector<double> gates;
    std::vector<double> gains;
    std::vector<double> omegas;
    double modality_alignment = 0.0;
    double mean_gmr = 0.0;
    double mean_hmir = 0.0;
};

/// Curriculum quantities of one sample from the most recent epoch.
struct SampleCurriculum {
    std::size_t sample_id = 0;
    double true_difficulty = 0.0;
    double d_task = 0.0;
    double d_fuse = 0.0;
    double v = 0.0;
    double task_loss = 0.0;
};

struct TrainState {
    MultimodalModel model;
    VolatilityState volatility;
    EtaSchedule schedule;
    /// Gates each sample received in the previous epoch, indexed by sample id;
    /// empty until the sample has been seen (cold start uses 0.5).
    std::vector<std::vector<double>> prev_gates;
    std::vector<SampleCurriculum> last_epoch;

    TrainState(MultimodalModel model_, double gamma, EtaSchedule schedule_)
        : model(std::move(model_)), volatility(gamma), schedule(schedule_) {}
};

/// One pass over `train_indices` in a seeded shuffled order.
TrainRecord train_epoch(TrainState& state, const Dataset& data, std::span<const std::size_t> train_indices,
                        const TrainOptions& options, std::size_t epoch);

double evaluate_accuracy(const MultimodalModel& model, const Dataset& data, std::span<const std::size_t> indices);

/// Mean over samples of (1 + cos(a_i - mean(a_i), b_i - mean(b_i))) / 2, with
/// cos taken as 0 when either centered vector is zero.
double modality_alignment(std::span<const std::vector<double>> features_a,
                          std::span<const std::vector<double>> features_b);

}  // namespace mmcl
