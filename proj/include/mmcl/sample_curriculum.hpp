// Copyright (c) 2026, The mmcl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Sample-level difficulty: prediction deviation, consistency and stability,
// sigmoid standardization, and volatility-weighted aggregation into a single
// task difficulty score.

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace mmcl {

/// Softmax outputs of every modality plus the fused prediction for one sample.
struct PredictionSet {
    std::vector<std::vector<double>> per_modality;
    std::vector<double> fused;
    std::size_t label = 0;

    std::size_t num_modalities() const { return per_modality.size(); }
    std::size_t num_classes() const { return fused.size(); }

    /// Throws std::invalid_argument unless every vector is a simplex of the
    /// same width and the label is in range.
    void validate() const;
};

/// Index of each difficulty metric inside a MetricTriple.
enum Metric : std::size_t { kLossMetric = 0, kConsistencyMetric = 1, kStabilityMetric = 2 };

using MetricTriple = std::array<double, 3>;
using MetricMask = std::array<bool, 3>;

inline constexpr MetricMask kAllMetrics{true, true, true};

/// Sign applied to each raw metric before the sigmoid. Each value is +1 or -1.
struct MetricOrientation {
    int s_loss = 1;
    int s_consistency = 1;
    int s_stability = 1;

    MetricTriple as_triple() const {
        return {static_cast<double>(s_loss), static_cast<double>(s_consistency),
                static_cast<double>(s_stability)};
    }
    void validate() const;
};

struct DeviationResult {
    double d_loss = 0.0;
    std::vector<double> delta;      // entropy weights, one per modality
    std::vector<double> entropies;  // U_m
};

/// Shannon entropy in nats, with the probability floor applied inside the log.
double entropy(std::span<const double> p);

/// Fused loss plus unimodal losses weighted by softmax(-entropy).
DeviationResult deviation_loss(std::span<const double> losses, double loss_concat,
                               const PredictionSet& predictions);

/// Mean squared distance between each unimodal prediction and the fused one.
double consistency(const PredictionSet& predictions);

/// -log p_y + sum_{k != y} log p_k on the fused prediction.
double stability(std::span<const double> fused, std::size_t y);

MetricTriple standardize(const MetricTriple& raw, const MetricOrientation& orientation);

/// Running volatility of each standardized metric.
struct VolatilityState {
    double gamma = 0.995;
    MetricTriple ema{0.0, 0.0, 0.0};
    std::optional<MetricTriple> prev_standardized;
    MetricTriple psi{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};

    explicit VolatilityState(double gamma_ = 0.995);
};

/// One EMA step. The first call only records the reference value.
VolatilityState update_volatility(VolatilityState state, const MetricTriple& standardized);

/// Normalized EMA volatility, restricted to the enabled metrics. Falls back to
/// uniform over the enabled metrics when they all have zero volatility.
MetricTriple metric_weights(const VolatilityState& state, const MetricMask& enabled = kAllMetrics);

double composite_difficulty(const MetricTriple& standardized, const MetricTriple& psi);

struct DifficultyRecord {
    double d_loss = 0.0;
    double d_consistency = 0.0;
    double d_stability = 0.0;
    MetricTriple standardized{};
    double d_task = 0.0;
    std::vector<double> delta_weights;
    std::vector<double> entropies;
};

/// Evaluates every metric for one sample and combines them with `psi`.
DifficultyRecord score_difficulty(std::span<const double> losses, double loss_concat,
                                  const PredictionSet& predictions,
                                  const MetricOrientation& orientation, const MetricTriple& psi);

}  // namespace mmcl
