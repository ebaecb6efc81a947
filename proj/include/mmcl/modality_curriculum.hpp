// Copyright (c) 2026, The mmcl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Modality-level contribution scores (geometric mean ratio, harmonic mean
// improvement rate, per-modality gain) and the gates and adjusted fusion
// weights derived from them. All functions operate on a single sample.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mmcl {

inline constexpr double kHmirEpsilon = 1e-6;
inline constexpr double kLambda0 = 0.5;

/// (prod_m loss_concat / loss_m)^(1/|M|), evaluated in log space.
double gmr(std::span<const double> losses, double loss_concat);

/// exp((loss_m - loss_concat) / loss_m) per modality.
std::vector<double> gains(std::span<const double> losses, double loss_concat);

/// softmax(-loss).
std::vector<double> omega_init(std::span<const double> losses);

/// |M| / sum_m omega_m (1 + 1 / (gain_m + eps)).
double hmir(std::span<const double> gains, std::span<const double> omega, double epsilon = kHmirEpsilon);

/// lambda0 + sigmoid(|gain_m - mean gain|) / 2.
std::vector<double> balance_factors(std::span<const double> gains, double lambda0 = kLambda0);

/// sigmoid(lambda_m * d_gmr + (1 - lambda_m) * d_hmir).
std::vector<double> gates(double d_gmr, double d_hmir, std::span<const double> lambdas);

struct GateSelection {
    std::vector<std::size_t> active;  // ascending modality indices, never empty
    std::vector<double> omega_star;   // zero for inactive modalities
};

/// Activates modalities whose gate reaches `threshold` (falling back to the
/// single highest gate) and boosts their weights to omega_m (1 + g_m)^mu.
GateSelection activate_and_reweight(std::span<const double> omega, std::span<const double> gates,
                                    double threshold, double mu = 1.0);

/// Mean gate over all modalities.
double fuse_effectiveness(std::span<const double> gates);

struct ModalityOptions {
    bool use_gmr = true;
    bool use_hmir = true;
    bool gating_enabled = true;  // false: every modality stays active
    double threshold = 0.5;
    double mu = 1.0;
    bool renormalize = false;    // project omega_star back onto the simplex
};

struct ModalityState {
    std::vector<double> losses;
    double loss_concat = 0.0;
    std::vector<double> gains;
    std::vector<double> omega;
    std::vector<double> omega_star;
    std::vector<double> lambda;
    std::vector<double> gates;
    std::vector<std::size_t> active;
    double d_gmr = 0.0;
    double d_hmir = 0.0;
    double d_fuse = 0.0;
};

/// Full modality-level assessment for one sample. With a measure disabled the
/// gate argument reduces to the remaining measure alone.
ModalityState assess_modalities(std::span<const double> losses, double loss_concat,
                                const ModalityOptions& options);

}  // namespace mmcl
