// Copyright (c) 2026, The mmcl Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmcl/modality_curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "mmcl/numerics.hpp"

namespace mmcl {

namespace {

void require_positive(std::span<const double> values, const char* what) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(values[i] > 0.0)) {
            throw std::invalid_argument(std::string(what) + " " + std::to_string(i) +
                                        " must be positive, got " + std::to_string(values[i]));
        }
    }
}

// Gates are sigmoids of unbounded positive arguments; in double precision
// they round to exactly 1 beyond x ~ 37. Keep them strictly inside (0, 1).
double gate_value(double x) { return std::min(sigmoid(x), 1.0 - 0x1p-53); }

}  // namespace

double gmr(std::span<const double> losses, double loss_concat) {
    if (losses.empty()) throw std::invalid_argument("gmr needs at least one modality loss");
    require_positive(losses, "modality loss");
    if (!(loss_concat > 0.0)) throw std::invalid_argument("fused loss must be positive");
    double log_sum = 0.0;
    for (double l : losses) log_sum += std::log(loss_concat) - std::log(l);
    return std::exp(log_sum / static_cast<double>(losses.size()));
}

std::vector<double> gains(std::span<const double> losses, double loss_concat) {
    require_positive(losses, "modality loss");
    std::vector<double> g;
    g.reserve(losses.size());
    for (double l : losses) g.push_back(std::exp((l - loss_concat) / l));
    return g;
}

std::vector<double> omega_init(std::span<const double> losses) {
    std::vector<double> neg(losses.begin(), losses.end());
    for (double& v : neg) v = -v;
    return softmax(neg);
}

double hmir(std::span<const double> gains, std::span<const double> omega, double epsilon) {
    if (gains.size() != omega.size() || gains.empty()) {
        throw std::invalid_argument("hmir needs one weight per gain");
    }
    double denom = 0.0;
    for (std::size_t m = 0; m < gains.size(); ++m) denom += omega[m] * (1.0 + 1.0 / (gains[m] + epsilon));
    return static_cast<double>(gains.size()) / denom;
}

std::vector<double> balance_factors(std::span<const double> gains, double lambda0) {
    if (gains.empty()) return {};
    const double mean = std::accumulate(gains.begin(), gains.end(), 0.0) / static_cast<double>(gains.size());
    std::vector<double> lambda;
    lambda.reserve(gains.size());
    for (double g : gains) lambda.push_back(lambda0 + 0.5 * sigmoid(std::abs(g - mean)));
    return lambda;
}

std::vector<double> gates(double d_gmr, double d_hmir, std::span<const double> lambdas) {
    std::vector<double> g;
    g.reserve(lambdas.size());
    for (double l : lambdas) g.push_back(gate_value(l * d_gmr + (1.0 - l) * d_hmir));
    return g;
}

GateSelection activate_and_reweight(std::span<const double> omega, std::span<const double> gates,
                                    double threshold, double mu) {
    if (omega.size() != gates.size() || gates.empty()) {
        throw std::invalid_argument("activation needs one gate per modality weight");
    }
    GateSelection sel;
    for (std::size_t m = 0; m < gates.size(); ++m) {
        if (gates[m] >= threshold) sel.active.push_back(m);
    }
    if (sel.active.empty()) {
        sel.active.push_back(static_cast<std::size_t>(
            std::distance(gates.begin(), std::max_element(gates.begin(), gates.end()))));
    }
    sel.omega_star.assign(omega.size(), 0.0);
    for (std::size_t m : sel.active) {
        sel.omega_star[m] = mu == 1.0 ? omega[m] * (1.0 + gates[m]) : omega[m] * std::pow(1.0 + gates[m], mu);
    }
    return sel;
}

double fuse_effectiveness(std::span<const double> gates) {
    if (gates.empty()) throw std::invalid_argument("fusion effectiveness needs at least one gate");
    return std::accumulate(gates.begin(), gates.end(), 0.0) / static_cast<double>(gates.size());
}

ModalityState assess_modalities(std::span<const double> losses, double loss_concat,
                                const ModalityOptions& options) {
    if (!options.use_gmr && !options.use_hmir) {
        throw std::invalid_argument("at least one of gmr and hmir must be enabled");
    }
    ModalityState s;
    s.losses.assign(losses.begin(), losses.end());
    s.loss_concat = loss_concat;
    s.d_gmr = gmr(losses, loss_concat);
    s.gains = gains(losses, loss_concat);
    s.omega = omega_init(losses);
    s.d_hmir = hmir(s.gains, s.omega);
    s.lambda = balance_factors(s.gains);
    if (options.use_gmr && options.use_hmir) {
        s.gates = gates(s.d_gmr, s.d_hmir, s.lambda);
    } else {
        const double arg = options.use_gmr ? s.d_gmr : s.d_hmir;
        s.gates.assign(losses.size(), gate_value(arg));
    }
    const double threshold = options.gating_enabled ? options.threshold : -1.0;
    GateSelection sel = activate_and_reweight(s.omega, s.gates, threshold, options.mu);
    s.active = std::move(sel.active);
    s.omega_star = std::move(sel.omega_star);
    if (options.renormalize) {
        const double total = std::accumulate(s.omega_star.begin(), s.omega_star.end(), 0.0);
        for (double& w : s.omega_star) w /= total;
    }
    s.d_fuse = fuse_effectiveness(s.gates);
    return s;
}

}  // namespace mmcl
