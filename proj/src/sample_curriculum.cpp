// Copyright (c) 2026, The mmcl Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmcl/sample_curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mmcl/numerics.hpp"

namespace mmcl {

namespace {

void check_simplex(std::span<const double> p, const char* what) {
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw std::invalid_argument(std::string(what) + " has an entry outside [0, 1]");
        }
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw std::invalid_argument(std::string(what) + " does not sum to 1");
    }
}

}  // namespace

void PredictionSet::validate() const {
    if (per_modality.empty()) throw std::invalid_argument("prediction set has no modalities");
    if (fused.empty()) throw std::invalid_argument("fused prediction is empty");
    check_simplex(fused, "fused prediction");
    for (const auto& p : per_modality) {
        if (p.size() != fused.size()) {
            throw std::invalid_argument("modality prediction width differs from fused width");
        }
        check_simplex(p, "modality prediction");
    }
    if (label >= fused.size()) throw std::out_of_range("label out of range");
}

void MetricOrientation::validate() const {
    for (int s : {s_loss, s_consistency, s_stability}) {
        if (s != 1 && s != -1) throw std::invalid_argument("metric orientation must be +1 or -1");
    }
}

double entropy(std::span<const double> p) {
    double u = 0.0;
    for (double v : p) u -= v * floored_log(v);
    return u;
}

DeviationResult deviation_loss(std::span<const double> losses, double loss_concat,
                               const PredictionSet& predictions) {
    const std::size_t m = predictions.num_modalities();
    if (m == 0 || losses.empty()) throw std::invalid_argument("deviation loss needs at least one modality");
    if (losses.size() != m) {
        throw std::invalid_argument("got " + std::to_string(losses.size()) + " losses for " +
                                    std::to_string(m) + " modalities");
    }
    DeviationResult r;
    r.entropies.reserve(m);
    std::vector<double> neg_u;
    for (const auto& p : predictions.per_modality) {
        r.entropies.push_back(entropy(p));
        neg_u.push_back(-r.entropies.back());
    }
    r.delta = softmax(neg_u);
    r.d_loss = loss_concat;
    for (std::size_t i = 0; i < m; ++i) r.d_loss += r.delta[i] * losses[i];
    return r;
}

double consistency(const PredictionSet& predictions) {
    if (predictions.per_modality.empty()) return 0.0;
    double total = 0.0;
    for (const auto& p : predictions.per_modality) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < p.size(); ++k) {
            const double d = p[k] - predictions.fused[k];
            d2 += d * d;
        }
        total += d2;
    }
    return total / static_cast<double>(predictions.per_modality.size());
}

double stability(std::span<const double> fused, std::size_t y) {
    if (y >= fused.size()) {
        throw std::out_of_range("class index " + std::to_string(y) + " out of range for " +
                                std::to_string(fused.size()) + " classes");
    }
    double s = -floored_log(fused[y]);
    for (std::size_t k = 0; k < fused.size(); ++k) {
        if (k != y) s += floored_log(fused[k]);
    }
    return s;
}

MetricTriple standardize(const MetricTriple& raw, const MetricOrientation& orientation) {
    const MetricTriple s = orientation.as_triple();
    MetricTriple out{};
    for (std::size_t j = 0; j < 3; ++j) out[j] = sigmoid(s[j] * raw[j]);
    return out;
}

VolatilityState::VolatilityState(double gamma_) : gamma(gamma_) {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in [0, 1)");
}

VolatilityState update_volatility(VolatilityState state, const MetricTriple& standardized) {
    if (!(state.gamma >= 0.0 && state.gamma < 1.0)) throw std::invalid_argument("gamma must be in [0, 1)");
    if (state.prev_standardized) {
        for (std::size_t j = 0; j < 3; ++j) {
            const double innovation = std::abs(standardized[j] - (*state.prev_standardized)[j]);
            state.ema[j] = state.gamma * state.ema[j] + (1.0 - state.gamma) * innovation;
        }
    }
    state.prev_standardized = standardized;
    state.psi = metric_weights(state);
    return state;
}

MetricTriple metric_weights(const VolatilityState& state, const MetricMask& enabled) {
    MetricTriple psi{0.0, 0.0, 0.0};
    double total = 0.0;
    std::size_t n_enabled = 0;
    for (std::size_t j = 0; j < 3; ++j) {
        if (!enabled[j]) continue;
        ++n_enabled;
        total += state.ema[j];
    }
    if (n_enabled == 0) throw std::invalid_argument("at least one difficulty metric must be enabled");
    for (std::size_t j = 0; j < 3; ++j) {
        if (!enabled[j]) continue;
        psi[j] = total > 0.0 ? state.ema[j] / total : 1.0 / static_cast<double>(n_enabled);
    }
    return psi;
}

double composite_difficulty(const MetricTriple& standardized, const MetricTriple& psi) {
    double d = 0.0;
    for (std::size_t j = 0; j < 3; ++j) d += psi[j] * standardized[j];
    return d;
}

DifficultyRecord score_difficulty(std::span<const double> losses, double loss_concat,
                                  const PredictionSet& predictions,
                                  const MetricOrientation& orientation, const MetricTriple& psi) {
    DifficultyRecord rec;
    DeviationResult dev = deviation_loss(losses, loss_concat, predictions);
    rec.d_loss = dev.d_loss;
    rec.delta_weights = std::move(dev.delta);
    rec.entropies = std::move(dev.entropies);
    rec.d_consistency = consistency(predictions);
    rec.d_stability = stability(predictions.fused, predictions.label);
    rec.standardized = standardize({rec.d_loss, rec.d_consistency, rec.d_stability}, orientation);
    rec.d_task = composite_difficulty(rec.standardized, psi);
    return rec;
}

}  // namespace mmcl
