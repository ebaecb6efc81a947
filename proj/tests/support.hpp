// Copyright (c) 2026, The mmcl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Oracles shared by the unit tests and the acceptance binary. Everything here
// is deliberately written without calling the code it checks.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "mmcl/numerics.hpp"

namespace mmcl::testing {

/// Cross-entropy of the encoder's softmax output, evaluated from scratch.
inline double reference_loss(const MlpEncoder& enc, const std::vector<double>& x, std::size_t y) {
    std::vector<double> a = x;
    for (std::size_t l = 0; l < enc.num_layers(); ++l) {
        const Tensor2& w = enc.weights[l];
        std::vector<double> z(enc.biases[l]);
        for (std::size_t r = 0; r < w.rows(); ++r) {
            for (std::size_t c = 0; c < w.cols(); ++c) z[c] += a[r] * w(r, c);
        }
        if (l + 1 < enc.num_layers()) {
            for (double& v : z) v = enc.activation == Activation::tanh ? std::tanh(v) : std::max(v, 0.0);
        }
        a = std::move(z);
    }
    const double mx = *std::max_element(a.begin(), a.end());
    double total = 0.0;
    for (double v : a) total += std::exp(v - mx);
    return -(a[y] - mx - std::log(total));
}

/// Random encoder with 1 to 3 layers and widths in [1, 32].
inline MlpEncoder random_encoder(std::mt19937_64& rng, Activation act) {
    std::uniform_int_distribution<std::size_t> n_layers(1, 3);
    std::uniform_int_distribution<std::size_t> width(1, 32);
    std::uniform_int_distribution<std::size_t> classes(2, 6);
    std::vector<std::size_t> dims{width(rng)};
    const std::size_t layers = n_layers(rng);
    for (std::size_t l = 0; l + 1 < layers; ++l) dims.push_back(width(rng));
    dims.push_back(classes(rng));
    MlpEncoder enc = MlpEncoder::glorot(dims, act, rng());
    std::normal_distribution<double> bias(0.0, 0.3);
    for (auto& b : enc.biases) {
        for (double& v : b) v = bias(rng);
    }
    return enc;
}

/// Largest relative difference between the analytic gradient of the
/// cross-entropy loss and a central finite difference with step h. Relative
/// errors use max(|analytic|, |numeric|, floor) as the denominator so that
/// parameters with vanishing gradient are compared absolutely.
inline double gradcheck_max_rel_error(const MlpEncoder& enc, const std::vector<double>& x, std::size_t y,
                                      double h = 1e-5, double floor = 1e-6) {
    const ForwardResult fr = forward(enc, x);
    std::vector<double> g = softmax(fr.logits);
    g[y] -= 1.0;
    const EncoderGradients grads = backward(enc, fr.cache, g);

    MlpEncoder probe = enc;
    double worst = 0.0;
    auto check = [&](double& param, double analytic) {
        const double saved = param;
        param = saved + h;
        const double up = reference_loss(probe, x, y);
        param = saved - h;
        const double down = reference_loss(probe, x, y);
        param = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
        worst = std::max(worst, std::abs(analytic - numeric) / denom);
    };
    for (std::size_t l = 0; l < probe.num_layers(); ++l) {
        auto w = probe.weights[l].data();
        auto gw = grads.weights[l].data();
        for (std::size_t i = 0; i < w.size(); ++i) check(w[i], gw[i]);
        for (std::size_t i = 0; i < probe.biases[l].size(); ++i) check(probe.biases[l][i], grads.biases[l][i]);
    }
    return worst;
}

/// Tie-aware Spearman rank correlation.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size();) {
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = mid;
            i = j + 1;
        }
        return r;
    };
    const auto ra = ranks(a);
    const auto rb = ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    return saa == 0.0 || sbb == 0.0 ? 0.0 : sab / std::sqrt(saa * sbb);
}

/// Minimizer of v * wl + eta * (1 - v)^2 over the grid {0, step, ..., 1}.
inline double grid_solve_v(double wl, double eta, double step = 1e-4) {
    const auto n = static_cast<std::size_t>(std::llround(1.0 / step));
    double best_v = 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i <= n; ++i) {
        const double v = static_cast<double>(i) * step;
        const double obj = v * wl + eta * (1.0 - v) * (1.0 - v);
        if (obj < best) {
            best = obj;
            best_v = v;
        }
    }
    return best_v;
}

}  // namespace mmcl::testing
