// Copyright (c) 2026, The mmcl Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmcl/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace mmcl {

ShapeError::ShapeError(int layer, const std::string& what)
    : std::invalid_argument(layer >= 0 ? "layer " + std::to_string(layer) + ": " + what : what),
      layer_(layer) {}

Tensor2::Tensor2(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError(-1, "tensor data length " + std::to_string(data_.size()) +
                                 " does not match " + std::to_string(rows_) + "x" +
                                 std::to_string(cols_));
    }
}

Activation parse_activation(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    throw std::invalid_argument("unknown activation '" + name + "'");
}

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

std::size_t MlpEncoder::num_parameters() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        n += weights[i].data().size() + biases[i].size();
    }
    return n;
}

bool MlpEncoder::operator==(const MlpEncoder& other) const {
    return layer_dims == other.layer_dims && weights == other.weights && biases == other.biases &&
           activation == other.activation;
}

void MlpEncoder::validate() const {
    if (layer_dims.size() < 2) {
        throw ShapeError(-1, "encoder needs at least an input and an output width");
    }
    if (weights.size() != layer_dims.size() - 1 || biases.size() != weights.size()) {
        throw ShapeError(-1, "encoder has " + std::to_string(weights.size()) + " weight matrices for " +
                                 std::to_string(layer_dims.size()) + " layer widths");
    }
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (layer_dims[i] == 0) throw ShapeError(static_cast<int>(i), "zero width");
        if (weights[i].rows() != layer_dims[i] || weights[i].cols() != layer_dims[i + 1]) {
            throw ShapeError(static_cast<int>(i),
                             "weights are " + std::to_string(weights[i].rows()) + "x" +
                                 std::to_string(weights[i].cols()) + ", expected " +
                                 std::to_string(layer_dims[i]) + "x" + std::to_string(layer_dims[i + 1]));
        }
        if (biases[i].size() != layer_dims[i + 1]) {
            throw ShapeError(static_cast<int>(i), "bias length " + std::to_string(biases[i].size()) +
                                                      ", expected " + std::to_string(layer_dims[i + 1]));
        }
    }
    if (layer_dims.back() == 0) throw ShapeError(static_cast<int>(weights.size()) - 1, "zero output width");
}

MlpEncoder MlpEncoder::zeros(std::vector<std::size_t> dims, Activation act) {
    MlpEncoder enc;
    enc.layer_dims = std::move(dims);
    enc.activation = act;
    if (enc.layer_dims.size() < 2) {
        throw ShapeError(-1, "encoder needs at least an input and an output width");
    }
    for (std::size_t i = 0; i + 1 < enc.layer_dims.size(); ++i) {
        enc.weights.emplace_back(enc.layer_dims[i], enc.layer_dims[i + 1]);
        enc.biases.emplace_back(enc.layer_dims[i + 1], 0.0);
    }
    enc.validate();
    return enc;
}

MlpEncoder MlpEncoder::glorot(std::vector<std::size_t> dims, Activation act, std::uint64_t seed) {
    MlpEncoder enc = zeros(std::move(dims), act);
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < enc.weights.size(); ++i) {
        const double a = std::sqrt(6.0 / static_cast<double>(enc.layer_dims[i] + enc.layer_dims[i + 1]));
        std::uniform_real_distribution<double> dist(-a, a);
        for (double& w : enc.weights[i].data()) w = dist(rng);
    }
    return enc;
}

EncoderGradients EncoderGradients::zeros_like(const MlpEncoder& encoder) {
    EncoderGradients g;
    for (std::size_t i = 0; i < encoder.weights.size(); ++i) {
        g.weights.emplace_back(encoder.weights[i].rows(), encoder.weights[i].cols());
        g.biases.emplace_back(encoder.biases[i].size(), 0.0);
    }
    return g;
}

EncoderGradients& EncoderGradients::operator+=(const EncoderGradients& other) {
    if (other.weights.size() != weights.size()) {
        throw ShapeError(-1, "gradient layer counts differ");
    }
    for (std::size_t i = 0; i < weights.size(); ++i) {
        auto dst = weights[i].data();
        auto src = other.weights[i].data();
        if (dst.size() != src.size() || biases[i].size() != other.biases[i].size()) {
            throw ShapeError(static_cast<int>(i), "gradient shapes differ");
        }
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
        for (std::size_t k = 0; k < biases[i].size(); ++k) biases[i][k] += other.biases[i][k];
    }
    return *this;
}

void EncoderGradients::scale(double factor) {
    for (auto& w : weights) {
        for (double& v : w.data()) v *= factor;
    }
    for (auto& b : biases) {
        for (double& v : b) v *= factor;
    }
}

ForwardResult forward(const MlpEncoder& encoder, std::span<const double> x) {
    if (encoder.layer_dims.empty() || x.size() != encoder.input_dim()) {
        throw ShapeError(0, "input has width " + std::to_string(x.size()) + ", expected " +
                                std::to_string(encoder.layer_dims.empty() ? 0 : encoder.input_dim()));
    }
    ForwardResult out;
    auto& acts = out.cache.activations;
    acts.reserve(encoder.num_layers() + 1);
    acts.emplace_back(x.begin(), x.end());
    for (std::size_t l = 0; l < encoder.num_layers(); ++l) {
        const Tensor2& w = encoder.weights[l];
        const auto& in = acts.back();
        if (w.rows() != in.size()) {
            throw ShapeError(static_cast<int>(l), "input has width " + std::to_string(in.size()) +
                                                      ", weights expect " + std::to_string(w.rows()));
        }
        std::vector<double> z(encoder.biases[l]);
        for (std::size_t r = 0; r < w.rows(); ++r) {
            const double xr = in[r];
            if (xr == 0.0) continue;
            for (std::size_t c = 0; c < w.cols(); ++c) z[c] += xr * w(r, c);
        }
        if (l + 1 < encoder.num_layers()) {
            if (encoder.activation == Activation::relu) {
                for (double& v : z) v = v > 0.0 ? v : 0.0;
            } else {
                for (double& v : z) v = std::tanh(v);
            }
        }
        acts.push_back(std::move(z));
    }
    out.cache.layer_dims = encoder.layer_dims;
    out.cache.generation = encoder.generation;
    out.logits = acts.back();
    return out;
}

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> p(logits.begin(), logits.end());
    if (p.empty()) return p;
    const double mx = *std::max_element(p.begin(), p.end());
    double sum = 0.0;
    for (double& v : p) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : p) v /= sum;
    return p;
}

double floored_log(double p) { return std::log(std::clamp(p, kProbabilityFloor, 1.0)); }

double cross_entropy(std::span<const double> p, std::size_t y) {
    if (y >= p.size()) {
        throw std::out_of_range("class index " + std::to_string(y) + " out of range for " +
                                std::to_string(p.size()) + " classes");
    }
    return -floored_log(p[y]);
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

EncoderGradients backward(const MlpEncoder& encoder, const ForwardCache& cache,
                          std::span<const double> grad_logits, std::span<const double> grad_features,
                          std::vector<double>* grad_input) {
    if (cache.layer_dims != encoder.layer_dims ||
        cache.activations.size() != encoder.num_layers() + 1) {
        throw std::invalid_argument("forward cache does not belong to this encoder");
    }
    if (cache.generation != encoder.generation) {
        throw std::invalid_argument("stale forward cache: encoder was updated after the forward pass");
    }
    const std::size_t n_layers = encoder.num_layers();
    if (grad_logits.size() != encoder.output_dim()) {
        throw ShapeError(static_cast<int>(n_layers) - 1,
                         "logit gradient has width " + std::to_string(grad_logits.size()) + ", expected " +
                             std::to_string(encoder.output_dim()));
    }
    if (!grad_features.empty() && grad_features.size() != encoder.layer_dims[n_layers - 1]) {
        throw ShapeError(static_cast<int>(n_layers) - 1,
                         "feature gradient has width " + std::to_string(grad_features.size()) +
                             ", expected " + std::to_string(encoder.layer_dims[n_layers - 1]));
    }

    EncoderGradients g = EncoderGradients::zeros_like(encoder);
    // delta holds dLoss/d(pre-activation) of the current layer.
    std::vector<double> delta(grad_logits.begin(), grad_logits.end());
    for (std::size_t step = 0; step < n_layers; ++step) {
        const std::size_t l = n_layers - 1 - step;
        const auto& in = cache.activations[l];
        const Tensor2& w = encoder.weights[l];
        Tensor2& gw = g.weights[l];
        for (std::size_t r = 0; r < w.rows(); ++r) {
            const double xr = in[r];
            if (xr == 0.0) continue;
            for (std::size_t c = 0; c < w.cols(); ++c) gw(r, c) = xr * delta[c];
        }
        g.biases[l] = delta;

        if (l == 0 && grad_input == nullptr) break;
        std::vector<double> upstream(w.rows(), 0.0);
        for (std::size_t r = 0; r < w.rows(); ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < w.cols(); ++c) s += w(r, c) * delta[c];
            upstream[r] = s;
        }
        if (l == n_layers - 1 && !grad_features.empty()) {
            for (std::size_t r = 0; r < upstream.size(); ++r) upstream[r] += grad_features[r];
        }
        if (l == 0) {
            *grad_input = std::move(upstream);
            break;
        }
        // Convert the gradient at the post-activation of layer l-1 into a
        // gradient at its pre-activation.
        const auto& post = cache.activations[l];
        if (encoder.activation == Activation::relu) {
            for (std::size_t r = 0; r < upstream.size(); ++r) {
                if (post[r] <= 0.0) upstream[r] = 0.0;
            }
        } else {
            for (std::size_t r = 0; r < upstream.size(); ++r) upstream[r] *= 1.0 - post[r] * post[r];
        }
        delta = std::move(upstream);
    }
    return g;
}

void sgd_step(MlpEncoder& encoder, const EncoderGradients& gradients, double lr, double scale) {
    if (gradients.weights.size() != encoder.weights.size() ||
        gradients.biases.size() != encoder.biases.size()) {
        throw ShapeError(-1, "gradient has " + std::to_string(gradients.weights.size()) +
                                 " layers, encoder has " + std::to_string(encoder.weights.size()));
    }
    for (std::size_t l = 0; l < encoder.weights.size(); ++l) {
        auto w = encoder.weights[l].data();
        auto gw = gradients.weights[l].data();
        if (w.size() != gw.size() || gradients.weights[l].rows() != encoder.weights[l].rows() ||
            gradients.biases[l].size() != encoder.biases[l].size()) {
            throw ShapeError(static_cast<int>(l), "gradient shape does not match parameters");
        }
    }
    const double step = lr * scale;
    for (std::size_t l = 0; l < encoder.weights.size(); ++l) {
        auto w = encoder.weights[l].data();
        auto gw = gradients.weights[l].data();
        for (std::size_t k = 0; k < w.size(); ++k) w[k] -= step * gw[k];
        for (std::size_t k = 0; k < encoder.biases[l].size(); ++k) {
            encoder.biases[l][k] -= step * gradients.biases[l][k];
        }
    }
    ++encoder.generation;
}

}  // namespace mmcl
