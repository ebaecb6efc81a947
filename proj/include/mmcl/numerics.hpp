// Copyright (c) 2026, The mmcl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense feedforward encoders with exact manual backpropagation, softmax and
// cross-entropy. Everything is double precision.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmcl {

/// Lower bound applied to every probability before a logarithm is taken.
inline constexpr double kProbabilityFloor = 1e-12;

/// Shape error raised by encoder operations. `layer` is the offending layer
/// index, or -1 when the mismatch is not tied to a single layer.
class ShapeError : public std::invalid_argument {
public:
    ShapeError(int layer, const std::string& what);
    int layer() const noexcept { return layer_; }

private:
    int layer_;
};

/// Row-major dense matrix.
class Tensor2 {
public:
    Tensor2() = default;
    Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0);
    Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    bool operator==(const Tensor2&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

enum class Activation { relu, tanh };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

/// Feedforward network. weights[i] has shape dims[i] x dims[i+1]; the
/// activation is applied after every layer except the last, which emits
/// logits.
struct MlpEncoder {
    std::vector<std::size_t> layer_dims;
    std::vector<Tensor2> weights;
    std::vector<std::vector<double>> biases;
    Activation activation = Activation::relu;
    /// Bumped by every parameter update; caches record it to detect staleness.
    std::uint64_t generation = 0;

    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t output_dim() const { return layer_dims.back(); }
    std::size_t num_layers() const { return weights.size(); }
    std::size_t num_parameters() const;

    /// Throws ShapeError when the layer structure is inconsistent.
    void validate() const;

    /// Glorot-uniform weights in [-a, a], a = sqrt(6 / (fan_in + fan_out)),
    /// zero biases.
    static MlpEncoder glorot(std::vector<std::size_t> dims, Activation act, std::uint64_t seed);
    static MlpEncoder zeros(std::vector<std::size_t> dims, Activation act);

    /// Compares structure and parameters; the generation counter is ignored.
    bool operator==(const MlpEncoder& other) const;
};

/// Activation record of one forward pass.
struct ForwardCache {
    /// activations[0] is the input, activations[i + 1] the output of layer i
    /// (post-activation for hidden layers, raw logits for the last layer).
    std::vector<std::vector<double>> activations;
    std::vector<std::size_t> layer_dims;
    std::uint64_t generation = 0;

    std::span<const double> logits() const { return activations.back(); }
    /// Input to the final layer: the penultimate representation.
    std::span<const double> features() const { return activations[activations.size() - 2]; }
};

struct ForwardResult {
    std::vector<double> logits;
    ForwardCache cache;
};

struct EncoderGradients {
    std::vector<Tensor2> weights;
    std::vector<std::vector<double>> biases;

    static EncoderGradients zeros_like(const MlpEncoder& encoder);
    EncoderGradients& operator+=(const EncoderGradients& other);
    void scale(double factor);
};

ForwardResult forward(const MlpEncoder& encoder, std::span<const double> x);

/// Max-subtracted softmax.
std::vector<double> softmax(std::span<const double> logits);

/// -log p_y with p_y clamped to [kProbabilityFloor, 1].
double cross_entropy(std::span<const double> p, std::size_t y);

/// log(max(p, kProbabilityFloor)).
double floored_log(double p);

double sigmoid(double x);

/// Gradients of a scalar loss with respect to every parameter, given its
/// gradient with respect to the logits. `grad_features`, when non-empty, is
/// an additional gradient arriving at the penultimate representation (the
/// input of the final layer). When `grad_input` is non-null it receives the
/// gradient with respect to the network input.
EncoderGradients backward(const MlpEncoder& encoder, const ForwardCache& cache,
                          std::span<const double> grad_logits,
                          std::span<const double> grad_features = {},
                          std::vector<double>* grad_input = nullptr);

/// w <- w - lr * scale * g for every parameter.
void sgd_step(MlpEncoder& encoder, const EncoderGradients& gradients, double lr, double scale = 1.0);

}  // namespace mmcl
