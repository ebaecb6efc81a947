// Copyright (c) 2026, The mmcl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic multimodal classification data. Each modality draws
// features around class prototypes; a modality's snr sets the ratio of
// prototype scale to noise scale, and a per-sample noise multiplier shared
// across modalities controls how hard a sample is. The multiplier divides the
// effective snr: the signal term shrinks while the noise scale stays fixed.
//
// Binary file layout (all integers u64, all reals IEEE-754 f64, little endian):
//
//   magic "MMCLDAT1" (8 bytes)
//   n_samples, n_classes, n_modalities, feature_dim[0..n_modalities)
//   n_samples records of: label, true_difficulty, features of modality 0, 1, ...

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace mmcl {

struct ModalitySpec {
    std::size_t feature_dim = 8;
    /// Prototype scale over noise scale. Infinity gives noiseless features.
    double snr = 1.0;
    /// Fraction of dimensions that carry class signal; the rest are pure noise.
    double informative_fraction = 1.0;
};

struct DatasetSpec {
    std::size_t n_samples = 1000;
    std::size_t n_classes = 4;
    std::vector<ModalitySpec> modalities;
    /// Per-sample noise multipliers are log-uniform on [1, 1 + spread].
    double sample_noise_spread = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticSample {
    std::vector<std::vector<double>> features;
    std::size_t label = 0;
    /// Generator-side difficulty in [0, 1]; never shown to the trainer.
    double true_difficulty = 0.0;
};

struct Dataset {
    std::size_t n_classes = 0;
    std::vector<std::size_t> feature_dims;
    std::vector<SyntheticSample> samples;

    std::size_t num_modalities() const { return feature_dims.size(); }
    void validate() const;
    bool operator==(const Dataset&) const;
};

inline bool operator==(const SyntheticSample& a, const SyntheticSample& b) {
    return a.features == b.features && a.label == b.label && a.true_difficulty == b.true_difficulty;
}

Dataset generate(const DatasetSpec& spec);

/// Separability proxy per modality: snr times the expected distance between
/// two class prototypes, sqrt(2 * informative dims).
std::vector<double> dominance_profile(const DatasetSpec& spec);

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Seeded shuffle, then the first round(train_fraction * n) indices train.
Split split_indices(std::size_t n, std::uint64_t seed, double train_fraction = 0.8);

void write_dataset(const Dataset& data, std::ostream& out);
Dataset read_dataset(std::istream& in);
void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);

/// SplitMix64 finalizer, used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace mmcl
