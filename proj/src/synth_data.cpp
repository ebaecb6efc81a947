// Copyright (c) 2026, The mmcl Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmcl/synth_data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

namespace mmcl {

namespace {

constexpr char kMagic[8] = {'M', 'M', 'C', 'L', 'D', 'A', 'T', '1'};
constexpr std::uint64_t kPrototypeStream = 0x70726f746fULL;
constexpr std::uint64_t kLabelStream = 0x6c6162656cULL;

std::size_t informative_dims(const ModalitySpec& m) {
    return static_cast<std::size_t>(std::llround(m.informative_fraction * static_cast<double>(m.feature_dim)));
}

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("dataset file is truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

void DatasetSpec::validate() const {
    if (n_classes < 2) throw std::invalid_argument("n_classes must be at least 2");
    if (n_samples == 0) throw std::invalid_argument("n_samples must be positive");
    if (modalities.empty()) throw std::invalid_argument("at least one modality is required");
    for (std::size_t m = 0; m < modalities.size(); ++m) {
        const auto& mod = modalities[m];
        const std::string where = "modality " + std::to_string(m) + ": ";
        if (mod.feature_dim == 0) throw std::invalid_argument(where + "feature_dim must be at least 1");
        if (!(mod.snr >= 0.0)) throw std::invalid_argument(where + "snr must be nonnegative");
        if (!(mod.informative_fraction >= 0.0 && mod.informative_fraction <= 1.0)) {
            throw std::invalid_argument(where + "informative_fraction must be in [0, 1]");
        }
    }
    if (!(sample_noise_spread >= 0.0) || std::isinf(sample_noise_spread)) {
        throw std::invalid_argument("sample_noise_spread must be finite and nonnegative");
    }
}

void Dataset::validate() const {
    if (n_classes < 2) throw std::invalid_argument("dataset needs at least 2 classes");
    if (feature_dims.empty()) throw std::invalid_argument("dataset has no modalities");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (s.label >= n_classes) throw std::invalid_argument("sample " + std::to_string(i) + ": label out of range");
        if (s.features.size() != feature_dims.size()) {
            throw std::invalid_argument("sample " + std::to_string(i) + ": wrong modality count");
        }
        for (std::size_t m = 0; m < feature_dims.size(); ++m) {
            if (s.features[m].size() != feature_dims[m]) {
                throw std::invalid_argument("sample " + std::to_string(i) + ": modality " + std::to_string(m) +
                                            " has the wrong feature width");
            }
        }
    }
}

bool Dataset::operator==(const Dataset& o) const {
    return n_classes == o.n_classes && feature_dims == o.feature_dims && samples == o.samples;
}

Dataset generate(const DatasetSpec& spec) {
    spec.validate();
    const std::size_t n_mod = spec.modalities.size();
    Dataset data;
    data.n_classes = spec.n_classes;
    for (const auto& m : spec.modalities) data.feature_dims.push_back(m.feature_dim);

    // prototypes[m][k] is the class-k prototype of modality m.
    std::vector<std::vector<std::vector<double>>> prototypes(n_mod);
    std::mt19937_64 proto_rng(mix_seed(spec.seed, kPrototypeStream));
    std::normal_distribution<double> unit(0.0, 1.0);
    for (std::size_t m = 0; m < n_mod; ++m) {
        const std::size_t n_inf = informative_dims(spec.modalities[m]);
        prototypes[m].assign(spec.n_classes, std::vector<double>(spec.modalities[m].feature_dim, 0.0));
        for (std::size_t k = 0; k < spec.n_classes; ++k) {
            for (std::size_t d = 0; d < n_inf; ++d) prototypes[m][k][d] = unit(proto_rng);
        }
    }

    std::vector<std::size_t> labels(spec.n_samples);
    for (std::size_t i = 0; i < spec.n_samples; ++i) labels[i] = i % spec.n_classes;
    std::mt19937_64 label_rng(mix_seed(spec.seed, kLabelStream));
    std::shuffle(labels.begin(), labels.end(), label_rng);

    const double log_span = std::log1p(spec.sample_noise_spread);
    data.samples.resize(spec.n_samples);
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        std::mt19937_64 rng(mix_seed(spec.seed, i));
        std::uniform_real_distribution<double> uniform(0.0, 1.0);
        std::normal_distribution<double> noise(0.0, 1.0);
        SyntheticSample& s = data.samples[i];
        s.label = labels[i];
        const double u = uniform(rng);
        const double multiplier = std::exp(u * log_span);
        bool any_noise = false;
        s.features.resize(n_mod);
        for (std::size_t m = 0; m < n_mod; ++m) {
            const ModalitySpec& mod = spec.modalities[m];
            const auto& proto = prototypes[m][s.label];
            auto& x = s.features[m];
            x.resize(mod.feature_dim);
            if (std::isinf(mod.snr)) {
                x = proto;
                continue;
            }
            any_noise = true;
            // Per-sample snr is snr / multiplier; the noise scale stays fixed so
            // that hard samples do not stand out by feature norm.
            const double inv = 1.0 / ((1.0 + mod.snr) * multiplier);
            for (std::size_t d = 0; d < mod.feature_dim; ++d) {
                x[d] = (mod.snr * proto[d] + multiplier * noise(rng)) * inv;
            }
        }
        s.true_difficulty = any_noise && spec.sample_noise_spread > 0.0 ? u : 0.0;
    }
    return data;
}

std::vector<double> dominance_profile(const DatasetSpec& spec) {
    spec.validate();
    std::vector<double> profile;
    for (const auto& m : spec.modalities) {
        const double separation = std::sqrt(2.0 * static_cast<double>(informative_dims(m)));
        profile.push_back(m.snr == 0.0 || separation == 0.0 ? 0.0 : m.snr * separation);
    }
    return profile;
}

Split split_indices(std::size_t n, std::uint64_t seed, double train_fraction) {
    if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) {
        throw std::invalid_argument("train_fraction must be in [0, 1]");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix_seed(seed, 0x73706c6974ULL));
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    Split split;
    split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    return split;
}

void write_dataset(const Dataset& data, std::ostream& out) {
    data.validate();
    out.write(kMagic, sizeof(kMagic));
    put_u64(out, data.samples.size());
    put_u64(out, data.n_classes);
    put_u64(out, data.feature_dims.size());
    for (std::size_t d : data.feature_dims) put_u64(out, d);
    for (const auto& s : data.samples) {
        put_u64(out, s.label);
        put_f64(out, s.true_difficulty);
        for (const auto& x : s.features) {
            for (double v : x) put_f64(out, v);
        }
    }
    if (!out) throw std::runtime_error("failed writing dataset");
}

Dataset read_dataset(std::istream& in) {
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
        throw std::runtime_error("not a dataset file (bad magic)");
    }
    const std::uint64_t n = get_u64(in);
    Dataset data;
    data.n_classes = get_u64(in);
    const std::uint64_t n_mod = get_u64(in);
    if (n_mod == 0 || n_mod > 1024) throw std::runtime_error("dataset file has an implausible modality count");
    for (std::uint64_t m = 0; m < n_mod; ++m) data.feature_dims.push_back(get_u64(in));
    data.samples.resize(n);
    for (auto& s : data.samples) {
        s.label = get_u64(in);
        s.true_difficulty = get_f64(in);
        s.features.resize(n_mod);
        for (std::size_t m = 0; m < n_mod; ++m) {
            s.features[m].resize(data.feature_dims[m]);
            for (double& v : s.features[m]) v = get_f64(in);
        }
    }
    data.validate();
    return data;
}

void save_dataset(const Dataset& data, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    write_dataset(data, out);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return read_dataset(in);
}

}  // namespace mmcl
