// Copyright (c) 2026, The mmcl Authors
// SPDX-License-Identifier: Apache-2.0

#include "mmcl/fusion.hpp"

#include <stdexcept>

namespace mmcl {

namespace {

std::size_t common_width(LogitList logits) {
    if (logits.empty()) throw std::invalid_argument("fusion needs at least one modality");
    const std::size_t k = logits.front().size();
    for (std::size_t m = 1; m < logits.size(); ++m) {
        if (logits[m].size() != k) {
            throw std::invalid_argument("modality " + std::to_string(m) + " emits " +
                                        std::to_string(logits[m].size()) + " logits, expected " +
                                        std::to_string(k));
        }
    }
    return k;
}

}  // namespace

FusionKind parse_fusion_kind(const std::string& name) {
    if (name == "gated") return FusionKind::gated;
    if (name == "concat_head" || name == "concat") return FusionKind::concat_head;
    if (name == "summation") return FusionKind::summation;
    if (name == "uniform_weighted" || name == "uniform") return FusionKind::uniform_weighted;
    throw std::invalid_argument("unknown fusion kind '" + name + "'");
}

std::string to_string(FusionKind kind) {
    switch (kind) {
        case FusionKind::gated: return "gated";
        case FusionKind::concat_head: return "concat_head";
        case FusionKind::summation: return "summation";
        case FusionKind::uniform_weighted: return "uniform_weighted";
    }
    return "gated";
}

std::vector<double> fuse_gated(LogitList logits, std::span<const double> omega_star,
                               std::span<const std::size_t> active) {
    const std::size_t k = common_width(logits);
    if (active.empty()) throw std::invalid_argument("gated fusion needs a nonempty active set");
    if (omega_star.size() != logits.size()) {
        throw std::invalid_argument("gated fusion needs one weight per modality");
    }
    std::vector<double> fused(k, 0.0);
    for (std::size_t m : active) {
        if (m >= logits.size()) throw std::out_of_range("active modality index out of range");
        for (std::size_t c = 0; c < k; ++c) fused[c] += omega_star[m] * logits[m][c];
    }
    return fused;
}

ForwardResult fuse_concat(LogitList features, const MlpEncoder& head) {
    if (features.empty()) throw std::invalid_argument("concat fusion needs at least one modality");
    std::vector<double> joined;
    for (const auto& f : features) joined.insert(joined.end(), f.begin(), f.end());
    if (joined.size() != head.input_dim()) {
        throw ShapeError(0, "concatenated features have width " + std::to_string(joined.size()) +
                                ", fusion head expects " + std::to_string(head.input_dim()));
    }
    return forward(head, joined);
}

std::vector<double> fuse_summation(LogitList logits) {
    const std::size_t k = common_width(logits);
    std::vector<double> fused(k, 0.0);
    for (const auto& z : logits) {
        for (std::size_t c = 0; c < k; ++c) fused[c] += z[c];
    }
    return fused;
}

std::vector<double> fuse_uniform(LogitList logits) {
    std::vector<double> fused = fuse_summation(logits);
    const double inv = 1.0 / static_cast<double>(logits.size());
    for (double& v : fused) v *= inv;
    return fused;
}

}  // namespace mmcl
