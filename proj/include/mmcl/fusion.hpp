// Copyright (c) 2026, The mmcl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mmcl/numerics.hpp"

namespace mmcl {

enum class FusionKind { gated, concat_head, summation, uniform_weighted };

FusionKind parse_fusion_kind(const std::string& name);
std::string to_string(FusionKind kind);

struct FusionStrategy {
    FusionKind kind = FusionKind::gated;
    // Read only by the gated strategy.
    double threshold = 0.5;
    double mu = 1.0;
    bool renormalize = false;
    // Read only by the concat strategy: hidden widths of the fusion head.
    std::vector<std::size_t> head_hidden;
};

using LogitList = std::span<const std::vector<double>>;

/// sum over active m of omega_star[m] * logits[m].
std::vector<double> fuse_gated(LogitList logits, std::span<const double> omega_star,
                               std::span<const std::size_t> active);

/// Concatenates the features and runs them through `head`.
ForwardResult fuse_concat(LogitList features, const MlpEncoder& head);

std::vector<double> fuse_summation(LogitList logits);

std::vector<double> fuse_uniform(LogitList logits);

}  // namespace mmcl
