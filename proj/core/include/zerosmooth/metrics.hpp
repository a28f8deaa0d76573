// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <limits>

#include "zerosmooth/numerics.hpp"
#include "zerosmooth/operators.hpp"

namespace zerosmooth {

/// Videos here are pixel-space (T, C, H, W) tensors with values in [0, 1].

inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 10 log10(1 / MSE) over the whole video, dynamic range 1. Identical inputs
/// give +inf.
double psnr(const VideoLatent& a, const VideoLatent& b);

/// Single-scale SSIM with a 7x7 uniform window (valid positions only),
/// K1 = 0.01, K2 = 0.03, dynamic range 1. Averaged over channels per frame,
/// then over frames.
double ssim(const VideoLatent& a, const VideoLatent& b);

struct KeyframeScores {
  double psnr = 0.0;
  double ssim = 0.0;
};

/// Compares the key frames of `high_fps` (as selected by `sampling`) with
/// `base`.
KeyframeScores keyframe_consistency(const VideoLatent& high_fps, const VideoLatent& base,
                                    const LinearMeasurement& sampling);

}  // namespace zerosmooth
