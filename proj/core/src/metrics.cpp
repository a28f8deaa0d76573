// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#include "zerosmooth/metrics.hpp"

#include <cmath>
#include <vector>

#include "zerosmooth/errors.hpp"

namespace zerosmooth {
namespace {

constexpr std::size_t kWindow = 7;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void require_pair(const VideoLatent& a, const VideoLatent& b, const char* what) {
  if (a.shape() != b.shape()) throw DimensionError(std::string(what) + ": shapes differ");
  if (a.rank() != 4) throw DimensionError(std::string(what) + ": expected (T, C, H, W) videos");
  if (a.empty()) throw DimensionError(std::string(what) + ": empty video");
}

// Mean SSIM over all valid 7x7 windows of one H x W plane.
double plane_ssim(const double* x, const double* y, std::size_t h, std::size_t w) {
  if (h < kWindow || w < kWindow) throw DimensionError("ssim: frames smaller than the 7x7 window");
  constexpr double n = kWindow * kWindow;
  double total = 0.0;
  for (std::size_t r = 0; r + kWindow <= h; ++r) {
    for (std::size_t c = 0; c + kWindow <= w; ++c) {
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      for (std::size_t i = 0; i < kWindow; ++i) {
        for (std::size_t j = 0; j < kWindow; ++j) {
          const double a = x[(r + i) * w + c + j];
          const double b = y[(r + i) * w + c + j];
          sx += a;
          sy += b;
          sxx += a * a;
          syy += b * b;
          sxy += a * b;
        }
      }
      const double mx = sx / n, my = sy / n;
      const double vx = sxx / n - mx * mx;
      const double vy = syy / n - my * my;
      const double cov = sxy / n - mx * my;
      total += ((2 * mx * my + kC1) * (2 * cov + kC2)) /
               ((mx * mx + my * my + kC1) * (vx + vy + kC2));
    }
  }
  return total / static_cast<double>((h - kWindow + 1) * (w - kWindow + 1));
}

}  // namespace

double psnr(const VideoLatent& a, const VideoLatent& b) {
  require_pair(a, b, "psnr");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  if (sum == 0.0) return kPsnrIdentical;
  return -10.0 * std::log10(sum / static_cast<double>(a.size()));
}

double ssim(const VideoLatent& a, const VideoLatent& b) {
  require_pair(a, b, "ssim");
  const std::size_t channels = a.dim(1), h = a.dim(2), w = a.dim(3);
  double total = 0.0;
  for (std::size_t f = 0; f < a.frames(); ++f) {
    double frame = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t offset = (f * channels + c) * h * w;
      frame += plane_ssim(a.data() + offset, b.data() + offset, h, w);
    }
    total += frame / static_cast<double>(channels);
  }
  return total / static_cast<double>(a.frames());
}

KeyframeScores keyframe_consistency(const VideoLatent& high_fps, const VideoLatent& base,
                                    const LinearMeasurement& sampling) {
  if (sampling.kind() != MeasurementKind::kSampling) {
    throw ConfigError("keyframe_consistency needs the sampling operator");
  }
  if (high_fps.rank() != 4 || high_fps.frames() != sampling.frames()) {
    throw DimensionError("keyframe_consistency: video does not match the sampling operator");
  }
  const std::vector<std::size_t> keys = sampling.key_frame_indices();
  const VideoLatent extracted = gather_frames(high_fps, keys);
  return {psnr(extracted, base), ssim(extracted, base)};
}

}  // namespace zerosmooth
