// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#include "zerosmooth/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "zerosmooth/errors.hpp"

namespace zerosmooth {

std::string_view to_string(ShapeKind kind) {
  return kind == ShapeKind::kSquare ? "square" : "disc";
}

namespace {

// Position after travelling `u` along [0, span] with mirror reflection.
double reflect(double u, double span) {
  if (span <= 0.0) return 0.0;
  double m = std::fmod(u, 2.0 * span);
  if (m < 0.0) m += 2.0 * span;
  return m > span ? 2.0 * span - m : m;
}

double overlap_1d(double a0, double a1, double b0, double b1) {
  return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

}  // namespace

SyntheticClipSpec random_clip_spec(std::uint64_t seed, std::size_t channels, std::size_t height,
                                   std::size_t width, double speed_scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SyntheticClipSpec spec;
  spec.seed = seed;
  spec.channels = channels;
  spec.height = height;
  spec.width = width;
  spec.kind = unit(rng) < 0.5 ? ShapeKind::kSquare : ShapeKind::kDisc;
  const double extent = static_cast<double>(std::min(height, width));
  spec.size = std::round(extent * (0.25 + 0.15 * unit(rng)));
  spec.x = unit(rng) * (static_cast<double>(width) - spec.size);
  spec.y = unit(rng) * (static_cast<double>(height) - spec.size);
  const double angle = 2.0 * 3.14159265358979323846 * unit(rng);
  const double speed = (0.5 + 1.0 * unit(rng)) * speed_scale;
  spec.vx = speed * std::cos(angle);
  spec.vy = speed * std::sin(angle);
  spec.intensity = 0.6 + 0.4 * unit(rng);
  return spec;
}

VideoLatent generate_clip(const SyntheticClipSpec& spec, std::size_t frames) {
  if (frames < 2) throw RangeError("generate_clip needs at least 2 frames");
  if (spec.size <= 0.0 || spec.size > static_cast<double>(std::min(spec.width, spec.height))) {
    throw ConfigError("shape size must fit inside the frame");
  }
  VideoLatent clip({frames, spec.channels, spec.height, spec.width});
  const double span_x = static_cast<double>(spec.width) - spec.size;
  const double span_y = static_cast<double>(spec.height) - spec.size;
  constexpr int kSuper = 8;
  for (std::size_t f = 0; f < frames; ++f) {
    const double x0 = reflect(spec.x + spec.vx * static_cast<double>(f), span_x);
    const double y0 = reflect(spec.y + spec.vy * static_cast<double>(f), span_y);
    const double r = 0.5 * spec.size;
    const double cx = x0 + r;
    const double cy = y0 + r;
    for (std::size_t py = 0; py < spec.height; ++py) {
      for (std::size_t px = 0; px < spec.width; ++px) {
        double cover = 0.0;
        if (spec.kind == ShapeKind::kSquare) {
          cover = overlap_1d(px, px + 1.0, x0, x0 + spec.size) *
                  overlap_1d(py, py + 1.0, y0, y0 + spec.size);
        } else {
          int hits = 0;
          for (int sy = 0; sy < kSuper; ++sy) {
            for (int sx = 0; sx < kSuper; ++sx) {
              const double qx = px + (sx + 0.5) / kSuper - cx;
              const double qy = py + (sy + 0.5) / kSuper - cy;
              if (qx * qx + qy * qy <= r * r) ++hits;
            }
          }
          cover = static_cast<double>(hits) / (kSuper * kSuper);
        }
        for (std::size_t c = 0; c < spec.channels; ++c) {
          clip.at(f, c, py, px) = spec.intensity * cover;
        }
      }
    }
  }
  return clip;
}

VideoLatent to_model_space(const VideoLatent& pixels) {
  VideoLatent out(pixels.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 2.0 * pixels[i] - 1.0;
  return out;
}

VideoLatent to_pixel_space(const VideoLatent& model, bool clamp) {
  VideoLatent out(model.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = 0.5 * (model[i] + 1.0);
    out[i] = clamp ? std::clamp(v, 0.0, 1.0) : v;
  }
  return out;
}

}  // namespace zerosmooth
