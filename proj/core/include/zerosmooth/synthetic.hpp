// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "zerosmooth/numerics.hpp"

namespace zerosmooth {

enum class ShapeKind { kSquare = 0, kDisc = 1 };

std::string_view to_string(ShapeKind kind);

/// One synthetic training clip: a single shape moving at constant velocity,
/// reflecting off the frame borders.
struct SyntheticClipSpec {
  std::uint64_t seed = 0;
  ShapeKind kind = ShapeKind::kSquare;
  double x = 0.0;   // top-left corner of the shape's bounding box, pixels
  double y = 0.0;
  double vx = 0.0;  // pixels per frame
  double vy = 0.0;
  double size = 4.0;  // side length / diameter, pixels
  double intensity = 1.0;
  std::size_t channels = 1;
  std::size_t height = 16;
  std::size_t width = 16;
};

/// Draws a spec from `seed`. `speed_scale` multiplies the drawn velocity
/// (used to tie clip motion to the fps condition).
SyntheticClipSpec random_clip_spec(std::uint64_t seed, std::size_t channels, std::size_t height,
                                   std::size_t width, double speed_scale = 1.0);

/// Renders `frames` frames (T x C x H x W) with values in [0, 1]. Pixel values
/// are the exact area coverage of the shape (the disc is 8x8 supersampled).
VideoLatent generate_clip(const SyntheticClipSpec& spec, std::size_t frames);

/// Maps [0, 1] pixels to the model's [-1, 1] range and back.
VideoLatent to_model_space(const VideoLatent& pixels);
VideoLatent to_pixel_space(const VideoLatent& model, bool clamp = true);

}  // namespace zerosmooth
