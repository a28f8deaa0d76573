// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "zerosmooth/numerics.hpp"

namespace zerosmooth {

enum class MeasurementKind {
  kSampling,     // copies every scale-th frame
  kInterpLeft,   // A1: averages frames (2i, 2i+1)
  kInterpRight,  // A2: keeps frame 0, then averages frames (2i-1, 2i)
};

std::string_view to_string(MeasurementKind kind);
MeasurementKind parse_measurement_kind(std::string_view name);

/// A t0 x t temporal measurement operator with its cached pseudo-inverse and
/// null-space projector. Immutable after construction.
class LinearMeasurement {
 public:
  LinearMeasurement(MeasurementKind kind, std::size_t key_frames, std::size_t scale,
                    Matrix matrix);

  MeasurementKind kind() const noexcept { return kind_; }
  std::size_t key_frames() const noexcept { return key_frames_; }
  std::size_t frames() const noexcept { return frames_; }
  std::size_t scale() const noexcept { return scale_; }
  const Matrix& matrix() const noexcept { return matrix_; }
  const Matrix& pinv() const noexcept { return pinv_; }
  const Matrix& null_proj() const noexcept { return null_proj_; }

  /// Frame indices selected by a sampling operator (i * scale).
  std::vector<std::size_t> key_frame_indices() const;

 private:
  MeasurementKind kind_;
  std::size_t key_frames_;
  std::size_t frames_;
  std::size_t scale_;
  Matrix matrix_;
  Matrix pinv_;
  Matrix null_proj_;
};

LinearMeasurement build_sampling(std::size_t key_frames, std::size_t scale);

/// A1 (kInterpLeft) or A2 (kInterpRight); only the 2x case is defined.
LinearMeasurement build_interp(std::size_t key_frames, std::size_t scale, MeasurementKind variant);

LinearMeasurement build_measurement(MeasurementKind kind, std::size_t key_frames,
                                    std::size_t scale);

/// y = A x along axis 0 of `x` (x has t frames, y has t0 frames).
Tensor apply_measurement(const Tensor& x, const LinearMeasurement& m);

/// Range/null-space back-projection along axis 0:
///   result = (I - A†A) h + A† hk
/// applied independently to every (token, channel) column.
Tensor back_project(const Tensor& h, const Tensor& hk, const LinearMeasurement& m);

}  // namespace zerosmooth
