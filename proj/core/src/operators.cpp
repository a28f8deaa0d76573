// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#include "zerosmooth/operators.hpp"

#include <algorithm>

#include "zerosmooth/errors.hpp"

namespace zerosmooth {

std::string_view to_string(MeasurementKind kind) {
  switch (kind) {
    case MeasurementKind::kSampling: return "sample";
    case MeasurementKind::kInterpLeft: return "a1";
    case MeasurementKind::kInterpRight: return "a2";
  }
  return "?";
}

MeasurementKind parse_measurement_kind(std::string_view name) {
  if (name == "sample" || name == "sampling") return MeasurementKind::kSampling;
  if (name == "a1") return MeasurementKind::kInterpLeft;
  if (name == "a2") return MeasurementKind::kInterpRight;
  throw ConfigError("unknown measurement kind '" + std::string(name) + "' (expected sample|a1|a2)");
}

LinearMeasurement::LinearMeasurement(MeasurementKind kind, std::size_t key_frames,
                                     std::size_t scale, Matrix matrix)
    : kind_(kind),
      key_frames_(key_frames),
      frames_(key_frames * scale),
      scale_(scale),
      matrix_(std::move(matrix)) {
  if (matrix_.rows() != key_frames_ || matrix_.cols() != frames_) {
    throw DimensionError("measurement matrix must be t0 x t");
  }
  pinv_ = pseudo_inverse(matrix_);
  null_proj_ = subtract(Matrix::identity(frames_), matmul(pinv_, matrix_));
}

std::vector<std::size_t> LinearMeasurement::key_frame_indices() const {
  std::vector<std::size_t> out(key_frames_);
  for (std::size_t i = 0; i < key_frames_; ++i) out[i] = i * scale_;
  return out;
}

LinearMeasurement build_sampling(std::size_t key_frames, std::size_t scale) {
  if (scale < 2) throw ConfigError("sampling operator needs scale >= 2, got " + std::to_string(scale));
  if (key_frames < 2) throw ConfigError("sampling operator needs t0 >= 2");
  Matrix a(key_frames, key_frames * scale);
  for (std::size_t i = 0; i < key_frames; ++i) a(i, i * scale) = 1.0;
  return LinearMeasurement(MeasurementKind::kSampling, key_frames, scale, std::move(a));
}

LinearMeasurement build_interp(std::size_t key_frames, std::size_t scale, MeasurementKind variant) {
  if (variant == MeasurementKind::kSampling) {
    throw UnsupportedVariantError("build_interp: sampling is not an interpolation variant");
  }
  if (scale != 2) {
    throw UnsupportedVariantError("interpolation operators are defined for scale 2 only, got " +
                                  std::to_string(scale));
  }
  if (key_frames < 2) throw ConfigError("interpolation operator needs t0 >= 2");
  Matrix a(key_frames, key_frames * 2);
  for (std::size_t i = 0; i < key_frames; ++i) {
    if (variant == MeasurementKind::kInterpLeft) {
      a(i, 2 * i) = 0.5;
      a(i, 2 * i + 1) = 0.5;
    } else if (i == 0) {
      a(0, 0) = 1.0;
    } else {
      a(i, 2 * i - 1) = 0.5;
      a(i, 2 * i) = 0.5;
    }
  }
  return LinearMeasurement(variant, key_frames, 2, std::move(a));
}

LinearMeasurement build_measurement(MeasurementKind kind, std::size_t key_frames,
                                    std::size_t scale) {
  return kind == MeasurementKind::kSampling ? build_sampling(key_frames, scale)
                                            : build_interp(key_frames, scale, kind);
}

namespace {

// out[f] = sum_g coeff(f, g) * src[g], skipping zero coefficients.
void accumulate_frames(const Matrix& coeff, const Tensor& src, Tensor& out) {
  const std::size_t n = src.frame_size();
  for (std::size_t f = 0; f < coeff.rows(); ++f) {
    double* dst = out.data() + f * n;
    for (std::size_t g = 0; g < coeff.cols(); ++g) {
      const double c = coeff(f, g);
      if (c == 0.0) continue;
      const double* s = src.data() + g * n;
      for (std::size_t j = 0; j < n; ++j) dst[j] += c * s[j];
    }
  }
}

}  // namespace

Tensor apply_measurement(const Tensor& x, const LinearMeasurement& m) {
  if (x.rank() == 0 || x.frames() != m.frames()) {
    throw DimensionError("apply_measurement: expected " + std::to_string(m.frames()) + " frames");
  }
  Shape shape = x.shape();
  shape[0] = m.key_frames();
  Tensor out(shape);
  accumulate_frames(m.matrix(), x, out);
  return out;
}

Tensor back_project(const Tensor& h, const Tensor& hk, const LinearMeasurement& m) {
  if (h.rank() == 0 || hk.rank() != h.rank()) throw DimensionError("back_project: rank mismatch");
  if (h.frames() != m.frames() || hk.frames() != m.key_frames()) {
    throw DimensionError("back_project: expected " + std::to_string(m.frames()) + " and " +
                         std::to_string(m.key_frames()) + " frames, got " +
                         std::to_string(h.frames()) + " and " + std::to_string(hk.frames()));
  }
  if (!std::equal(h.shape().begin() + 1, h.shape().end(), hk.shape().begin() + 1)) {
    throw DimensionError("back_project: per-frame shapes differ");
  }
  Tensor out(h.shape());
  accumulate_frames(m.null_proj(), h, out);
  accumulate_frames(m.pinv(), hk, out);
  return out;
}

}  // namespace zerosmooth
