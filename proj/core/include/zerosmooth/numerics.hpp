// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <vector>

namespace zerosmooth {

using Shape = std::vector<std::size_t>;

std::size_t shape_volume(const Shape& shape);

/// Dense row-major tensor of doubles.
///
/// The same type carries video latents (frames x channels x height x width)
/// and transformer hidden states (frames x tokens x channels). Axis 0 is
/// always the frame axis; measurement operators act along it.
/// Cache-line aligned allocator. Vectorized kernels pick their loop split
/// from the buffer address, so a fixed alignment keeps results bitwise
/// reproducible.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::size_t kAlignment = 64;
  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{kAlignment}));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t{kAlignment}); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using AlignedBuffer = std::vector<double, AlignedAllocator<double>>;

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  /// Unchecked construction; only the element count is validated.
  Tensor(Shape shape, std::vector<double> data);

  /// Checked construction: additionally rejects NaN/Inf.
  static Tensor checked(Shape shape, std::vector<double> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const;
  bool empty() const noexcept { return data_.empty(); }

  /// Number of scalars in one slice along axis 0.
  std::size_t frame_size() const;
  std::size_t frames() const { return dim(0); }
  std::span<double> frame(std::size_t index);
  std::span<const double> frame(std::size_t index) const;

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::vector<double> to_vector() const { return {data_.begin(), data_.end()}; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Index helper for rank-4 video latents (frame, channel, y, x).
  double& at(std::size_t f, std::size_t c, std::size_t y, std::size_t x);
  double at(std::size_t f, std::size_t c, std::size_t y, std::size_t x) const;

  bool all_finite() const;

  /// Elementwise equality (IEEE ==), including the shape.
  bool operator==(const Tensor& other) const;

 private:
  Shape shape_;
  AlignedBuffer data_;
};

using VideoLatent = Tensor;
using HiddenState = Tensor;

/// Copies the listed frames (axis 0) into a new tensor.
Tensor gather_frames(const Tensor& source, std::span<const std::size_t> indices);

/// Largest absolute elementwise difference; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  const double* data() const noexcept { return data_.data(); }
  double* data() noexcept { return data_.data(); }
  std::span<const double> row(std::size_t r) const;

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  AlignedBuffer data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix subtract(const Matrix& a, const Matrix& b);
double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);

/// Moore-Penrose pseudo-inverse of a full-row-rank matrix, Aᵀ(AAᵀ)⁻¹.
/// Throws RankError when AAᵀ is numerically singular.
Matrix pseudo_inverse(const Matrix& a);

/// Row-wise softmax; each row is shifted by its maximum before exponentiation.
Matrix softmax_rows(const Matrix& m);
/// In-place softmax of one contiguous row.
void softmax_inplace(std::span<double> row);

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

/// Population mean/std per channel over the HxW plane of one frame of a
/// rank-4 video latent.
ChannelStats channel_stats(const VideoLatent& video, std::size_t frame);

}  // namespace zerosmooth
