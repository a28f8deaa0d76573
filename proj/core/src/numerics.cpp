// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#include "zerosmooth/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include "zerosmooth/errors.hpp"

namespace zerosmooth {

namespace {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

}  // namespace

std::size_t shape_volume(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_volume(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (shape_volume(shape_) != data_.size()) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::checked(Shape shape, std::vector<double> data) {
  Tensor t(std::move(shape), std::move(data));
  if (!t.all_finite()) throw NonFiniteError("tensor contains NaN or Inf");
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw IndexError("axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(shape_.size()));
  }
  return shape_[axis];
}

std::size_t Tensor::frame_size() const {
  if (shape_.empty() || shape_[0] == 0) return 0;
  return data_.size() / shape_[0];
}

std::span<double> Tensor::frame(std::size_t index) {
  if (index >= frames()) throw IndexError("frame " + std::to_string(index) + " out of range");
  const std::size_t n = frame_size();
  return {data_.data() + index * n, n};
}

std::span<const double> Tensor::frame(std::size_t index) const {
  if (index >= frames()) throw IndexError("frame " + std::to_string(index) + " out of range");
  const std::size_t n = frame_size();
  return {data_.data() + index * n, n};
}

double& Tensor::at(std::size_t f, std::size_t c, std::size_t y, std::size_t x) {
  return data_[((f * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
}

double Tensor::at(std::size_t f, std::size_t c, std::size_t y, std::size_t x) const {
  return data_[((f * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool Tensor::operator==(const Tensor& other) const {
  return shape_ == other.shape_ && data_ == other.data_;
}

Tensor gather_frames(const Tensor& source, std::span<const std::size_t> indices) {
  Shape shape = source.shape();
  shape[0] = indices.size();
  Tensor out(shape);
  const std::size_t n = source.frame_size();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = source.frame(indices[i]);
    std::copy(src.begin(), src.end(), out.data() + i * n);
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(data.begin(), data.end()) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("matrix data length does not match " + std::to_string(rows_) + "x" +
                         std::to_string(cols_));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("ragged matrix initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::span<const double> Matrix::row(std::size_t r) const {
  return {data_.data() + r * cols_, cols_};
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("subtract: shape mismatch");
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(i, j) - b(i, j);
  return out;
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.rows() * a.cols(); ++i) m = std::max(m, std::abs(a.data()[i]));
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) { return max_abs(subtract(a, b)); }

Matrix pseudo_inverse(const Matrix& a) {
  const std::size_t r = a.rows();
  const std::size_t c = a.cols();
  if (r == 0 || c == 0) throw DimensionError("pseudo_inverse: empty matrix");

  // Solve (AAᵀ) X = A with partial pivoting; then A† = Xᵀ.
  Matrix gram = matmul(a, transpose(a));
  Matrix rhs = a;
  const double scale = std::max(max_abs(gram), 1.0);
  for (std::size_t col = 0; col < r; ++col) {
    std::size_t pivot = col;
    for (std::size_t i = col + 1; i < r; ++i)
      if (std::abs(gram(i, col)) > std::abs(gram(pivot, col))) pivot = i;
    if (std::abs(gram(pivot, col)) <= 1e-12 * scale) {
      throw RankError("pseudo_inverse: AAᵀ is singular (matrix is not full row rank)");
    }
    if (pivot != col) {
      for (std::size_t j = 0; j < r; ++j) std::swap(gram(col, j), gram(pivot, j));
      for (std::size_t j = 0; j < c; ++j) std::swap(rhs(col, j), rhs(pivot, j));
    }
    const double inv = 1.0 / gram(col, col);
    for (std::size_t i = 0; i < r; ++i) {
      if (i == col) continue;
      const double f = gram(i, col) * inv;
      if (f == 0.0) continue;
      for (std::size_t j = col; j < r; ++j) gram(i, j) -= f * gram(col, j);
      for (std::size_t j = 0; j < c; ++j) rhs(i, j) -= f * rhs(col, j);
    }
  }
  Matrix out(c, r);
  for (std::size_t i = 0; i < r; ++i) {
    const double inv = 1.0 / gram(i, i);
    for (std::size_t j = 0; j < c; ++j) out(j, i) = rhs(i, j) * inv;
  }
  return out;
}

void softmax_inplace(std::span<double> row) {
  if (row.empty()) return;
  const double peak = *std::max_element(row.begin(), row.end());
  double total = 0.0;
  for (double& v : row) {
    v = std::exp(v - peak);
    total += v;
  }
  const double inv = 1.0 / total;
  for (double& v : row) v *= inv;
}

Matrix softmax_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    softmax_inplace({out.data() + i * out.cols(), out.cols()});
  }
  return out;
}

ChannelStats channel_stats(const VideoLatent& video, std::size_t frame) {
  if (video.rank() != 4) throw DimensionError("channel_stats expects a rank-4 video latent");
  if (frame >= video.dim(0)) {
    throw IndexError("channel_stats: frame " + std::to_string(frame) + " out of range [0, " +
                     std::to_string(video.dim(0)) + ")");
  }
  const std::size_t channels = video.dim(1);
  const std::size_t plane = video.dim(2) * video.dim(3);
  ChannelStats stats{std::vector<double>(channels), std::vector<double>(channels)};
  const double* base = video.data() + frame * video.frame_size();
  for (std::size_t c = 0; c < channels; ++c) {
    // Welford update
    const double* p = base + c * plane;
    double mean = 0.0;
    double m2 = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double delta = p[i] - mean;
      mean += delta / static_cast<double>(i + 1);
      m2 += delta * (p[i] - mean);
    }
    stats.mean[c] = mean;
    stats.stddev[c] = std::sqrt(std::max(m2, 0.0) / static_cast<double>(plane));
  }
  return stats;
}

}  // namespace zerosmooth
