// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

// Internal multi-head attention kernels shared by the spatial and temporal
// transformer blocks. Token sequences are viewed through strided row maps so
// temporal sequences (one spatial location across frames) need no gather.

#pragma once

#include <Eigen/Core>
#include <vector>

namespace zerosmooth::detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using CMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using MMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;

inline CMap cmap(const double* p, Eigen::Index rows, Eigen::Index cols, Eigen::Index stride) {
  return CMap(p, rows, cols, Eigen::OuterStride<>(stride));
}
inline MMap mmap(double* p, Eigen::Index rows, Eigen::Index cols, Eigen::Index stride) {
  return MMap(p, rows, cols, Eigen::OuterStride<>(stride));
}

/// softmax(Q_h K_hᵀ / sqrt(d_h)) V_h for every head h, written to `out`.
/// When `probs` is non-null it receives one n_q x n_k matrix per head.
void attention_forward(const CMap& q, const CMap& k, const CMap& v, int heads, MMap out,
                       std::vector<RowMat>* probs = nullptr);

/// Backward pass of attention_forward. Gradients are accumulated (+=).
void attention_backward(const CMap& q, const CMap& k, const CMap& v,
                        const std::vector<RowMat>& probs, const CMap& dout, int heads, MMap dq,
                        MMap dk, MMap dv);

}  // namespace zerosmooth::detail
