// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#include "attention_kernels.hpp"

#include <cmath>

namespace zerosmooth::detail {

void attention_forward(const CMap& q, const CMap& k, const CMap& v, int heads, MMap out,
                       std::vector<RowMat>* probs) {
  const Eigen::Index d = q.cols();
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (probs) probs->resize(heads);
  RowMat scores;
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index c0 = h * dh;
    scores.noalias() = (q.middleCols(c0, dh) * k.middleCols(c0, dh).transpose()) * scale;
    // Row softmax, shifted by the row maximum.
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
      scores.row(r).array() -= scores.row(r).maxCoeff();
    }
    scores = scores.array().exp();
    for (Eigen::Index r = 0; r < scores.rows(); ++r) scores.row(r) /= scores.row(r).sum();
    out.middleCols(c0, dh).noalias() = scores * v.middleCols(c0, dh);
    if (probs) (*probs)[h] = scores;
  }
}

void attention_backward(const CMap& q, const CMap& k, const CMap& v,
                        const std::vector<RowMat>& probs, const CMap& dout, int heads, MMap dq,
                        MMap dk, MMap dv) {
  const Eigen::Index d = q.cols();
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  RowMat dp, ds;
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index c0 = h * dh;
    const RowMat& p = probs[h];
    dv.middleCols(c0, dh).noalias() += p.transpose() * dout.middleCols(c0, dh);
    dp.noalias() = dout.middleCols(c0, dh) * v.middleCols(c0, dh).transpose();
    // dS = P ∘ (dP − rowsum(dP ∘ P))
    const Eigen::VectorXd inner = (dp.array() * p.array()).rowwise().sum();
    ds = p.array() * (dp.array().colwise() - inner.array());
    ds *= scale;
    dq.middleCols(c0, dh).noalias() += ds * k.middleCols(c0, dh);
    dk.middleCols(c0, dh).noalias() += ds.transpose() * q.middleCols(c0, dh);
  }
}

}  // namespace zerosmooth::detail
