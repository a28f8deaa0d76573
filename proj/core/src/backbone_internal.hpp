// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

// Shared pieces of the backbone forward and backward passes.

#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "attention_kernels.hpp"
#include "zerosmooth/backbone.hpp"

namespace zerosmooth::detail {

inline constexpr double kLayerNormEps = 1e-5;

struct LayerNormCache {
  RowMat xhat;
  Eigen::VectorXd rstd;
};

/// Row-wise layer norm of `x` into `y`.
void layer_norm(const CMap& x, std::span<const double> gain, std::span<const double> bias,
                RowMat& y, LayerNormCache* cache);

/// Accumulates dx, dgain and dbias.
void layer_norm_backward(const LayerNormCache& cache, std::span<const double> gain,
                         const RowMat& dy, RowMat& dx, std::span<double> dgain,
                         std::span<double> dbias);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double silu(double x) { return x * sigmoid(x); }
inline double silu_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

/// 3x3 zero-padded neighbourhoods: row (f, y, x) holds the 9 neighbour
/// vectors of length d in (dy, dx) raster order.
RowMat im2col3x3(const RowMat& a, std::size_t frames, std::size_t height, std::size_t width);
void col2im3x3_add(const RowMat& dcol, std::size_t frames, std::size_t height, std::size_t width,
                   RowMat& da);

struct ResNetTape {
  LayerNormCache ln;
  RowMat n, col1, c1, col2;
};

struct SpatialTape {
  LayerNormCache ln;
  RowMat n, q, k, v, att;
  std::vector<std::vector<RowMat>> probs;  // [frame][head]
};

struct TemporalTape {
  LayerNormCache ln;
  RowMat n;  // normalized input, APE included
  RowMat q, kh, vh, pk_proj, pv_proj, att;
  std::vector<std::vector<RowMat>> probs;  // [token][head]
};

struct Tape {
  std::size_t frames = 0;
  Tensor z;
  Eigen::VectorXd temb_in, temb_pre, temb;  // MLP input, pre-activation, output
  RowMat ape_table;                          // t0 x d sinusoid rows (APE models)
  std::vector<ResNetTape> resnet;
  std::vector<SpatialTape> spatial;
  std::vector<TemporalTape> temporal;
  LayerNormCache out_ln;
  RowMat out_n;
  int label = 0;
};

std::string block_name(std::size_t block, const char* leaf);

/// Shared forward pass; fills `tape` when non-null (t == t0, hooks ignored).
Tensor backbone_forward(const ToyBackbone& model, const Tensor& z_t, int timestep, int label,
                        double fps, const ForwardOptions& options, Tape* tape);

void backbone_backward(const ToyBackbone& model, const Tape& tape, const Tensor& d_eps,
                       ParameterSet& grads);

}  // namespace zerosmooth::detail
