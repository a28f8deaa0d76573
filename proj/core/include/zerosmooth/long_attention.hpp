// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "zerosmooth/numerics.hpp"

namespace zerosmooth {

/// How temporal attention windows are laid out when t > t0.
enum class WindowingMode {
  /// stride = t0 - floor(t0/2), tail window clamped to end at t.
  kOverlap,
  /// start_i = min(i * t0, t - t0): adjacent windows only overlap at the tail.
  kClamped,
};

std::string_view to_string(WindowingMode mode);
WindowingMode parse_windowing_mode(std::string_view name);

struct Window {
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive; end - start == t0
  bool operator==(const Window&) const = default;
};

struct WindowPlan {
  std::size_t frames = 0;      // t
  std::size_t window = 0;      // t0
  std::size_t overlap = 0;
  std::size_t stride = 0;
  std::vector<Window> windows;
};

/// Windows of length t0 covering [0, t). Duplicate clamped windows are dropped.
/// `overlap` overrides floor(t0/2) in kOverlap mode.
WindowPlan plan_windows(std::size_t frames, std::size_t window,
                        WindowingMode mode = WindowingMode::kOverlap,
                        std::optional<std::size_t> overlap = std::nullopt);

/// Normalized per-frame fusion weights: result[w][j] is the weight of window w
/// at its local frame j. Linear ramps of length `overlap` at both window edges,
/// interior weight 1, renormalized so every frame's weights sum to 1.
std::vector<std::vector<double>> fusion_weights(const WindowPlan& plan);

/// Frame-wise convex combination of per-window outputs (each window_len x ...).
Tensor attention_fusion(std::span<const Tensor> window_outputs, const WindowPlan& plan);

/// Standard sinusoidal embedding: [2i] = sin(p / 10000^{2i/d}), [2i+1] = cos(...).
std::vector<double> sinusoidal_embedding(double position, std::size_t dim);

/// Sinusoidal embedding at the interpolated index pos * t0 / t (pos in 1..t).
std::vector<double> interpolated_ape(std::size_t pos, std::size_t key_frames,
                                     std::size_t frames, std::size_t dim);

/// Projection weights of one temporal attention module. Tokens are row
/// vectors, so Q = X Wq with Wq stored d x d row-major.
struct AttentionWeightsView {
  std::span<const double> wq;
  std::span<const double> wk;
  std::span<const double> wv;
  std::size_t heads = 1;
};

/// Temporal attention over the frame axis of `h` (t x l x d), one sequence
/// per token, within each window of `plan`:
///   o_i = softmax(Q_i (h_i + p_k)ᵀ-projected / sqrt(d_h)) Wv(h_i + p_v)
/// with Q_i = h_i Wq, K_i = (h_i + p_k) Wk, V_i = (h_i + p_v) Wv. `pk`/`pv`
/// are t0 x d (empty for modules without relative position terms). Window
/// outputs are merged with attention_fusion.
HiddenState windowed_attention_rpe(const HiddenState& h, const AttentionWeightsView& weights,
                                   std::span<const double> pk, std::span<const double> pv,
                                   const WindowPlan& plan);

/// The same attention over the whole frame axis with no windowing (t == t0).
HiddenState plain_temporal_attention(const HiddenState& h, const AttentionWeightsView& weights,
                                     std::span<const double> pk, std::span<const double> pv);

}  // namespace zerosmooth
