// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#include "zerosmooth/long_attention.hpp"

#include <algorithm>
#include <cmath>

#include "attention_kernels.hpp"
#include "zerosmooth/errors.hpp"

namespace zerosmooth {

std::string_view to_string(WindowingMode mode) {
  return mode == WindowingMode::kOverlap ? "overlap" : "clamped";
}

WindowingMode parse_windowing_mode(std::string_view name) {
  if (name == "overlap") return WindowingMode::kOverlap;
  if (name == "clamped") return WindowingMode::kClamped;
  throw ConfigError("windowing must be overlap|clamped, got '" + std::string(name) + "'");
}

WindowPlan plan_windows(std::size_t frames, std::size_t window, WindowingMode mode,
                        std::optional<std::size_t> overlap) {
  if (window < 2) throw RangeError("window length t0 must be >= 2");
  if (frames < window) {
    throw RangeError("plan_windows: t=" + std::to_string(frames) + " is shorter than t0=" +
                     std::to_string(window));
  }
  WindowPlan plan;
  plan.frames = frames;
  plan.window = window;
  plan.overlap = overlap.value_or(window / 2);
  if (plan.overlap >= window) throw ConfigError("window overlap must be smaller than t0");
  plan.stride = mode == WindowingMode::kOverlap ? window - plan.overlap : window;

  const std::size_t tail = frames - window;
  const std::size_t count = (tail + plan.stride - 1) / plan.stride;  // ceil
  for (std::size_t i = 0; i <= count; ++i) {
    const std::size_t start = std::min(i * plan.stride, tail);
    if (!plan.windows.empty() && plan.windows.back().start == start) continue;
    plan.windows.push_back({start, start + window});
  }
  return plan;
}

std::vector<std::vector<double>> fusion_weights(const WindowPlan& plan) {
  const double ramp = static_cast<double>(plan.overlap + 1);
  std::vector<std::vector<double>> raw(plan.windows.size());
  std::vector<double> total(plan.frames, 0.0);
  for (std::size_t w = 0; w < plan.windows.size(); ++w) {
    const Window& win = plan.windows[w];
    raw[w].resize(win.end - win.start);
    for (std::size_t f = win.start; f < win.end; ++f) {
      double weight = 1.0;
      const std::size_t from_start = f - win.start;
      const std::size_t to_end = win.end - 1 - f;
      if (from_start < plan.overlap) weight = std::min(weight, (from_start + 1) / ramp);
      if (to_end < plan.overlap) weight = std::min(weight, (to_end + 1) / ramp);
      raw[w][from_start] = weight;
      total[f] += weight;
    }
  }
  for (std::size_t f = 0; f < plan.frames; ++f) {
    if (total[f] == 0.0) throw PlanError("frame " + std::to_string(f) + " is not covered by any window");
  }
  for (std::size_t w = 0; w < plan.windows.size(); ++w) {
    for (std::size_t j = 0; j < raw[w].size(); ++j) raw[w][j] /= total[plan.windows[w].start + j];
  }
  return raw;
}

Tensor attention_fusion(std::span<const Tensor> window_outputs, const WindowPlan& plan) {
  if (window_outputs.size() != plan.windows.size()) {
    throw DimensionError("attention_fusion: expected one output per window");
  }
  if (window_outputs.empty()) throw PlanError("attention_fusion: plan has no windows");
  const auto weights = fusion_weights(plan);
  Shape shape = window_outputs.front().shape();
  const std::size_t frame_size = window_outputs.front().frame_size();
  shape[0] = plan.frames;
  Tensor out(shape);
  for (std::size_t w = 0; w < plan.windows.size(); ++w) {
    const Tensor& o = window_outputs[w];
    const Window& win = plan.windows[w];
    if (o.frames() != win.end - win.start || o.frame_size() != frame_size) {
      throw DimensionError("attention_fusion: window output does not span its window");
    }
    for (std::size_t j = 0; j < o.frames(); ++j) {
      const double wt = weights[w][j];
      const double* src = o.data() + j * frame_size;
      double* dst = out.data() + (win.start + j) * frame_size;
      for (std::size_t i = 0; i < frame_size; ++i) dst[i] += wt * src[i];
    }
  }
  return out;
}

std::vector<double> sinusoidal_embedding(double position, std::size_t dim) {
  if (dim % 2 != 0) throw ConfigError("sinusoidal embedding dimension must be even");
  std::vector<double> out(dim);
  for (std::size_t i = 0; i < dim / 2; ++i) {
    const double angle =
        position / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(dim));
    out[2 * i] = std::sin(angle);
    out[2 * i + 1] = std::cos(angle);
  }
  return out;
}

std::vector<double> interpolated_ape(std::size_t pos, std::size_t key_frames, std::size_t frames,
                                     std::size_t dim) {
  if (pos < 1 || pos > frames) {
    throw RangeError("APE position " + std::to_string(pos) + " outside [1, " +
                     std::to_string(frames) + "]");
  }
  if (key_frames == 0 || frames == 0) throw RangeError("APE needs positive frame counts");
  const double effective =
      static_cast<double>(pos) * static_cast<double>(key_frames) / static_cast<double>(frames);
  return sinusoidal_embedding(effective, dim);
}

namespace {

struct Projected {
  detail::RowMat q, hk, hv, pk, pv;
  std::size_t tokens = 0;  // l
  std::size_t dim = 0;     // d
};

Projected project(const HiddenState& h, const AttentionWeightsView& w, std::span<const double> pk,
                  std::span<const double> pv, std::size_t window) {
  if (h.rank() != 3) throw DimensionError("temporal attention expects a t x l x d hidden state");
  Projected p;
  p.tokens = h.dim(1);
  p.dim = h.dim(2);
  const auto d = static_cast<Eigen::Index>(p.dim);
  if (w.wq.size() != p.dim * p.dim || w.wk.size() != p.dim * p.dim || w.wv.size() != p.dim * p.dim) {
    throw DimensionError("temporal attention: projection weights must be d x d");
  }
  if (w.heads == 0 || p.dim % w.heads != 0) throw ConfigError("d must be divisible by heads");
  const auto n = static_cast<Eigen::Index>(h.frames() * p.tokens);
  const auto x = detail::cmap(h.data(), n, d, d);
  const auto wq = detail::cmap(w.wq.data(), d, d, d);
  const auto wk = detail::cmap(w.wk.data(), d, d, d);
  const auto wv = detail::cmap(w.wv.data(), d, d, d);
  p.q.noalias() = x * wq;
  p.hk.noalias() = x * wk;
  p.hv.noalias() = x * wv;
  const auto tw = static_cast<Eigen::Index>(window);
  p.pk = detail::RowMat::Zero(tw, d);
  p.pv = detail::RowMat::Zero(tw, d);
  if (!pk.empty()) {
    if (pk.size() != window * p.dim) throw DimensionError("p_k must be t0 x d");
    p.pk.noalias() = detail::cmap(pk.data(), tw, d, d) * wk;
  }
  if (!pv.empty()) {
    if (pv.size() != window * p.dim) throw DimensionError("p_v must be t0 x d");
    p.pv.noalias() = detail::cmap(pv.data(), tw, d, d) * wv;
  }
  return p;
}

// Attention over frames [start, start + len) for every token; writes a
// len x l x d tensor.
Tensor window_attention(const Projected& p, std::size_t start, std::size_t len, std::size_t heads) {
  const auto d = static_cast<Eigen::Index>(p.dim);
  const auto rows = static_cast<Eigen::Index>(len);
  const auto stride = static_cast<Eigen::Index>(p.tokens * p.dim);
  Tensor out({len, p.tokens, p.dim});
  detail::RowMat k(rows, d), v(rows, d);
  for (std::size_t token = 0; token < p.tokens; ++token) {
    const std::size_t row0 = start * p.tokens + token;
    const auto hk = detail::cmap(p.hk.data() + row0 * p.dim, rows, d, stride);
    const auto hv = detail::cmap(p.hv.data() + row0 * p.dim, rows, d, stride);
    k = hk + p.pk.topRows(rows);
    v = hv + p.pv.topRows(rows);
    detail::attention_forward(detail::cmap(p.q.data() + row0 * p.dim, rows, d, stride),
                              detail::cmap(k.data(), rows, d, d), detail::cmap(v.data(), rows, d, d),
                              static_cast<int>(heads),
                              detail::mmap(out.data() + token * p.dim, rows, d, stride));
  }
  return out;
}

}  // namespace

HiddenState windowed_attention_rpe(const HiddenState& h, const AttentionWeightsView& weights,
                                   std::span<const double> pk, std::span<const double> pv,
                                   const WindowPlan& plan) {
  if (h.rank() != 3 || h.frames() != plan.frames) {
    throw DimensionError("windowed attention: hidden state has " +
                         std::to_string(h.rank() ? h.frames() : 0) + " frames, plan expects " +
                         std::to_string(plan.frames));
  }
  const Projected p = project(h, weights, pk, pv, plan.window);
  std::vector<Tensor> outputs;
  outputs.reserve(plan.windows.size());
  for (const Window& win : plan.windows) {
    outputs.push_back(window_attention(p, win.start, win.end - win.start, weights.heads));
  }
  return attention_fusion(outputs, plan);
}

HiddenState plain_temporal_attention(const HiddenState& h, const AttentionWeightsView& weights,
                                     std::span<const double> pk, std::span<const double> pv) {
  if (h.rank() != 3) throw DimensionError("temporal attention expects a t x l x d hidden state");
  const Projected p = project(h, weights, pk, pv, h.frames());
  return window_attention(p, 0, h.frames(), weights.heads);
}

}  // namespace zerosmooth
