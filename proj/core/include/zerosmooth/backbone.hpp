// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

// Desk-scale video diffusion denoiser.
//
// Pixels are patchified with patch size 1, so a T x C x H x W latent becomes a
// T x (H*W) x d hidden state. Each block runs a spatial ResNet block, a
// spatial self-attention module (per frame) and a temporal self-attention
// module (per token, across frames). Attention modules expose hook sites so a
// cascade can record and correct their hidden states.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zerosmooth/diffusion.hpp"
#include "zerosmooth/long_attention.hpp"
#include "zerosmooth/numerics.hpp"

namespace zerosmooth {

enum class PositionalMode {
  kRelative,  // learned p_k / p_v per window position
  kAbsolute,  // sinusoidal index embedding through a learned linear map
  kNone,
};

std::string_view to_string(PositionalMode mode);
PositionalMode parse_positional_mode(std::string_view name);

struct BackboneConfig {
  std::size_t frames = 8;  // t0, the training clip length
  std::size_t channels = 1;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t dim = 32;
  std::size_t heads = 4;
  std::size_t blocks = 2;
  PositionalMode positional = PositionalMode::kRelative;
  std::size_t classes = 2;  // label == classes is the unconditional label

  std::size_t tokens() const noexcept { return height * width; }
  int null_label() const noexcept { return static_cast<int>(classes); }
  void validate() const;
  bool operator==(const BackboneConfig&) const = default;
};

/// The six module categories of a video diffusion UNet.
enum class ModuleKind {
  kSpatialResNet,
  kTemporalResNet,
  kSpatialSelfAttention,
  kTemporalSelfAttention,
  kSpatialCrossAttention,
  kTemporalCrossAttention,
};

std::string_view to_string(ModuleKind kind);
bool is_hooked(ModuleKind kind);

struct ModuleInfo {
  int id = 0;
  int block = 0;
  ModuleKind kind = ModuleKind::kSpatialResNet;
};

/// Where a hook is being invoked from.
struct HookSite {
  StepInfo step;
  int module = 0;
  ModuleKind kind = ModuleKind::kSpatialSelfAttention;
  int pass = 0;  // 0 conditional, 1 unconditional guidance pass
};

/// Correction hooks called by attention modules. The default implementation
/// is transparent. When corrects() is true the module is evaluated twice, on
/// the original and on the corrected states, and the two outputs (residual
/// included) are blended with blend_weight().
class AttentionHooks {
 public:
  virtual ~AttentionHooks() = default;

  /// Module input before correction: the residual stream for temporal
  /// modules, the normalized tokens for spatial modules.
  virtual void observe_input(const HookSite& site, const HiddenState& input);
  virtual bool corrects(const HookSite& site) const;
  /// Temporal modules: corrects the residual-stream input in place. The
  /// corrected state feeds attention only; the skip path keeps the original.
  virtual void correct_input(const HookSite& site, HiddenState& h);
  /// Spatial modules: corrects the query projection. `wq` is d x d.
  virtual void correct_query(const HookSite& site, std::span<const double> wq, HiddenState& q);
  /// Spatial self-attention only; cross-attention keys/values come from the
  /// condition and are never corrected.
  virtual void correct_key_value(const HookSite& site, std::span<const double> wk,
                                 std::span<const double> wv, HiddenState& k, HiddenState& v);
  virtual double blend_weight(const HookSite& site) const;
};

/// Named parameter tensors in a fixed order.
class ParameterSet {
 public:
  void add(std::string name, Tensor value);
  Tensor& operator[](std::string_view name);
  const Tensor& operator[](std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const noexcept { return values_.size(); }
  std::size_t scalar_count() const;
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::vector<Tensor>& tensors() noexcept { return values_; }
  const std::vector<Tensor>& tensors() const noexcept { return values_; }

  ParameterSet zeros_like() const;
  bool operator==(const ParameterSet& other) const { return values_ == other.values_; }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

struct ForwardOptions {
  WindowingMode windowing = WindowingMode::kOverlap;
  std::optional<std::size_t> overlap;
  AttentionHooks* hooks = nullptr;
  StepInfo step;
  int pass = 0;
};

class ToyBackbone {
 public:
  static ToyBackbone initialize(const BackboneConfig& config, std::uint64_t seed);
  ToyBackbone(BackboneConfig config, ParameterSet parameters);

  const BackboneConfig& config() const noexcept { return config_; }
  const ParameterSet& parameters() const noexcept { return params_; }
  ParameterSet& parameters() noexcept { return params_; }

  /// Module registry in evaluation order; block b owns ids 3b (ResNet),
  /// 3b + 1 (spatial attention) and 3b + 2 (temporal attention).
  std::vector<ModuleInfo> modules() const;
  std::size_t hooked_module_count() const;

  /// Noise prediction for z_t (T x C x H x W, T >= t0).
  Tensor denoise(const Tensor& z_t, int timestep, int label, double fps,
                 const ForwardOptions& options = {}) const;

  /// Mean squared noise-prediction error at t0 frames; gradients are
  /// accumulated into `grads` (shaped like parameters()).
  double loss_and_gradient(const Tensor& z_t, const Tensor& eps, int timestep, int label,
                           double fps, ParameterSet& grads) const;
  double loss(const Tensor& z_t, const Tensor& eps, int timestep, int label, double fps) const;

  void save(const std::filesystem::path& path) const;
  static ToyBackbone load(const std::filesystem::path& path);

 private:
  BackboneConfig config_;
  ParameterSet params_;
};

/// Adapts a ToyBackbone to the sampler's Denoiser interface. Per-frame
/// guidance in the conditioning enables classifier-free guidance:
/// eps = eps_u + g_f (eps_c - eps_u) for frame f.
class BackboneDenoiser : public Denoiser {
 public:
  explicit BackboneDenoiser(const ToyBackbone& model, ForwardOptions options = {})
      : model_(model), options_(options) {}

  Tensor predict_noise(const Tensor& z_t, const StepInfo& step,
                       const Conditioning& cond) const override;

 private:
  const ToyBackbone& model_;
  ForwardOptions options_;
};

/// Weights of a standalone cross-attention module. Keys and values are
/// projected from a context (m x d) that is shared by all frames.
struct CrossAttentionWeights {
  std::vector<double> ln_gain, ln_bias;  // d
  std::vector<double> wq, wk, wv, wo;    // d x d
  std::vector<double> bo;                // d
  std::size_t heads = 1;

  static CrossAttentionWeights random(std::size_t dim, std::size_t heads, std::uint64_t seed);
};

/// Spatial cross-attention (tokens of each frame attend to the context) or
/// temporal cross-attention (the same, routed through the temporal input
/// correction). Returns h + attention output.
HiddenState cross_attention(ModuleKind kind, const HiddenState& h, const Tensor& context,
                            const CrossAttentionWeights& weights, AttentionHooks* hooks,
                            const HookSite& site);

}  // namespace zerosmooth
