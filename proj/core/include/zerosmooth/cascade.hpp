// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "zerosmooth/backbone.hpp"
#include "zerosmooth/correction.hpp"
#include "zerosmooth/diffusion.hpp"
#include "zerosmooth/long_attention.hpp"
#include "zerosmooth/operators.hpp"

namespace zerosmooth {

/// How spatial keys/values are corrected.
enum class KeyValueCorrection {
  kInterp,    // A1 or A2, picked per (stage, step, module)
  kSampling,  // the sampling operator, like the query
  kOff,
};

/// How corrected and plain module outputs are combined.
enum class BlendMode {
  kSchedule,  // w_t = c sqrt(t / T)
  kNone,      // corrected output only (w = 1)
};

/// Where color-tone correction is applied after each step.
enum class ColorTarget {
  kPrediction,  // x̂_{0|t}, matched to the previous stage's final video
  kLatent,      // z_s, matched to the previous stage's z_s at the same step
};

std::string_view to_string(KeyValueCorrection mode);
KeyValueCorrection parse_kv_correction(std::string_view name);
std::string_view to_string(BlendMode mode);
BlendMode parse_blend_mode(std::string_view name);
std::string_view to_string(ColorTarget target);
ColorTarget parse_color_target(std::string_view name);

struct CascadeConfig {
  int stages = 2;
  std::size_t scale = 2;
  int steps = 50;
  double eta = 1.0;
  PosteriorVariance posterior_variance = PosteriorVariance::kPaper;
  double correction_coefficient = 0.8;
  SelectorMode selector = SelectorMode::kGaussian;
  WindowingMode windowing = WindowingMode::kOverlap;
  std::optional<std::size_t> overlap;
  bool color_correction = true;
  ColorTarget color_target = ColorTarget::kPrediction;
  double base_fps = 8.0;
  int label = 0;
  double guidance_start = 1.0;  // guidance scale of the first frame
  double guidance_end = 1.0;    // guidance scale of the last frame

  bool temporal_correction = true;
  bool spatial_query_correction = true;
  KeyValueCorrection spatial_kv = KeyValueCorrection::kInterp;
  BlendMode blend = BlendMode::kSchedule;

  bool keep_caches = false;  // retain each stage's recorded cache in its result
  bool keep_trace = false;   // retain x̂_{0|t} after every step

  void validate() const;
  /// n^{s-1} t0 for stage s (1-based).
  std::size_t frames_at(int stage, std::size_t key_frames) const;
};

struct StageResult {
  int stage = 1;
  VideoLatent video;
  Conditioning conditioning;
  std::shared_ptr<const HiddenCache> cache;  // what this stage recorded (keep_caches)
  std::vector<VideoLatent> x0_trace;
};

/// Stage-s noise from the finest stage's noise: frame i takes finest frame
/// i * n^{N-s}.
VideoLatent correspond_noise(const VideoLatent& finest, int stage, std::size_t scale, int stages);
SampleNoise correspond_noise(const SampleNoise& finest, int stage, std::size_t scale, int stages);

/// Every random input of a cascade, drawn at the finest frame count.
SampleNoise draw_cascade_noise(const CascadeConfig& config, const BackboneConfig& model,
                               std::uint64_t seed);

double scale_fps(double base_fps, double stage_scale);

/// `frames` guidance scales from g_start to g_end, linearly spaced.
std::vector<double> interp_guidance(double g_start, double g_end, std::size_t frames);

Conditioning stage_conditioning(const CascadeConfig& config, int stage, std::size_t frames);

/// Index of the key frame assigned to each frame: the nearest key position
/// i * scale, the earlier one on ties.
std::vector<std::size_t> assign_key_frames(const LinearMeasurement& sampling);

/// AdaIN: shifts every frame's per-channel mean/std to those of its assigned
/// key frame, out = (x - mu_x) / max(sigma_x, 1e-6) * sigma_k + mu_k.
VideoLatent color_tone_correct(const VideoLatent& video, const VideoLatent& key_video,
                               const LinearMeasurement& sampling);

/// Records hidden states in the key-frame stage and corrects attention
/// modules in later stages.
class CascadeHooks : public AttentionHooks {
 public:
  struct Operators {
    const LinearMeasurement* sampling = nullptr;
    const LinearMeasurement* interp_left = nullptr;
    const LinearMeasurement* interp_right = nullptr;
  };

  /// `previous` is the cache recorded by stage - 1 (null for stage 1);
  /// `record` receives this stage's states for stage + 1 (may be null).
  CascadeHooks(int stage, const CascadeConfig& config, const HiddenCache* previous,
               HiddenCache* record, Operators operators, CorrectionSchedule schedule,
               BranchSelector selector);

  void observe_input(const HookSite& site, const HiddenState& input) override;
  bool corrects(const HookSite& site) const override;
  void correct_input(const HookSite& site, HiddenState& h) override;
  void correct_query(const HookSite& site, std::span<const double> wq, HiddenState& q) override;
  void correct_key_value(const HookSite& site, std::span<const double> wk,
                         std::span<const double> wv, HiddenState& k, HiddenState& v) override;
  double blend_weight(const HookSite& site) const override;

 private:
  const HiddenState& fetch(const HookSite& site, HiddenRole role) const;
  void record(const HookSite& site, HiddenRole role, const HiddenState& state);

  int stage_;
  const CascadeConfig& config_;
  const HiddenCache* previous_;
  HiddenCache* record_;
  Operators ops_;
  CorrectionSchedule schedule_;
  BranchSelector selector_;
};

/// Stage 1 samples t0 frames while recording hidden states; every later
/// stage samples n times more frames with corrections fed from the previous
/// stage. Returns one result per stage.
std::vector<StageResult> run_cascade(const CascadeConfig& config, const ToyBackbone& model,
                                     const NoiseSchedule& schedule, std::uint64_t seed);

/// Stage 1 alone; bitwise equal to run_cascade(...)[0].video for the same
/// config and seed.
VideoLatent generate_base(const CascadeConfig& config, const ToyBackbone& model,
                          const NoiseSchedule& schedule, std::uint64_t seed);

/// Samples the final frame count with adapted temporal attention only.
VideoLatent direct_inference(const CascadeConfig& config, const ToyBackbone& model,
                             const NoiseSchedule& schedule, std::uint64_t seed);

/// Final-frame-count sampling that back-projects x̂_{0|t} onto `base_video`
/// (t0 frames) with the sampling operator after every step.
VideoLatent ddnm_latent_baseline(const CascadeConfig& config, const ToyBackbone& model,
                                 const NoiseSchedule& schedule, const VideoLatent& base_video,
                                 std::uint64_t seed);

/// Same, for any denoiser; the frame count comes from `noise.init`.
VideoLatent ddnm_latent_baseline(const CascadeConfig& config, const Denoiser& denoiser,
                                 const NoiseSchedule& schedule, const VideoLatent& base_video,
                                 const SampleNoise& noise);

}  // namespace zerosmooth
