// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#include "zerosmooth/cascade.hpp"

#include <algorithm>
#include <random>

#include "zerosmooth/errors.hpp"

namespace zerosmooth {

std::string_view to_string(KeyValueCorrection mode) {
  switch (mode) {
    case KeyValueCorrection::kInterp: return "a1a2";
    case KeyValueCorrection::kSampling: return "sample";
    case KeyValueCorrection::kOff: return "off";
  }
  return "?";
}

KeyValueCorrection parse_kv_correction(std::string_view name) {
  if (name == "a1a2") return KeyValueCorrection::kInterp;
  if (name == "sample") return KeyValueCorrection::kSampling;
  if (name == "off") return KeyValueCorrection::kOff;
  throw ConfigError("spatial_kv must be a1a2|sample|off, got '" + std::string(name) + "'");
}

std::string_view to_string(BlendMode mode) {
  return mode == BlendMode::kSchedule ? "schedule" : "none";
}

BlendMode parse_blend_mode(std::string_view name) {
  if (name == "schedule") return BlendMode::kSchedule;
  if (name == "none") return BlendMode::kNone;
  throw ConfigError("blend must be schedule|none, got '" + std::string(name) + "'");
}

std::string_view to_string(ColorTarget target) {
  return target == ColorTarget::kPrediction ? "x0" : "latent";
}

ColorTarget parse_color_target(std::string_view name) {
  if (name == "x0") return ColorTarget::kPrediction;
  if (name == "latent") return ColorTarget::kLatent;
  throw ConfigError("color_target must be x0|latent, got '" + std::string(name) + "'");
}

void CascadeConfig::validate() const {
  if (stages < 1) throw ConfigError("cascade needs at least one stage");
  if (scale < 2) throw ConfigError("cascade scale must be >= 2");
  if (steps < 1) throw ConfigError("cascade needs at least one sampling step");
  if (!(eta >= 0.0)) throw ConfigError("eta must be non-negative");
  if (!(correction_coefficient >= 0.0 && correction_coefficient <= 1.0)) {
    throw ConfigError("correction coefficient must lie in [0, 1]");
  }
  if (!(base_fps > 0.0)) throw ConfigError("base fps must be positive");
}

std::size_t CascadeConfig::frames_at(int stage, std::size_t key_frames) const {
  if (stage < 1 || stage > stages) throw RangeError("stage " + std::to_string(stage) + " out of range");
  std::size_t frames = key_frames;
  for (int s = 1; s < stage; ++s) frames *= scale;
  return frames;
}

VideoLatent correspond_noise(const VideoLatent& finest, int stage, std::size_t scale, int stages) {
  if (stage < 1 || stage > stages) {
    throw RangeError("correspond_noise: stage " + std::to_string(stage) + " outside [1, " +
                     std::to_string(stages) + "]");
  }
  std::size_t stride = 1;
  for (int s = stage; s < stages; ++s) stride *= scale;
  if (finest.rank() == 0 || finest.frames() % stride != 0) {
    throw RangeError("correspond_noise: finest frame count is not a multiple of n^(N-s)");
  }
  std::vector<std::size_t> indices(finest.frames() / stride);
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i * stride;
  return gather_frames(finest, indices);
}

SampleNoise correspond_noise(const SampleNoise& finest, int stage, std::size_t scale, int stages) {
  SampleNoise out;
  out.init = correspond_noise(finest.init, stage, scale, stages);
  out.steps.reserve(finest.steps.size());
  for (const Tensor& n : finest.steps) out.steps.push_back(correspond_noise(n, stage, scale, stages));
  return out;
}

SampleNoise draw_cascade_noise(const CascadeConfig& config, const BackboneConfig& model,
                               std::uint64_t seed) {
  const Shape shape = {config.frames_at(config.stages, model.frames), model.channels, model.height,
                       model.width};
  std::mt19937_64 rng(derive_seed(seed, {0x4e4f495345ull}));
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&] {
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = normal(rng);
    return t;
  };
  SampleNoise noise;
  noise.init = draw();
  for (int k = 0; k < config.steps; ++k) noise.steps.push_back(draw());
  return noise;
}

double scale_fps(double base_fps, double stage_scale) {
  if (!(base_fps > 0.0)) throw ConfigError("fps must be positive");
  return base_fps * stage_scale;
}

std::vector<double> interp_guidance(double g_start, double g_end, std::size_t frames) {
  if (frames < 2) throw RangeError("guidance interpolation needs at least 2 frames");
  std::vector<double> out(frames);
  const double last = static_cast<double>(frames - 1);
  for (std::size_t i = 0; i < frames; ++i) {
    const double u = static_cast<double>(i) / last;
    out[i] = g_start + u * (g_end - g_start);
  }
  out.back() = g_end;
  return out;
}

Conditioning stage_conditioning(const CascadeConfig& config, int stage, std::size_t frames) {
  Conditioning cond;
  cond.label = config.label;
  std::size_t factor = 1;
  for (int s = 1; s < stage; ++s) factor *= config.scale;
  cond.fps = scale_fps(config.base_fps, static_cast<double>(factor));
  if (config.guidance_start != 1.0 || config.guidance_end != 1.0) {
    cond.guidance = interp_guidance(config.guidance_start, config.guidance_end, frames);
  }
  return cond;
}

std::vector<std::size_t> assign_key_frames(const LinearMeasurement& sampling) {
  if (sampling.kind() != MeasurementKind::kSampling) {
    throw ConfigError("key-frame assignment needs the sampling operator");
  }
  const std::size_t n = sampling.scale();
  std::vector<std::size_t> out(sampling.frames());
  for (std::size_t j = 0; j < out.size(); ++j) {
    std::size_t i = j / n;
    if (2 * (j % n) > n) ++i;  // ties go to the earlier key frame
    out[j] = std::min(i, sampling.key_frames() - 1);
  }
  return out;
}

VideoLatent color_tone_correct(const VideoLatent& video, const VideoLatent& key_video,
                               const LinearMeasurement& sampling) {
  if (video.rank() != 4 || key_video.rank() != 4 || video.frames() != sampling.frames() ||
      key_video.frames() != sampling.key_frames() ||
      !std::equal(video.shape().begin() + 1, video.shape().end(), key_video.shape().begin() + 1)) {
    throw DimensionError("color_tone_correct: videos do not match the sampling operator");
  }
  constexpr double kStdFloor = 1e-6;
  const std::vector<std::size_t> assign = assign_key_frames(sampling);
  std::vector<ChannelStats> key_stats;
  key_stats.reserve(key_video.frames());
  for (std::size_t i = 0; i < key_video.frames(); ++i) key_stats.push_back(channel_stats(key_video, i));

  const std::size_t channels = video.dim(1);
  const std::size_t plane = video.dim(2) * video.dim(3);
  VideoLatent out = video;
  for (std::size_t f = 0; f < video.frames(); ++f) {
    const ChannelStats own = channel_stats(video, f);
    const ChannelStats& key = key_stats[assign[f]];
    for (std::size_t c = 0; c < channels; ++c) {
      const double gain = key.stddev[c] / std::max(own.stddev[c], kStdFloor);
      double* px = out.data() + (f * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) px[i] = (px[i] - own.mean[c]) * gain + key.mean[c];
    }
  }
  return out;
}

CascadeHooks::CascadeHooks(int stage, const CascadeConfig& config, const HiddenCache* previous,
                           HiddenCache* record, Operators operators, CorrectionSchedule schedule,
                           BranchSelector selector)
    : stage_(stage),
      config_(config),
      previous_(previous),
      record_(record),
      ops_(operators),
      schedule_(schedule),
      selector_(selector) {
  if (stage_ > 1 && (!previous_ || !ops_.sampling)) {
    throw ConfigError("correcting stages need the previous cache and the sampling operator");
  }
}

namespace {

bool is_temporal(ModuleKind kind) {
  return kind == ModuleKind::kTemporalSelfAttention || kind == ModuleKind::kTemporalCrossAttention;
}

}  // namespace

const HiddenState& CascadeHooks::fetch(const HookSite& site, HiddenRole role) const {
  return previous_->fetch({site.step.index, site.module, role, site.pass});
}

void CascadeHooks::record(const HookSite& site, HiddenRole role, const HiddenState& state) {
  if (record_) record_->record({site.step.index, site.module, role, site.pass}, state);
}

void CascadeHooks::observe_input(const HookSite& site, const HiddenState& input) {
  if (stage_ != 1 || !record_ || !is_hooked(site.kind)) return;
  record(site, is_temporal(site.kind) ? HiddenRole::kTemporalHidden : HiddenRole::kSpatialHidden,
         input);
}

bool CascadeHooks::corrects(const HookSite& site) const {
  if (stage_ < 2) return false;
  switch (site.kind) {
    case ModuleKind::kTemporalSelfAttention:
    case ModuleKind::kTemporalCrossAttention:
      return config_.temporal_correction;
    case ModuleKind::kSpatialSelfAttention:
      return config_.spatial_query_correction || config_.spatial_kv != KeyValueCorrection::kOff;
    case ModuleKind::kSpatialCrossAttention:
      return config_.spatial_query_correction;
    default:
      return false;
  }
}

void CascadeHooks::correct_input(const HookSite& site, HiddenState& h) {
  h = correct_temporal(h, fetch(site, HiddenRole::kTemporalHidden), *ops_.sampling);
  record(site, HiddenRole::kTemporalHidden, h);
}

void CascadeHooks::correct_query(const HookSite& site, std::span<const double> wq, HiddenState& q) {
  if (!config_.spatial_query_correction) return;
  if (stage_ == 2) {
    q = correct_spatial_q(q, fetch(site, HiddenRole::kSpatialHidden), wq, *ops_.sampling);
  } else {
    q = back_project(q, fetch(site, HiddenRole::kSpatialQuery), *ops_.sampling);
  }
  record(site, HiddenRole::kSpatialQuery, q);
}

void CascadeHooks::correct_key_value(const HookSite& site, std::span<const double> wk,
                                     std::span<const double> wv, HiddenState& k, HiddenState& v) {
  if (config_.spatial_kv == KeyValueCorrection::kOff) return;
  HiddenState key_k, key_v;
  if (stage_ == 2) {
    const HiddenState& hk = fetch(site, HiddenRole::kSpatialHidden);
    key_k = project_hidden(hk, wk);
    key_v = project_hidden(hk, wv);
  } else {
    key_k = fetch(site, HiddenRole::kSpatialKey);
    key_v = fetch(site, HiddenRole::kSpatialValue);
  }
  if (config_.spatial_kv == KeyValueCorrection::kSampling) {
    k = back_project(k, key_k, *ops_.sampling);
    v = back_project(v, key_v, *ops_.sampling);
  } else {
    if (!ops_.interp_left || !ops_.interp_right) {
      throw ConfigError("A1/A2 key/value correction needs the interpolation operators");
    }
    const double p = selector_.draw(stage_, site.step.index, site.module);
    k = correct_spatial_kv_projected(k, key_k, p, *ops_.interp_left, *ops_.interp_right);
    v = correct_spatial_kv_projected(v, key_v, p, *ops_.interp_left, *ops_.interp_right);
  }
  record(site, HiddenRole::kSpatialKey, k);
  record(site, HiddenRole::kSpatialValue, v);
}

double CascadeHooks::blend_weight(const HookSite& site) const {
  return config_.blend == BlendMode::kSchedule ? schedule_.weight(site.step.timestep) : 1.0;
}

namespace {

SamplerOptions sampler_options(const CascadeConfig& config) {
  return SamplerOptions{config.steps, config.eta, config.posterior_variance};
}

ForwardOptions forward_options(const CascadeConfig& config, AttentionHooks* hooks) {
  ForwardOptions opt;
  opt.windowing = config.windowing;
  opt.overlap = config.overlap;
  opt.hooks = hooks;
  return opt;
}

}  // namespace

std::vector<StageResult> run_cascade(const CascadeConfig& config, const ToyBackbone& model,
                                     const NoiseSchedule& schedule, std::uint64_t seed) {
  config.validate();
  const std::size_t t0 = model.config().frames;
  const SampleNoise finest = draw_cascade_noise(config, model.config(), seed);
  const CorrectionSchedule weights(config.correction_coefficient, schedule.T());
  const BranchSelector selector(derive_seed(seed, {0x53454cull}), config.selector);
  const SamplerOptions sampler = sampler_options(config);

  std::vector<StageResult> results;
  std::shared_ptr<HiddenCache> previous;
  std::vector<Tensor> previous_latents;
  for (int stage = 1; stage <= config.stages; ++stage) {
    const std::size_t frames = config.frames_at(stage, t0);
    const SampleNoise noise = correspond_noise(finest, stage, config.scale, config.stages);
    auto recorded = stage < config.stages ? std::make_shared<HiddenCache>() : nullptr;

    std::optional<LinearMeasurement> sampling, left, right;
    if (stage > 1) {
      const std::size_t key = frames / config.scale;
      sampling.emplace(build_sampling(key, config.scale));
      if (config.spatial_kv == KeyValueCorrection::kInterp) {
        left.emplace(build_interp(key, config.scale, MeasurementKind::kInterpLeft));
        right.emplace(build_interp(key, config.scale, MeasurementKind::kInterpRight));
      }
    }
    CascadeHooks hooks(stage, config, previous.get(), recorded.get(),
                       {sampling ? &*sampling : nullptr, left ? &*left : nullptr,
                        right ? &*right : nullptr},
                       weights, selector);
    const BackboneDenoiser denoiser(model, forward_options(config, &hooks));

    StageResult result;
    result.stage = stage;
    result.conditioning = stage_conditioning(config, stage, frames);
    std::vector<Tensor> latents;
    const bool color = stage > 1 && config.color_correction;
    const VideoLatent* key_video = stage > 1 ? &results.back().video : nullptr;

    SampleCallbacks callbacks;
    callbacks.on_x0 = [&](const StepInfo&, Tensor& x0) {
      if (color && config.color_target == ColorTarget::kPrediction) {
        x0 = color_tone_correct(x0, *key_video, *sampling);
      }
      if (config.keep_trace) result.x0_trace.push_back(x0);
    };
    callbacks.on_latent = [&](const StepInfo& step, Tensor& z) {
      if (color && config.color_target == ColorTarget::kLatent) {
        z = color_tone_correct(z, previous_latents.at(static_cast<std::size_t>(step.index)), *sampling);
      }
      if (config.color_correction && config.color_target == ColorTarget::kLatent) latents.push_back(z);
    };
    result.video = sample(denoiser, schedule, result.conditioning, noise, sampler, callbacks);
    if (config.keep_caches && recorded) result.cache = recorded;
    results.push_back(std::move(result));
    previous = std::move(recorded);
    previous_latents = std::move(latents);
  }
  return results;
}

VideoLatent generate_base(const CascadeConfig& config, const ToyBackbone& model,
                          const NoiseSchedule& schedule, std::uint64_t seed) {
  config.validate();
  const SampleNoise noise =
      correspond_noise(draw_cascade_noise(config, model.config(), seed), 1, config.scale, config.stages);
  const BackboneDenoiser denoiser(model, forward_options(config, nullptr));
  return sample(denoiser, schedule, stage_conditioning(config, 1, model.config().frames), noise,
                sampler_options(config));
}

VideoLatent direct_inference(const CascadeConfig& config, const ToyBackbone& model,
                             const NoiseSchedule& schedule, std::uint64_t seed) {
  config.validate();
  const std::size_t frames = config.frames_at(config.stages, model.config().frames);
  const SampleNoise noise = draw_cascade_noise(config, model.config(), seed);
  const BackboneDenoiser denoiser(model, forward_options(config, nullptr));
  return sample(denoiser, schedule, stage_conditioning(config, config.stages, frames), noise,
                sampler_options(config));
}

VideoLatent ddnm_latent_baseline(const CascadeConfig& config, const Denoiser& denoiser,
                                 const NoiseSchedule& schedule, const VideoLatent& base_video,
                                 const SampleNoise& noise) {
  config.validate();
  if (noise.init.rank() != 4 || base_video.rank() != 4 || noise.init.frames() % base_video.frames() != 0 ||
      noise.init.frames() == base_video.frames()) {
    throw DimensionError("ddnm baseline: target frames must be a multiple (>= 2) of the base video's");
  }
  const std::size_t frames = noise.init.frames();
  const LinearMeasurement sampling = build_sampling(base_video.frames(), frames / base_video.frames());
  SampleCallbacks callbacks;
  callbacks.on_x0 = [&](const StepInfo&, Tensor& x0) { x0 = back_project(x0, base_video, sampling); };
  return sample(denoiser, schedule, stage_conditioning(config, config.stages, frames), noise,
                sampler_options(config), callbacks);
}

VideoLatent ddnm_latent_baseline(const CascadeConfig& config, const ToyBackbone& model,
                                 const NoiseSchedule& schedule, const VideoLatent& base_video,
                                 std::uint64_t seed) {
  config.validate();
  const std::size_t t0 = model.config().frames;
  if (base_video.rank() != 4 || base_video.frames() != t0) {
    throw DimensionError("ddnm baseline: base video must have t0 = " + std::to_string(t0) + " frames");
  }
  if (config.stages < 2) throw ConfigError("ddnm baseline needs at least two stages");
  const BackboneDenoiser denoiser(model, forward_options(config, nullptr));
  return ddnm_latent_baseline(config, denoiser, schedule, base_video,
                              draw_cascade_noise(config, model.config(), seed));
}

}  // namespace zerosmooth
