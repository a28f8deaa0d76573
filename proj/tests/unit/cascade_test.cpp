// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#include "zerosmooth/cascade.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "zerosmooth/errors.hpp"

namespace zerosmooth {
namespace {

using testing::random_tensor;
using testing::tiny_backbone;

CascadeConfig quick(int stages = 2, int steps = 3) {
  CascadeConfig c;
  c.stages = stages;
  c.steps = steps;
  return c;
}

const ToyBackbone& tiny_model() {
  static const ToyBackbone model = ToyBackbone::initialize(tiny_backbone(4), 17);
  return model;
}

const NoiseSchedule& schedule() {
  static const NoiseSchedule s = NoiseSchedule::linear_beta(1000);
  return s;
}

Tensor indexed_frames(std::size_t frames) {
  Tensor t({frames, 1, 1, 1});
  for (std::size_t f = 0; f < frames; ++f) t[f] = static_cast<double>(f);
  return t;
}

TEST(CorrespondNoise, PicksEveryStrideFrame) {
  const Tensor finest = indexed_frames(8);
  EXPECT_EQ(correspond_noise(finest, 1, 2, 3).to_vector(), (std::vector<double>{0, 4}));
  EXPECT_EQ(correspond_noise(finest, 2, 2, 3).to_vector(), (std::vector<double>{0, 2, 4, 6}));
  EXPECT_EQ(correspond_noise(finest, 3, 2, 3), finest);
  const Tensor nine = indexed_frames(9);
  EXPECT_EQ(correspond_noise(nine, 1, 3, 2).to_vector(), (std::vector<double>{0, 3, 6}));
}

TEST(CorrespondNoise, StagesNest) {
  const Tensor finest = random_tensor({16, 1, 2, 2}, 4);
  for (int s = 1; s < 3; ++s) {
    const Tensor coarse = correspond_noise(finest, s, 2, 3);
    const Tensor finer = correspond_noise(finest, s + 1, 2, 3);
    const LinearMeasurement a = build_sampling(coarse.frames(), 2);
    EXPECT_EQ(gather_frames(finer, a.key_frame_indices()), coarse);
  }
}

TEST(CorrespondNoise, Errors) {
  EXPECT_THROW(correspond_noise(indexed_frames(8), 0, 2, 3), RangeError);
  EXPECT_THROW(correspond_noise(indexed_frames(8), 4, 2, 3), RangeError);
  EXPECT_THROW(correspond_noise(indexed_frames(6), 1, 2, 3), RangeError);
}

TEST(Conditioning, FpsAndGuidance) {
  EXPECT_DOUBLE_EQ(scale_fps(8.0, 4.0), 32.0);
  EXPECT_THROW(scale_fps(0.0, 2.0), ConfigError);
  EXPECT_EQ(interp_guidance(1.0, 2.0, 5), (std::vector<double>{1.0, 1.25, 1.5, 1.75, 2.0}));
  EXPECT_EQ(interp_guidance(7.5, 3.0, 2), (std::vector<double>{7.5, 3.0}));
  EXPECT_THROW(interp_guidance(1.0, 2.0, 1), RangeError);

  CascadeConfig c = quick(3);
  EXPECT_DOUBLE_EQ(stage_conditioning(c, 1, 4).fps, 8.0);
  EXPECT_DOUBLE_EQ(stage_conditioning(c, 3, 16).fps, 32.0);
  EXPECT_TRUE(stage_conditioning(c, 2, 8).guidance.empty());
  c.guidance_end = 3.0;
  const Conditioning cond = stage_conditioning(c, 2, 8);
  ASSERT_EQ(cond.guidance.size(), 8u);
  EXPECT_EQ(cond.guidance.front(), 1.0);
  EXPECT_EQ(cond.guidance.back(), 3.0);
}

TEST(ColorTone, KeyFrameAssignment) {
  EXPECT_EQ(assign_key_frames(build_sampling(3, 2)), (std::vector<std::size_t>{0, 0, 1, 1, 2, 2}));
  EXPECT_EQ(assign_key_frames(build_sampling(2, 4)), (std::vector<std::size_t>{0, 0, 0, 1, 1, 1, 1, 1}));
  EXPECT_EQ(assign_key_frames(build_sampling(2, 3)), (std::vector<std::size_t>{0, 0, 1, 1, 1, 1}));
  EXPECT_THROW(assign_key_frames(build_interp(2, 2, MeasurementKind::kInterpLeft)), ConfigError);
}

TEST(ColorTone, MatchesAssignedKeyStatistics) {
  const LinearMeasurement a = build_sampling(3, 2);
  const VideoLatent video = random_tensor({6, 2, 5, 5}, 1);
  const VideoLatent keys = random_tensor({3, 2, 5, 5}, 2, 3.0);
  const VideoLatent out = color_tone_correct(video, keys, a);
  const auto assign = assign_key_frames(a);
  for (std::size_t f = 0; f < 6; ++f) {
    const ChannelStats got = channel_stats(out, f);
    const ChannelStats want = channel_stats(keys, assign[f]);
    for (std::size_t c = 0; c < 2; ++c) {
      EXPECT_NEAR(got.mean[c], want.mean[c], 1e-12);
      EXPECT_NEAR(got.stddev[c], want.stddev[c], 1e-12);
    }
  }
}

TEST(ColorTone, HandExample) {
  const LinearMeasurement a = build_sampling(2, 2);
  const VideoLatent video({4, 1, 1, 2}, std::vector<double>{0.0, 2.0, 5.0, 5.0, 1.0, 3.0, -1.0, 1.0});
  const VideoLatent key({2, 1, 1, 2}, std::vector<double>{10.0, 14.0, 0.0, 0.0});
  const VideoLatent out = color_tone_correct(video, key, a);
  EXPECT_EQ(out.to_vector(), (std::vector<double>{10.0, 14.0, 12.0, 12.0, 0.0, 0.0, 0.0, 0.0}));
}

TEST(ColorTone, Errors) {
  const LinearMeasurement a = build_sampling(2, 2);
  EXPECT_THROW(color_tone_correct(Tensor({3, 1, 2, 2}), Tensor({2, 1, 2, 2}), a), DimensionError);
  EXPECT_THROW(color_tone_correct(Tensor({4, 1, 2, 2}), Tensor({2, 2, 2, 2}), a), DimensionError);
}

TEST(CascadeConfig, Validation) {
  CascadeConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.frames_at(2, 8), 16u);
  EXPECT_THROW(c.frames_at(3, 8), RangeError);
  c.scale = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = CascadeConfig{};
  c.correction_coefficient = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(parse_kv_correction("a1a2"), KeyValueCorrection::kInterp);
  EXPECT_EQ(to_string(BlendMode::kNone), "none");
  EXPECT_EQ(parse_color_target("latent"), ColorTarget::kLatent);
  EXPECT_THROW(parse_blend_mode("sometimes"), ConfigError);
}

TEST(Cascade, ShapesAndDeterminism) {
  const auto a = run_cascade(quick(3), tiny_model(), schedule(), 9);
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a[0].video.frames(), 4u);
  EXPECT_EQ(a[1].video.frames(), 8u);
  EXPECT_EQ(a[2].video.frames(), 16u);
  EXPECT_DOUBLE_EQ(a[2].conditioning.fps, 32.0);
  for (const auto& r : a) EXPECT_TRUE(r.video.all_finite());
  const auto b = run_cascade(quick(3), tiny_model(), schedule(), 9);
  for (std::size_t s = 0; s < 3; ++s) EXPECT_EQ(a[s].video, b[s].video);
  EXPECT_NE(run_cascade(quick(2), tiny_model(), schedule(), 10)[0].video, a[0].video);
}

TEST(Cascade, SingleStageIsPlainSampling) {
  const CascadeConfig c = quick(1);
  const auto stages = run_cascade(c, tiny_model(), schedule(), 3);
  ASSERT_EQ(stages.size(), 1u);
  const BackboneDenoiser den(tiny_model());
  const VideoLatent want = sample(den, schedule(), stage_conditioning(c, 1, 4),
                                  draw_cascade_noise(c, tiny_model().config(), 3),
                                  SamplerOptions{c.steps, c.eta, c.posterior_variance});
  EXPECT_EQ(stages[0].video, want);
}

TEST(Cascade, GenerateBaseEqualsFirstStage) {
  for (int stages : {2, 3}) {
    const CascadeConfig c = quick(stages);
    EXPECT_EQ(generate_base(c, tiny_model(), schedule(), 21),
              run_cascade(c, tiny_model(), schedule(), 21)[0].video);
  }
}

TEST(Cascade, ZeroWeightWithoutColorEqualsDirectInference) {
  CascadeConfig c = quick(2, 4);
  c.correction_coefficient = 0.0;
  c.color_correction = false;
  EXPECT_EQ(run_cascade(c, tiny_model(), schedule(), 5).back().video,
            direct_inference(c, tiny_model(), schedule(), 5));
}

TEST(Cascade, CorrectionChangesTheResult) {
  const CascadeConfig c = quick(2, 4);
  EXPECT_NE(run_cascade(c, tiny_model(), schedule(), 5).back().video,
            direct_inference(c, tiny_model(), schedule(), 5));
}

TEST(Cascade, KeyStageCacheHoldsOneEntryPerStepAndModule) {
  CascadeConfig c = quick(2, 3);
  c.keep_caches = true;
  const auto stages = run_cascade(c, tiny_model(), schedule(), 1);
  ASSERT_TRUE(stages[0].cache);
  EXPECT_EQ(stages[0].cache->size(), 3u * tiny_model().hooked_module_count());
  EXPECT_FALSE(stages[1].cache);
  for (const auto& [key, state] : stages[0].cache->entries()) {
    EXPECT_EQ(key.pass, 0);
    EXPECT_EQ(state->frames(), 4u);
  }
}

TEST(Cascade, GuidanceRecordsBothPasses) {
  CascadeConfig c = quick(2, 2);
  c.keep_caches = true;
  c.guidance_start = 2.0;
  c.guidance_end = 4.0;
  const auto stages = run_cascade(c, tiny_model(), schedule(), 1);
  EXPECT_EQ(stages[0].cache->size(), 2u * 2u * tiny_model().hooked_module_count());
  EXPECT_TRUE(stages[1].video.all_finite());
}

TEST(Cascade, AllAblationVariantsRun) {
  for (KeyValueCorrection kv : {KeyValueCorrection::kInterp, KeyValueCorrection::kSampling,
                                KeyValueCorrection::kOff}) {
    for (BlendMode blend : {BlendMode::kSchedule, BlendMode::kNone}) {
      CascadeConfig c = quick(3, 2);
      c.spatial_kv = kv;
      c.blend = blend;
      c.color_target = ColorTarget::kLatent;
      EXPECT_TRUE(run_cascade(c, tiny_model(), schedule(), 2).back().video.all_finite());
    }
  }
}

TEST(Cascade, TraceKeepsEveryPrediction) {
  CascadeConfig c = quick(2, 3);
  c.keep_trace = true;
  const auto stages = run_cascade(c, tiny_model(), schedule(), 1);
  ASSERT_EQ(stages[1].x0_trace.size(), 3u);
  EXPECT_EQ(stages[1].x0_trace.back(), stages[1].video);
}

// Predicts the exact noise of a known clean clip, so every x̂0 is that clip.
class OracleDenoiser : public Denoiser {
 public:
  OracleDenoiser(const NoiseSchedule& s, Tensor clip) : schedule_(s), clip_(std::move(clip)) {}
  Tensor predict_noise(const Tensor& z, const StepInfo& step, const Conditioning&) const override {
    Tensor eps(z.shape());
    const double a = schedule_.alpha(step.timestep);
    const double s = schedule_.sigma(step.timestep);
    for (std::size_t i = 0; i < z.size(); ++i) eps[i] = (z[i] - a * clip_[i]) / s;
    return eps;
  }

 private:
  const NoiseSchedule& schedule_;
  Tensor clip_;
};

class ZeroDenoiser : public Denoiser {
 public:
  Tensor predict_noise(const Tensor& z, const StepInfo&, const Conditioning&) const override {
    return Tensor(z.shape());
  }
};

TEST(Ddnm, OracleDenoiserRecoversTheClip) {
  const Tensor clip = random_tensor({8, 1, 3, 3}, 1, 0.5);
  const LinearMeasurement a = build_sampling(4, 2);
  const OracleDenoiser den(schedule(), clip);
  CascadeConfig c = quick(2, 10);
  SampleNoise noise{random_tensor({8, 1, 3, 3}, 2), {}};
  for (int k = 0; k < c.steps; ++k) noise.steps.push_back(random_tensor({8, 1, 3, 3}, 10 + k));
  const VideoLatent out = ddnm_latent_baseline(c, den, schedule(), apply_measurement(clip, a), noise);
  EXPECT_LT(max_abs_diff(out, clip), 1e-9);
}

TEST(Ddnm, KeyFramesAreExact) {
  const Tensor base = random_tensor({4, 1, 3, 3}, 5);
  const LinearMeasurement a = build_sampling(4, 2);
  CascadeConfig c = quick(2, 5);
  SampleNoise noise{random_tensor({8, 1, 3, 3}, 2), {}};
  for (int k = 0; k < c.steps; ++k) noise.steps.push_back(random_tensor({8, 1, 3, 3}, 10 + k));
  const VideoLatent out = ddnm_latent_baseline(c, ZeroDenoiser{}, schedule(), base, noise);
  EXPECT_EQ(apply_measurement(out, a), base);
}

TEST(Ddnm, ToyModelEntryPoint) {
  const CascadeConfig c = quick(2, 3);
  const VideoLatent base = generate_base(c, tiny_model(), schedule(), 4);
  const VideoLatent out = ddnm_latent_baseline(c, tiny_model(), schedule(), base, 4);
  EXPECT_EQ(out.frames(), 8u);
  EXPECT_EQ(apply_measurement(out, build_sampling(4, 2)), base);
  EXPECT_THROW(ddnm_latent_baseline(c, tiny_model(), schedule(), Tensor({3, 1, 4, 4}), 4), DimensionError);
  EXPECT_THROW(ddnm_latent_baseline(quick(1), tiny_model(), schedule(), base, 4), ConfigError);
}

}  // namespace
}  // namespace zerosmooth
