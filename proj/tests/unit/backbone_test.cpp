// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#include "zerosmooth/backbone.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "test_util.hpp"
#include "zerosmooth/errors.hpp"

namespace zerosmooth {
namespace {

using testing::random_tensor;
using testing::tiny_backbone;

class IdentityHooks : public AttentionHooks {
 public:
  bool corrects(const HookSite&) const override { return true; }
};

class LoggingHooks : public AttentionHooks {
 public:
  std::vector<std::string> log;
  bool corrects(const HookSite& s) const override {
    const_cast<LoggingHooks*>(this)->log.push_back("corrects:" + std::to_string(s.module));
    return true;
  }
  void observe_input(const HookSite& s, const HiddenState&) override {
    log.push_back("observe:" + std::to_string(s.module));
  }
  void correct_input(const HookSite& s, HiddenState&) override { log.push_back("input:" + std::to_string(s.module)); }
  void correct_query(const HookSite& s, std::span<const double>, HiddenState&) override {
    log.push_back("query:" + std::to_string(s.module));
  }
  void correct_key_value(const HookSite& s, std::span<const double>, std::span<const double>, HiddenState&,
                         HiddenState&) override {
    log.push_back("kv:" + std::to_string(s.module));
  }
  double blend_weight(const HookSite& s) const override {
    const_cast<LoggingHooks*>(this)->log.push_back("blend:" + std::to_string(s.module));
    return 1.0;
  }
};

// Scrambles every correctable tensor but blends with weight zero.
class ZeroWeightHooks : public AttentionHooks {
 public:
  bool corrects(const HookSite&) const override { return true; }
  void correct_input(const HookSite&, HiddenState& h) override { scramble(h); }
  void correct_query(const HookSite&, std::span<const double>, HiddenState& q) override { scramble(q); }
  void correct_key_value(const HookSite&, std::span<const double>, std::span<const double>, HiddenState& k,
                         HiddenState& v) override {
    scramble(k);
    scramble(v);
  }
  double blend_weight(const HookSite&) const override { return 0.0; }

 private:
  static void scramble(HiddenState& h) {
    for (double& v : h.values()) v = 3.0 * v + 1.0;
  }
};

std::uint64_t quantized_hash(const Tensor& t) {
  std::uint64_t h = 1469598103934665603ull;
  for (double v : t.values()) {
    const auto q = static_cast<std::int64_t>(std::llround(v * 1e6));
    for (int b = 0; b < 8; ++b) {
      h ^= static_cast<std::uint64_t>(q >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  }
  return h;
}

TEST(BackboneConfig, Validation) {
  BackboneConfig c;
  EXPECT_NO_THROW(c.validate());
  c.heads = 5;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Backbone, ModuleRegistry) {
  const ToyBackbone m = ToyBackbone::initialize(BackboneConfig{}, 0);
  const auto mods = m.modules();
  ASSERT_EQ(mods.size(), 6u);
  EXPECT_EQ(mods[0].kind, ModuleKind::kSpatialResNet);
  EXPECT_EQ(mods[1].kind, ModuleKind::kSpatialSelfAttention);
  EXPECT_EQ(mods[2].kind, ModuleKind::kTemporalSelfAttention);
  EXPECT_EQ(mods[5].id, 5);
  EXPECT_EQ(m.hooked_module_count(), 4u);
}

TEST(Backbone, OutputShapeAtLongerFrameCounts) {
  const ToyBackbone m = ToyBackbone::initialize(tiny_backbone(4), 1);
  for (std::size_t t : {4u, 8u, 16u}) {
    const Tensor z = random_tensor({t, 1, 4, 4}, t);
    const Tensor eps = m.denoise(z, 500, 0, 8.0);
    EXPECT_EQ(eps.shape(), z.shape());
    EXPECT_TRUE(eps.all_finite());
  }
}

TEST(Backbone, ApeAndNoPositionalModesRunLong) {
  for (PositionalMode mode : {PositionalMode::kAbsolute, PositionalMode::kNone}) {
    BackboneConfig c = tiny_backbone(4);
    c.positional = mode;
    const ToyBackbone m = ToyBackbone::initialize(c, 2);
    const Tensor z = random_tensor({12, 1, 4, 4}, 3);
    EXPECT_EQ(m.denoise(z, 100, 1, 8.0).shape(), z.shape());
  }
}

TEST(Backbone, InputValidation) {
  const ToyBackbone m = ToyBackbone::initialize(tiny_backbone(4), 1);
  EXPECT_THROW(m.denoise(Tensor({4, 2, 4, 4}), 10, 0, 8.0), DimensionError);
  EXPECT_THROW(m.denoise(Tensor({4, 1, 5, 4}), 10, 0, 8.0), DimensionError);
  EXPECT_THROW(m.denoise(Tensor({3, 1, 4, 4}), 10, 0, 8.0), DimensionError);
  EXPECT_THROW(m.denoise(Tensor({4, 1, 4, 4}), 10, 3, 8.0), RangeError);
  EXPECT_NO_THROW(m.denoise(Tensor({4, 1, 4, 4}), 10, 2, 8.0));
}

TEST(Backbone, UntrainedGoldenHash) {
  const ToyBackbone m = ToyBackbone::initialize(BackboneConfig{}, 0);
  const Tensor z = random_tensor({8, 1, 16, 16}, 99);
  const Tensor eps = m.denoise(z, 500, 1, 8.0);
  EXPECT_EQ(eps, m.denoise(z, 500, 1, 8.0));
  EXPECT_EQ(quantized_hash(eps), 0xd31da58b4f80c913ull) << std::hex << quantized_hash(eps);
}

TEST(Backbone, FpsAndLabelChangeOutput) {
  const ToyBackbone m = ToyBackbone::initialize(tiny_backbone(4), 5);
  const Tensor z = random_tensor({4, 1, 4, 4}, 6);
  const Tensor base = m.denoise(z, 300, 0, 8.0);
  EXPECT_NE(base, m.denoise(z, 300, 0, 16.0));
  EXPECT_NE(base, m.denoise(z, 300, 1, 8.0));
  EXPECT_NE(base, m.denoise(z, 301, 0, 8.0));
}

TEST(Hooks, IdentityHooksAreBitwiseTransparent) {
  const ToyBackbone m = ToyBackbone::initialize(BackboneConfig{}, 3);
  IdentityHooks hooks;
  for (std::size_t t : {8u, 16u}) {
    const Tensor z = random_tensor({t, 1, 16, 16}, t);
    ForwardOptions opt;
    opt.hooks = &hooks;
    EXPECT_EQ(m.denoise(z, 700, 0, 8.0), m.denoise(z, 700, 0, 8.0, opt)) << "t=" << t;
  }
}

TEST(Hooks, ZeroBlendWeightDiscardsCorrections) {
  const ToyBackbone m = ToyBackbone::initialize(tiny_backbone(4), 3);
  ZeroWeightHooks hooks;
  ForwardOptions opt;
  opt.hooks = &hooks;
  const Tensor z = random_tensor({8, 1, 4, 4}, 1);
  EXPECT_EQ(m.denoise(z, 700, 0, 8.0), m.denoise(z, 700, 0, 8.0, opt));
}

TEST(Hooks, CallOrderPerModule) {
  BackboneConfig c = tiny_backbone(4);
  const ToyBackbone m = ToyBackbone::initialize(c, 3);
  LoggingHooks hooks;
  ForwardOptions opt;
  opt.hooks = &hooks;
  m.denoise(random_tensor({4, 1, 4, 4}, 1), 10, 0, 8.0, opt);
  const std::vector<std::string> want = {"observe:1", "corrects:1", "query:1", "kv:1", "blend:1",
                                         "observe:2", "corrects:2", "input:2", "blend:2"};
  EXPECT_EQ(hooks.log, want);
}

TEST(Cfg, GuidanceCombinesPasses) {
  const ToyBackbone m = ToyBackbone::initialize(tiny_backbone(4), 8);
  const Tensor z = random_tensor({4, 1, 4, 4}, 2);
  const BackboneDenoiser den(m);
  const StepInfo step{0, 400, 380, 50};
  Conditioning cond{1, 8.0, {}};
  EXPECT_EQ(den.predict_noise(z, step, cond), m.denoise(z, 400, 1, 8.0));
  cond.guidance = {1.0, 1.0, 1.0, 1.0};
  EXPECT_EQ(den.predict_noise(z, step, cond), m.denoise(z, 400, 1, 8.0));
  cond.guidance = {1.0, 2.0, 3.0, 4.0};
  const Tensor got = den.predict_noise(z, step, cond);
  const Tensor c = m.denoise(z, 400, 1, 8.0);
  const Tensor u = m.denoise(z, 400, m.config().null_label(), 8.0);
  for (std::size_t f = 0; f < 4; ++f) {
    for (std::size_t i = f * 16; i < (f + 1) * 16; ++i) {
      EXPECT_NEAR(got[i], u[i] + cond.guidance[f] * (c[i] - u[i]), 1e-14);
    }
  }
  cond.guidance = {2.0, 2.0};
  EXPECT_THROW(den.predict_noise(z, step, cond), DimensionError);
}

TEST(Checkpoint, SaveLoadRoundTrip) {
  const ToyBackbone m = ToyBackbone::initialize(tiny_backbone(4), 4);
  const auto path = std::filesystem::temp_directory_path() / "zerosmooth_backbone_test.zswt";
  m.save(path);
  const ToyBackbone back = ToyBackbone::load(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.config(), m.config());
  ASSERT_EQ(back.parameters().size(), m.parameters().size());
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    const Tensor& a = m.parameters().tensors()[i];
    const Tensor& b = back.parameters().tensors()[i];
    for (std::size_t j = 0; j < a.size(); ++j) EXPECT_EQ(b[j], static_cast<double>(static_cast<float>(a[j])));
  }
}

TEST(Checkpoint, RejectsGarbage) {
  const auto path = std::filesystem::temp_directory_path() / "zerosmooth_garbage.zswt";
  {
    std::ofstream out(path, std::ios::binary);
    out << "ZSWTnot really";
  }
  EXPECT_THROW(ToyBackbone::load(path), FormatError);
  std::filesystem::remove(path);
  EXPECT_THROW(ToyBackbone::load(path), IoError);
}

// Central differences on every scalar of a micro model.
void gradient_check(PositionalMode mode) {
  BackboneConfig c;
  c.frames = 2;
  c.height = 4;
  c.width = 4;
  c.dim = 8;
  c.heads = 2;
  c.blocks = 1;
  c.positional = mode;
  ToyBackbone m = ToyBackbone::initialize(c, 3);
  const Tensor z = random_tensor({2, 1, 4, 4}, 1);
  const Tensor e = random_tensor({2, 1, 4, 4}, 2);
  ParameterSet g = m.parameters().zeros_like();
  m.loss_and_gradient(z, e, 300, 1, 8.0, g);
  constexpr double kStep = 1e-5;
  double worst = 0.0;
  for (std::size_t k = 0; k < m.parameters().size(); ++k) {
    Tensor& p = m.parameters().tensors()[k];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double orig = p[j];
      p[j] = orig + kStep;
      const double up = m.loss(z, e, 300, 1, 8.0);
      p[j] = orig - kStep;
      const double down = m.loss(z, e, 300, 1, 8.0);
      p[j] = orig;
      const double fd = (up - down) / (2 * kStep);
      const double an = g.tensors()[k][j];
      const double rel = std::abs(fd - an) / std::max(1e-6, std::abs(fd) + std::abs(an));
      worst = std::max(worst, rel);
      EXPECT_LT(rel, 1e-4) << m.parameters().names()[k] << "[" << j << "] fd=" << fd << " an=" << an;
    }
  }
  ::testing::Test::RecordProperty("worst_relative_error", std::to_string(worst));
}

TEST(GradientCheck, RelativePositions) { gradient_check(PositionalMode::kRelative); }
TEST(GradientCheck, AbsolutePositions) { gradient_check(PositionalMode::kAbsolute); }

TEST(CrossAttention, IdentityHooksTransparent) {
  const auto w = CrossAttentionWeights::random(8, 2, 1);
  const Tensor h = random_tensor({6, 3, 8}, 2);
  const Tensor ctx = random_tensor({5, 8}, 3);
  IdentityHooks hooks;
  for (ModuleKind k : {ModuleKind::kSpatialCrossAttention, ModuleKind::kTemporalCrossAttention}) {
    EXPECT_EQ(cross_attention(k, h, ctx, w, nullptr, {}), cross_attention(k, h, ctx, w, &hooks, {}));
  }
}

TEST(CrossAttention, ConditionKeysAreNeverCorrected) {
  const auto w = CrossAttentionWeights::random(8, 2, 1);
  const Tensor h = random_tensor({4, 3, 8}, 2);
  const Tensor ctx = random_tensor({5, 8}, 3);
  LoggingHooks hooks;
  cross_attention(ModuleKind::kSpatialCrossAttention, h, ctx, w, &hooks, {StepInfo{}, 9, {}, 0});
  EXPECT_EQ(hooks.log, (std::vector<std::string>{"observe:9", "corrects:9", "query:9", "blend:9"}));
  hooks.log.clear();
  cross_attention(ModuleKind::kTemporalCrossAttention, h, ctx, w, &hooks, {StepInfo{}, 10, {}, 0});
  EXPECT_EQ(hooks.log, (std::vector<std::string>{"observe:10", "corrects:10", "input:10", "blend:10"}));
}

TEST(CrossAttention, RejectsSelfAttentionKind) {
  const auto w = CrossAttentionWeights::random(8, 2, 1);
  EXPECT_THROW(cross_attention(ModuleKind::kSpatialSelfAttention, Tensor({2, 2, 8}), Tensor({3, 8}), w, nullptr, {}),
               ConfigError);
  EXPECT_THROW(cross_attention(ModuleKind::kSpatialCrossAttention, Tensor({2, 2, 8}), Tensor({3, 4}), w, nullptr, {}),
               DimensionError);
}

}  // namespace
}  // namespace zerosmooth
