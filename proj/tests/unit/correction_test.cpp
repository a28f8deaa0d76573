// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#include "zerosmooth/correction.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "test_util.hpp"
#include "zerosmooth/errors.hpp"

namespace zerosmooth {
namespace {

using testing::random_tensor;

// X W along the channel axis of a t x l x d state.
Tensor matmul_channels(const Tensor& x, const Tensor& w) {
  const std::size_t d = x.dim(2);
  Tensor out(x.shape());
  for (std::size_t r = 0; r < x.size() / d; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += x[r * d + j] * w[j * d + c];
      out[r * d + c] = acc;
    }
  }
  return out;
}

TEST(CorrectTemporal, ConsistentObservationUnchanged) {
  const LinearMeasurement a = build_sampling(4, 2);
  const Tensor h = random_tensor({8, 3, 4}, 1);
  EXPECT_EQ(correct_temporal(h, apply_measurement(h, a), a), h);
}

TEST(CorrectTemporal, TwoKeyFrames) {
  const LinearMeasurement a = build_sampling(2, 2);
  const Tensor h = random_tensor({4, 2, 3}, 2);
  const Tensor hk = random_tensor({2, 2, 3}, 3);
  const Tensor out = correct_temporal(h, hk, a);
  for (std::size_t j = 0; j < 6; ++j) {
    EXPECT_EQ(out.frame(0)[j], hk.frame(0)[j]);
    EXPECT_EQ(out.frame(1)[j], h.frame(1)[j]);
    EXPECT_EQ(out.frame(2)[j], hk.frame(1)[j]);
    EXPECT_EQ(out.frame(3)[j], h.frame(3)[j]);
  }
}

TEST(CorrectTemporal, PropertyRun) {
  const LinearMeasurement a = build_sampling(8, 2);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Tensor hk = random_tensor({8, 4, 4}, seed + 500);
    const Tensor out = correct_temporal(random_tensor({16, 4, 4}, seed), hk, a);
    EXPECT_LT(max_abs_diff(apply_measurement(out, a), hk), 1e-10);
    EXPECT_EQ(gather_frames(out, a.key_frame_indices()), hk);
  }
}

TEST(CorrectTemporal, RequiresSamplingOperator) {
  const LinearMeasurement a1 = build_interp(2, 2, MeasurementKind::kInterpLeft);
  EXPECT_THROW(correct_temporal(Tensor({4, 1, 1}), Tensor({2, 1, 1}), a1), ConfigError);
}

TEST(CorrectSpatialQ, IdentityWeightAndConsistentRows) {
  const LinearMeasurement a = build_sampling(2, 2);
  Tensor eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
  const Tensor hk = random_tensor({2, 2, 3}, 1);
  Tensor q = random_tensor({4, 2, 3}, 2);
  for (std::size_t j = 0; j < 6; ++j) {
    q.frame(0)[j] = hk.frame(0)[j];
    q.frame(2)[j] = hk.frame(1)[j];
  }
  EXPECT_EQ(correct_spatial_q(q, hk, eye.values(), a), q);
}

TEST(CorrectSpatialQ, ZeroWeightZeroesKeyRows) {
  const LinearMeasurement a = build_sampling(2, 2);
  const Tensor q = random_tensor({4, 2, 3}, 2);
  const Tensor out = correct_spatial_q(q, random_tensor({2, 2, 3}, 1), Tensor({3, 3}).values(), a);
  for (std::size_t j = 0; j < 6; ++j) {
    EXPECT_EQ(out.frame(0)[j], 0.0);
    EXPECT_EQ(out.frame(1)[j], q.frame(1)[j]);
    EXPECT_EQ(out.frame(2)[j], 0.0);
    EXPECT_EQ(out.frame(3)[j], q.frame(3)[j]);
  }
}

TEST(CorrectSpatialQ, MatchesFormulaOracle) {
  const LinearMeasurement a = build_sampling(3, 2);
  const Tensor q = random_tensor({6, 5, 4}, 1);
  const Tensor hk = random_tensor({3, 5, 4}, 2);
  const Tensor w = random_tensor({4, 4}, 3);
  const Tensor want = back_project(q, matmul_channels(hk, w), a);
  EXPECT_LT(max_abs_diff(correct_spatial_q(q, hk, w.values(), a), want), 1e-12);
}

TEST(CorrectSpatialQ, DimensionMismatch) {
  const LinearMeasurement a = build_sampling(2, 2);
  EXPECT_THROW(correct_spatial_q(Tensor({4, 2, 3}), Tensor({2, 2, 4}), Tensor({3, 3}).values(), a),
               DimensionError);
}

class KeyValueTest : public ::testing::Test {
 protected:
  LinearMeasurement a1 = build_interp(4, 2, MeasurementKind::kInterpLeft);
  LinearMeasurement a2 = build_interp(4, 2, MeasurementKind::kInterpRight);
  Tensor x = random_tensor({8, 3, 4}, 11);
  Tensor hk = random_tensor({4, 3, 4}, 12);
  Tensor w = random_tensor({4, 4}, 13);
};

TEST_F(KeyValueTest, IndicatorPicksBranch) {
  const Tensor projected = matmul_channels(hk, w);
  EXPECT_EQ(correct_spatial_kv(x, hk, w.values(), 1.0, a1, a2), back_project(x, projected, a1));
  EXPECT_EQ(correct_spatial_kv(x, hk, w.values(), 0.0, a1, a2), back_project(x, projected, a2));
  EXPECT_EQ(correct_spatial_kv(x, hk, w.values(), 0.5, a1, a2), back_project(x, projected, a2));
}

TEST_F(KeyValueTest, ConsistentObservationOnSelectedBranch) {
  Tensor eye({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
  EXPECT_LT(max_abs_diff(correct_spatial_kv(x, apply_measurement(x, a1), eye.values(), 2.0, a1, a2), x), 1e-12);
  EXPECT_LT(max_abs_diff(correct_spatial_kv(x, apply_measurement(x, a2), eye.values(), -1.0, a1, a2), x), 1e-12);
}

TEST_F(KeyValueTest, LeftBranchReproducesProjectedObservation) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor xs = random_tensor({8, 3, 4}, seed);
    const Tensor out = correct_spatial_kv(xs, hk, w.values(), 0.9, a1, a2);
    EXPECT_LT(max_abs_diff(apply_measurement(out, a1), matmul_channels(hk, w)), 1e-10);
  }
}

TEST_F(KeyValueTest, ProjectedVariantAgrees) {
  const Tensor projected = project_hidden(hk, w.values());
  EXPECT_LT(max_abs_diff(projected, matmul_channels(hk, w)), 1e-12);
  for (double p : {-0.3, 0.7}) {
    EXPECT_EQ(correct_spatial_kv_projected(x, projected, p, a1, a2),
              correct_spatial_kv(x, hk, w.values(), p, a1, a2));
  }
}

TEST(Blend, EndpointsAndSchedule) {
  const Tensor o = random_tensor({3, 2, 2}, 1);
  const Tensor oh = random_tensor({3, 2, 2}, 2);
  EXPECT_EQ(blend_output(o, oh, 0.0), o);
  EXPECT_EQ(blend_output(o, oh, 1.0), oh);
  const CorrectionSchedule sched(0.8, 1000);
  const Tensor at_t = blend_output(o, oh, 1000, sched);
  for (std::size_t i = 0; i < o.size(); ++i) EXPECT_NEAR(at_t[i], 0.2 * o[i] + 0.8 * oh[i], 1e-15);
  EXPECT_THROW(blend_output(o, oh, 1.5), ConfigError);
  EXPECT_THROW(blend_output(o, oh, -0.1), ConfigError);
}

TEST(Schedule, WeightFormula) {
  const CorrectionSchedule s;
  EXPECT_DOUBLE_EQ(s.weight(1000), 0.8);
  EXPECT_NEAR(s.weight(250), 0.4, 1e-15);
  EXPECT_EQ(s.weight(0), 0.0);
  for (int t = 1; t <= 1000; ++t) {
    EXPECT_GE(s.weight(t), s.weight(t - 1));
    EXPECT_LE(s.weight(t), 1.0);
  }
  EXPECT_THROW(s.weight(1001), RangeError);
  EXPECT_THROW(CorrectionSchedule(1.2), ConfigError);
}

TEST(Cache, RecordFetchBitwise) {
  HiddenCache cache;
  const Tensor h = random_tensor({2, 3, 4}, 1);
  record_hidden(cache, 3, 7, HiddenRole::kSpatialHidden, h);
  EXPECT_EQ(fetch_hidden(cache, 3, 7, HiddenRole::kSpatialHidden), h);
  EXPECT_EQ(cache.size(), 1u);
  EXPECT_THROW(record_hidden(cache, 3, 7, HiddenRole::kSpatialHidden, h), ConfigError);
}

TEST(Cache, MissNamesKey) {
  HiddenCache cache;
  try {
    fetch_hidden(cache, 12, 4, HiddenRole::kTemporalHidden);
    FAIL() << "expected a cache miss";
  } catch (const CacheMissError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("12"), std::string::npos);
    EXPECT_NE(msg.find("4"), std::string::npos);
    EXPECT_NE(msg.find("h_temporal"), std::string::npos);
  }
}

TEST(Cache, SpillRoundTrip) {
  HiddenCache cache;
  cache.record({0, 1, HiddenRole::kTemporalHidden, 0}, random_tensor({2, 2, 2}, 1));
  cache.record({5, 2, HiddenRole::kSpatialKey, 1}, random_tensor({2, 3, 2}, 2));
  const auto path = std::filesystem::temp_directory_path() / "zerosmooth_cache_test.zswt";
  cache.save(path);
  const HiddenCache back = HiddenCache::load(path);
  std::filesystem::remove(path);
  ASSERT_EQ(back.size(), 2u);
  for (const auto& [key, state] : cache.entries()) {
    // The spill format stores f32.
    EXPECT_LT(max_abs_diff(back.fetch(key), *state), 1e-6);
  }
}

TEST(Selector, ReproduciblePerSite) {
  const BranchSelector s(42, SelectorMode::kGaussian);
  EXPECT_EQ(s.draw(2, 10, 3), s.draw(2, 10, 3));
  EXPECT_NE(s.draw(2, 10, 3), s.draw(2, 10, 4));
  EXPECT_NE(s.draw(2, 10, 3), BranchSelector(43, SelectorMode::kGaussian).draw(2, 10, 3));
}

TEST(Selector, GaussianThresholdFrequency) {
  const BranchSelector s(7, SelectorMode::kGaussian);
  int left = 0;
  constexpr int kDraws = 100000;
  for (int i = 0; i < kDraws; ++i) left += BranchSelector::use_left(s.draw(2, i, i % 13));
  const double phi = 0.5 * std::erfc(0.5 / std::sqrt(2.0));  // P(N(0,1) > 0.5)
  EXPECT_NEAR(static_cast<double>(left) / kDraws, phi, 0.01);
  EXPECT_NEAR(phi, 0.3085, 1e-4);
}

TEST(Selector, UniformIsEvenSplit) {
  const BranchSelector s(7, SelectorMode::kUniform);
  int left = 0;
  for (int i = 0; i < 100000; ++i) left += BranchSelector::use_left(s.draw(3, i, 1));
  EXPECT_NEAR(left / 100000.0, 0.5, 0.01);
}

}  // namespace
}  // namespace zerosmooth
