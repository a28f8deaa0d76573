// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#include "zerosmooth/operators.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "zerosmooth/errors.hpp"

namespace zerosmooth {
namespace {

using testing::random_tensor;
using testing::to_eigen;

void expect_matrix(const Matrix& m, std::initializer_list<std::initializer_list<double>> rows) {
  const Matrix want(rows);
  ASSERT_EQ(m.rows(), want.rows());
  ASSERT_EQ(m.cols(), want.cols());
  EXPECT_EQ(m, want);
}

TEST(Sampling, TwoByTwo) {
  expect_matrix(build_sampling(2, 2).matrix(), {{1, 0, 0, 0}, {0, 0, 1, 0}});
}

TEST(Sampling, ThreeKeyFramesSelectEvenFrames) {
  const LinearMeasurement a = build_sampling(3, 2);
  EXPECT_EQ(a.frames(), 6u);
  EXPECT_EQ(a.key_frame_indices(), (std::vector<std::size_t>{0, 2, 4}));
  expect_matrix(a.matrix(), {{1, 0, 0, 0, 0, 0}, {0, 0, 1, 0, 0, 0}, {0, 0, 0, 0, 1, 0}});
}

TEST(Sampling, NullProjectorZeroesObservedFrames) {
  expect_matrix(build_sampling(2, 2).null_proj(),
                {{0, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 1}});
}

TEST(Sampling, PinvIsTranspose) {
  const LinearMeasurement a = build_sampling(5, 3);
  EXPECT_EQ(a.pinv(), transpose(a.matrix()));
}

TEST(Sampling, RejectsSmallScale) {
  EXPECT_THROW(build_sampling(4, 1), ConfigError);
}

TEST(Interp, LeftTwoKeyFrames) {
  expect_matrix(build_interp(2, 2, MeasurementKind::kInterpLeft).matrix(),
                {{.5, .5, 0, 0}, {0, 0, .5, .5}});
}

TEST(Interp, RightTwoKeyFrames) {
  expect_matrix(build_interp(2, 2, MeasurementKind::kInterpRight).matrix(),
                {{1, 0, 0, 0}, {0, .5, .5, 0}});
}

TEST(Interp, RightLastRowAveragesPairAndLeavesFinalColumnEmpty) {
  const Matrix& m = build_interp(4, 2, MeasurementKind::kInterpRight).matrix();
  EXPECT_EQ(m(3, 5), 0.5);
  EXPECT_EQ(m(3, 6), 0.5);
  for (std::size_t r = 0; r < 4; ++r) EXPECT_EQ(m(r, 7), 0.0);
}

TEST(Interp, ScaleOtherThanTwoIsUnsupported) {
  EXPECT_THROW(build_interp(4, 3, MeasurementKind::kInterpLeft), UnsupportedVariantError);
}

TEST(Interp, FullRowRankForAllKeyFrameCounts) {
  for (std::size_t t0 = 2; t0 <= 16; ++t0) {
    for (MeasurementKind k : {MeasurementKind::kInterpLeft, MeasurementKind::kInterpRight}) {
      const auto a = to_eigen(build_interp(t0, 2, k).matrix());
      EXPECT_EQ(testing::svd_rank(a), static_cast<Eigen::Index>(t0)) << to_string(k) << " t0=" << t0;
    }
  }
}

TEST(Operators, PinvMatchesSvdOracle) {
  for (std::size_t t0 : {2u, 3u, 4u, 8u, 16u}) {
    for (MeasurementKind k :
         {MeasurementKind::kSampling, MeasurementKind::kInterpLeft, MeasurementKind::kInterpRight}) {
      const LinearMeasurement m = build_measurement(k, t0, 2);
      const auto oracle = testing::svd_pinv(to_eigen(m.matrix()));
      EXPECT_LT((to_eigen(m.pinv()) - oracle).cwiseAbs().maxCoeff(), 1e-12) << to_string(k) << " t0=" << t0;
    }
  }
}

TEST(Operators, ParseKind) {
  EXPECT_EQ(parse_measurement_kind("a1"), MeasurementKind::kInterpLeft);
  EXPECT_EQ(parse_measurement_kind("a2"), MeasurementKind::kInterpRight);
  EXPECT_EQ(parse_measurement_kind("sample"), MeasurementKind::kSampling);
  EXPECT_THROW(parse_measurement_kind("a3"), ConfigError);
}

TEST(BackProject, SubstitutesKeyRows) {
  const LinearMeasurement a = build_sampling(2, 2);
  const Tensor h({4, 1, 1}, {10, 11, 12, 13});
  const Tensor hk({2, 1, 1}, {-1, -2});
  EXPECT_EQ(back_project(h, hk, a), Tensor({4, 1, 1}, {-1, 11, -2, 13}));
}

TEST(BackProject, ConsistentObservationIsFixedPoint) {
  for (MeasurementKind k :
       {MeasurementKind::kSampling, MeasurementKind::kInterpLeft, MeasurementKind::kInterpRight}) {
    const LinearMeasurement a = build_measurement(k, 4, 2);
    const Tensor h = random_tensor({8, 5, 3}, 7);
    EXPECT_LT(max_abs_diff(back_project(h, apply_measurement(h, a), a), h), 1e-12) << to_string(k);
  }
}

TEST(BackProject, InterpLeftReproducesObservation) {
  const LinearMeasurement a1 = build_interp(6, 2, MeasurementKind::kInterpLeft);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor h = random_tensor({12, 4, 3}, seed);
    const Tensor hk = random_tensor({6, 4, 3}, seed + 100);
    EXPECT_LT(max_abs_diff(apply_measurement(back_project(h, hk, a1), a1), hk), 1e-10);
  }
}

TEST(BackProject, ObservationConsistencyAndIdempotence) {
  for (MeasurementKind k :
       {MeasurementKind::kSampling, MeasurementKind::kInterpLeft, MeasurementKind::kInterpRight}) {
    const LinearMeasurement a = build_measurement(k, 5, 2);
    const Tensor h = random_tensor({10, 3, 2}, 1);
    const Tensor hk = random_tensor({5, 3, 2}, 2);
    const Tensor once = back_project(h, hk, a);
    EXPECT_LT(max_abs_diff(apply_measurement(once, a), hk), 1e-8);
    EXPECT_LT(max_abs_diff(back_project(once, hk, a), once), 1e-10);
  }
}

TEST(BackProject, SamplingKeyFramesAreBitExact) {
  const LinearMeasurement a = build_sampling(8, 2);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Tensor h = random_tensor({16, 3, 4}, seed);
    const Tensor hk = random_tensor({8, 3, 4}, seed + 1000);
    const Tensor out = back_project(h, hk, a);
    EXPECT_EQ(gather_frames(out, a.key_frame_indices()), hk);
  }
}

TEST(BackProject, ShapeMismatch) {
  const LinearMeasurement a = build_sampling(2, 2);
  EXPECT_THROW(back_project(Tensor({3, 1}), Tensor({2, 1}), a), DimensionError);
  EXPECT_THROW(back_project(Tensor({4, 2}), Tensor({2, 1}), a), DimensionError);
}

}  // namespace
}  // namespace zerosmooth
