// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>

#include "zerosmooth/backbone.hpp"
#include "zerosmooth/cascade.hpp"
#include "zerosmooth/correction.hpp"
#include "zerosmooth/long_attention.hpp"
#include "zerosmooth/metrics.hpp"
#include "zerosmooth/operators.hpp"

namespace {

using namespace zerosmooth;

Tensor gaussian(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor t(shape);
  for (double& v : t.values()) v = normal(rng);
  return t;
}

void BM_BuildOperatorPinv(benchmark::State& state) {
  const auto t0 = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(build_interp(t0, 2, MeasurementKind::kInterpRight));
}
BENCHMARK(BM_BuildOperatorPinv)->Arg(8)->Arg(16)->Arg(64);

void BM_BackProject(benchmark::State& state) {
  const auto t0 = static_cast<std::size_t>(state.range(0));
  const LinearMeasurement a = build_sampling(t0, 2);
  const Tensor h = gaussian({2 * t0, 256, 32}, 1);
  const Tensor hk = gaussian({t0, 256, 32}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(back_project(h, hk, a));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * h.size() * sizeof(double)));
}
BENCHMARK(BM_BackProject)->Arg(8)->Arg(16);

void BM_WindowedAttention(benchmark::State& state) {
  const auto frames = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 32, t0 = 8;
  const Tensor h = gaussian({frames, 256, d}, 3);
  const Tensor wq = gaussian({d, d}, 4), wk = gaussian({d, d}, 5), wv = gaussian({d, d}, 6);
  const Tensor pk = gaussian({t0, d}, 7), pv = gaussian({t0, d}, 8);
  const AttentionWeightsView w{wq.values(), wk.values(), wv.values(), 4};
  const WindowPlan plan = plan_windows(frames, t0);
  for (auto _ : state) benchmark::DoNotOptimize(windowed_attention_rpe(h, w, pk.values(), pv.values(), plan));
}
BENCHMARK(BM_WindowedAttention)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_Denoise(benchmark::State& state) {
  const ToyBackbone model = ToyBackbone::initialize(BackboneConfig{}, 1);
  const Tensor z = gaussian({static_cast<std::size_t>(state.range(0)), 1, 16, 16}, 9);
  for (auto _ : state) benchmark::DoNotOptimize(model.denoise(z, 500, 0, 8.0));
}
BENCHMARK(BM_Denoise)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_ColorToneCorrect(benchmark::State& state) {
  const LinearMeasurement a = build_sampling(8, 2);
  const Tensor video = gaussian({16, 3, 64, 64}, 10), keys = gaussian({8, 3, 64, 64}, 11);
  for (auto _ : state) benchmark::DoNotOptimize(color_tone_correct(video, keys, a));
}
BENCHMARK(BM_ColorToneCorrect);

void BM_Ssim(benchmark::State& state) {
  const Tensor a = gaussian({8, 1, 64, 64}, 12), b = gaussian({8, 1, 64, 64}, 13);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim);

}  // namespace

BENCHMARK_MAIN();
