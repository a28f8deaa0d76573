// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "zerosmooth/backbone.hpp"
#include "zerosmooth/diffusion.hpp"

namespace zerosmooth {

/// Adam with bias correction.
class Adam {
 public:
  Adam(const ParameterSet& like, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);
  void step(ParameterSet& params, const ParameterSet& grads, double learning_rate);
  long long iterations() const noexcept { return t_; }

 private:
  double beta1_, beta2_, epsilon_;
  long long t_ = 0;
  ParameterSet m_, v_;
};

struct TrainingOptions {
  int steps = 2000;
  int batch = 1;
  double learning_rate = 2e-3;
  int warmup = 50;
  double grad_clip = 1.0;  // global L2 norm; 0 disables
  std::uint64_t seed = 0;
  double base_fps = 8.0;
  std::vector<double> fps_choices = {4.0, 8.0, 16.0};
  double label_dropout = 0.1;
  int held_out_clips = 16;
  std::function<void(int step, double loss)> on_step;
};

/// One clean training clip in model space ([-1, 1]) and its conditioning.
/// Clip motion is scaled by base_fps / fps so a higher fps means smaller
/// per-frame displacement.
struct TrainingSample {
  Tensor x0;
  int label = 0;
  double fps = 8.0;
};

TrainingSample make_training_sample(const BackboneConfig& config, std::uint64_t seed,
                                    const std::vector<double>& fps_choices, double base_fps);

/// Mean noise-prediction loss over a fixed held-out set derived from `seed`
/// (clips, timesteps and noises never seen by train()).
double held_out_loss(const ToyBackbone& model, const NoiseSchedule& schedule, std::uint64_t seed,
                     int clips, double base_fps = 8.0,
                     const std::vector<double>& fps_choices = {4.0, 8.0, 16.0});

struct TrainingReport {
  double initial_held_out = 0.0;
  double final_held_out = 0.0;
  double final_loss = 0.0;  // mean training loss over the last 50 steps
  int steps = 0;
};

/// Trains in place. Throws TrainingError naming the step if the loss
/// becomes non-finite.
TrainingReport train(ToyBackbone& model, const NoiseSchedule& schedule,
                     const TrainingOptions& options);

}  // namespace zerosmooth
