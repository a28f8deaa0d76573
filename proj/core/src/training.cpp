// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#include "zerosmooth/training.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <random>

#include "zerosmooth/correction.hpp"
#include "zerosmooth/errors.hpp"
#include "zerosmooth/synthetic.hpp"

namespace zerosmooth {

Adam::Adam(const ParameterSet& like, double beta1, double beta2, double epsilon)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon), m_(like.zeros_like()), v_(like.zeros_like()) {}

void Adam::step(ParameterSet& params, const ParameterSet& grads, double learning_rate) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw DimensionError("Adam: parameter sets do not match");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params.tensors()[i];
    const Tensor& g = grads.tensors()[i];
    Tensor& m = m_.tensors()[i];
    Tensor& v = v_.tensors()[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      p[j] -= learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + epsilon_);
    }
  }
}

TrainingSample make_training_sample(const BackboneConfig& config, std::uint64_t seed,
                                    const std::vector<double>& fps_choices, double base_fps) {
  if (fps_choices.empty()) throw ConfigError("training needs at least one fps value");
  std::mt19937_64 rng(seed);
  const double fps = fps_choices[std::uniform_int_distribution<std::size_t>(0, fps_choices.size() - 1)(rng)];
  const SyntheticClipSpec spec = random_clip_spec(rng(), config.channels, config.height,
                                                  config.width, base_fps / fps);
  TrainingSample s;
  s.x0 = to_model_space(generate_clip(spec, config.frames));
  s.label = static_cast<int>(spec.kind);
  s.fps = fps;
  return s;
}

namespace {

Tensor gaussian(const Shape& shape, std::mt19937_64& rng) {
  Tensor t(shape);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = normal(rng);
  return t;
}

}  // namespace

double held_out_loss(const ToyBackbone& model, const NoiseSchedule& schedule, std::uint64_t seed,
                     int clips, double base_fps, const std::vector<double>& fps_choices) {
  if (clips < 1) throw ConfigError("held-out set needs at least one clip");
  double total = 0.0;
  for (int i = 0; i < clips; ++i) {
    const std::uint64_t s = derive_seed(seed, {0x4845'4c44ull, static_cast<std::uint64_t>(i)});
    const TrainingSample sample = make_training_sample(model.config(), s, fps_choices, base_fps);
    std::mt19937_64 rng(derive_seed(s, {1}));
    // Timesteps spread evenly over (0, T].
    const int t = std::max(1, static_cast<int>(std::lround((i + 0.5) / clips * schedule.T())));
    const Tensor eps = gaussian(sample.x0.shape(), rng);
    const Tensor z = forward_diffuse(sample.x0, schedule, t, eps);
    total += model.loss(z, eps, t, sample.label, sample.fps);
  }
  return total / clips;
}

TrainingReport train(ToyBackbone& model, const NoiseSchedule& schedule,
                     const TrainingOptions& options) {
  if (options.steps < 1) throw ConfigError("training needs steps >= 1");
  if (options.batch < 1) throw ConfigError("training needs batch >= 1");
  TrainingReport report;
  const std::uint64_t held_seed = derive_seed(options.seed, {0xE7A1ull});
  report.initial_held_out =
      held_out_loss(model, schedule, held_seed, options.held_out_clips, options.base_fps, options.fps_choices);

  Adam adam(model.parameters());
  ParameterSet grads = model.parameters().zeros_like();
  std::mt19937_64 rng(derive_seed(options.seed, {0x7EA1ull}));
  std::uniform_int_distribution<int> timestep(1, schedule.T());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::deque<double> recent;

  for (int step = 0; step < options.steps; ++step) {
    for (Tensor& g : grads.tensors()) std::fill(g.values().begin(), g.values().end(), 0.0);
    double loss = 0.0;
    for (int b = 0; b < options.batch; ++b) {
      TrainingSample s =
          make_training_sample(model.config(), rng(), options.fps_choices, options.base_fps);
      if (unit(rng) < options.label_dropout) s.label = model.config().null_label();
      const int t = timestep(rng);
      const Tensor eps = gaussian(s.x0.shape(), rng);
      const Tensor z = forward_diffuse(s.x0, schedule, t, eps);
      loss += model.loss_and_gradient(z, eps, t, s.label, s.fps, grads);
    }
    loss /= options.batch;
    if (!std::isfinite(loss)) {
      throw TrainingError("training loss became non-finite at step " + std::to_string(step));
    }
    double norm2 = 0.0;
    for (Tensor& g : grads.tensors()) {
      for (double& v : g.values()) {
        v /= options.batch;
        norm2 += v * v;
      }
    }
    if (!std::isfinite(norm2)) {
      throw TrainingError("gradient became non-finite at step " + std::to_string(step));
    }
    if (options.grad_clip > 0.0 && std::sqrt(norm2) > options.grad_clip) {
      const double scale = options.grad_clip / std::sqrt(norm2);
      for (Tensor& g : grads.tensors()) {
        for (double& v : g.values()) v *= scale;
      }
    }
    // Linear warmup, then cosine decay to 10% of the base rate.
    double lr = options.learning_rate;
    if (step < options.warmup) {
      lr *= static_cast<double>(step + 1) / options.warmup;
    } else {
      const double progress = static_cast<double>(step - options.warmup) /
                              std::max(1, options.steps - options.warmup);
      lr *= 0.1 + 0.9 * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
    }
    adam.step(model.parameters(), grads, lr);

    recent.push_back(loss);
    if (recent.size() > 50) recent.pop_front();
    if (options.on_step) options.on_step(step, loss);
  }
  report.steps = options.steps;
  report.final_loss = std::accumulate(recent.begin(), recent.end(), 0.0) / recent.size();
  report.final_held_out =
      held_out_loss(model, schedule, held_seed, options.held_out_clips, options.base_fps, options.fps_choices);
  return report;
}

}  // namespace zerosmooth
