// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string_view>
#include <vector>

#include "zerosmooth/numerics.hpp"

namespace zerosmooth {

/// Variance-preserving noise schedule tabulated for t = 0..T.
///
/// Entry t = 0 is the clean-data limit (alpha = 1, sigma = 0, lambda = +inf);
/// entries 1..T must have alpha, sigma > 0 and strictly decreasing
/// log-SNR lambda = log(alpha^2 / sigma^2).
class NoiseSchedule {
 public:
  /// DDPM linear-beta discretization; alpha_t^2 = prod_{s<=t} (1 - beta_s).
  static NoiseSchedule linear_beta(int steps, double beta_start = 1e-4, double beta_end = 2e-2);
  /// Explicit tables for t = 1..T; throws ScheduleError if invalid.
  static NoiseSchedule from_tables(std::vector<double> alpha, std::vector<double> sigma);

  int T() const noexcept { return static_cast<int>(alpha_.size()) - 1; }
  double alpha(int t) const;
  double sigma(int t) const;
  double lambda(int t) const;

  /// Descending timesteps for a strided sampler, e.g. 1000, 980, ..., 20.
  std::vector<int> sampling_timesteps(int steps) const;

 private:
  NoiseSchedule(std::vector<double> alpha, std::vector<double> sigma);
  void check_index(int t) const;

  std::vector<double> alpha_;
  std::vector<double> sigma_;
  std::vector<double> lambda_;
};

/// Which variance to use for q(z_s | z_t, x0).
///   kPaper:    (1 - e^{lambda_t - lambda_s}) * sigma_t^2
///   kStandard: (1 - e^{lambda_t - lambda_s}) * sigma_s^2
enum class PosteriorVariance { kPaper, kStandard };

std::string_view to_string(PosteriorVariance mode);
PosteriorVariance parse_posterior_variance(std::string_view name);

/// z_t = alpha_t x0 + sigma_t eps for t in [1, T].
Tensor forward_diffuse(const Tensor& x0, const NoiseSchedule& schedule, int t, const Tensor& eps);
Tensor forward_diffuse(const Tensor& x0, double alpha, double sigma, const Tensor& eps);

struct Posterior {
  Tensor mean;
  double variance = 0.0;
};

Posterior posterior_mean_var(const Tensor& z_t, const Tensor& x0, const NoiseSchedule& schedule,
                             int s, int t, PosteriorVariance mode = PosteriorVariance::kPaper);

/// x̂0 = (z_t - sigma_t eps_hat) / alpha_t.
Tensor predict_x0(const Tensor& z_t, const Tensor& eps_hat, const NoiseSchedule& schedule, int t);

struct StepInfo {
  int index = 0;      // 0-based position in the sampling loop
  int timestep = 0;   // t
  int next_timestep = 0;  // s (0 after the last step)
  int total_steps = 0;
};

struct Conditioning {
  int label = 0;
  double fps = 8.0;
  /// Per-frame classifier-free guidance scale; empty means unguided.
  std::vector<double> guidance;
};

/// Noise predictor eps_theta(z_t, t, cond). Output shape equals input shape.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Tensor predict_noise(const Tensor& z_t, const StepInfo& step,
                               const Conditioning& cond) const = 0;
};

struct SamplerOptions {
  int steps = 50;
  double eta = 1.0;
  PosteriorVariance posterior_variance = PosteriorVariance::kPaper;
};

/// Every random input to one sampling run.
struct SampleNoise {
  Tensor init;               // z_T
  std::vector<Tensor> steps;  // one per step, used only when eta > 0
};

struct SampleCallbacks {
  /// Called before each denoiser evaluation.
  std::function<void(const StepInfo&)> on_step_begin;
  /// Receives x̂_{0|t} after each denoiser evaluation and may modify it.
  std::function<void(const StepInfo&, Tensor& x0_hat)> on_x0;
  /// Receives z_s after each non-final transition and may modify it.
  std::function<void(const StepInfo&, Tensor& z_s)> on_latent;
};

/// Strided DDIM-style ancestral sampler. Each step computes x̂_{0|t}, then
///   z_s = alpha_s x̂0 + sqrt(max(sigma_s^2 - v, 0)) * eps_dir + sqrt(v) * noise
/// with v = eta^2 * posterior variance and eps_dir = (z_t - alpha_t x̂0) / sigma_t.
/// Returns x̂_{0|t} of the final step.
Tensor sample(const Denoiser& denoiser, const NoiseSchedule& schedule, const Conditioning& cond,
              const SampleNoise& noise, const SamplerOptions& options,
              const SampleCallbacks& callbacks = {});

}  // namespace zerosmooth
