// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#include "zerosmooth/diffusion.hpp"

#include <cmath>
#include <limits>

#include "zerosmooth/errors.hpp"

namespace zerosmooth {

NoiseSchedule::NoiseSchedule(std::vector<double> alpha, std::vector<double> sigma)
    : alpha_(std::move(alpha)), sigma_(std::move(sigma)) {
  if (alpha_.size() != sigma_.size() || alpha_.size() < 2) {
    throw ScheduleError("schedule tables must have equal length >= 1");
  }
  lambda_.resize(alpha_.size());
  lambda_[0] = std::numeric_limits<double>::infinity();
  for (std::size_t t = 1; t < alpha_.size(); ++t) {
    if (!(alpha_[t] > 0.0) || !(sigma_[t] > 0.0) || !std::isfinite(alpha_[t]) ||
        !std::isfinite(sigma_[t])) {
      throw ScheduleError("alpha and sigma must be positive at t=" + std::to_string(t));
    }
    lambda_[t] = std::log(alpha_[t] * alpha_[t] / (sigma_[t] * sigma_[t]));
    if (!(lambda_[t] < lambda_[t - 1])) {
      throw ScheduleError("log-SNR is not strictly decreasing at t=" + std::to_string(t));
    }
  }
}

NoiseSchedule NoiseSchedule::linear_beta(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ScheduleError("schedule needs at least one step");
  if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_end < beta_start) {
    throw ScheduleError("need 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> alpha(steps + 1), sigma(steps + 1);
  alpha[0] = 1.0;
  sigma[0] = 0.0;
  double alpha_bar = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / (steps - 1);
    const double beta = beta_start + frac * (beta_end - beta_start);
    alpha_bar *= 1.0 - beta;
    alpha[t] = std::sqrt(alpha_bar);
    sigma[t] = std::sqrt(1.0 - alpha_bar);
  }
  return NoiseSchedule(std::move(alpha), std::move(sigma));
}

NoiseSchedule NoiseSchedule::from_tables(std::vector<double> alpha, std::vector<double> sigma) {
  alpha.insert(alpha.begin(), 1.0);
  sigma.insert(sigma.begin(), 0.0);
  return NoiseSchedule(std::move(alpha), std::move(sigma));
}

void NoiseSchedule::check_index(int t) const {
  if (t < 0 || t > T()) {
    throw RangeError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(T()) + "]");
  }
}

double NoiseSchedule::alpha(int t) const {
  check_index(t);
  return alpha_[t];
}

double NoiseSchedule::sigma(int t) const {
  check_index(t);
  return sigma_[t];
}

double NoiseSchedule::lambda(int t) const {
  check_index(t);
  return lambda_[t];
}

std::vector<int> NoiseSchedule::sampling_timesteps(int steps) const {
  if (steps < 1 || steps > T()) {
    throw ScheduleError("sampling steps must be in [1, " + std::to_string(T()) + "]");
  }
  std::vector<int> out(steps);
  for (int k = 0; k < steps; ++k) {
    // Evenly spaced from T down to T/steps, trailing spacing.
    out[k] = static_cast<int>(std::llround(static_cast<double>(T()) * (steps - k) / steps));
  }
  return out;
}

std::string_view to_string(PosteriorVariance mode) {
  return mode == PosteriorVariance::kPaper ? "paper" : "standard";
}

PosteriorVariance parse_posterior_variance(std::string_view name) {
  if (name == "paper") return PosteriorVariance::kPaper;
  if (name == "standard") return PosteriorVariance::kStandard;
  throw ConfigError("posterior_var must be paper|standard, got '" + std::string(name) + "'");
}

Tensor forward_diffuse(const Tensor& x0, double alpha, double sigma, const Tensor& eps) {
  if (x0.shape() != eps.shape()) throw DimensionError("forward_diffuse: eps shape differs from x0");
  Tensor z(x0.shape());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = alpha * x0[i] + sigma * eps[i];
  return z;
}

Tensor forward_diffuse(const Tensor& x0, const NoiseSchedule& schedule, int t, const Tensor& eps) {
  if (t < 1 || t > schedule.T()) {
    throw RangeError("forward_diffuse: t=" + std::to_string(t) + " outside [1, " +
                     std::to_string(schedule.T()) + "]");
  }
  return forward_diffuse(x0, schedule.alpha(t), schedule.sigma(t), eps);
}

namespace {

// 1 - e^{lambda_t - lambda_s}, with the s = 0 limit (lambda_s = +inf) giving 1.
double snr_gap(const NoiseSchedule& schedule, int s, int t) {
  return -std::expm1(schedule.lambda(t) - schedule.lambda(s));
}

double variance_for(const NoiseSchedule& schedule, int s, int t, PosteriorVariance mode) {
  const double sig = mode == PosteriorVariance::kPaper ? schedule.sigma(t) : schedule.sigma(s);
  return snr_gap(schedule, s, t) * sig * sig;
}

}  // namespace

Posterior posterior_mean_var(const Tensor& z_t, const Tensor& x0, const NoiseSchedule& schedule,
                             int s, int t, PosteriorVariance mode) {
  if (!(0 <= s && s < t && t <= schedule.T())) {
    throw OrderingError("posterior needs 0 <= s < t <= T, got s=" + std::to_string(s) +
                        " t=" + std::to_string(t));
  }
  if (z_t.shape() != x0.shape()) throw DimensionError("posterior: z_t and x0 shapes differ");
  const double gap = snr_gap(schedule, s, t);
  const double keep = 1.0 - gap;  // e^{lambda_t - lambda_s}
  const double a = keep * schedule.alpha(s) / schedule.alpha(t);
  const double b = gap * schedule.alpha(s);
  Posterior out{Tensor(z_t.shape()), variance_for(schedule, s, t, mode)};
  for (std::size_t i = 0; i < z_t.size(); ++i) out.mean[i] = a * z_t[i] + b * x0[i];
  return out;
}

Tensor predict_x0(const Tensor& z_t, const Tensor& eps_hat, const NoiseSchedule& schedule, int t) {
  if (z_t.shape() != eps_hat.shape()) throw DimensionError("predict_x0: shape mismatch");
  const double alpha = schedule.alpha(t);
  if (alpha == 0.0) throw ScheduleError("predict_x0: alpha_t is zero");
  const double sigma = schedule.sigma(t);
  Tensor x0(z_t.shape());
  for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = (z_t[i] - sigma * eps_hat[i]) / alpha;
  return x0;
}

Tensor sample(const Denoiser& denoiser, const NoiseSchedule& schedule, const Conditioning& cond,
              const SampleNoise& noise, const SamplerOptions& options,
              const SampleCallbacks& callbacks) {
  const std::vector<int> timesteps = schedule.sampling_timesteps(options.steps);
  const bool stochastic = options.eta > 0.0;
  if (stochastic && noise.steps.size() < timesteps.size()) {
    throw DimensionError("sample: need one step noise per step when eta > 0");
  }

  Tensor z = noise.init;
  const int n = static_cast<int>(timesteps.size());
  for (int k = 0; k < n; ++k) {
    const StepInfo step{k, timesteps[k], k + 1 < n ? timesteps[k + 1] : 0, n};
    if (callbacks.on_step_begin) callbacks.on_step_begin(step);

    Tensor eps = denoiser.predict_noise(z, step, cond);
    if (eps.shape() != z.shape()) throw DimensionError("sample: denoiser changed the latent shape");
    Tensor x0 = predict_x0(z, eps, schedule, step.timestep);
    if (callbacks.on_x0) callbacks.on_x0(step, x0);
    if (k + 1 == n) return x0;

    const int t = step.timestep;
    const int s = step.next_timestep;
    const double alpha_t = schedule.alpha(t);
    const double sigma_t = schedule.sigma(t);
    const double alpha_s = schedule.alpha(s);
    const double sigma_s = schedule.sigma(s);
    const double var = stochastic
                           ? options.eta * options.eta *
                                 variance_for(schedule, s, t, options.posterior_variance)
                           : 0.0;
    const double dir_scale = std::sqrt(std::max(sigma_s * sigma_s - var, 0.0));
    const double noise_scale = std::sqrt(var);

    const Tensor* step_noise = stochastic ? &noise.steps[k] : nullptr;
    if (step_noise && step_noise->shape() != z.shape()) {
      throw DimensionError("sample: step noise shape differs from the latent");
    }
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double dir = (z[i] - alpha_t * x0[i]) / sigma_t;
      double next = alpha_s * x0[i] + dir_scale * dir;
      if (step_noise) next += noise_scale * (*step_noise)[i];
      z[i] = next;
    }
    if (callbacks.on_latent) callbacks.on_latent(step, z);
  }
  return z;
}

}  // namespace zerosmooth
