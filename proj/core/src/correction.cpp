// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#include "zerosmooth/correction.hpp"

#include <charconv>
#include <cmath>
#include <random>
#include <vector>

#include "zerosmooth/checkpoint.hpp"
#include "zerosmooth/errors.hpp"

namespace zerosmooth {

std::string_view to_string(HiddenRole role) {
  switch (role) {
    case HiddenRole::kTemporalHidden: return "h_temporal";
    case HiddenRole::kSpatialHidden: return "h_spatial";
    case HiddenRole::kSpatialQuery: return "q_spatial";
    case HiddenRole::kSpatialKey: return "k_spatial";
    case HiddenRole::kSpatialValue: return "v_spatial";
  }
  return "?";
}

HiddenRole parse_hidden_role(std::string_view name) {
  for (HiddenRole r : {HiddenRole::kTemporalHidden, HiddenRole::kSpatialHidden,
                       HiddenRole::kSpatialQuery, HiddenRole::kSpatialKey,
                       HiddenRole::kSpatialValue}) {
    if (to_string(r) == name) return r;
  }
  throw FormatError("unknown hidden role '" + std::string(name) + "'");
}

std::string CacheKey::name() const {
  std::string out = std::to_string(step) + "/" + std::to_string(module) + "/" +
                    std::string(to_string(role));
  if (pass != 0) out += "/" + std::to_string(pass);
  return out;
}

void HiddenCache::record(const CacheKey& key, HiddenState state) {
  if (entries_.contains(key)) {
    throw ConfigError("hidden cache entry " + key.name() + " is already recorded");
  }
  entries_.emplace(key, std::make_shared<const HiddenState>(std::move(state)));
}

const HiddenState& HiddenCache::fetch(const CacheKey& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw CacheMissError("no hidden state for step " + std::to_string(key.step) + ", module " +
                         std::to_string(key.module) + ", role " + std::string(to_string(key.role)) +
                         (key.pass ? ", pass " + std::to_string(key.pass) : std::string()));
  }
  return *it->second;
}

void HiddenCache::save(const std::filesystem::path& path) const {
  std::vector<NamedArray> arrays;
  arrays.reserve(entries_.size());
  for (const auto& [key, state] : entries_) arrays.push_back(to_named_array(key.name(), *state));
  write_container(path, arrays);
}

namespace {

int parse_int(std::string_view s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError("bad integer '" + std::string(s) + "' in cache entry name");
  }
  return v;
}

CacheKey parse_key(std::string_view name) {
  std::vector<std::string_view> parts;
  std::size_t begin = 0;
  while (true) {
    const std::size_t slash = name.find('/', begin);
    parts.push_back(name.substr(begin, slash - begin));
    if (slash == std::string_view::npos) break;
    begin = slash + 1;
  }
  if (parts.size() != 3 && parts.size() != 4) {
    throw FormatError("cache entry name must be step/module/role: " + std::string(name));
  }
  CacheKey key{parse_int(parts[0]), parse_int(parts[1]), parse_hidden_role(parts[2]), 0};
  if (parts.size() == 4) key.pass = parse_int(parts[3]);
  return key;
}

}  // namespace

HiddenCache HiddenCache::load(const std::filesystem::path& path) {
  HiddenCache cache;
  for (const NamedArray& a : read_container(path)) cache.record(parse_key(a.name), to_tensor(a));
  return cache;
}

void record_hidden(HiddenCache& cache, int step, int module, HiddenRole role, HiddenState state) {
  cache.record({step, module, role, 0}, std::move(state));
}

const HiddenState& fetch_hidden(const HiddenCache& cache, int step, int module, HiddenRole role) {
  return cache.fetch({step, module, role, 0});
}

CorrectionSchedule::CorrectionSchedule(double coefficient, int max_timestep)
    : coefficient_(coefficient), max_timestep_(max_timestep) {
  if (!(coefficient >= 0.0 && coefficient <= 1.0)) {
    throw ConfigError("correction coefficient must lie in [0, 1]");
  }
  if (max_timestep < 1) throw ConfigError("correction schedule needs T >= 1");
}

double CorrectionSchedule::weight(int timestep) const {
  if (timestep < 0 || timestep > max_timestep_) {
    throw RangeError("correction weight requested for t=" + std::to_string(timestep));
  }
  return coefficient_ * std::sqrt(static_cast<double>(timestep) / max_timestep_);
}

HiddenState correct_temporal(const HiddenState& h, const HiddenState& hk,
                             const LinearMeasurement& sampling) {
  if (sampling.kind() != MeasurementKind::kSampling) {
    throw ConfigError("temporal correction requires the sampling operator");
  }
  return back_project(h, hk, sampling);
}

HiddenState project_hidden(const HiddenState& hk, std::span<const double> w) {
  if (hk.rank() != 3) throw DimensionError("project_hidden expects a t x l x d state");
  const std::size_t d = hk.dim(2);
  if (w.size() != d * d) throw DimensionError("projection weight must be d x d");
  const std::size_t rows = hk.frames() * hk.dim(1);
  HiddenState out(hk.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = hk.data() + r * d;
    double* y = out.data() + r * d;
    for (std::size_t i = 0; i < d; ++i) {
      const double xi = x[i];
      const double* wr = w.data() + i * d;
      for (std::size_t j = 0; j < d; ++j) y[j] += xi * wr[j];
    }
  }
  return out;
}

HiddenState correct_spatial_q(const HiddenState& q, const HiddenState& hk,
                              std::span<const double> wq, const LinearMeasurement& sampling) {
  if (q.rank() != 3 || hk.rank() != 3 || q.dim(2) != hk.dim(2)) {
    throw DimensionError("correct_spatial_q: Q and hk must be t x l x d with equal d");
  }
  return back_project(q, project_hidden(hk, wq), sampling);
}

HiddenState correct_spatial_kv_projected(const HiddenState& x, const HiddenState& projected,
                                         double p, const LinearMeasurement& a1,
                                         const LinearMeasurement& a2) {
  return back_project(x, projected, BranchSelector::use_left(p) ? a1 : a2);
}

HiddenState correct_spatial_kv(const HiddenState& x, const HiddenState& hk,
                               std::span<const double> w, double p, const LinearMeasurement& a1,
                               const LinearMeasurement& a2) {
  return correct_spatial_kv_projected(x, project_hidden(hk, w), p, a1, a2);
}

HiddenState blend_output(const HiddenState& o, const HiddenState& o_hat, double weight) {
  if (!(weight >= 0.0 && weight <= 1.0)) {
    throw ConfigError("blend weight " + std::to_string(weight) + " outside [0, 1]");
  }
  if (o.shape() != o_hat.shape()) throw DimensionError("blend_output: shape mismatch");
  HiddenState out(o.shape());
  for (std::size_t i = 0; i < o.size(); ++i) out[i] = (1.0 - weight) * o[i] + weight * o_hat[i];
  return out;
}

HiddenState blend_output(const HiddenState& o, const HiddenState& o_hat, int timestep,
                         const CorrectionSchedule& schedule) {
  return blend_output(o, o_hat, schedule.weight(timestep));
}

std::string_view to_string(SelectorMode mode) {
  return mode == SelectorMode::kGaussian ? "gaussian" : "uniform";
}

SelectorMode parse_selector_mode(std::string_view name) {
  if (name == "gaussian") return SelectorMode::kGaussian;
  if (name == "uniform") return SelectorMode::kUniform;
  throw ConfigError("selector must be gaussian|uniform, got '" + std::string(name) + "'");
}

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> parts) {
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(seed);
  for (std::uint64_t p : parts) h = mix(h ^ mix(p));
  return h;
}

double BranchSelector::draw(int stage, int step, int module) const {
  std::mt19937_64 rng(derive_seed(seed_, {static_cast<std::uint64_t>(stage),
                                          static_cast<std::uint64_t>(step),
                                          static_cast<std::uint64_t>(module)}));
  if (mode_ == SelectorMode::kGaussian) return std::normal_distribution<double>(0.0, 1.0)(rng);
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace zerosmooth
