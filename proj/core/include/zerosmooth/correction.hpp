// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>

#include "zerosmooth/numerics.hpp"
#include "zerosmooth/operators.hpp"

namespace zerosmooth {

/// What a cached hidden state holds.
///
/// A key-frame pass records the transformer inputs (kTemporalHidden for
/// temporal modules, kSpatialHidden for the normalized input of spatial
/// modules). A corrected pass that feeds a further stage records the
/// corrected temporal input and the corrected spatial projections instead.
enum class HiddenRole {
  kTemporalHidden,
  kSpatialHidden,
  kSpatialQuery,
  kSpatialKey,
  kSpatialValue,
};

std::string_view to_string(HiddenRole role);
HiddenRole parse_hidden_role(std::string_view name);

struct CacheKey {
  int step = 0;
  int module = 0;
  HiddenRole role = HiddenRole::kTemporalHidden;
  /// 0 for the conditional pass, 1 for the unconditional guidance pass.
  int pass = 0;

  auto operator<=>(const CacheKey&) const = default;
  std::string name() const;  // "step/module/role[/pass]"
};

/// Write-once store of per-step, per-module hidden states handed from one
/// cascade stage to the next.
class HiddenCache {
 public:
  void record(const CacheKey& key, HiddenState state);
  const HiddenState& fetch(const CacheKey& key) const;
  bool contains(const CacheKey& key) const { return entries_.contains(key); }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  void clear() { entries_.clear(); }

  /// Spill to / restore from the weight-checkpoint container format, with one
  /// array per entry named by CacheKey::name(). Values are stored as f32.
  void save(const std::filesystem::path& path) const;
  static HiddenCache load(const std::filesystem::path& path);

  const std::map<CacheKey, std::shared_ptr<const HiddenState>>& entries() const { return entries_; }

 private:
  std::map<CacheKey, std::shared_ptr<const HiddenState>> entries_;
};

void record_hidden(HiddenCache& cache, int step, int module, HiddenRole role, HiddenState state);
const HiddenState& fetch_hidden(const HiddenCache& cache, int step, int module, HiddenRole role);

/// w_t = coefficient * sqrt(t / T), used to blend corrected and plain outputs.
class CorrectionSchedule {
 public:
  explicit CorrectionSchedule(double coefficient = 0.8, int max_timestep = 1000);
  double coefficient() const noexcept { return coefficient_; }
  int max_timestep() const noexcept { return max_timestep_; }
  double weight(int timestep) const;

 private:
  double coefficient_;
  int max_timestep_;
};

/// ĥ = (I - A†A) h + A† hk with the sampling operator.
HiddenState correct_temporal(const HiddenState& h, const HiddenState& hk,
                             const LinearMeasurement& sampling);

/// Q̂ = (I - A†A) Q + A† (hk Wq). `wq` is d x d row-major (tokens are rows).
HiddenState correct_spatial_q(const HiddenState& q, const HiddenState& hk,
                              std::span<const double> wq, const LinearMeasurement& sampling);

/// Tokens-as-rows projection hk W for a t x l x d state.
HiddenState project_hidden(const HiddenState& hk, std::span<const double> w);

/// Branch-selected back-projection for spatial keys/values:
///   1[p > 0.5] BP_{A1}(X, hk W) + (1 - 1[p > 0.5]) BP_{A2}(X, hk W).
HiddenState correct_spatial_kv(const HiddenState& x, const HiddenState& hk,
                               std::span<const double> w, double p, const LinearMeasurement& a1,
                               const LinearMeasurement& a2);

/// Same as correct_spatial_kv with the key-frame projection hk W supplied.
HiddenState correct_spatial_kv_projected(const HiddenState& x, const HiddenState& projected,
                                         double p, const LinearMeasurement& a1,
                                         const LinearMeasurement& a2);

/// õ = o + w (ô - o); throws ConfigError if w is outside [0, 1].
HiddenState blend_output(const HiddenState& o, const HiddenState& o_hat, double weight);
HiddenState blend_output(const HiddenState& o, const HiddenState& o_hat, int timestep,
                         const CorrectionSchedule& schedule);

enum class SelectorMode {
  kGaussian,  // p ~ N(0, 1), A1 when p > 0.5
  kUniform,   // p ~ U(0, 1), A1 when p > 0.5
};

std::string_view to_string(SelectorMode mode);
SelectorMode parse_selector_mode(std::string_view name);

/// Seeded source of the A1/A2 selector value p, one draw per
/// (stage, step, module).
class BranchSelector {
 public:
  BranchSelector(std::uint64_t seed, SelectorMode mode) : seed_(seed), mode_(mode) {}
  double draw(int stage, int step, int module) const;
  static bool use_left(double p) { return p > 0.5; }
  SelectorMode mode() const noexcept { return mode_; }

 private:
  std::uint64_t seed_;
  SelectorMode mode_;
};

/// Deterministic 64-bit seed mixing (SplitMix64 finalizer over the inputs).
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> parts);

}  // namespace zerosmooth
