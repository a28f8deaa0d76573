// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "zerosmooth/backbone.hpp"
#include "zerosmooth/cascade.hpp"
#include "zerosmooth/diffusion.hpp"
#include "zerosmooth/training.hpp"

namespace zerosmooth {

/// Every knob of an experiment. The text form is one `key = value` per
/// line; `#` starts a comment.
struct ExperimentConfig {
  int schedule_steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 2e-2;

  BackboneConfig model;
  CascadeConfig cascade;
  TrainingOptions training;

  std::uint64_t seed = 0;
  std::string model_path = "toy_model.zswt";
  std::string output_path = "out.zsv";
  std::string base_path;  // key-frame video for the DDNM baseline

  NoiseSchedule schedule() const;
  void validate() const;
};

/// Parses the text form on top of the defaults. Unknown keys, duplicate keys
/// and malformed values raise ConfigError naming the line.
ExperimentConfig parse_experiment_config(std::string_view text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Text form of `config`; every key is present, so `format(ExperimentConfig{})`
/// lists all defaults and parses back to an equal configuration.
std::string format_experiment_config(const ExperimentConfig& config);

/// All recognized keys, in print order.
std::vector<std::string> experiment_config_keys();

}  // namespace zerosmooth
