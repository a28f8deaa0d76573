// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

#include "zerosmooth/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>
#include <sstream>

#include "zerosmooth/errors.hpp"

namespace zerosmooth {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("malformed number '" + std::string(value) + "'");
  }
  return out;
}

template <typename T>
std::string format_number(T value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

bool parse_bool(std::string_view value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  throw ConfigError("malformed boolean '" + std::string(value) + "'");
}

std::vector<double> parse_list(std::string_view value) {
  std::vector<double> out;
  while (!value.empty()) {
    const auto comma = value.find(',');
    out.push_back(parse_number<double>(trim(value.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    value = value.substr(comma + 1);
  }
  return out;
}

std::string format_list(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_number(values[i]);
  }
  return out;
}

struct Key {
  const char* name;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view)> set;
};

template <typename T, typename Field>
Key number_key(const char* name, Field field) {
  return {name, [field](const ExperimentConfig& c) { return format_number<T>(field(const_cast<ExperimentConfig&>(c))); },
          [field](ExperimentConfig& c, std::string_view v) { field(c) = parse_number<T>(v); }};
}

template <typename Field>
Key bool_key(const char* name, Field field) {
  return {name, [field](const ExperimentConfig& c) -> std::string {
            return field(const_cast<ExperimentConfig&>(c)) ? "true" : "false";
          },
          [field](ExperimentConfig& c, std::string_view v) { field(c) = parse_bool(v); }};
}

template <typename Field, typename Parse>
Key enum_key(const char* name, Field field, Parse parse) {
  return {name,
          [field](const ExperimentConfig& c) {
            return std::string(to_string(field(const_cast<ExperimentConfig&>(c))));
          },
          [field, parse](ExperimentConfig& c, std::string_view v) { field(c) = parse(v); }};
}

#define ZS_FIELD(expr) [](ExperimentConfig& c) -> auto& { return c.expr; }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      number_key<std::uint64_t>("seed", ZS_FIELD(seed)),
      number_key<int>("schedule.steps", ZS_FIELD(schedule_steps)),
      number_key<double>("schedule.beta_start", ZS_FIELD(beta_start)),
      number_key<double>("schedule.beta_end", ZS_FIELD(beta_end)),

      number_key<std::size_t>("model.frames", ZS_FIELD(model.frames)),
      number_key<std::size_t>("model.channels", ZS_FIELD(model.channels)),
      number_key<std::size_t>("model.height", ZS_FIELD(model.height)),
      number_key<std::size_t>("model.width", ZS_FIELD(model.width)),
      number_key<std::size_t>("model.dim", ZS_FIELD(model.dim)),
      number_key<std::size_t>("model.heads", ZS_FIELD(model.heads)),
      number_key<std::size_t>("model.blocks", ZS_FIELD(model.blocks)),
      number_key<std::size_t>("model.classes", ZS_FIELD(model.classes)),
      enum_key("model.positional", ZS_FIELD(model.positional), parse_positional_mode),

      number_key<int>("train.steps", ZS_FIELD(training.steps)),
      number_key<int>("train.batch", ZS_FIELD(training.batch)),
      number_key<double>("train.learning_rate", ZS_FIELD(training.learning_rate)),
      number_key<int>("train.warmup", ZS_FIELD(training.warmup)),
      number_key<double>("train.grad_clip", ZS_FIELD(training.grad_clip)),
      number_key<double>("train.label_dropout", ZS_FIELD(training.label_dropout)),
      number_key<int>("train.held_out_clips", ZS_FIELD(training.held_out_clips)),
      {"train.fps_choices", [](const ExperimentConfig& c) { return format_list(c.training.fps_choices); },
       [](ExperimentConfig& c, std::string_view v) { c.training.fps_choices = parse_list(v); }},

      number_key<int>("cascade.stages", ZS_FIELD(cascade.stages)),
      number_key<std::size_t>("cascade.scale", ZS_FIELD(cascade.scale)),
      number_key<int>("cascade.steps", ZS_FIELD(cascade.steps)),
      number_key<double>("cascade.eta", ZS_FIELD(cascade.eta)),
      enum_key("cascade.posterior_var", ZS_FIELD(cascade.posterior_variance), parse_posterior_variance),
      number_key<double>("cascade.correction_coefficient", ZS_FIELD(cascade.correction_coefficient)),
      enum_key("cascade.selector", ZS_FIELD(cascade.selector), parse_selector_mode),
      enum_key("cascade.windowing", ZS_FIELD(cascade.windowing), parse_windowing_mode),
      {"cascade.overlap",
       [](const ExperimentConfig& c) {
         return c.cascade.overlap ? format_number(*c.cascade.overlap) : std::string("auto");
       },
       [](ExperimentConfig& c, std::string_view v) {
         if (v == "auto") {
           c.cascade.overlap.reset();
         } else {
           c.cascade.overlap = parse_number<std::size_t>(v);
         }
       }},
      bool_key("cascade.color_correction", ZS_FIELD(cascade.color_correction)),
      enum_key("cascade.color_target", ZS_FIELD(cascade.color_target), parse_color_target),
      number_key<double>("cascade.base_fps", ZS_FIELD(cascade.base_fps)),
      number_key<int>("cascade.label", ZS_FIELD(cascade.label)),
      number_key<double>("cascade.guidance_start", ZS_FIELD(cascade.guidance_start)),
      number_key<double>("cascade.guidance_end", ZS_FIELD(cascade.guidance_end)),
      bool_key("cascade.temporal_correction", ZS_FIELD(cascade.temporal_correction)),
      bool_key("cascade.spatial_query_correction", ZS_FIELD(cascade.spatial_query_correction)),
      enum_key("cascade.spatial_kv", ZS_FIELD(cascade.spatial_kv), parse_kv_correction),
      enum_key("cascade.blend", ZS_FIELD(cascade.blend), parse_blend_mode),

      {"path.model", [](const ExperimentConfig& c) { return c.model_path; },
       [](ExperimentConfig& c, std::string_view v) { c.model_path = v; }},
      {"path.output", [](const ExperimentConfig& c) { return c.output_path; },
       [](ExperimentConfig& c, std::string_view v) { c.output_path = v; }},
      {"path.base", [](const ExperimentConfig& c) { return c.base_path; },
       [](ExperimentConfig& c, std::string_view v) { c.base_path = v; }},
  };
  return table;
}

#undef ZS_FIELD

}  // namespace

NoiseSchedule ExperimentConfig::schedule() const {
  return NoiseSchedule::linear_beta(schedule_steps, beta_start, beta_end);
}

void ExperimentConfig::validate() const {
  model.validate();
  cascade.validate();
  if (cascade.label < 0 || cascade.label > static_cast<int>(model.classes)) {
    throw ConfigError("cascade.label must lie in [0, model.classes]");
  }
  if (training.steps < 1 || training.batch < 1) throw ConfigError("train.steps and train.batch must be >= 1");
  if (training.fps_choices.empty()) throw ConfigError("train.fps_choices must not be empty");
}

ExperimentConfig parse_experiment_config(std::string_view text) {
  ExperimentConfig config;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto& table = keys();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Key& k) { return k.name == key; });
    if (it == table.end()) throw ConfigError(where + "unknown key '" + std::string(key) + "'");
    if (!seen.insert(std::string(key)).second) {
      throw ConfigError(where + "duplicate key '" + std::string(key) + "'");
    }
    try {
      it->set(config, value);
    } catch (const Error& e) {
      throw ConfigError(where + std::string(key) + ": " + e.what());
    }
  }
  config.validate();
  return config;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_experiment_config(text);
}

std::string format_experiment_config(const ExperimentConfig& config) {
  std::ostringstream out;
  for (const Key& k : keys()) out << k.name << " = " << k.get(config) << '\n';
  return out.str();
}

std::vector<std::string> experiment_config_keys() {
  std::vector<std::string> out;
  for (const Key& k : keys()) out.emplace_back(k.name);
  return out;
}

}  // namespace zerosmooth
