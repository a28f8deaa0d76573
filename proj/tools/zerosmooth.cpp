// Copyright (C) 2026 The ZeroSmooth Authors
// SPDX-License-Identifier: Apache-2.0

// zerosmooth command line. Failures print one line
//   error<TAB><class><TAB><message>
// to stderr and exit with status 1 (2 for usage errors).

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "zerosmooth/cascade.hpp"
#include "zerosmooth/config.hpp"
#include "zerosmooth/errors.hpp"
#include "zerosmooth/metrics.hpp"
#include "zerosmooth/operators.hpp"
#include "zerosmooth/synthetic.hpp"
#include "zerosmooth/training.hpp"
#include "zerosmooth/video_io.hpp"

namespace zs = zerosmooth;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string model_path;
  std::string out_path;
};

void add_common(CLI::App* cmd, Common& c, bool model = true, bool out = true) {
  cmd->add_option("--config", c.config_path, "experiment config file (key = value)");
  cmd->add_option("--seed", c.seed, "seed for every random draw (overrides the config)");
  if (model) cmd->add_option("--model", c.model_path, "toy model checkpoint (overrides path.model)");
  if (out) cmd->add_option("--out", c.out_path, "output path (overrides path.output)");
}

zs::ExperimentConfig resolve(const Common& c) {
  zs::ExperimentConfig cfg =
      c.config_path.empty() ? zs::ExperimentConfig{} : zs::load_experiment_config(c.config_path);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.model_path.empty()) cfg.model_path = c.model_path;
  if (!c.out_path.empty()) cfg.output_path = c.out_path;
  cfg.validate();
  return cfg;
}

std::string format_metric(double v) {
  if (v == zs::kPsnrIdentical) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void print_matrix(const char* title, const zs::Matrix& m) {
  std::printf("%s (%zux%zu)\n", title, m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) std::printf(c ? "\t%g" : "%g", m(r, c));
    std::printf("\n");
  }
}

void run_train(const Common& c) {
  const zs::ExperimentConfig cfg = resolve(c);
  zs::ToyBackbone model = zs::ToyBackbone::initialize(cfg.model, zs::derive_seed(cfg.seed, {1}));
  zs::TrainingOptions options = cfg.training;
  options.seed = cfg.seed;
  options.base_fps = cfg.cascade.base_fps;
  const zs::TrainingReport report = zs::train(model, cfg.schedule(), options);
  model.save(cfg.model_path);
  std::printf("initial_held_out\tfinal_held_out\tratio\tfinal_train_loss\n%.6f\t%.6f\t%.6f\t%.6f\n",
              report.initial_held_out, report.final_held_out,
              report.final_held_out / report.initial_held_out, report.final_loss);
}

void run_generate_base(const Common& c) {
  const zs::ExperimentConfig cfg = resolve(c);
  const zs::ToyBackbone model = zs::ToyBackbone::load(cfg.model_path);
  const zs::VideoLatent base = zs::generate_base(cfg.cascade, model, cfg.schedule(), cfg.seed);
  zs::write_video(cfg.output_path, zs::to_pixel_space(base));
}

void run_upsample(const Common& c, const std::string& base_out) {
  const zs::ExperimentConfig cfg = resolve(c);
  const zs::ToyBackbone model = zs::ToyBackbone::load(cfg.model_path);
  const auto stages = zs::run_cascade(cfg.cascade, model, cfg.schedule(), cfg.seed);
  zs::write_video(cfg.output_path, zs::to_pixel_space(stages.back().video));
  if (!base_out.empty()) zs::write_video(base_out, zs::to_pixel_space(stages.front().video));
}

void run_baseline(const Common& c, const std::string& kind, const std::string& base_path) {
  zs::ExperimentConfig cfg = resolve(c);
  if (!base_path.empty()) cfg.base_path = base_path;
  const zs::ToyBackbone model = zs::ToyBackbone::load(cfg.model_path);
  const zs::NoiseSchedule schedule = cfg.schedule();
  zs::VideoLatent out;
  if (kind == "direct") {
    out = zs::direct_inference(cfg.cascade, model, schedule, cfg.seed);
  } else {
    const zs::VideoLatent base = cfg.base_path.empty()
                                     ? zs::generate_base(cfg.cascade, model, schedule, cfg.seed)
                                     : zs::to_model_space(zs::read_video(cfg.base_path));
    out = zs::ddnm_latent_baseline(cfg.cascade, model, schedule, base, cfg.seed);
  }
  zs::write_video(cfg.output_path, zs::to_pixel_space(out));
}

void run_evaluate(const std::string& pred_path, const std::string& ref_path) {
  const zs::VideoLatent pred = zs::read_video(pred_path);
  const zs::VideoLatent ref = zs::read_video(ref_path);
  zs::KeyframeScores scores;
  if (pred.frames() == ref.frames()) {
    scores = {zs::psnr(pred, ref), zs::ssim(pred, ref)};
  } else {
    if (pred.frames() % ref.frames() != 0) {
      throw zs::DimensionError("prediction frame count is not a multiple of the reference's");
    }
    const zs::LinearMeasurement sampling = zs::build_sampling(ref.frames(), pred.frames() / ref.frames());
    scores = zs::keyframe_consistency(pred, ref, sampling);
  }
  std::printf("psnr\tssim\n%s\t%s\n", format_metric(scores.psnr).c_str(),
              format_metric(scores.ssim).c_str());
}

void run_inspect(std::size_t t0, std::size_t scale, const std::string& kind) {
  const zs::LinearMeasurement op = zs::build_measurement(zs::parse_measurement_kind(kind), t0, scale);
  print_matrix(kind.c_str(), op.matrix());
  print_matrix("pinv", op.pinv());
  const zs::Matrix& a = op.matrix();
  const zs::Matrix aap = zs::matmul(zs::matmul(a, op.pinv()), a);
  const zs::Matrix proj = zs::matmul(op.pinv(), a);
  std::printf("residual\tvalue\n");
  std::printf("|A A+ A - A|_inf\t%.3e\n", zs::max_abs_diff(aap, a));
  std::printf("|P P - P|_inf\t%.3e\n", zs::max_abs_diff(zs::matmul(proj, proj), proj));
  std::printf("|A A+ - I|_inf\t%.3e\n",
              zs::max_abs_diff(zs::matmul(a, op.pinv()), zs::Matrix::identity(a.rows())));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ZeroSmooth: training-free frame-rate upscaling for video diffusion samplers"};
  app.require_subcommand(1);

  Common train_args, base_args, up_args, bl_args;
  auto* train = app.add_subcommand("train-toy", "train the toy backbone on synthetic clips");
  add_common(train, train_args, false, false);
  train->add_option("--model,--out", train_args.model_path, "checkpoint to write (overrides path.model)");

  auto* base = app.add_subcommand("generate-base", "sample t0 key frames (stage 1)");
  add_common(base, base_args);

  std::string base_out;
  auto* up = app.add_subcommand("upsample", "run the self-cascaded sampler");
  add_common(up, up_args);
  up->add_option("--base-out", base_out, "also write the stage-1 video");

  std::string baseline_kind, baseline_base;
  auto* bl = app.add_subcommand("baseline", "direct inference or DDNM-latent baseline");
  bl->add_option("kind", baseline_kind, "direct | ddnm")->required()->check(CLI::IsMember({"direct", "ddnm"}));
  add_common(bl, bl_args);
  bl->add_option("--base", baseline_base, "key-frame video for ddnm (default: generated from the seed)");

  std::string pred, ref;
  auto* ev = app.add_subcommand("evaluate", "PSNR/SSIM, on key frames when frame counts differ");
  ev->add_option("--pred", pred)->required();
  ev->add_option("--ref", ref)->required();

  std::size_t t0 = 8, scale = 2;
  std::string kind = "sample";
  auto* inspect = app.add_subcommand("inspect-operator", "print a measurement operator and its identities");
  inspect->add_option("--t0", t0);
  inspect->add_option("--scale", scale);
  inspect->add_option("--kind", kind, "sample | a1 | a2");

  std::string in_path, dir = ".", stem = "frame";
  auto* ex = app.add_subcommand("export-frames", "write PGM/PPM images, one per frame");
  ex->add_option("--in", in_path)->required();
  ex->add_option("--dir", dir);
  ex->add_option("--stem", stem);

  bool defaults = false;
  std::string config_in;
  auto* cfg = app.add_subcommand("config", "print or check experiment configs");
  auto* defaults_flag = cfg->add_flag("--defaults", defaults, "print every key with its default");
  cfg->add_option("--check", config_in, "parse a config file and print it resolved")->excludes(defaults_flag);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error\tusage\t" << e.what() << '\n';
    return 2;
  }

  try {
    if (*train) run_train(train_args);
    if (*base) run_generate_base(base_args);
    if (*up) run_upsample(up_args, base_out);
    if (*bl) run_baseline(bl_args, baseline_kind, baseline_base);
    if (*ev) run_evaluate(pred, ref);
    if (*inspect) run_inspect(t0, scale, kind);
    if (*ex) {
      for (const auto& p : zs::export_frames(zs::read_video(in_path), dir, stem)) std::cout << p.string() << '\n';
    }
    if (*cfg) {
      if (!config_in.empty()) {
        std::cout << zs::format_experiment_config(zs::load_experiment_config(config_in));
      } else if (defaults) {
        std::cout << zs::format_experiment_config(zs::ExperimentConfig{});
      } else {
        throw zs::ConfigError("config needs --defaults or --check FILE");
      }
    }
  } catch (const zs::Error& e) {
    std::cerr << "error\t" << e.error_class() << '\t' << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error\tinternal\t" << e.what() << '\n';
    return 1;
  }
  return 0;
}
