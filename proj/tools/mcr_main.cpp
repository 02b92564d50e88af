// Copyright (c) 2026 the mcr developers
// SPDX-License-Identifier: Apache-2.0
//
// Command-line entry point. Subcommands: synth, perturb, train, sample,
// eval, ablate, gradcheck. Every run echoes its resolved configuration so a
// log line is enough to reproduce it. Exit codes: 0 ok, 2 usage/config,
// 3 I/O or malformed file, 4 domain error, 5 gradient check failure.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mcr/ablation.hpp"
#include "mcr/corpus.hpp"
#include "mcr/denoiser.hpp"
#include "mcr/diffusion.hpp"
#include "mcr/mask.hpp"
#include "mcr/metrics.hpp"
#include "mcr/train.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitDomain = 4;
constexpr int kExitGradCheck = 5;

struct CliSettings {
  // synth
  std::string out_dir;
  int count = 200;
  std::string size = "64x64";
  int channels = 1;
  std::uint64_t seed = 1;
  std::string backgrounds = "gradient,stripes,smooth-noise";
  std::string shapes = "disc,rectangle,polygon";
  double area_min = 0.02;
  double area_max = 0.15;
  // perturb
  std::string mask_path;
  std::string out_file;
  std::string perturb_mode;
  int k = -1;  // -1: auto from width
  // train
  std::string config_path;
  std::string corpus_manifest;
  std::string resume_path;
  std::vector<std::string> overrides;
  long steps = -1;
  double lr = -1.0;
  double lambda = -1.0;
  int batch = -1;
  std::string mode;
  // sample/eval
  std::string ckpt_path;
  std::string image_path;
  std::string images_dir;
  int sample_steps = 20;
  bool with_gap = false;
  int limit = 0;
  bool save_images = false;
  // ablate
  std::string seeds_csv = "1,2,3";
  int eval_count = 32;
  // gradcheck
  int coords = 120;
  int hidden = 32;
};

std::pair<int, int> parse_size(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos)
    throw mcr::ConfigError("--size must look like 64x64");
  return {static_cast<int>(mcr::parse_long(s.substr(0, x), "--size width")),
          static_cast<int>(mcr::parse_long(s.substr(x + 1), "--size height"))};
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto comma = s.find(',', pos);
    const std::string item =
        mcr::trim(s.substr(pos, comma == std::string::npos ? std::string::npos
                                                           : comma - pos));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

void echo(const std::string& key, const std::string& value) {
  std::cout << key << " = " << value << "\n";
}

// --corpus accepts either the manifest file or the directory holding it.
std::filesystem::path resolve_manifest(const std::string& corpus) {
  std::filesystem::path p(corpus);
  if (std::filesystem::is_directory(p)) return p / "manifest.tsv";
  return p;
}

int run_synth(const CliSettings& s) {
  mcr::CorpusConfig cfg;
  cfg.count = s.count;
  std::tie(cfg.width, cfg.height) = parse_size(s.size);
  cfg.channels = s.channels;
  cfg.seed = s.seed;
  cfg.shape_area_min = s.area_min;
  cfg.shape_area_max = s.area_max;
  cfg.background_kinds.clear();
  for (const auto& b : split_csv(s.backgrounds)) {
    if (b == "gradient") cfg.background_kinds.push_back(mcr::BackgroundKind::kGradient);
    else if (b == "stripes") cfg.background_kinds.push_back(mcr::BackgroundKind::kStripes);
    else if (b == "smooth-noise") cfg.background_kinds.push_back(mcr::BackgroundKind::kSmoothNoise);
    else throw mcr::ConfigError("unknown background kind '" + b + "'");
  }
  cfg.shape_kinds.clear();
  for (const auto& k : split_csv(s.shapes)) {
    if (k == "disc") cfg.shape_kinds.push_back(mcr::ShapeKind::kDisc);
    else if (k == "rectangle") cfg.shape_kinds.push_back(mcr::ShapeKind::kRectangle);
    else if (k == "polygon") cfg.shape_kinds.push_back(mcr::ShapeKind::kPolygon);
    else throw mcr::ConfigError("unknown shape kind '" + k + "'");
  }
  try {
    mcr::validate(cfg);
  } catch (const mcr::Error& e) {
    throw mcr::ConfigError(e.what());
  }
  echo("command", "synth");
  echo("out", s.out_dir);
  echo("count", std::to_string(cfg.count));
  echo("size", std::to_string(cfg.width) + "x" + std::to_string(cfg.height));
  echo("channels", std::to_string(cfg.channels));
  echo("seed", std::to_string(cfg.seed));
  echo("backgrounds", s.backgrounds);
  echo("shapes", s.shapes);
  echo("area_fraction", std::to_string(cfg.shape_area_min) + ".." +
                            std::to_string(cfg.shape_area_max));
  const auto manifest = mcr::make_corpus(cfg, s.out_dir);
  std::cout << "wrote " << manifest.string() << "\n";
  return kExitOk;
}

int run_perturb(const CliSettings& s) {
  const mcr::BinaryMask mask = mcr::load_mask(s.mask_path);
  const int k = s.k >= 0 ? s.k : mcr::default_dilation_radius(mask.width);
  mcr::PerturbConfig cfg;
  cfg.dilation_radius_k = k;
  echo("command", "perturb");
  echo("mask", s.mask_path);
  echo("mode", s.perturb_mode);
  echo("k", std::to_string(k));
  echo("seed", std::to_string(s.seed));
  echo("out", s.out_file);
  mcr::Rng rng(s.seed);
  if (s.perturb_mode == "dilate") {
    mcr::save_mask(s.out_file, mcr::dilate(mask, k));
  } else if (s.perturb_mode == "rect") {
    mcr::save_mask(s.out_file, mcr::bounding_rect(mask));
  } else if (s.perturb_mode == "random") {
    if (mask.empty_mask()) throw mcr::EmptyMaskError("perturb random: empty mask");
    mcr::save_mask(s.out_file,
                   mcr::mask_union(mask, mcr::random_mask(mask.width, mask.height,
                                                          cfg.random_mask_params,
                                                          rng)));
  } else if (s.perturb_mode == "sample") {
    const auto [dilated, reshaped] = mcr::sample_perturbations(mask, cfg, rng);
    mcr::save_mask(s.out_file, dilated);
    std::filesystem::path second(s.out_file);
    second.replace_filename(second.stem().string() + "_reshaped" +
                            second.extension().string());
    mcr::save_mask(second, reshaped);
    std::cout << "wrote " << second.string() << "\n";
  } else {
    throw mcr::ConfigError("--mode must be dilate|rect|random|sample");
  }
  std::cout << "wrote " << s.out_file << "\n";
  return kExitOk;
}

mcr::TrainConfig resolve_train_config(const CliSettings& s) {
  mcr::TrainConfig cfg;
  if (!s.config_path.empty()) mcr::apply_config_file(cfg, s.config_path);
  for (const auto& kv : s.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw mcr::ConfigError("--set expects key=value, got '" + kv + "'");
    mcr::apply_config_kv(cfg, mcr::trim(kv.substr(0, eq)),
                         mcr::trim(kv.substr(eq + 1)));
  }
  if (s.steps >= 0) cfg.steps = s.steps;
  if (s.lr > 0) cfg.learning_rate = s.lr;
  if (s.lambda >= 0) cfg.lambda_cons = s.lambda;
  if (s.batch > 0) cfg.batch_size = s.batch;
  if (!s.mode.empty()) cfg.mode = mcr::train_mode_from_string(s.mode);
  if (s.seed != 1) cfg.seed = s.seed;
  return cfg;
}

int run_train(const CliSettings& s) {
  mcr::TrainConfig cfg = resolve_train_config(s);
  mcr::validate(cfg);
  echo("command", "train");
  echo("corpus", s.corpus_manifest);
  echo("out", s.out_dir);
  if (!s.resume_path.empty()) echo("resume", s.resume_path);
  std::cout << mcr::canonical_config_text(cfg);
  const std::filesystem::path resume(s.resume_path);
  const auto result =
      mcr::train(cfg, resolve_manifest(s.corpus_manifest), s.out_dir,
                 s.resume_path.empty() ? nullptr : &resume);
  std::cout << "final_step = " << result.state.step << "\n";
  std::cout << "checkpoint = " << result.checkpoint_path.string() << "\n";
  std::cout << "loss_log = " << result.loss_log_path.string() << "\n";
  return kExitOk;
}

int run_sample(const CliSettings& s) {
  const mcr::Checkpoint ckpt = mcr::load_checkpoint(s.ckpt_path);
  const mcr::ImageTensor image = mcr::load_image(s.image_path);
  const mcr::BinaryMask mask = mcr::load_mask(s.mask_path);
  echo("command", "sample");
  echo("ckpt", s.ckpt_path);
  echo("image", s.image_path);
  echo("mask", s.mask_path);
  echo("steps", std::to_string(s.sample_steps));
  echo("seed", std::to_string(s.seed));
  echo("out", s.out_file);
  const mcr::NoiseSchedule sched = mcr::linear_schedule(200);
  mcr::DenoiserModel model{ckpt.params};
  mcr::Rng rng(s.seed);
  const mcr::ImageTensor out =
      mcr::inpaint(model, image, mask, sched, s.sample_steps, rng);
  mcr::save_image(s.out_file, out);
  std::cout << "wrote " << s.out_file << "\n";
  return kExitOk;
}

int run_eval(const CliSettings& s) {
  if (s.ckpt_path.empty() == s.images_dir.empty())
    throw mcr::ConfigError("eval needs exactly one of --ckpt or --images");
  const std::vector<mcr::RemovalTriplet> corpus =
      mcr::load_corpus(resolve_manifest(s.corpus_manifest));
  std::span<const mcr::RemovalTriplet> subset(corpus);
  if (s.limit > 0 && static_cast<std::size_t>(s.limit) < corpus.size())
    subset = subset.subspan(0, static_cast<std::size_t>(s.limit));

  echo("command", "eval");
  echo("corpus", s.corpus_manifest);
  echo("out", s.out_dir);
  echo("count", std::to_string(subset.size()));
  echo("steps", std::to_string(s.sample_steps));
  echo("seed", std::to_string(s.seed));
  echo("gap", s.with_gap ? "true" : "false");

  mcr::MetricsReport rep;
  std::vector<mcr::ImageTensor> outputs;
  if (!s.ckpt_path.empty()) {
    echo("ckpt", s.ckpt_path);
    const mcr::Checkpoint ckpt = mcr::load_checkpoint(s.ckpt_path);
    const mcr::NoiseSchedule sched = mcr::linear_schedule(200);
    mcr::EvalOptions opts;
    opts.seed = s.seed;
    opts.with_gap = s.with_gap;
    const int width = subset.empty() ? 64 : subset.front().composite.width;
    opts.perturb.dilation_radius_k =
        s.k >= 0 ? s.k : mcr::default_dilation_radius(width);
    rep = mcr::evaluate(
        mcr::make_inpainter(ckpt.params, sched, s.sample_steps), subset, opts,
        &outputs);
  } else {
    echo("images", s.images_dir);
    if (s.with_gap)
      throw mcr::ConfigError("--gap requires --ckpt (it must run the model)");
    std::vector<mcr::ImageTensor> loaded;
    loaded.reserve(subset.size());
    const mcr::Manifest manifest =
        mcr::load_manifest(resolve_manifest(s.corpus_manifest));
    for (std::size_t i = 0; i < subset.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "%04d", manifest.entries[i].index);
      const std::string stem = std::string(name) + "_output";
      std::filesystem::path p = std::filesystem::path(s.images_dir) /
                                (stem + (subset[i].composite.channels == 1
                                             ? ".pgm"
                                             : ".ppm"));
      loaded.push_back(mcr::load_image(p));
    }
    rep = mcr::evaluate_outputs(loaded, subset);
  }
  mcr::write_metrics_files(rep, s.out_dir);
  if (s.save_images && !outputs.empty()) {
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "%04zu", i);
      const char* ext = outputs[i].channels == 1 ? ".pgm" : ".ppm";
      mcr::save_image(std::filesystem::path(s.out_dir) /
                          (std::string(name) + "_output" + ext),
                      outputs[i]);
    }
  }
  std::printf("psnr_mean = %.6f\nssim_mean = %.6f\nmse_mean = %.9g\n",
              rep.psnr_mean, rep.ssim_mean, rep.mse_mean);
  if (rep.has_gap) std::printf("gap_mean = %.9g\n", rep.gap_mean);
  return kExitOk;
}

int run_ablate(const CliSettings& s) {
  mcr::AblationOptions opts;
  opts.base = resolve_train_config(s);
  opts.seeds.clear();
  for (const auto& seed : split_csv(s.seeds_csv))
    opts.seeds.push_back(mcr::parse_u64(seed, "--seeds"));
  opts.eval_count = s.eval_count;
  opts.eval_steps = s.sample_steps;
  opts.progress = [](const std::string& msg) { std::cout << msg << "\n"; };
  echo("command", "ablate");
  echo("corpus", s.corpus_manifest);
  echo("out", s.out_dir);
  echo("seeds", s.seeds_csv);
  echo("eval_count", std::to_string(opts.eval_count));
  echo("eval_steps", std::to_string(opts.eval_steps));
  std::cout << mcr::canonical_config_text(opts.base);
  const auto table =
      mcr::ablate(resolve_manifest(s.corpus_manifest), s.out_dir, opts);
  std::printf("%-12s %10s %8s %12s %12s %12s\n", "arm", "psnr", "ssim", "mse",
              "gap", "cons");
  for (const auto& row : table)
    std::printf("%-12s %10.4f %8.4f %12.6g %12.6g %12.6g\n",
                mcr::to_string(row.mode).c_str(), row.psnr, row.ssim, row.mse,
                row.gap, row.cons);
  std::cout << "wrote " << (std::filesystem::path(s.out_dir) / "ablation.tsv").string()
            << "\n";
  return kExitOk;
}

int run_gradcheck(const CliSettings& s) {
  echo("command", "gradcheck");
  echo("seed", std::to_string(s.seed));
  echo("channels", std::to_string(s.channels));
  echo("hidden_width", std::to_string(s.hidden));
  echo("coords", std::to_string(s.coords));
  const mcr::DenoiserConfig cfg =
      mcr::make_denoiser_config(s.channels, s.hidden);
  const mcr::GradCheckReport rep = mcr::grad_check(cfg, s.seed, s.coords);
  std::printf("max_rel_error = %.3e over %d coordinates (tolerance %.1e)\n",
              rep.max_rel_error, rep.coords_checked, rep.tolerance);
  std::printf("%s\n", rep.pass ? "PASS" : "FAIL");
  return rep.pass ? kExitOk : kExitGradCheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mask-consistency regularization for diffusion object removal"};
  app.require_subcommand(1);
  CliSettings s;

  auto* synth = app.add_subcommand("synth", "generate a removal corpus");
  synth->add_option("--out", s.out_dir, "output directory")->required();
  synth->add_option("--count", s.count, "number of triplets")->capture_default_str();
  synth->add_option("--size", s.size, "image size WxH")->capture_default_str();
  synth->add_option("--channels", s.channels, "1 or 3")->capture_default_str();
  synth->add_option("--seed", s.seed, "corpus seed")->capture_default_str();
  synth->add_option("--backgrounds", s.backgrounds, "subset of gradient,stripes,smooth-noise")
      ->capture_default_str();
  synth->add_option("--shapes", s.shapes, "subset of disc,rectangle,polygon")
      ->capture_default_str();
  synth->add_option("--area-min", s.area_min, "min shape area fraction")->capture_default_str();
  synth->add_option("--area-max", s.area_max, "max shape area fraction")->capture_default_str();

  auto* perturb = app.add_subcommand("perturb", "perturb a mask file");
  perturb->add_option("--mask", s.mask_path, "input mask (PGM)")->required();
  perturb->add_option("--out", s.out_file, "output mask (PGM)")->required();
  perturb->add_option("--mode", s.perturb_mode, "dilate|rect|random|sample")->required();
  perturb->add_option("--k", s.k, "dilation radius (default: scaled by width)");
  perturb->add_option("--seed", s.seed, "rng seed")->capture_default_str();

  auto* train = app.add_subcommand("train", "train a denoiser on a corpus");
  train->add_option("--corpus", s.corpus_manifest, "corpus manifest or directory")->required();
  train->add_option("--out", s.out_dir, "output directory")->required();
  train->add_option("--config", s.config_path, "key = value config file");
  train->add_option("--set", s.overrides, "override: key=value (repeatable)");
  train->add_option("--steps", s.steps, "training steps");
  train->add_option("--seed", s.seed, "training seed")->capture_default_str();
  train->add_option("--lr", s.lr, "learning rate");
  train->add_option("--lambda", s.lambda, "consistency weight");
  train->add_option("--batch", s.batch, "batch size");
  train->add_option("--mode", s.mode, "mcr|dilate_only|reshape_only|baseline");
  train->add_option("--resume", s.resume_path, "checkpoint to resume from");

  auto* sample = app.add_subcommand("sample", "inpaint one image");
  sample->add_option("--ckpt", s.ckpt_path, "checkpoint file")->required();
  sample->add_option("--image", s.image_path, "input image (PGM/PPM)")->required();
  sample->add_option("--mask", s.mask_path, "mask (PGM)")->required();
  sample->add_option("--steps", s.sample_steps, "sampler steps")->capture_default_str();
  sample->add_option("--seed", s.seed, "sampling seed")->capture_default_str();
  sample->add_option("--out", s.out_file, "output image")->required();

  auto* eval = app.add_subcommand("eval", "evaluate against a corpus");
  eval->add_option("--ckpt", s.ckpt_path, "checkpoint file");
  eval->add_option("--images", s.images_dir, "directory of NNNN_output images");
  eval->add_option("--corpus", s.corpus_manifest, "corpus manifest or directory")->required();
  eval->add_option("--out", s.out_dir, "report directory")->required();
  eval->add_option("--steps", s.sample_steps, "sampler steps")->capture_default_str();
  eval->add_option("--seed", s.seed, "evaluation seed")->capture_default_str();
  eval->add_option("--limit", s.limit, "evaluate only the first N triplets");
  eval->add_option("--k", s.k, "gap probe dilation radius");
  eval->add_flag("--gap", s.with_gap, "also probe the consistency gap");
  eval->add_flag("--save-images", s.save_images, "write inpainted outputs");

  auto* ablate = app.add_subcommand("ablate", "train and compare the four arms");
  ablate->add_option("--corpus", s.corpus_manifest, "corpus manifest or directory")->required();
  ablate->add_option("--out", s.out_dir, "output directory")->required();
  ablate->add_option("--seeds", s.seeds_csv, "comma-separated seeds")->capture_default_str();
  ablate->add_option("--config", s.config_path, "base config file");
  ablate->add_option("--set", s.overrides, "override: key=value (repeatable)");
  ablate->add_option("--steps", s.steps, "steps per arm");
  ablate->add_option("--eval-count", s.eval_count, "triplets used for evaluation")
      ->capture_default_str();
  ablate->add_option("--eval-steps", s.sample_steps, "sampler steps for evaluation")
      ->capture_default_str();

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  gradcheck->add_option("--seed", s.seed, "rng seed")->capture_default_str();
  gradcheck->add_option("--channels", s.channels, "image channels")->capture_default_str();
  gradcheck->add_option("--hidden", s.hidden, "hidden width")->capture_default_str();
  gradcheck->add_option("--coords", s.coords, "coordinates to check")->capture_default_str();

  // Extra validation that CLI11 ranges don't cover.
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (synth->parsed()) {
      if (s.count < 1) throw mcr::ConfigError("--count must be >= 1");
      return run_synth(s);
    }
    if (perturb->parsed()) return run_perturb(s);
    if (train->parsed()) return run_train(s);
    if (sample->parsed()) return run_sample(s);
    if (eval->parsed()) return run_eval(s);
    if (ablate->parsed()) return run_ablate(s);
    if (gradcheck->parsed()) return run_gradcheck(s);
    return kExitUsage;
  } catch (const mcr::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const mcr::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const mcr::MalformedFileError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const mcr::CorruptCheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const mcr::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  }
}
