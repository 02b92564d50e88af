// Copyright (c) 2026 the mcr developers
// SPDX-License-Identifier: Apache-2.0
//
// Ablation harness: trains the four arms (mcr, dilate_only, reshape_only,
// baseline) under identical budgets across a set of seeds, evaluates each
// with the consistency-gap probe, and tabulates per-arm means.
#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mcr/diffusion.hpp"
#include "mcr/metrics.hpp"
#include "mcr/train.hpp"

namespace mcr {

inline constexpr std::array<TrainMode, 4> kAblationArms = {
    TrainMode::kMcr, TrainMode::kDilateOnly, TrainMode::kReshapeOnly,
    TrainMode::kBaseline};

struct ArmStats {
  TrainMode mode = TrainMode::kMcr;
  double psnr = 0.0;
  double ssim = 0.0;
  double mse = 0.0;
  double gap = 0.0;
  double cons = 0.0;  // training consistency loss, mean over the last steps
  double psnr_masked = 0.0;
};

struct AblationOptions {
  TrainConfig base;                      // mode and seed are overwritten per arm
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  int eval_count = 0;                    // 0: evaluate the whole corpus
  int eval_steps = 20;
  std::uint64_t eval_seed = 0;
  std::function<void(const std::string&)> progress;  // optional
};

/// Inpainter over a trained state, for evaluation.
inline auto make_inpainter(const DenoiserParams& params,
                           const NoiseSchedule& sched, int n_steps) {
  return [params, sched, n_steps](const ImageTensor& image,
                                  const BinaryMask& mask,
                                  std::uint64_t seed) -> ImageTensor {
    DenoiserModel model{params};
    Rng rng(seed);
    return inpaint(model, image, mask, sched, n_steps, rng);
  };
}

/// Trains and evaluates every (arm, seed) pair. Writes per-run artifacts
/// under out_dir/<arm>/seed_<s>/ and the per-arm mean table to
/// out_dir/ablation.tsv. Returns the four arm rows in fixed order.
inline std::vector<ArmStats> ablate(const std::filesystem::path& corpus_manifest,
                                    const std::filesystem::path& out_dir,
                                    const AblationOptions& opts) {
  if (opts.seeds.empty()) throw ConfigError("ablate: need at least one seed");
  const std::vector<RemovalTriplet> corpus = load_corpus(corpus_manifest);
  std::span<const RemovalTriplet> eval_set(corpus);
  if (opts.eval_count > 0 &&
      static_cast<std::size_t>(opts.eval_count) < corpus.size())
    eval_set = eval_set.subspan(0, static_cast<std::size_t>(opts.eval_count));

  std::vector<ArmStats> table;
  for (const TrainMode arm : kAblationArms) {
    ArmStats stats;
    stats.mode = arm;
    for (const std::uint64_t seed : opts.seeds) {
      TrainConfig cfg = opts.base;
      cfg.mode = arm;
      cfg.seed = seed;
      const std::filesystem::path run_dir =
          out_dir / to_string(arm) / ("seed_" + std::to_string(seed));
      if (opts.progress)
        opts.progress("training " + to_string(arm) + " seed " +
                      std::to_string(seed));
      TrainResult run = train(cfg, corpus_manifest, run_dir);

      EvalOptions ev;
      ev.seed = opts.eval_seed;
      ev.with_gap = true;
      ev.perturb = run.state.config.perturb;  // resolved dilation radius
      const MetricsReport rep =
          evaluate(make_inpainter(run.state.params, run.state.schedule,
                                  opts.eval_steps),
                   eval_set, ev);
      write_metrics_files(rep, run_dir);

      stats.psnr += rep.psnr_mean;
      stats.ssim += rep.ssim_mean;
      stats.mse += rep.mse_mean;
      stats.gap += rep.gap_mean;
      stats.psnr_masked += rep.psnr_masked_mean;
      const std::size_t n = run.history.size();
      const std::size_t window = std::min<std::size_t>(50, n);
      double cons = 0.0;
      for (std::size_t i = n - window; i < n; ++i) cons += run.history[i].cons;
      stats.cons += window > 0 ? cons / static_cast<double>(window) : 0.0;
    }
    const auto n_seeds = static_cast<double>(opts.seeds.size());
    stats.psnr /= n_seeds;
    stats.ssim /= n_seeds;
    stats.mse /= n_seeds;
    stats.gap /= n_seeds;
    stats.cons /= n_seeds;
    stats.psnr_masked /= n_seeds;
    table.push_back(stats);
  }

  const std::filesystem::path table_path = out_dir / "ablation.tsv";
  std::ofstream out(table_path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + table_path.string());
  out << "arm\tpsnr\tssim\tmse\tgap\tcons\n";
  char buf[256];
  for (const ArmStats& s : table) {
    std::snprintf(buf, sizeof(buf), "%s\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\n",
                  to_string(s.mode).c_str(), s.psnr, s.ssim, s.mse, s.gap,
                  s.cons);
    out << buf;
  }
  if (!out.flush()) throw IoError("short write to " + table_path.string());
  return table;
}

}  // namespace mcr
