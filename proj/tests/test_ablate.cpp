// Copyright (c) 2026 the mcr developers
// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mcr/ablation.hpp"

using namespace mcr;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("mcr_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

TrainConfig mini_config() {
  TrainConfig cfg;
  cfg.steps = 4;
  cfg.batch_size = 2;
  cfg.hidden_width = 8;
  cfg.timesteps = 50;
  cfg.sample_steps = 10;
  return cfg;
}

}  // namespace

TEST_CASE("ablation table structure and baseline cons", "[ablate]") {
  CorpusConfig cc;
  cc.count = 6;
  cc.width = cc.height = 16;
  cc.seed = 4;
  const auto manifest = make_corpus(cc, temp_dir("abl_corpus"));

  AblationOptions opts;
  opts.base = mini_config();
  opts.seeds = {1};
  opts.eval_count = 2;
  opts.eval_steps = 5;
  const auto out = temp_dir("abl_out");
  const auto table = ablate(manifest, out, opts);

  REQUIRE(table.size() == 4);
  REQUIRE(table[0].mode == TrainMode::kMcr);
  REQUIRE(table[1].mode == TrainMode::kDilateOnly);
  REQUIRE(table[2].mode == TrainMode::kReshapeOnly);
  REQUIRE(table[3].mode == TrainMode::kBaseline);
  REQUIRE(table[3].cons == 0.0);  // the baseline arm has no consistency term
  for (const auto& row : table) REQUIRE(row.gap >= 0.0);

  std::ifstream tsv(out / "ablation.tsv");
  std::string header;
  REQUIRE(std::getline(tsv, header));
  REQUIRE(header == "arm\tpsnr\tssim\tmse\tgap\tcons");
  std::vector<std::string> arms;
  std::string line;
  while (std::getline(tsv, line)) {
    REQUIRE(std::count(line.begin(), line.end(), '\t') == 5);
    arms.push_back(line.substr(0, line.find('\t')));
  }
  REQUIRE(arms == std::vector<std::string>{"mcr", "dilate_only", "reshape_only",
                                           "baseline"});

  // Per-run artifacts exist.
  REQUIRE(std::filesystem::exists(out / "baseline" / "seed_1" / "loss.tsv"));
  REQUIRE(std::filesystem::exists(out / "mcr" / "seed_1" / "metrics.txt"));
  REQUIRE(std::filesystem::exists(out / "mcr" / "seed_1" / "ckpt_final.bin"));
}

TEST_CASE("degenerate perturbations collapse all arms to one trajectory", "[ablate]") {
  CorpusConfig cc;
  cc.count = 6;
  cc.width = cc.height = 16;
  cc.seed = 14;
  const auto manifest = make_corpus(cc, temp_dir("abl_degen_corpus"));

  TrainConfig base = mini_config();
  base.steps = 6;
  base.dilation_auto = false;
  base.perturb.dilation_radius_k = 0;
  base.perturb.rect_probability = 0.0;
  base.perturb.random_mask_params.num_strokes_min = 0;
  base.perturb.random_mask_params.num_strokes_max = 0;
  base.perturb.random_mask_params.num_rects_min = 0;
  base.perturb.random_mask_params.num_rects_max = 0;

  std::vector<TrainResult> runs;
  for (const TrainMode mode :
       {TrainMode::kMcr, TrainMode::kDilateOnly, TrainMode::kReshapeOnly,
        TrainMode::kBaseline}) {
    TrainConfig cfg = base;
    cfg.mode = mode;
    runs.push_back(
        train(cfg, manifest, temp_dir("abl_degen_" + to_string(mode))));
  }
  // The learned state is byte-equal across arms; only the config digest in
  // the checkpoint trailer distinguishes them.
  for (std::size_t i = 1; i < runs.size(); ++i) {
    REQUIRE(runs[i].state.params.flat == runs[0].state.params.flat);
    REQUIRE(runs[i].state.adam_m == runs[0].state.adam_m);
    REQUIRE(runs[i].state.adam_v == runs[0].state.adam_v);
    REQUIRE(runs[i].state.step == runs[0].state.step);
  }
  for (const auto& run : runs)
    for (const auto& step : run.history) REQUIRE(step.cons == 0.0);
}
