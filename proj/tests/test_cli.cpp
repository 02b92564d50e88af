// Copyright (c) 2026 the mcr developers
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end checks of the installed command-line tool, including the
// documented exit-code contract.
#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "mcr/image.hpp"
#include "mcr/mask.hpp"

using namespace mcr;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("mcr_cli_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

int run(const std::string& args) {
  const std::string cmd =
      std::string(MCR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t count_files(const std::filesystem::path& dir) {
  std::size_t n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    n += e.is_regular_file();
  return n;
}

}  // namespace

TEST_CASE("cli synth", "[cli]") {
  const auto dir = temp_dir("synth");
  const std::string out1 = (dir / "a").string();
  REQUIRE(run("synth --out " + out1 + " --count 3 --size 24x24 --seed 7") == 0);
  REQUIRE(count_files(dir / "a") == 10);  // 9 images + manifest

  SECTION("same seed reproduces identical bytes") {
    const std::string out2 = (dir / "b").string();
    REQUIRE(run("synth --out " + out2 + " --count 3 --size 24x24 --seed 7") == 0);
    for (const auto& e : std::filesystem::directory_iterator(dir / "a")) {
      const auto name = e.path().filename();
      REQUIRE(slurp(e.path()) == slurp(dir / "b" / name));
    }
  }
  SECTION("count 0 is a usage error") {
    REQUIRE(run("synth --out " + (dir / "c").string() + " --count 0") == 2);
  }
  SECTION("unknown background kind is a usage error") {
    REQUIRE(run("synth --out " + (dir / "d").string() +
                " --count 1 --backgrounds plasma") == 2);
  }
}

TEST_CASE("cli perturb", "[cli]") {
  const auto dir = temp_dir("perturb");

  BinaryMask single(5, 5);
  single.at(2, 2) = 1;
  const auto single_path = dir / "single.pgm";
  save_mask(single_path, single);

  SECTION("dilate with k = 0 re-encodes the input canonically") {
    const auto out = dir / "same.pgm";
    REQUIRE(run("perturb --mask " + single_path.string() + " --out " +
                out.string() + " --mode dilate --k 0") == 0);
    REQUIRE(slurp(out) == slurp(single_path));
  }
  SECTION("dilate k = 1 on the center pixel matches the library oracle") {
    const auto out = dir / "d1.pgm";
    REQUIRE(run("perturb --mask " + single_path.string() + " --out " +
                out.string() + " --mode dilate --k 1") == 0);
    const auto golden = dir / "golden.pgm";
    save_mask(golden, dilate(single, 1));
    REQUIRE(slurp(out) == slurp(golden));
  }
  SECTION("rect on a single pixel is the identity") {
    const auto out = dir / "rect.pgm";
    REQUIRE(run("perturb --mask " + single_path.string() + " --out " +
                out.string() + " --mode rect") == 0);
    REQUIRE(load_mask(out) == single);
  }
  SECTION("random mode unions in extra coverage deterministically") {
    const auto out1 = dir / "r1.pgm";
    const auto out2 = dir / "r2.pgm";
    BinaryMask blob(32, 32);
    for (int y = 10; y < 14; ++y)
      for (int x = 10; x < 14; ++x) blob.at(y, x) = 1;
    const auto blob_path = dir / "blob.pgm";
    save_mask(blob_path, blob);
    REQUIRE(run("perturb --mask " + blob_path.string() + " --out " +
                out1.string() + " --mode random --seed 9") == 0);
    REQUIRE(run("perturb --mask " + blob_path.string() + " --out " +
                out2.string() + " --mode random --seed 9") == 0);
    REQUIRE(slurp(out1) == slurp(out2));
    REQUIRE(mask_subset(blob, load_mask(out1)));
  }
  SECTION("sample mode writes the dilated and reshaped pair") {
    BinaryMask center(9, 9);
    center.at(4, 4) = 1;
    const auto center_path = dir / "center.pgm";
    save_mask(center_path, center);
    const auto out = dir / "pair.pgm";
    REQUIRE(run("perturb --mask " + center_path.string() + " --out " +
                out.string() + " --mode sample --k 1 --seed 3") == 0);
    REQUIRE(std::filesystem::exists(out));
    REQUIRE(std::filesystem::exists(dir / "pair_reshaped.pgm"));
    REQUIRE(load_mask(out) == dilate(center, 1));
    REQUIRE(mask_subset(center, load_mask(dir / "pair_reshaped.pgm")));
  }
  SECTION("empty mask: dilate passes, rect and sample exit 4") {
    const auto empty_path = dir / "empty.pgm";
    save_mask(empty_path, BinaryMask(8, 8));
    REQUIRE(run("perturb --mask " + empty_path.string() + " --out " +
                (dir / "e1.pgm").string() + " --mode dilate --k 2") == 0);
    REQUIRE(run("perturb --mask " + empty_path.string() + " --out " +
                (dir / "e2.pgm").string() + " --mode rect") == 4);
    REQUIRE(run("perturb --mask " + empty_path.string() + " --out " +
                (dir / "e3.pgm").string() + " --mode sample") == 4);
    REQUIRE(run("perturb --mask " + empty_path.string() + " --out " +
                (dir / "e4.pgm").string() + " --mode random") == 4);
  }
  SECTION("missing mask file exits 3") {
    REQUIRE(run("perturb --mask " + (dir / "nope.pgm").string() + " --out " +
                (dir / "x.pgm").string() + " --mode dilate") == 3);
  }
  SECTION("bad mode exits 2") {
    REQUIRE(run("perturb --mask " + single_path.string() + " --out " +
                (dir / "y.pgm").string() + " --mode erode") == 2);
  }
}

TEST_CASE("cli gradcheck", "[cli]") {
  REQUIRE(run("gradcheck --seed 11 --hidden 8 --coords 40") == 0);
}

TEST_CASE("cli train, sample, eval pipeline", "[cli]") {
  const auto dir = temp_dir("pipeline");
  const std::string corpus = (dir / "corpus").string();
  REQUIRE(run("synth --out " + corpus + " --count 6 --size 16x16 --seed 21") == 0);
  const std::string manifest = corpus + "/manifest.tsv";

  // A smoke run: zero steps trains nothing but must produce a checkpoint.
  const std::string run0 = (dir / "run0").string();
  REQUIRE(run("train --corpus " + manifest + " --out " + run0 +
              " --steps 0 --set hidden_width=8 --set timesteps=50"
              " --set sample_steps=10") == 0);
  REQUIRE(std::filesystem::exists(run0 + "/ckpt_final.bin"));
  REQUIRE(std::filesystem::exists(run0 + "/loss.tsv"));

  const std::string evald = (dir / "eval0").string();
  REQUIRE(run("eval --ckpt " + run0 + "/ckpt_final.bin --corpus " + manifest +
              " --out " + evald + " --steps 5 --limit 2") == 0);
  REQUIRE(std::filesystem::exists(evald + "/metrics.txt"));
  REQUIRE(std::filesystem::exists(evald + "/metrics.tsv"));

  SECTION("short training run and deterministic reruns") {
    const std::string runa = (dir / "runa").string();
    const std::string runb = (dir / "runb").string();
    const std::string flags = " --steps 2 --set hidden_width=8"
                              " --set timesteps=50 --set sample_steps=10";
    REQUIRE(run("train --corpus " + manifest + " --out " + runa + flags) == 0);
    REQUIRE(run("train --corpus " + manifest + " --out " + runb + flags) == 0);
    REQUIRE(slurp(runa + "/loss.tsv") == slurp(runb + "/loss.tsv"));
    REQUIRE(slurp(runa + "/ckpt_final.bin") == slurp(runb + "/ckpt_final.bin"));
  }

  SECTION("sample composites the unmasked pixels exactly") {
    const auto manifest_dir = std::filesystem::path(corpus);
    const std::string image = (manifest_dir / "0000_composite.pgm").string();
    const std::string mask_path = (manifest_dir / "0000_mask.pgm").string();
    const std::string out = (dir / "inpainted.pgm").string();
    REQUIRE(run("sample --ckpt " + run0 + "/ckpt_final.bin --image " + image +
                " --mask " + mask_path + " --steps 5 --out " + out) == 0);
    const ImageTensor in_img = load_image(image);
    const ImageTensor out_img = load_image(out);
    const BinaryMask mask = load_mask(mask_path);
    for (int y = 0; y < mask.height; ++y)
      for (int x = 0; x < mask.width; ++x)
        if (!mask.at(y, x))
          REQUIRE(std::abs(out_img.at(0, y, x) - in_img.at(0, y, x)) <=
                  1.0 / 510.0);
  }

  SECTION("--corpus also accepts the corpus directory") {
    const std::string evald3 = (dir / "eval_dirflag").string();
    REQUIRE(run("eval --ckpt " + run0 + "/ckpt_final.bin --corpus " + corpus +
                " --out " + evald3 + " --steps 5 --limit 1") == 0);
    REQUIRE(std::filesystem::exists(evald3 + "/metrics.txt"));
  }

  SECTION("eval rejects ambiguous sources") {
    REQUIRE(run("eval --ckpt " + run0 + "/ckpt_final.bin --images " + run0 +
                " --corpus " + manifest + " --out " + (dir / "x").string()) == 2);
    REQUIRE(run("eval --corpus " + manifest + " --out " +
                (dir / "y").string()) == 2);
  }

  SECTION("eval scores a directory of precomputed outputs") {
    // Perfect outputs: copy each ground truth as NNNN_output.pgm.
    const auto outs = dir / "outputs";
    std::filesystem::create_directories(outs);
    for (int i = 0; i < 6; ++i) {
      char src[32], dst[32];
      std::snprintf(src, sizeof(src), "%04d_truth.pgm", i);
      std::snprintf(dst, sizeof(dst), "%04d_output.pgm", i);
      std::filesystem::copy_file(std::filesystem::path(corpus) / src,
                                 outs / dst);
    }
    const std::string evald2 = (dir / "eval_dir").string();
    REQUIRE(run("eval --images " + outs.string() + " --corpus " + manifest +
                " --out " + evald2) == 0);
    const std::string txt = slurp(evald2 + "/metrics.txt");
    REQUIRE(txt.find("psnr_inf_count = 6") != std::string::npos);
  }

  SECTION("train rejects unknown --set keys with exit 2") {
    REQUIRE(run("train --corpus " + manifest + " --out " +
                (dir / "bad").string() + " --steps 1 --set nope=1") == 2);
  }

  SECTION("corrupt checkpoint exits 3") {
    const auto broken = dir / "broken.bin";
    std::ofstream(broken, std::ios::binary) << "MCR1 not really";
    REQUIRE(run("sample --ckpt " + broken.string() + " --image " +
                (std::filesystem::path(corpus) / "0000_composite.pgm").string() +
                " --mask " +
                (std::filesystem::path(corpus) / "0000_mask.pgm").string() +
                " --out " + (dir / "z.pgm").string()) == 3);
  }
}

TEST_CASE("cli usage errors", "[cli]") {
  REQUIRE(run("") == 2);              // missing subcommand
  REQUIRE(run("frobnicate") == 2);    // unknown subcommand
  REQUIRE(run("synth") == 2);         // missing required --out
  REQUIRE(run("synth --out /tmp/x --wat 1") == 2);  // unknown flag
  REQUIRE(run("--help") == 0);
  REQUIRE(run("synth --help") == 0);
}
