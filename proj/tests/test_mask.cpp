// Copyright (c) 2026 the mcr developers
// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "mcr/mask.hpp"
#include "mcr/rng.hpp"

using namespace mcr;

namespace {

// Definitional oracle: neighborhood-OR over the clipped Chebyshev ball.
BinaryMask dilate_oracle(const BinaryMask& m, int k) {
  BinaryMask out(m.width, m.height);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      std::uint8_t v = 0;
      for (int dy = -k; dy <= k && !v; ++dy)
        for (int dx = -k; dx <= k && !v; ++dx) {
          const int u = y + dy, w = x + dx;
          if (m.in_bounds(u, w) && m.at(u, w)) v = 1;
        }
      out.at(y, x) = v;
    }
  return out;
}

// Min/max scan oracle for the enclosing rectangle.
BinaryMask bounding_rect_oracle(const BinaryMask& m) {
  int imin = m.height, imax = -1, jmin = m.width, jmax = -1;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m.at(y, x)) {
        if (y < imin) imin = y;
        if (y > imax) imax = y;
        if (x < jmin) jmin = x;
        if (x > jmax) jmax = x;
      }
  REQUIRE(imax >= 0);
  BinaryMask out(m.width, m.height);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      out.at(y, x) = (y >= imin && y <= imax && x >= jmin && x <= jmax) ? 1 : 0;
  return out;
}

BinaryMask random_bits(int w, int h, double density, Rng& rng) {
  BinaryMask m(w, h);
  for (auto& v : m.values) v = rng.uniform() < density ? 1 : 0;
  return m;
}

RandomMaskParams empty_random_params() {
  RandomMaskParams p;
  p.num_strokes_min = p.num_strokes_max = 0;
  p.num_rects_min = p.num_rects_max = 0;
  return p;
}

}  // namespace

TEST_CASE("dilate matches the neighborhood-OR oracle", "[mask]") {
  Rng rng(101);
  for (int i = 0; i < 1000; ++i) {
    const int k = 1 + static_cast<int>(rng.uniform_below(3));
    const BinaryMask m = random_bits(16, 16, rng.uniform(0.02, 0.3), rng);
    REQUIRE(dilate(m, k) == dilate_oracle(m, k));
  }
}

TEST_CASE("dilate basics", "[mask]") {
  SECTION("empty stays empty") {
    const BinaryMask empty(8, 8);
    REQUIRE(dilate(empty, 3) == empty);
  }
  SECTION("single center pixel grows to the structuring element") {
    BinaryMask m(5, 5);
    m.at(2, 2) = 1;
    const BinaryMask d = dilate(m, 1);
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 5; ++x)
        REQUIRE(d.at(y, x) == ((y >= 1 && y <= 3 && x >= 1 && x <= 3) ? 1 : 0));
  }
  SECTION("k = 0 is identity") {
    Rng rng(7);
    const BinaryMask m = random_bits(9, 13, 0.2, rng);
    REQUIRE(dilate(m, 0) == m);
  }
  SECTION("negative radius is rejected") {
    REQUIRE_THROWS_AS(dilate(BinaryMask(4, 4), -1), InvalidRangeError);
  }
}

TEST_CASE("dilate properties: containment, monotonicity, composition", "[mask]") {
  Rng rng(202);
  for (int i = 0; i < 1000; ++i) {
    const int k = 1 + static_cast<int>(rng.uniform_below(3));
    BinaryMask m = random_bits(16, 16, 0.1, rng);
    const BinaryMask d = dilate(m, k);
    REQUIRE(mask_subset(m, d));

    // Monotonicity: add pixels to get a superset.
    BinaryMask bigger = m;
    for (int j = 0; j < 5; ++j)
      bigger.values[rng.uniform_below(bigger.values.size())] = 1;
    REQUIRE(mask_subset(d, dilate(bigger, k)));
  }

  // Composition on interior masks: k1+k2 dilation must not reach the border.
  Rng rng2(203);
  for (int i = 0; i < 1000; ++i) {
    BinaryMask m(20, 20);
    const int k1 = 1 + static_cast<int>(rng2.uniform_below(2));
    const int k2 = 1 + static_cast<int>(rng2.uniform_below(2));
    const int margin = k1 + k2;
    for (int j = 0; j < 6; ++j) {
      const int y = margin + static_cast<int>(rng2.uniform_below(20 - 2 * margin));
      const int x = margin + static_cast<int>(rng2.uniform_below(20 - 2 * margin));
      m.at(y, x) = 1;
    }
    REQUIRE(dilate(dilate(m, k1), k2) == dilate(m, k1 + k2));
  }
}

TEST_CASE("bounding_rect matches the min/max oracle", "[mask]") {
  Rng rng(303);
  for (int i = 0; i < 1000; ++i) {
    BinaryMask m = random_bits(16, 16, rng.uniform(0.01, 0.3), rng);
    if (m.empty_mask()) m.at(static_cast<int>(rng.uniform_below(16)),
                             static_cast<int>(rng.uniform_below(16))) = 1;
    REQUIRE(bounding_rect(m) == bounding_rect_oracle(m));
  }
}

TEST_CASE("bounding_rect basics", "[mask]") {
  SECTION("two-corner fixture") {
    BinaryMask m(6, 6);
    m.at(1, 1) = 1;
    m.at(3, 4) = 1;
    const BinaryMask r = bounding_rect(m);
    REQUIRE(r.count() == 12);
    for (int y = 1; y <= 3; ++y)
      for (int x = 1; x <= 4; ++x) REQUIRE(r.at(y, x) == 1);
  }
  SECTION("single pixel is a fixed point") {
    BinaryMask m(7, 5);
    m.at(2, 6) = 1;
    REQUIRE(bounding_rect(m) == m);
  }
  SECTION("filled rectangle is a fixed point") {
    BinaryMask m(8, 8);
    for (int y = 2; y <= 5; ++y)
      for (int x = 3; x <= 6; ++x) m.at(y, x) = 1;
    REQUIRE(bounding_rect(m) == m);
  }
  SECTION("empty mask is an error") {
    REQUIRE_THROWS_AS(bounding_rect(BinaryMask(4, 4)), EmptyMaskError);
  }
  SECTION("minimality: any thinner rectangle misses a set pixel") {
    Rng rng(404);
    for (int i = 0; i < 50; ++i) {
      BinaryMask m = random_bits(12, 12, 0.08, rng);
      if (m.empty_mask()) continue;
      const BinaryMask r = bounding_rect(m);
      int imin = 12, imax = -1, jmin = 12, jmax = -1;
      for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 12; ++x)
          if (r.at(y, x)) {
            imin = std::min(imin, y);
            imax = std::max(imax, y);
            jmin = std::min(jmin, x);
            jmax = std::max(jmax, x);
          }
      // Dropping the first/last row/column must orphan some pixel of m.
      auto covered = [&](int i0, int i1, int j0, int j1) {
        for (int y = 0; y < 12; ++y)
          for (int x = 0; x < 12; ++x)
            if (m.at(y, x) && (y < i0 || y > i1 || x < j0 || x > j1))
              return false;
        return true;
      };
      if (imax > imin) {
        REQUIRE_FALSE(covered(imin + 1, imax, jmin, jmax));
        REQUIRE_FALSE(covered(imin, imax - 1, jmin, jmax));
      }
      if (jmax > jmin) {
        REQUIRE_FALSE(covered(imin, imax, jmin + 1, jmax));
        REQUIRE_FALSE(covered(imin, imax, jmin, jmax - 1));
      }
    }
  }
}

TEST_CASE("mask_union matches per-pixel max", "[mask]") {
  Rng rng(505);
  for (int i = 0; i < 1000; ++i) {
    const BinaryMask a = random_bits(16, 16, 0.2, rng);
    const BinaryMask b = random_bits(16, 16, 0.2, rng);
    const BinaryMask u = mask_union(a, b);
    for (std::size_t j = 0; j < u.values.size(); ++j)
      REQUIRE(u.values[j] == std::max(a.values[j], b.values[j]));
    REQUIRE(mask_subset(a, u));
    REQUIRE(mask_subset(b, u));
  }
  SECTION("identity and idempotence") {
    Rng rng2(506);
    const BinaryMask m = random_bits(10, 10, 0.3, rng2);
    REQUIRE(mask_union(m, BinaryMask(10, 10)) == m);
    REQUIRE(mask_union(m, m) == m);
  }
  SECTION("dimension mismatch") {
    REQUIRE_THROWS_AS(mask_union(BinaryMask(4, 4), BinaryMask(5, 4)),
                      DimensionMismatchError);
  }
}

TEST_CASE("random_mask generator", "[mask]") {
  SECTION("zero element counts draw nothing") {
    Rng rng(1);
    REQUIRE(random_mask(32, 32, empty_random_params(), rng).empty_mask());
  }
  SECTION("deterministic given the seed") {
    RandomMaskParams p;
    Rng a(42), b(42);
    REQUIRE(random_mask(64, 64, p, a) == random_mask(64, 64, p, b));
  }
  SECTION("coverage never exceeds the cap") {
    RandomMaskParams p;
    p.target_coverage_cap = 0.25;
    Rng rng(9);
    for (int i = 0; i < 200; ++i)
      REQUIRE(random_mask(64, 64, p, rng).coverage() <= 0.25);
  }
  SECTION("mean coverage regression over 1000 seeds") {
    RandomMaskParams p;  // defaults
    double acc = 0.0;
    for (int i = 0; i < 1000; ++i) {
      Rng rng(mix_seed(777, i));
      acc += random_mask(64, 64, p, rng).coverage();
    }
    const double mean = acc / 1000.0;
    REQUIRE(mean >= 0.05);
    REQUIRE(mean <= p.target_coverage_cap);
    // Measured with the shipped generator; guards accidental drift.
    REQUIRE_THAT(mean, Catch::Matchers::WithinAbs(0.2701, 0.02));
  }
  SECTION("tiny images are rejected") {
    RandomMaskParams p;
    Rng rng(3);
    REQUIRE_THROWS_AS(random_mask(4, 4, p, rng), InvalidRangeError);
  }
}

TEST_CASE("reshape_perturb mixture", "[mask]") {
  Rng mask_rng(606);
  BinaryMask m = random_bits(32, 32, 0.05, mask_rng);
  m.at(10, 10) = 1;  // nonempty for sure

  SECTION("rect_probability = 1 always returns the bounding rectangle") {
    PerturbConfig cfg;
    cfg.rect_probability = 1.0;
    const BinaryMask want = bounding_rect(m);
    Rng rng(1);
    for (int i = 0; i < 50; ++i) REQUIRE(reshape_perturb(m, cfg, rng) == want);
  }
  SECTION("rect_probability = 0 with empty params returns the input") {
    PerturbConfig cfg;
    cfg.rect_probability = 0.0;
    cfg.random_mask_params = empty_random_params();
    Rng rng(2);
    REQUIRE(reshape_perturb(m, cfg, rng) == m);
  }
  SECTION("branch frequency at p = 0.5 over 10000 draws") {
    PerturbConfig cfg;
    const BinaryMask rect = bounding_rect(m);
    Rng rng(3);
    int rect_count = 0;
    for (int i = 0; i < 10000; ++i) {
      const BinaryMask out = reshape_perturb(m, cfg, rng);
      REQUIRE(mask_subset(m, out));
      // The random branch ORs extra strokes on top of m, so equality with
      // the bare rectangle identifies the rectangle branch (the random
      // branch result contains m's ragged outline, not a filled box).
      if (out == rect) ++rect_count;
    }
    const double freq = rect_count / 10000.0;
    REQUIRE(freq >= 0.47);
    REQUIRE(freq <= 0.53);
  }
  SECTION("empty mask propagates an error") {
    PerturbConfig cfg;
    Rng rng(4);
    REQUIRE_THROWS_AS(reshape_perturb(BinaryMask(8, 8), cfg, rng), EmptyMaskError);
  }
}

TEST_CASE("sample_perturbations", "[mask]") {
  SECTION("fully degenerate perturbation returns the input twice") {
    Rng mask_rng(707);
    const BinaryMask m = random_bits(16, 16, 0.2, mask_rng);
    PerturbConfig cfg;
    cfg.dilation_radius_k = 0;
    cfg.rect_probability = 0.0;
    cfg.random_mask_params = empty_random_params();
    Rng rng(1);
    const auto [d, r] = sample_perturbations(m, cfg, rng);
    REQUIRE(d == m);
    REQUIRE(r == m);
  }
  SECTION("single center pixel with k = 2 dilates to the 5x5 block") {
    BinaryMask m(9, 9);
    m.at(4, 4) = 1;
    PerturbConfig cfg;
    cfg.dilation_radius_k = 2;
    Rng rng(1);
    const auto [d, r] = sample_perturbations(m, cfg, rng);
    REQUIRE(d.count() == 25);
    for (int y = 2; y <= 6; ++y)
      for (int x = 2; x <= 6; ++x) REQUIRE(d.at(y, x) == 1);
  }
  SECTION("both outputs contain the input") {
    Rng rng(808);
    PerturbConfig cfg;
    cfg.dilation_radius_k = 2;
    for (int i = 0; i < 1000; ++i) {
      BinaryMask m = random_bits(16, 16, 0.1, rng);
      if (m.empty_mask()) m.at(8, 8) = 1;
      const auto [d, r] = sample_perturbations(m, cfg, rng);
      REQUIRE(mask_subset(m, d));
      REQUIRE(mask_subset(m, r));
    }
  }
  SECTION("empty mask is an error") {
    PerturbConfig cfg;
    Rng rng(1);
    REQUIRE_THROWS_AS(sample_perturbations(BinaryMask(8, 8), cfg, rng),
                      EmptyMaskError);
  }
}

TEST_CASE("uniform dilation radius mode draws within the range", "[mask]") {
  PerturbConfig cfg;
  cfg.dilation_mode = DilationMode::kUniform;
  cfg.dilation_min = 2;
  cfg.dilation_max = 5;
  Rng rng(1);
  bool saw_min = false, saw_max = false;
  for (int i = 0; i < 500; ++i) {
    const int k = draw_dilation_radius(cfg, rng);
    REQUIRE(k >= 2);
    REQUIRE(k <= 5);
    saw_min |= k == 2;
    saw_max |= k == 5;
  }
  REQUIRE(saw_min);
  REQUIRE(saw_max);
}

TEST_CASE("mask PGM round trip and threshold", "[mask]") {
  Rng rng(909);
  const BinaryMask m = random_bits(13, 7, 0.4, rng);
  const auto dir = std::filesystem::temp_directory_path() / "mcr_mask_io";
  std::filesystem::create_directories(dir);
  const auto path = dir / "m.pgm";
  save_mask(path, m);
  REQUIRE(load_mask(path) == m);

  // >= 128 reads as 1.
  std::ofstream f(dir / "t.pgm", std::ios::binary);
  f << "P5 2 2 255\n";
  const unsigned char px[4] = {0, 127, 128, 255};
  f.write(reinterpret_cast<const char*>(px), 4);
  f.close();
  const BinaryMask t = load_mask(dir / "t.pgm");
  REQUIRE(t.values == std::vector<std::uint8_t>{0, 0, 1, 1});
}
