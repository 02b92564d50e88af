// Copyright (c) 2026 the mcr developers
// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mcr/diffusion.hpp"
#include "mcr/rng.hpp"

using namespace mcr;

TEST_CASE("linear schedule values and invariants", "[diffusion]") {
  SECTION("two-step closed form") {
    const NoiseSchedule s = linear_schedule(2, 0.1, 0.1);
    REQUIRE_THAT(s.alpha_bar[0], Catch::Matchers::WithinAbs(0.9, 1e-15));
    REQUIRE_THAT(s.alpha_bar[1], Catch::Matchers::WithinAbs(0.81, 1e-15));
  }
  SECTION("alpha_bar is strictly decreasing and matches a high-precision product") {
    const NoiseSchedule s = linear_schedule(200);
    long double prod = 1.0L;
    for (int t = 0; t < s.T; ++t) {
      prod *= 1.0L - (1e-4L + (0.02L - 1e-4L) * t / 199.0L);
      REQUIRE(std::abs(s.alpha_bar[t] - static_cast<double>(prod)) < 1e-12);
      if (t > 0) REQUIRE(s.alpha_bar[t] < s.alpha_bar[t - 1]);
      REQUIRE(s.beta[t] > 0.0);
      REQUIRE(s.beta[t] < 1.0);
      REQUIRE_THAT(s.alpha[t], Catch::Matchers::WithinAbs(1.0 - s.beta[t], 0.0));
    }
  }
  SECTION("invalid ranges") {
    REQUIRE_THROWS_AS(linear_schedule(1, 1e-4, 0.02), InvalidRangeError);
    REQUIRE_THROWS_AS(linear_schedule(10, 0.0, 0.02), InvalidRangeError);
    REQUIRE_THROWS_AS(linear_schedule(10, 0.03, 0.02), InvalidRangeError);
    REQUIRE_THROWS_AS(linear_schedule(10, 0.5, 1.0), InvalidRangeError);
  }
}

TEST_CASE("forward_sample limits and algebra", "[diffusion]") {
  Rng rng(21);
  ImageTensor x0(1, 8, 8), eps(1, 8, 8);
  rng.fill_normal(x0.data);
  rng.fill_normal(eps.data);

  NoiseSchedule s;
  s.T = 2;
  s.beta = {0.0, 0.0};
  s.alpha = {1.0, 1.0};
  s.alpha_bar = {1.0, 0.0};  // constructed limit schedule

  SECTION("alpha_bar = 1 returns x0; alpha_bar = 0 returns eps") {
    REQUIRE(forward_sample(x0, 0, eps, s) == x0);
    REQUIRE(forward_sample(x0, 1, eps, s) == eps);
  }
  SECTION("linearity in (x0, eps)") {
    const NoiseSchedule lin = linear_schedule(50);
    const ImageTensor a = forward_sample(x0, 17, eps, lin);
    ImageTensor x2 = x0, e2 = eps;
    for (auto& v : x2.data) v *= 3.0;
    for (auto& v : e2.data) v *= 3.0;
    const ImageTensor b = forward_sample(x2, 17, e2, lin);
    for (std::size_t i = 0; i < a.size(); ++i)
      REQUIRE_THAT(b.data[i], Catch::Matchers::WithinRel(3.0 * a.data[i], 1e-12));
  }
  SECTION("errors") {
    REQUIRE_THROWS_AS(forward_sample(x0, 2, eps, s), TimestepOutOfRangeError);
    REQUIRE_THROWS_AS(forward_sample(x0, -1, eps, s), TimestepOutOfRangeError);
    REQUIRE_THROWS_AS(forward_sample(x0, 0, ImageTensor(1, 8, 7), s),
                      ShapeMismatchError);
  }
}

TEST_CASE("forward_sample preserves unit variance", "[diffusion]") {
  const NoiseSchedule s = linear_schedule(200);
  Rng rng(31);
  const std::size_t n = 1'000'000;
  ImageTensor x0(1, 1000, 1000), eps(1, 1000, 1000);
  rng.fill_normal(x0.data);
  rng.fill_normal(eps.data);
  for (const int t : {3, 57, 120, 199}) {
    const ImageTensor xt = forward_sample(x0, t, eps, s);
    double mean = 0.0;
    for (const double v : xt.data) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const double v : xt.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n - 1);
    REQUIRE(var > 0.98);
    REQUIRE(var < 1.02);
  }
}

TEST_CASE("strided timestep grids", "[diffusion]") {
  SECTION("full stride visits every timestep") {
    const auto ts = strided_timesteps(8, 8);
    REQUIRE(ts == std::vector<int>{7, 6, 5, 4, 3, 2, 1, 0});
  }
  SECTION("subsampled grid is descending, spans [0, T-1]") {
    const auto ts = strided_timesteps(200, 20);
    REQUIRE(ts.size() == 20);
    REQUIRE(ts.front() == 199);
    REQUIRE(ts.back() == 0);
    for (std::size_t i = 1; i < ts.size(); ++i) REQUIRE(ts[i] < ts[i - 1]);
  }
  SECTION("invalid counts") {
    REQUIRE_THROWS_AS(strided_timesteps(10, 0), StepCountInvalidError);
    REQUIRE_THROWS_AS(strided_timesteps(10, 11), StepCountInvalidError);
  }
}

TEST_CASE("oracle denoiser inverts the forward process in one step", "[diffusion]") {
  const NoiseSchedule s = linear_schedule(200);
  Rng rng(41);
  ImageTensor x0(1, 12, 12), eps(1, 12, 12);
  for (auto& v : x0.data) v = rng.uniform(-1.0, 1.0);
  rng.fill_normal(eps.data);
  for (const int t : {0, 9, 57, 123, 199}) {
    const ImageTensor xt = forward_sample(x0, t, eps, s);
    const ImageTensor rec = predict_x0(xt, eps, s.alpha_bar[t]);
    for (std::size_t i = 0; i < rec.size(); ++i)
      REQUIRE(std::abs(rec.data[i] - x0.data[i]) < 1e-6);
  }
}

namespace {

// A denoiser stub that always predicts the same fixed noise tensor.
struct FixedEpsModel {
  ImageTensor eps;
  ImageTensor operator()(const ImageTensor&, int, const ImageTensor&) const {
    return eps;
  }
};

}  // namespace

TEST_CASE("strided sampler determinism and range", "[diffusion]") {
  const NoiseSchedule s = linear_schedule(50);
  Rng noise_rng(51);
  FixedEpsModel model{ImageTensor(1, 16, 16)};
  noise_rng.fill_normal(model.eps.data);
  const ImageTensor cond(2, 16, 16, 0.0);

  Rng a(7), b(7);
  const ImageTensor out1 = strided_deterministic_sample(model, cond, s, 10, a);
  const ImageTensor out2 = strided_deterministic_sample(model, cond, s, 10, b);
  REQUIRE(out1 == out2);
  for (const double v : out1.data) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }
  Rng c(7);
  const ImageTensor full = strided_deterministic_sample(model, cond, s, 50, c);
  for (const double v : full.data) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }
}

TEST_CASE("inpaint composites exactly outside the mask", "[diffusion]") {
  const NoiseSchedule s = linear_schedule(50);
  Rng rng(61);
  ImageTensor x0(1, 16, 16);
  for (auto& v : x0.data) v = rng.uniform();
  BinaryMask mask(16, 16);
  for (int y = 4; y < 9; ++y)
    for (int x = 5; x < 11; ++x) mask.at(y, x) = 1;

  FixedEpsModel model{ImageTensor(1, 16, 16)};
  rng.fill_normal(model.eps.data);

  Rng sr(3);
  const ImageTensor out = inpaint(model, x0, mask, s, 10, sr);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      if (!mask.at(y, x)) REQUIRE(out.at(0, y, x) == x0.at(0, y, x));

  SECTION("all-ones mask returns the raw sample") {
    BinaryMask ones(16, 16, 1);
    Rng sr1(5), sr2(5);
    const ImageTensor direct = strided_deterministic_sample(
        model, cond_encode(to_model_domain(x0), ones), s, 10, sr1);
    const ImageTensor via_inpaint = inpaint(model, x0, ones, s, 10, sr2);
    REQUIRE(via_inpaint == direct);
  }
  SECTION("empty mask is an error") {
    Rng sr3(1);
    REQUIRE_THROWS_AS(inpaint(model, x0, BinaryMask(16, 16), s, 10, sr3),
                      EmptyMaskError);
  }
}
