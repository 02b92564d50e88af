// Copyright (c) 2026 the mcr developers
// SPDX-License-Identifier: Apache-2.0
//
// Forward noising process and the deterministic strided sampler used for
// inference-time object removal.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mcr/conditioning.hpp"
#include "mcr/errors.hpp"
#include "mcr/image.hpp"
#include "mcr/rng.hpp"

namespace mcr {

/// Per-timestep beta/alpha/alpha_bar sequences of the forward process.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
};

/// Linear beta schedule from beta_start to beta_end over T steps.
inline NoiseSchedule linear_schedule(int T, double beta_start = 1e-4,
                                     double beta_end = 0.02) {
  if (T < 2 || !(beta_start > 0.0) || beta_start > beta_end || beta_end >= 1.0)
    throw InvalidRangeError("linear_schedule requires T >= 2 and 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.T = T;
  s.beta.resize(T);
  s.alpha.resize(T);
  s.alpha_bar.resize(T);
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    s.beta[t] = beta_start + (beta_end - beta_start) * t / (T - 1.0);
    s.alpha[t] = 1.0 - s.beta[t];
    prod *= s.alpha[t];
    s.alpha_bar[t] = prod;
  }
  return s;
}

/// x_t = sqrt(alpha_bar[t]) x0 + sqrt(1 - alpha_bar[t]) eps. x0 is expected
/// in the [-1,1] model domain.
inline ImageTensor forward_sample(const ImageTensor& x0, int t,
                                  const ImageTensor& eps,
                                  const NoiseSchedule& sched) {
  require_same_shape(x0, eps, "forward_sample: eps shape mismatch");
  if (t < 0 || t >= sched.T)
    throw TimestepOutOfRangeError("forward_sample: t out of range");
  const double a = std::sqrt(sched.alpha_bar[t]);
  const double b = std::sqrt(1.0 - sched.alpha_bar[t]);
  ImageTensor out = x0;
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data[i] = a * x0.data[i] + b * eps.data[i];
  return out;
}

/// Closed-form inversion of the forward process given a noise prediction,
/// clamped to the model domain: x0_hat = (x_t - sqrt(1-ab) eps) / sqrt(ab).
inline ImageTensor predict_x0(const ImageTensor& x_t, const ImageTensor& eps_hat,
                              double alpha_bar_t) {
  require_same_shape(x_t, eps_hat, "predict_x0: shape mismatch");
  const double a = std::sqrt(alpha_bar_t);
  const double b = std::sqrt(1.0 - alpha_bar_t);
  ImageTensor out = x_t;
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data[i] = std::clamp((x_t.data[i] - b * eps_hat.data[i]) / a, -1.0, 1.0);
  return out;
}

/// The n_steps timesteps visited by the strided sampler, descending.
/// n_steps == T yields every timestep.
inline std::vector<int> strided_timesteps(int T, int n_steps) {
  if (n_steps < 1 || n_steps > T)
    throw StepCountInvalidError("sampler step count must be in [1, T]");
  std::vector<int> ts(n_steps);
  if (n_steps == 1) {
    ts[0] = T - 1;
    return ts;
  }
  for (int i = 0; i < n_steps; ++i)
    ts[i] = static_cast<int>(
        std::lround(static_cast<double>(T - 1) * (n_steps - 1 - i) / (n_steps - 1)));
  return ts;
}

/// Deterministic (eta = 0) strided sampler. Starts from pure noise, and at
/// each visited timestep predicts x0, clamps it, and re-noises to the next
/// timestep with the same predicted noise. Returns the final x0 prediction
/// rescaled to [0,1]. `model(x_t, t, cond)` must return the noise estimate.
template <class Model>
ImageTensor strided_deterministic_sample(Model&& model, const ImageTensor& cond,
                                         const NoiseSchedule& sched,
                                         int n_steps, Rng& rng) {
  const std::vector<int> ts = strided_timesteps(sched.T, n_steps);
  const int out_channels = cond.channels - 1;
  ImageTensor x(out_channels, cond.height, cond.width);
  rng.fill_normal(x.data);
  ImageTensor x0_hat;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const ImageTensor eps_hat = model(x, t, cond);
    x0_hat = predict_x0(x, eps_hat, sched.alpha_bar[t]);
    if (i + 1 < ts.size()) {
      const double ab_next = sched.alpha_bar[ts[i + 1]];
      const double a = std::sqrt(ab_next), b = std::sqrt(1.0 - ab_next);
      for (std::size_t j = 0; j < x.size(); ++j)
        x.data[j] = a * x0_hat.data[j] + b * eps_hat.data[j];
    }
  }
  return from_model_domain(x0_hat);
}

/// Inference-time object removal: sample conditioned on the masked image,
/// then composite so that unmasked pixels are copied exactly from the input.
/// x0 is a [0,1] image.
template <class Model>
ImageTensor inpaint(Model&& model, const ImageTensor& x0, const BinaryMask& mask,
                    const NoiseSchedule& sched, int n_steps, Rng& rng) {
  if (!x0.same_plane(mask))
    throw ShapeMismatchError("inpaint: mask dimensions mismatch");
  if (mask.empty_mask()) throw EmptyMaskError("inpaint: empty mask");
  const ImageTensor cond = cond_encode(to_model_domain(x0), mask);
  const ImageTensor gen =
      strided_deterministic_sample(model, cond, sched, n_steps, rng);
  ImageTensor out = x0;
  for (int c = 0; c < out.channels; ++c)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x)
        if (mask.at(y, x)) out.at(c, y, x) = gen.at(c, y, x);
  return out;
}

}  // namespace mcr
