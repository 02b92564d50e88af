// Copyright (c) 2026 the mcr developers
// SPDX-License-Identifier: Apache-2.0
//
// The tiny conditional noise-prediction network: three 3x3 same-padded
// convolutions with per-channel time biases (learned projections of a
// sinusoidal timestep embedding) and SiLU nonlinearities between layers.
// Forward and reverse passes are written out by hand in double precision;
// the reverse pass is checked against central finite differences.
#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

#include "mcr/errors.hpp"
#include "mcr/image.hpp"
#include "mcr/rng.hpp"

namespace mcr {

struct DenoiserConfig {
  int in_channels = 3;   // image channels + conditioning channels (C + C+1)
  int out_channels = 1;  // image channels C
  int hidden_width = 32;
  int time_embed_dim = 16;
  static constexpr int n_layers = 3;
  static constexpr int kernel = 3;

  bool operator==(const DenoiserConfig&) const = default;
};

inline DenoiserConfig make_denoiser_config(int image_channels,
                                           int hidden_width = 32,
                                           int time_embed_dim = 16) {
  return {2 * image_channels + 1, image_channels, hidden_width, time_embed_dim};
}

inline void validate(const DenoiserConfig& cfg) {
  if (cfg.out_channels < 1 || cfg.in_channels != 2 * cfg.out_channels + 1)
    throw InvalidRangeError("denoiser in_channels must equal 2*out_channels+1");
  if (cfg.hidden_width < 4)
    throw InvalidRangeError("denoiser hidden width must be >= 4");
  if (cfg.time_embed_dim < 2 || cfg.time_embed_dim % 2 != 0)
    throw InvalidRangeError("time embedding dimension must be even and >= 2");
}

inline int layer_in_channels(const DenoiserConfig& cfg, int layer) {
  return layer == 0 ? cfg.in_channels : cfg.hidden_width;
}
inline int layer_out_channels(const DenoiserConfig& cfg, int layer) {
  return layer == DenoiserConfig::n_layers - 1 ? cfg.out_channels
                                               : cfg.hidden_width;
}

/// Flat parameter layout, per layer: kernel [out][in][3][3], bias [out],
/// time projection [out][time_embed_dim]. Layers in order 0, 1, 2.
struct ParamLayout {
  std::size_t kernel_offset[DenoiserConfig::n_layers];
  std::size_t bias_offset[DenoiserConfig::n_layers];
  std::size_t timeproj_offset[DenoiserConfig::n_layers];
  std::size_t total = 0;
};

inline ParamLayout param_layout(const DenoiserConfig& cfg) {
  ParamLayout lay;
  std::size_t off = 0;
  for (int l = 0; l < DenoiserConfig::n_layers; ++l) {
    const std::size_t oc = layer_out_channels(cfg, l);
    const std::size_t ic = layer_in_channels(cfg, l);
    lay.kernel_offset[l] = off;
    off += oc * ic * 9;
    lay.bias_offset[l] = off;
    off += oc;
    lay.timeproj_offset[l] = off;
    off += oc * static_cast<std::size_t>(cfg.time_embed_dim);
  }
  lay.total = off;
  return lay;
}

inline std::size_t param_count(const DenoiserConfig& cfg) {
  return param_layout(cfg).total;
}

/// All learnable weights, flat in the layout above.
struct DenoiserParams {
  DenoiserConfig config;
  std::vector<double> flat;
};

/// He-normal kernels, zero biases and time projections.
inline DenoiserParams init_params(const DenoiserConfig& cfg, Rng& rng) {
  validate(cfg);
  const ParamLayout lay = param_layout(cfg);
  DenoiserParams p{cfg, std::vector<double>(lay.total, 0.0)};
  for (int l = 0; l < DenoiserConfig::n_layers; ++l) {
    const std::size_t n =
        static_cast<std::size_t>(layer_out_channels(cfg, l)) *
        layer_in_channels(cfg, l) * 9;
    const double std_dev = std::sqrt(2.0 / (layer_in_channels(cfg, l) * 9.0));
    std::span<double> kernel(p.flat.data() + lay.kernel_offset[l], n);
    rng.fill_normal(kernel);
    for (auto& v : kernel) v *= std_dev;
  }
  return p;
}

/// Sinusoidal timestep embedding: sin/cos pairs whose angular divisors run
/// geometrically from 1 to 1e4 across the half-dimension.
inline std::vector<double> time_embedding(int t, int dim) {
  const int half = dim / 2;
  std::vector<double> emb(dim);
  for (int i = 0; i < half; ++i) {
    const double divisor =
        half > 1 ? std::pow(1e4, static_cast<double>(i) / (half - 1)) : 1.0;
    emb[i] = std::sin(t / divisor);
    emb[half + i] = std::cos(t / divisor);
  }
  return emb;
}

namespace detail {

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }
inline double silu_grad(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

// out[oc] = sum_ic conv3x3(in[ic], w[oc][ic]) + base[oc], zero-padded.
inline void conv3x3_forward(const double* in, int in_c, double* out, int out_c,
                            const double* w, const double* base, int h, int wd) {
  const std::size_t plane = static_cast<std::size_t>(h) * wd;
  for (int oc = 0; oc < out_c; ++oc) {
    double* o = out + oc * plane;
    const double fill = base ? base[oc] : 0.0;
    for (std::size_t i = 0; i < plane; ++i) o[i] = fill;
    for (int ic = 0; ic < in_c; ++ic) {
      const double* x = in + ic * plane;
      const double* wk = w + (static_cast<std::size_t>(oc) * in_c + ic) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int y0 = dy < 0 ? 1 : 0;
        const int y1 = dy > 0 ? h - 1 : h;
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const double wv = wk[ky * 3 + kx];
          const int x0 = dx < 0 ? 1 : 0;
          const int x1 = dx > 0 ? wd - 1 : wd;
          for (int y = y0; y < y1; ++y) {
            double* orow = o + static_cast<std::size_t>(y) * wd;
            const double* xrow = x + static_cast<std::size_t>(y + dy) * wd + dx;
            for (int xx = x0; xx < x1; ++xx) orow[xx] += wv * xrow[xx];
          }
        }
      }
    }
  }
}

// d_in[ic] += correlation of d_out with the kernel (adjoint of forward).
inline void conv3x3_backward_input(const double* d_out, int out_c, double* d_in,
                                   int in_c, const double* w, int h, int wd) {
  const std::size_t plane = static_cast<std::size_t>(h) * wd;
  for (int oc = 0; oc < out_c; ++oc) {
    const double* g = d_out + oc * plane;
    for (int ic = 0; ic < in_c; ++ic) {
      double* di = d_in + ic * plane;
      const double* wk = w + (static_cast<std::size_t>(oc) * in_c + ic) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int y0 = dy < 0 ? 1 : 0;
        const int y1 = dy > 0 ? h - 1 : h;
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const double wv = wk[ky * 3 + kx];
          const int x0 = dx < 0 ? 1 : 0;
          const int x1 = dx > 0 ? wd - 1 : wd;
          for (int y = y0; y < y1; ++y) {
            const double* grow = g + static_cast<std::size_t>(y) * wd;
            double* drow = di + static_cast<std::size_t>(y + dy) * wd + dx;
            for (int xx = x0; xx < x1; ++xx) drow[xx] += wv * grow[xx];
          }
        }
      }
    }
  }
}

// d_w[oc][ic][k] += <d_out[oc], shifted in[ic]>; d_base[oc] += sum d_out[oc].
inline void conv3x3_backward_params(const double* d_out, int out_c,
                                    const double* in, int in_c, double* d_w,
                                    double* d_base, int h, int wd) {
  const std::size_t plane = static_cast<std::size_t>(h) * wd;
  for (int oc = 0; oc < out_c; ++oc) {
    const double* g = d_out + oc * plane;
    double bsum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) bsum += g[i];
    d_base[oc] += bsum;
    for (int ic = 0; ic < in_c; ++ic) {
      const double* x = in + ic * plane;
      double* dwk = d_w + (static_cast<std::size_t>(oc) * in_c + ic) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int y0 = dy < 0 ? 1 : 0;
        const int y1 = dy > 0 ? h - 1 : h;
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const int x0 = dx < 0 ? 1 : 0;
          const int x1 = dx > 0 ? wd - 1 : wd;
          // Four independent accumulator chains keep the dot product out of
          // a single serial FMA dependency. The summation order is fixed,
          // so results stay deterministic.
          double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
          for (int y = y0; y < y1; ++y) {
            const double* grow = g + static_cast<std::size_t>(y) * wd;
            const double* xrow = x + static_cast<std::size_t>(y + dy) * wd + dx;
            int xx = x0;
            for (; xx + 4 <= x1; xx += 4) {
              a0 += grow[xx] * xrow[xx];
              a1 += grow[xx + 1] * xrow[xx + 1];
              a2 += grow[xx + 2] * xrow[xx + 2];
              a3 += grow[xx + 3] * xrow[xx + 3];
            }
            for (; xx < x1; ++xx) a0 += grow[xx] * xrow[xx];
          }
          dwk[ky * 3 + kx] += (a0 + a1) + (a2 + a3);
        }
      }
    }
  }
}

}  // namespace detail

/// Activations recorded by the forward pass for the reverse pass.
struct ForwardCache {
  DenoiserConfig config;
  int t = 0;
  int height = 0;
  int width = 0;
  std::vector<double> emb;
  std::vector<double> input;  // concatenated [x_t, cond]
  std::vector<double> pre0, act0, pre1, act1;
};

/// eps_hat = net(x_t, t, cond). If `cache` is non-null it is filled for a
/// subsequent backward call.
inline ImageTensor denoiser_forward(const DenoiserParams& params,
                                    const ImageTensor& x_t, int t,
                                    const ImageTensor& cond,
                                    ForwardCache* cache = nullptr) {
  const DenoiserConfig& cfg = params.config;
  if (x_t.channels != cfg.out_channels || cond.channels != cfg.out_channels + 1 ||
      x_t.height != cond.height || x_t.width != cond.width)
    throw ShapeMismatchError("denoiser_forward: input shapes don't match config");
  const ParamLayout lay = param_layout(cfg);
  const int h = x_t.height, w = x_t.width;
  const std::size_t plane = x_t.plane();

  std::vector<double> input(static_cast<std::size_t>(cfg.in_channels) * plane);
  std::memcpy(input.data(), x_t.data.data(), x_t.size() * sizeof(double));
  std::memcpy(input.data() + x_t.size(), cond.data.data(),
              cond.size() * sizeof(double));

  const std::vector<double> emb = time_embedding(t, cfg.time_embed_dim);

  // Per-layer additive channel offset: bias + time projection of emb.
  auto channel_base = [&](int layer) {
    const int oc = layer_out_channels(cfg, layer);
    std::vector<double> base(oc);
    const double* b = params.flat.data() + lay.bias_offset[layer];
    const double* proj = params.flat.data() + lay.timeproj_offset[layer];
    for (int c = 0; c < oc; ++c) {
      double acc = b[c];
      const double* row = proj + static_cast<std::size_t>(c) * cfg.time_embed_dim;
      for (int j = 0; j < cfg.time_embed_dim; ++j) acc += row[j] * emb[j];
      base[c] = acc;
    }
    return base;
  };

  const int hw = cfg.hidden_width;
  std::vector<double> pre0(static_cast<std::size_t>(hw) * plane);
  std::vector<double> act0(pre0.size());
  std::vector<double> pre1(pre0.size());
  std::vector<double> act1(pre0.size());

  auto base0 = channel_base(0);
  detail::conv3x3_forward(input.data(), cfg.in_channels, pre0.data(), hw,
                          params.flat.data() + lay.kernel_offset[0],
                          base0.data(), h, w);
  for (std::size_t i = 0; i < pre0.size(); ++i) act0[i] = detail::silu(pre0[i]);

  auto base1 = channel_base(1);
  detail::conv3x3_forward(act0.data(), hw, pre1.data(), hw,
                          params.flat.data() + lay.kernel_offset[1],
                          base1.data(), h, w);
  for (std::size_t i = 0; i < pre1.size(); ++i) act1[i] = detail::silu(pre1[i]);

  ImageTensor eps_hat(cfg.out_channels, h, w);
  auto base2 = channel_base(2);
  detail::conv3x3_forward(act1.data(), hw, eps_hat.data.data(), cfg.out_channels,
                          params.flat.data() + lay.kernel_offset[2],
                          base2.data(), h, w);

  if (cache) {
    cache->config = cfg;
    cache->t = t;
    cache->height = h;
    cache->width = w;
    cache->emb = emb;
    cache->input = std::move(input);
    cache->pre0 = std::move(pre0);
    cache->act0 = std::move(act0);
    cache->pre1 = std::move(pre1);
    cache->act1 = std::move(act1);
  }
  return eps_hat;
}

/// Exact gradients of <grad_out, eps_hat> with respect to every parameter,
/// in the flat layout. The cache must come from a forward pass with the
/// same configuration and spatial dimensions.
inline std::vector<double> denoiser_backward(const DenoiserParams& params,
                                             const ForwardCache& cache,
                                             const ImageTensor& grad_out) {
  const DenoiserConfig& cfg = params.config;
  if (cache.config != cfg)
    throw CacheMismatchError("denoiser_backward: cache built for another config");
  if (grad_out.channels != cfg.out_channels || grad_out.height != cache.height ||
      grad_out.width != cache.width)
    throw CacheMismatchError("denoiser_backward: grad_out shape mismatch");
  const ParamLayout lay = param_layout(cfg);
  const int h = cache.height, w = cache.width, hw = cfg.hidden_width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;

  std::vector<double> grads(lay.total, 0.0);

  // Accumulates dW, db, and (via db and the embedding) the time projection.
  auto layer_param_grads = [&](int layer, const double* d_pre, const double* in,
                               int in_c) {
    const int oc = layer_out_channels(cfg, layer);
    std::vector<double> d_base(oc, 0.0);
    detail::conv3x3_backward_params(d_pre, oc, in, in_c,
                                    grads.data() + lay.kernel_offset[layer],
                                    d_base.data(), h, w);
    double* db = grads.data() + lay.bias_offset[layer];
    double* dproj = grads.data() + lay.timeproj_offset[layer];
    for (int c = 0; c < oc; ++c) {
      db[c] += d_base[c];
      double* row = dproj + static_cast<std::size_t>(c) * cfg.time_embed_dim;
      for (int j = 0; j < cfg.time_embed_dim; ++j)
        row[j] += d_base[c] * cache.emb[j];
    }
  };

  // Layer 2 (no nonlinearity after it): d_pre2 = grad_out. The SiLU
  // adjoint is applied in place to the propagated buffer.
  layer_param_grads(2, grad_out.data.data(), cache.act1.data(), hw);
  std::vector<double> d_hidden(static_cast<std::size_t>(hw) * plane, 0.0);
  detail::conv3x3_backward_input(grad_out.data.data(), cfg.out_channels,
                                 d_hidden.data(), hw,
                                 params.flat.data() + lay.kernel_offset[2], h, w);

  for (std::size_t i = 0; i < d_hidden.size(); ++i)
    d_hidden[i] *= detail::silu_grad(cache.pre1[i]);
  layer_param_grads(1, d_hidden.data(), cache.act0.data(), hw);

  std::vector<double> d_hidden0(d_hidden.size(), 0.0);
  detail::conv3x3_backward_input(d_hidden.data(), hw, d_hidden0.data(), hw,
                                 params.flat.data() + lay.kernel_offset[1], h, w);

  for (std::size_t i = 0; i < d_hidden0.size(); ++i)
    d_hidden0[i] *= detail::silu_grad(cache.pre0[i]);
  layer_param_grads(0, d_hidden0.data(), cache.input.data(), cfg.in_channels);

  return grads;
}

/// Central-difference comparison against a supplied analytic gradient over
/// chosen coordinates. Returns the worst relative error.
inline double max_fd_rel_error(const DenoiserParams& params,
                               const ImageTensor& x_t, int t,
                               const ImageTensor& cond,
                               const ImageTensor& grad_out,
                               std::span<const double> analytic,
                               std::span<const std::size_t> coords,
                               double step = 1e-4) {
  DenoiserParams probe = params;
  auto loss = [&]() {
    const ImageTensor eps_hat = denoiser_forward(probe, x_t, t, cond);
    double acc = 0.0;
    for (std::size_t i = 0; i < eps_hat.size(); ++i)
      acc += grad_out.data[i] * eps_hat.data[i];
    return acc;
  };
  double worst = 0.0;
  for (const std::size_t i : coords) {
    const double saved = probe.flat[i];
    probe.flat[i] = saved + step;
    const double up = loss();
    probe.flat[i] = saved - step;
    const double down = loss();
    probe.flat[i] = saved;
    const double fd = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-8});
    worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
  }
  return worst;
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  int coords_checked = 0;
  double tolerance = 1e-4;
  bool pass = false;
};

/// Finite-difference audit of the reverse pass on a small random instance.
inline GradCheckReport grad_check(const DenoiserConfig& cfg, std::uint64_t seed,
                                  int n_coords = 120, double tolerance = 1e-4) {
  validate(cfg);
  Rng rng(mix_seed(seed, 0x6772616463686bull));  // stream tag: "gradchk"
  DenoiserParams params = init_params(cfg, rng);
  // Randomize biases and time projections too, so no zero structure hides
  // a wrong adjoint.
  const ParamLayout lay = param_layout(cfg);
  for (int l = 0; l < DenoiserConfig::n_layers; ++l) {
    const std::size_t oc = layer_out_channels(cfg, l);
    for (std::size_t i = 0; i < oc; ++i)
      params.flat[lay.bias_offset[l] + i] = 0.05 * rng.normal();
    for (std::size_t i = 0; i < oc * cfg.time_embed_dim; ++i)
      params.flat[lay.timeproj_offset[l] + i] = 0.05 * rng.normal();
  }

  const int h = 12, w = 12;
  ImageTensor x_t(cfg.out_channels, h, w), cond(cfg.out_channels + 1, h, w),
      grad_out(cfg.out_channels, h, w);
  rng.fill_normal(x_t.data);
  rng.fill_normal(cond.data);
  rng.fill_normal(grad_out.data);
  const int t = static_cast<int>(rng.uniform_below(200));

  ForwardCache cache;
  denoiser_forward(params, x_t, t, cond, &cache);
  const std::vector<double> analytic = denoiser_backward(params, cache, grad_out);

  std::vector<std::size_t> coords(static_cast<std::size_t>(n_coords));
  for (auto& c : coords)
    c = static_cast<std::size_t>(rng.uniform_below(params.flat.size()));

  GradCheckReport report;
  report.tolerance = tolerance;
  report.coords_checked = n_coords;
  report.max_rel_error =
      max_fd_rel_error(params, x_t, t, cond, grad_out, analytic, coords);
  report.pass = report.max_rel_error < tolerance;
  return report;
}

}  // namespace mcr
