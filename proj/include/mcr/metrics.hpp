// Copyright (c) 2026 the mcr developers
// SPDX-License-Identifier: Apache-2.0
//
// Full-reference image quality metrics (PSNR, SSIM) and the cross-mask
// consistency-gap probe: how much an inpainter's output inside the original
// mask moves when the mask is perturbed, at a fixed sampling seed. A
// mask-agnostic inpainter scores zero.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mcr/config.hpp"
#include "mcr/corpus.hpp"
#include "mcr/errors.hpp"
#include "mcr/image.hpp"
#include "mcr/mask.hpp"
#include "mcr/parallel.hpp"
#include "mcr/rng.hpp"

namespace mcr {

/// Peak signal-to-noise ratio in dB; +infinity for identical inputs.
inline double psnr(const ImageTensor& a, const ImageTensor& b,
                   double max_value = 1.0) {
  if (!(max_value > 0.0)) throw InvalidRangeError("psnr: max_value must be > 0");
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_value * max_value / m);
}

/// PSNR restricted to mask = 1 pixels.
inline double psnr_masked(const ImageTensor& a, const ImageTensor& b,
                          const BinaryMask& mask, double max_value = 1.0) {
  if (!(max_value > 0.0)) throw InvalidRangeError("psnr: max_value must be > 0");
  const double m = mse_in_mask(a, b, mask);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_value * max_value / m);
}

namespace detail {

// 11-tap Gaussian window, sigma 1.5, normalized to sum 1.
inline const std::array<double, 11>& ssim_window() {
  static const std::array<double, 11> w = [] {
    std::array<double, 11> v{};
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
      const double d = i - 5.0;
      v[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
      sum += v[i];
    }
    for (auto& x : v) x /= sum;
    return v;
  }();
  return w;
}

// Channel-mean plane ("luminance average" for 3-channel images).
inline std::vector<double> luminance(const ImageTensor& img) {
  std::vector<double> out(img.plane());
  const double inv_c = 1.0 / img.channels;
  for (int c = 0; c < img.channels; ++c)
    for (std::size_t p = 0; p < out.size(); ++p)
      out[p] += img.data[static_cast<std::size_t>(c) * out.size() + p] * inv_c;
  return out;
}

// Valid-region separable Gaussian filter: output is (h-10) x (w-10).
inline std::vector<double> gauss_valid(const std::vector<double>& in, int h,
                                       int w) {
  const auto& win = ssim_window();
  const int ow = w - 10, oh = h - 10;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < 11; ++k)
        acc += win[k] * in[static_cast<std::size_t>(y) * w + x + k];
      tmp[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < 11; ++k)
        acc += win[k] * tmp[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  return out;
}

// Local SSIM map over valid window positions.
inline std::vector<double> ssim_map(const ImageTensor& a, const ImageTensor& b,
                                    int& out_h, int& out_w) {
  require_same_shape(a, b, "ssim: shape mismatch");
  if (a.height < 11 || a.width < 11)
    throw TooSmallError("ssim requires height and width >= 11");
  const int h = a.height, w = a.width;
  const std::vector<double> la = luminance(a);
  const std::vector<double> lb = luminance(b);
  std::vector<double> laa(la.size()), lbb(la.size()), lab(la.size());
  for (std::size_t i = 0; i < la.size(); ++i) {
    laa[i] = la[i] * la[i];
    lbb[i] = lb[i] * lb[i];
    lab[i] = la[i] * lb[i];
  }
  const std::vector<double> mu_a = gauss_valid(la, h, w);
  const std::vector<double> mu_b = gauss_valid(lb, h, w);
  const std::vector<double> m_aa = gauss_valid(laa, h, w);
  const std::vector<double> m_bb = gauss_valid(lbb, h, w);
  const std::vector<double> m_ab = gauss_valid(lab, h, w);
  constexpr double kL = 1.0;
  constexpr double c1 = (0.01 * kL) * (0.01 * kL);
  constexpr double c2 = (0.03 * kL) * (0.03 * kL);
  std::vector<double> map(mu_a.size());
  for (std::size_t i = 0; i < map.size(); ++i) {
    const double va = m_aa[i] - mu_a[i] * mu_a[i];
    const double vb = m_bb[i] - mu_b[i] * mu_b[i];
    const double cab = m_ab[i] - mu_a[i] * mu_b[i];
    map[i] = ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cab + c2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
  }
  out_h = h - 10;
  out_w = w - 10;
  return map;
}

}  // namespace detail

/// Mean structural similarity with the standard 11x11 Gaussian window
/// (sigma 1.5), C1 = (0.01 L)^2, C2 = (0.03 L)^2, L = 1. Symmetric in (a,b);
/// 3-channel inputs are averaged into one luminance plane first.
inline double ssim(const ImageTensor& a, const ImageTensor& b) {
  int mh = 0, mw = 0;
  const std::vector<double> map = detail::ssim_map(a, b, mh, mw);
  double acc = 0.0;
  for (const double v : map) acc += v;
  return acc / static_cast<double>(map.size());
}

/// Mean local SSIM over windows centered on mask pixels, as a masked-region
/// diagnostic. Falls back to the full mean when no window center is masked.
inline double ssim_masked(const ImageTensor& a, const ImageTensor& b,
                          const BinaryMask& mask) {
  if (!a.same_plane(mask))
    throw ShapeMismatchError("ssim_masked: mask dimensions mismatch");
  int mh = 0, mw = 0;
  const std::vector<double> map = detail::ssim_map(a, b, mh, mw);
  double acc = 0.0, full = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < mh; ++y)
    for (int x = 0; x < mw; ++x) {
      const double v = map[static_cast<std::size_t>(y) * mw + x];
      full += v;
      if (mask.at(y + 5, x + 5)) {
        acc += v;
        ++n;
      }
    }
  if (n == 0) return full / static_cast<double>(map.size());
  return acc / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Consistency gap

namespace detail {

/// Gap for one triplet: inpaint under the original, dilated and reshaped
/// masks with one shared sampling seed, then compare outputs inside the
/// original mask.
template <class Inpainter>
double triplet_gap(Inpainter&& inpaint_fn, const RemovalTriplet& triplet,
                   const PerturbConfig& perturb, std::uint64_t sample_seed,
                   std::uint64_t mask_seed) {
  Rng mask_rng(mask_seed);
  const int k = draw_dilation_radius(perturb, mask_rng);
  const BinaryMask mask_d = dilate(triplet.mask, k);
  const BinaryMask mask_r = reshape_perturb(triplet.mask, perturb, mask_rng);
  const ImageTensor out_o = inpaint_fn(triplet.composite, triplet.mask, sample_seed);
  const ImageTensor out_d = inpaint_fn(triplet.composite, mask_d, sample_seed);
  const ImageTensor out_r = inpaint_fn(triplet.composite, mask_r, sample_seed);
  return 0.5 * (mse_in_mask(out_o, out_d, triplet.mask) +
                mse_in_mask(out_o, out_r, triplet.mask));
}

}  // namespace detail

/// Mean consistency gap over a set of triplets. `inpaint_fn(image, mask,
/// seed)` must return the composited inpainting result deterministically.
template <class Inpainter>
double consistency_gap(Inpainter&& inpaint_fn,
                       std::span<const RemovalTriplet> triplets,
                       const PerturbConfig& perturb, Rng& rng) {
  if (triplets.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& t : triplets) {
    const std::uint64_t sample_seed = rng.next_u64();
    const std::uint64_t mask_seed = rng.next_u64();
    acc += detail::triplet_gap(inpaint_fn, t, perturb, sample_seed, mask_seed);
  }
  return acc / static_cast<double>(triplets.size());
}

// ---------------------------------------------------------------------------
// Evaluation reports

struct ImageMetrics {
  int index = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double mse = 0.0;
  double psnr_masked = 0.0;
  double ssim_masked = 0.0;
  double gap = std::numeric_limits<double>::quiet_NaN();
};

struct MetricsReport {
  int count = 0;
  double psnr_mean = 0.0;
  int psnr_inf_count = 0;
  double ssim_mean = 0.0;
  double mse_mean = 0.0;
  double psnr_masked_mean = 0.0;
  int psnr_masked_inf_count = 0;
  double ssim_masked_mean = 0.0;
  bool has_gap = false;
  double gap_mean = 0.0;
  std::uint64_t config_digest = 0;  // of the evaluation options
  std::vector<ImageMetrics> per_image;
};

struct EvalOptions {
  std::uint64_t seed = 0;
  bool with_gap = false;
  PerturbConfig perturb;  // probes used by the gap
  int threads = 0;
};

/// Digest of everything that shapes an evaluation's numbers.
inline std::uint64_t eval_options_digest(const EvalOptions& o) {
  const auto& p = o.perturb;
  const auto& r = p.random_mask_params;
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "seed=%llu gap=%d k=%d kmode=%d kmin=%d kmax=%d rp=%.17g "
                "s=%d..%d w=%d..%d v=%d..%d rc=%d..%d f=%.17g..%.17g cap=%.17g",
                static_cast<unsigned long long>(o.seed), o.with_gap ? 1 : 0,
                p.dilation_radius_k, p.dilation_mode == DilationMode::kFixed ? 0 : 1,
                p.dilation_min, p.dilation_max, p.rect_probability,
                r.num_strokes_min, r.num_strokes_max, r.stroke_width_min,
                r.stroke_width_max, r.stroke_vertices_min, r.stroke_vertices_max,
                r.num_rects_min, r.num_rects_max, r.rect_frac_min,
                r.rect_frac_max, r.target_coverage_cap);
  return fnv1a64(buf);
}

namespace detail {

// Mean excluding +inf entries; +inf if every entry is +inf.
inline double finite_mean(std::span<const double> xs, int& inf_count) {
  double acc = 0.0;
  int n = 0;
  inf_count = 0;
  for (const double x : xs) {
    if (std::isinf(x)) {
      ++inf_count;
      continue;
    }
    acc += x;
    ++n;
  }
  if (n == 0) return std::numeric_limits<double>::infinity();
  return acc / n;
}

}  // namespace detail

/// Scores precomputed outputs against the corpus ground truth.
/// outputs[i] pairs with triplets[i].
inline MetricsReport evaluate_outputs(std::span<const ImageTensor> outputs,
                                      std::span<const RemovalTriplet> triplets) {
  if (outputs.size() != triplets.size())
    throw ShapeMismatchError("evaluate: outputs and triplets differ in count");
  MetricsReport rep;
  rep.count = static_cast<int>(outputs.size());
  rep.per_image.resize(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const auto& out = outputs[i];
    const auto& t = triplets[i];
    ImageMetrics m;
    m.index = static_cast<int>(i);
    m.mse = mse(out, t.ground_truth);
    m.psnr = psnr(out, t.ground_truth);
    m.ssim = ssim(out, t.ground_truth);
    m.psnr_masked = psnr_masked(out, t.ground_truth, t.mask);
    m.ssim_masked = ssim_masked(out, t.ground_truth, t.mask);
    rep.per_image[i] = m;
  }
  std::vector<double> col(outputs.size());
  auto fill = [&](auto getter) {
    for (std::size_t i = 0; i < outputs.size(); ++i)
      col[i] = getter(rep.per_image[i]);
    return std::span<const double>(col);
  };
  rep.psnr_mean = detail::finite_mean(
      fill([](const ImageMetrics& m) { return m.psnr; }), rep.psnr_inf_count);
  int ignored = 0;
  rep.ssim_mean = detail::finite_mean(
      fill([](const ImageMetrics& m) { return m.ssim; }), ignored);
  rep.mse_mean = detail::finite_mean(
      fill([](const ImageMetrics& m) { return m.mse; }), ignored);
  rep.psnr_masked_mean = detail::finite_mean(
      fill([](const ImageMetrics& m) { return m.psnr_masked; }),
      rep.psnr_masked_inf_count);
  rep.ssim_masked_mean = detail::finite_mean(
      fill([](const ImageMetrics& m) { return m.ssim_masked; }), ignored);
  return rep;
}

/// Runs the inpainter over the corpus and scores the results; optionally
/// also probes the consistency gap (three inpaints per image, one shared
/// sampling seed). Per-image work runs in parallel; aggregation is a fixed
/// index-order fold.
template <class Inpainter>
MetricsReport evaluate(Inpainter&& inpaint_fn,
                       std::span<const RemovalTriplet> triplets,
                       const EvalOptions& opts,
                       std::vector<ImageTensor>* outputs_out = nullptr) {
  std::vector<ImageTensor> outputs(triplets.size());
  std::vector<double> gaps(triplets.size(), 0.0);
  const int threads = resolve_threads(opts.threads, triplets.size());
  parallel_for(triplets.size(), threads, [&](std::size_t i) {
    const std::uint64_t sample_seed = mix_seed(opts.seed, i, 0x73616d70ull);
    outputs[i] = inpaint_fn(triplets[i].composite, triplets[i].mask, sample_seed);
    if (opts.with_gap) {
      const std::uint64_t mask_seed = mix_seed(opts.seed, i, 0x6d61736bull);
      gaps[i] = detail::triplet_gap(inpaint_fn, triplets[i], opts.perturb,
                                    sample_seed, mask_seed);
    }
  });
  MetricsReport rep = evaluate_outputs(outputs, triplets);
  rep.config_digest = eval_options_digest(opts);
  if (opts.with_gap) {
    rep.has_gap = true;
    double acc = 0.0;
    for (std::size_t i = 0; i < gaps.size(); ++i) {
      rep.per_image[i].gap = gaps[i];
      acc += gaps[i];
    }
    rep.gap_mean = triplets.empty() ? 0.0 : acc / static_cast<double>(gaps.size());
  }
  if (outputs_out) *outputs_out = std::move(outputs);
  return rep;
}

// ---------------------------------------------------------------------------
// Report files

/// Writes `metrics.txt` (key = value) and `metrics.tsv` (per-image rows)
/// into out_dir.
inline void write_metrics_files(const MetricsReport& rep,
                                const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec && !std::filesystem::is_directory(out_dir))
    throw IoError("cannot create " + out_dir.string());

  const std::filesystem::path txt = out_dir / "metrics.txt";
  std::ofstream kv(txt, std::ios::trunc);
  if (!kv) throw IoError("cannot write " + txt.string());
  char buf[256];
  auto put = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "%s = %.17g\n", key, v);
    kv << buf;
  };
  kv << "count = " << rep.count << "\n";
  put("psnr_mean", rep.psnr_mean);
  kv << "psnr_inf_count = " << rep.psnr_inf_count << "\n";
  put("ssim_mean", rep.ssim_mean);
  put("mse_mean", rep.mse_mean);
  put("psnr_masked_mean", rep.psnr_masked_mean);
  kv << "psnr_masked_inf_count = " << rep.psnr_masked_inf_count << "\n";
  put("ssim_masked_mean", rep.ssim_masked_mean);
  if (rep.has_gap) put("gap_mean", rep.gap_mean);
  kv << "config_digest = " << rep.config_digest << "\n";
  if (!kv.flush()) throw IoError("short write to " + txt.string());

  const std::filesystem::path tsv = out_dir / "metrics.tsv";
  std::ofstream rows(tsv, std::ios::trunc);
  if (!rows) throw IoError("cannot write " + tsv.string());
  rows << "index\tpsnr\tssim\tmse\tpsnr_masked\tssim_masked\tgap\n";
  for (const auto& m : rep.per_image) {
    std::snprintf(buf, sizeof(buf),
                  "%d\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\n", m.index,
                  m.psnr, m.ssim, m.mse, m.psnr_masked, m.ssim_masked, m.gap);
    rows << buf;
  }
  if (!rows.flush()) throw IoError("short write to " + tsv.string());
}

/// Reads one `key = value` metric back from metrics.txt.
inline double read_metric(const std::filesystem::path& metrics_txt,
                          const std::string& key) {
  std::ifstream in(metrics_txt);
  if (!in) throw IoError("cannot open " + metrics_txt.string());
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    if (trim(std::string_view(line).substr(0, eq)) == key)
      return std::strtod(line.c_str() + eq + 1, nullptr);
  }
  throw MalformedFileError("key '" + key + "' not found in " +
                           metrics_txt.string());
}

}  // namespace mcr
