// Copyright (c) 2026 the mcr developers
// SPDX-License-Identifier: Apache-2.0
//
// Binary masks and the two mask perturbations used by the consistency
// objective: morphological dilation with a square structuring element, and
// reshape (tightest enclosing rectangle, or union with a free-form random
// mask), plus the 50/50 reshape sampler.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mcr/errors.hpp"
#include "mcr/pnm.hpp"
#include "mcr/rng.hpp"

namespace mcr {

/// 2-D grid of {0,1} values, row-major.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;

  BinaryMask() = default;
  BinaryMask(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h),
        values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  std::uint8_t& at(int y, int x) {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t at(int y, int x) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  bool in_bounds(int y, int x) const {
    return y >= 0 && y < height && x >= 0 && x < width;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : values) n += v;
    return n;
  }
  bool empty_mask() const { return count() == 0; }
  double coverage() const {
    return static_cast<double>(count()) / static_cast<double>(values.size());
  }

  bool operator==(const BinaryMask&) const = default;
};

/// Parameters of the free-form random mask generator: thick polyline strokes
/// plus axis-aligned rectangles, capped at a total coverage fraction.
struct RandomMaskParams {
  int num_strokes_min = 1;
  int num_strokes_max = 4;
  int stroke_width_min = 4;   // pixels
  int stroke_width_max = 16;  // pixels
  int stroke_vertices_min = 2;
  int stroke_vertices_max = 6;
  int num_rects_min = 0;
  int num_rects_max = 2;
  double rect_frac_min = 0.10;  // rectangle side as fraction of image side
  double rect_frac_max = 0.35;
  double target_coverage_cap = 0.5;
};

inline void validate(const RandomMaskParams& p) {
  auto bad = [](auto lo, auto hi) { return lo > hi; };
  if (bad(p.num_strokes_min, p.num_strokes_max) || p.num_strokes_min < 0 ||
      bad(p.stroke_width_min, p.stroke_width_max) || p.stroke_width_min < 1 ||
      bad(p.stroke_vertices_min, p.stroke_vertices_max) ||
      p.stroke_vertices_min < 2 || bad(p.num_rects_min, p.num_rects_max) ||
      p.num_rects_min < 0 || bad(p.rect_frac_min, p.rect_frac_max) ||
      p.rect_frac_min <= 0.0 || p.rect_frac_max >= 1.0)
    throw InvalidRangeError("random mask parameter ranges must be nonempty");
  if (!(p.target_coverage_cap > 0.0 && p.target_coverage_cap <= 1.0))
    throw InvalidRangeError("coverage cap must be in (0, 1]");
}

/// How the dilation radius is chosen at each training step.
enum class DilationMode { kFixed, kUniform };

/// Configuration of the perturbation pair fed to the consistency objective.
struct PerturbConfig {
  int dilation_radius_k = 8;  // pixels; see default_dilation_radius()
  DilationMode dilation_mode = DilationMode::kFixed;
  int dilation_min = 1;  // used when dilation_mode == kUniform
  int dilation_max = 8;
  double rect_probability = 0.5;
  RandomMaskParams random_mask_params;
};

/// Default dilation radius: 8 px at 256-px width, scaled proportionally.
inline int default_dilation_radius(int image_width) {
  return std::max(1, static_cast<int>(std::lround(8.0 * image_width / 256.0)));
}

inline void validate(const PerturbConfig& cfg) {
  if (cfg.dilation_radius_k < 0)
    throw InvalidRangeError("dilation radius must be >= 0");
  if (cfg.dilation_mode == DilationMode::kUniform &&
      (cfg.dilation_min < 0 || cfg.dilation_min > cfg.dilation_max))
    throw InvalidRangeError("dilation range must be nonempty and nonnegative");
  if (!(cfg.rect_probability >= 0.0 && cfg.rect_probability <= 1.0))
    throw InvalidRangeError("rect probability must be in [0, 1]");
  validate(cfg.random_mask_params);
}

/// Morphological dilation with the (2k+1)x(2k+1) all-ones structuring
/// element (Chebyshev ball), clipped at the image border. k = 0 is identity.
inline BinaryMask dilate(const BinaryMask& mask, int k) {
  if (k < 0) throw InvalidRangeError("dilation radius must be >= 0");
  if (k == 0) return mask;
  const int w = mask.width, h = mask.height;
  // Separable: a square window OR is a horizontal run-OR then a vertical one.
  BinaryMask horiz(w, h), out(w, h);
  for (int y = 0; y < h; ++y) {
    const std::uint8_t* row = &mask.values[static_cast<std::size_t>(y) * w];
    std::uint8_t* orow = &horiz.values[static_cast<std::size_t>(y) * w];
    int run = 0;  // number of set pixels in the clipped window
    const int k1 = std::min(k, w - 1);
    for (int x = 0; x <= k1; ++x) run += row[x];
    for (int x = 0; x < w; ++x) {
      orow[x] = run > 0 ? 1 : 0;
      if (x - k >= 0) run -= row[x - k];
      if (x + k + 1 < w) run += row[x + k + 1];
    }
  }
  for (int x = 0; x < w; ++x) {
    int run = 0;
    const int k1 = std::min(k, h - 1);
    for (int y = 0; y <= k1; ++y) run += horiz.at(y, x);
    for (int y = 0; y < h; ++y) {
      out.at(y, x) = run > 0 ? 1 : 0;
      if (y - k >= 0) run -= horiz.at(y - k, x);
      if (y + k + 1 < h) run += horiz.at(y + k + 1, x);
    }
  }
  return out;
}

/// Tightest axis-aligned filled rectangle covering every set pixel.
inline BinaryMask bounding_rect(const BinaryMask& mask) {
  int imin = mask.height, imax = -1, jmin = mask.width, jmax = -1;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(y, x)) {
        imin = std::min(imin, y);
        imax = std::max(imax, y);
        jmin = std::min(jmin, x);
        jmax = std::max(jmax, x);
      }
  if (imax < 0) throw EmptyMaskError("bounding_rect of an empty mask");
  BinaryMask out(mask.width, mask.height);
  for (int y = imin; y <= imax; ++y)
    for (int x = jmin; x <= jmax; ++x) out.at(y, x) = 1;
  return out;
}

/// Element-wise OR of two same-sized masks.
inline BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b) {
  if (a.width != b.width || a.height != b.height)
    throw DimensionMismatchError("mask union requires equal dimensions");
  BinaryMask out(a.width, a.height);
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = (a.values[i] | b.values[i]) ? 1 : 0;
  return out;
}

namespace detail {

// Stamps all pixels within distance width/2 of segment (x0,y0)-(x1,y1).
inline void rasterize_thick_segment(BinaryMask& m, double x0, double y0,
                                    double x1, double y1, double width) {
  const double r = width / 2.0;
  const int ylo = std::max(0, static_cast<int>(std::floor(std::min(y0, y1) - r)));
  const int yhi = std::min(m.height - 1,
                           static_cast<int>(std::ceil(std::max(y0, y1) + r)));
  const int xlo = std::max(0, static_cast<int>(std::floor(std::min(x0, x1) - r)));
  const int xhi = std::min(m.width - 1,
                           static_cast<int>(std::ceil(std::max(x0, x1) + r)));
  const double dx = x1 - x0, dy = y1 - y0;
  const double len2 = dx * dx + dy * dy;
  for (int y = ylo; y <= yhi; ++y)
    for (int x = xlo; x <= xhi; ++x) {
      double t = len2 > 0.0 ? ((x - x0) * dx + (y - y0) * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double px = x0 + t * dx, py = y0 + t * dy;
      const double ex = x - px, ey = y - py;
      if (ex * ex + ey * ey <= r * r) m.at(y, x) = 1;
    }
}

inline void rasterize_rect(BinaryMask& m, int x0, int y0, int rw, int rh) {
  for (int y = y0; y < y0 + rh; ++y)
    for (int x = x0; x < x0 + rw; ++x) m.at(y, x) = 1;
}

}  // namespace detail

/// Free-form random mask: thick random polyline strokes plus random
/// axis-aligned rectangles. Elements whose union would push coverage past
/// params.target_coverage_cap are skipped, so the final coverage never
/// exceeds the cap. Pure function of (width, height, params, rng state).
inline BinaryMask random_mask(int width, int height,
                              const RandomMaskParams& params, Rng& rng) {
  if (width < 8 || height < 8)
    throw InvalidRangeError("random_mask requires width, height >= 8");
  validate(params);
  BinaryMask mask(width, height);
  const auto cap_px = static_cast<std::size_t>(
      params.target_coverage_cap * static_cast<double>(mask.values.size()));
  std::size_t set_px = 0;

  auto try_apply = [&](const BinaryMask& element) {
    std::size_t merged = 0;
    for (std::size_t i = 0; i < mask.values.size(); ++i)
      merged += (mask.values[i] | element.values[i]) ? 1u : 0u;
    if (merged > cap_px) return;  // over the cap: skip this element
    for (std::size_t i = 0; i < mask.values.size(); ++i)
      mask.values[i] = (mask.values[i] | element.values[i]) ? 1 : 0;
    set_px = merged;
  };

  const double side = std::min(width, height);
  const auto n_strokes = static_cast<int>(
      rng.uniform_int(params.num_strokes_min, params.num_strokes_max));
  for (int s = 0; s < n_strokes; ++s) {
    const auto stroke_width = static_cast<double>(
        rng.uniform_int(params.stroke_width_min, params.stroke_width_max));
    const auto n_vertices = static_cast<int>(rng.uniform_int(
        params.stroke_vertices_min, params.stroke_vertices_max));
    double x = rng.uniform(0.0, width);
    double y = rng.uniform(0.0, height);
    BinaryMask element(width, height);
    for (int v = 1; v < n_vertices; ++v) {
      const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double length = rng.uniform(side / 8.0, side / 2.0);
      double nx = std::clamp(x + length * std::cos(angle), 0.0, width - 1.0);
      double ny = std::clamp(y + length * std::sin(angle), 0.0, height - 1.0);
      detail::rasterize_thick_segment(element, x, y, nx, ny, stroke_width);
      x = nx;
      y = ny;
    }
    try_apply(element);
  }

  const auto n_rects = static_cast<int>(
      rng.uniform_int(params.num_rects_min, params.num_rects_max));
  for (int r = 0; r < n_rects; ++r) {
    const double fx = rng.uniform(params.rect_frac_min, params.rect_frac_max);
    const double fy = rng.uniform(params.rect_frac_min, params.rect_frac_max);
    const int rw = std::max(1, static_cast<int>(std::lround(fx * width)));
    const int rh = std::max(1, static_cast<int>(std::lround(fy * height)));
    const auto x0 = static_cast<int>(rng.uniform_int(0, width - rw));
    const auto y0 = static_cast<int>(rng.uniform_int(0, height - rh));
    BinaryMask element(width, height);
    detail::rasterize_rect(element, x0, y0, rw, rh);
    try_apply(element);
  }
  return mask;
}

/// Reshape perturbation: with probability cfg.rect_probability the tightest
/// enclosing rectangle, otherwise the union with a fresh random mask. The
/// result always contains the input mask. The random branch inherits
/// random_mask's >= 8 px size requirement.
inline BinaryMask reshape_perturb(const BinaryMask& mask,
                                  const PerturbConfig& cfg, Rng& rng) {
  if (mask.empty_mask()) throw EmptyMaskError("reshape_perturb of an empty mask");
  const double u = rng.uniform();
  if (u < cfg.rect_probability) return bounding_rect(mask);
  return mask_union(
      mask, random_mask(mask.width, mask.height, cfg.random_mask_params, rng));
}

/// Draws the dilation radius for one training step. Consumes one draw only
/// in kUniform mode.
inline int draw_dilation_radius(const PerturbConfig& cfg, Rng& rng) {
  if (cfg.dilation_mode == DilationMode::kUniform)
    return static_cast<int>(rng.uniform_int(cfg.dilation_min, cfg.dilation_max));
  return cfg.dilation_radius_k;
}

/// The two perturbed branches for one sample: (dilated, reshaped).
inline std::pair<BinaryMask, BinaryMask> sample_perturbations(
    const BinaryMask& mask, const PerturbConfig& cfg, Rng& rng) {
  if (mask.empty_mask())
    throw EmptyMaskError("sample_perturbations of an empty mask");
  const int k = draw_dilation_radius(cfg, rng);
  return {dilate(mask, k), reshape_perturb(mask, cfg, rng)};
}

/// True iff every set pixel of `inner` is set in `outer`.
inline bool mask_subset(const BinaryMask& inner, const BinaryMask& outer) {
  if (inner.width != outer.width || inner.height != outer.height) return false;
  for (std::size_t i = 0; i < inner.values.size(); ++i)
    if (inner.values[i] && !outer.values[i]) return false;
  return true;
}

// Mask file format: binary PGM, maxval 255; >= 128 reads as 1, writes emit
// exactly 0 and 255.

inline BinaryMask load_mask(const std::filesystem::path& path) {
  const PnmImage img = load_pnm(path);
  if (img.channels != 1)
    throw MalformedFileError("mask file must be single-channel PGM: " +
                             path.string());
  BinaryMask mask(img.width, img.height);
  for (std::size_t i = 0; i < mask.values.size(); ++i)
    mask.values[i] = img.bytes[i] >= 128 ? 1 : 0;
  return mask;
}

inline void save_mask(const std::filesystem::path& path, const BinaryMask& mask) {
  PnmImage img;
  img.channels = 1;
  img.width = mask.width;
  img.height = mask.height;
  img.bytes.resize(mask.values.size());
  for (std::size_t i = 0; i < mask.values.size(); ++i)
    img.bytes[i] = mask.values[i] ? 255 : 0;
  save_pnm(path, img);
}

}  // namespace mcr
