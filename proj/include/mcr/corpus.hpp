// Copyright (c) 2026 the mcr developers
// SPDX-License-Identifier: Apache-2.0
//
// Procedural object-removal corpus: smooth backgrounds, one high-contrast
// foreground shape per scene, and the exact removal ground truth. The
// composite equals the ground truth at every pixel outside the mask, so
// full-reference metrics against the truth are meaningful by construction.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "mcr/errors.hpp"
#include "mcr/image.hpp"
#include "mcr/mask.hpp"
#include "mcr/rng.hpp"

namespace mcr {

/// One scene: composite (with object), ground truth (without), and the
/// object silhouette.
struct RemovalTriplet {
  ImageTensor composite;
  ImageTensor ground_truth;
  BinaryMask mask;
};

inline void validate(const RemovalTriplet& t) {
  if (!t.composite.same_shape(t.ground_truth) ||
      !t.composite.same_plane(t.mask))
    throw ShapeMismatchError("triplet members must share dimensions");
  if (t.mask.empty_mask()) throw EmptyMaskError("triplet mask is empty");
  for (int c = 0; c < t.composite.channels; ++c)
    for (int y = 0; y < t.composite.height; ++y)
      for (int x = 0; x < t.composite.width; ++x)
        if (!t.mask.at(y, x) &&
            t.composite.at(c, y, x) != t.ground_truth.at(c, y, x))
          throw ShapeMismatchError("composite differs from truth outside mask");
}

enum class BackgroundKind { kGradient, kStripes, kSmoothNoise };
enum class ShapeKind { kDisc, kRectangle, kPolygon };

struct CorpusConfig {
  int count = 200;
  int width = 64;
  int height = 64;
  int channels = 1;  // 1 or 3
  std::vector<BackgroundKind> background_kinds = {
      BackgroundKind::kGradient, BackgroundKind::kStripes,
      BackgroundKind::kSmoothNoise};
  std::vector<ShapeKind> shape_kinds = {ShapeKind::kDisc, ShapeKind::kRectangle,
                                        ShapeKind::kPolygon};
  double shape_area_min = 0.02;  // fraction of image area
  double shape_area_max = 0.15;
  std::uint64_t seed = 1;
};

inline void validate(const CorpusConfig& cfg) {
  if (cfg.count < 1) throw InvalidRangeError("corpus count must be >= 1");
  if (cfg.width < 8 || cfg.height < 8)
    throw InvalidRangeError("corpus images must be at least 8x8");
  if (cfg.channels != 1 && cfg.channels != 3)
    throw InvalidRangeError("corpus channels must be 1 or 3");
  if (cfg.background_kinds.empty() || cfg.shape_kinds.empty())
    throw InvalidRangeError("background and shape kind sets must be nonempty");
  if (!(cfg.shape_area_min > 0.0 && cfg.shape_area_min <= cfg.shape_area_max &&
        cfg.shape_area_max <= 0.5))
    throw InvalidRangeError("shape area fraction range must lie in (0, 0.5]");
}

namespace detail {

inline ImageTensor make_background(const CorpusConfig& cfg, Rng& rng) {
  ImageTensor img(cfg.channels, cfg.height, cfg.width);
  const auto kind = cfg.background_kinds[static_cast<std::size_t>(
      rng.uniform_below(cfg.background_kinds.size()))];
  for (int c = 0; c < cfg.channels; ++c) {
    switch (kind) {
      case BackgroundKind::kGradient: {
        const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double lo = rng.uniform(0.1, 0.45);
        const double hi = rng.uniform(0.55, 0.9);
        const double cx = std::cos(theta), sy = std::sin(theta);
        for (int y = 0; y < cfg.height; ++y)
          for (int x = 0; x < cfg.width; ++x) {
            double u = (cx * x / (cfg.width - 1.0) + sy * y / (cfg.height - 1.0) +
                        1.0) /
                       2.0;  // [0,1]
            img.at(c, y, x) = lo + (hi - lo) * u;
          }
        break;
      }
      case BackgroundKind::kStripes: {
        const double theta = rng.uniform(0.0, std::numbers::pi);
        const double freq = rng.uniform(1.0, 3.0);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double amp = rng.uniform(0.1, 0.25);
        const double base = rng.uniform(0.35, 0.65);
        const double cx = std::cos(theta), sy = std::sin(theta);
        for (int y = 0; y < cfg.height; ++y)
          for (int x = 0; x < cfg.width; ++x) {
            const double u = cx * x / cfg.width + sy * y / cfg.height;
            img.at(c, y, x) =
                base + amp * std::sin(2.0 * std::numbers::pi * freq * u + phase);
          }
        break;
      }
      case BackgroundKind::kSmoothNoise: {
        // Low-resolution value grid, bilinearly upsampled.
        const int gw = 5, gh = 5;
        std::vector<double> grid(static_cast<std::size_t>(gw) * gh);
        for (auto& v : grid) v = rng.uniform(0.15, 0.85);
        for (int y = 0; y < cfg.height; ++y)
          for (int x = 0; x < cfg.width; ++x) {
            const double gx = static_cast<double>(x) / (cfg.width - 1) * (gw - 1);
            const double gy =
                static_cast<double>(y) / (cfg.height - 1) * (gh - 1);
            const int x0 = std::min(static_cast<int>(gx), gw - 2);
            const int y0 = std::min(static_cast<int>(gy), gh - 2);
            const double fx = gx - x0, fy = gy - y0;
            const double v00 = grid[static_cast<std::size_t>(y0) * gw + x0];
            const double v01 = grid[static_cast<std::size_t>(y0) * gw + x0 + 1];
            const double v10 = grid[static_cast<std::size_t>(y0 + 1) * gw + x0];
            const double v11 =
                grid[static_cast<std::size_t>(y0 + 1) * gw + x0 + 1];
            img.at(c, y, x) = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                              fy * ((1 - fx) * v10 + fx * v11);
          }
        break;
      }
    }
  }
  for (auto& v : img.data) v = std::clamp(v, 0.0, 1.0);
  return img;
}

inline BinaryMask make_shape_mask(const CorpusConfig& cfg, Rng& rng) {
  const auto kind = cfg.shape_kinds[static_cast<std::size_t>(
      rng.uniform_below(cfg.shape_kinds.size()))];
  const double area_frac = rng.uniform(cfg.shape_area_min, cfg.shape_area_max);
  const double target_px = area_frac * cfg.width * cfg.height;
  BinaryMask mask(cfg.width, cfg.height);
  const double margin = 2.0;
  switch (kind) {
    case ShapeKind::kDisc: {
      const double r = std::sqrt(target_px / std::numbers::pi);
      const double cx = rng.uniform(margin + r, cfg.width - margin - r);
      const double cy = rng.uniform(margin + r, cfg.height - margin - r);
      for (int y = 0; y < cfg.height; ++y)
        for (int x = 0; x < cfg.width; ++x) {
          const double dx = x - cx, dy = y - cy;
          if (dx * dx + dy * dy <= r * r) mask.at(y, x) = 1;
        }
      break;
    }
    case ShapeKind::kRectangle: {
      const double aspect = rng.uniform(0.5, 2.0);
      const double rw = std::sqrt(target_px * aspect);
      const double rh = target_px / rw;
      const int w = std::max(1, static_cast<int>(std::lround(rw)));
      const int h = std::max(1, static_cast<int>(std::lround(rh)));
      if (w + 2 * margin >= cfg.width || h + 2 * margin >= cfg.height) break;
      const auto x0 = static_cast<int>(
          rng.uniform_int(static_cast<int>(margin),
                          cfg.width - w - static_cast<int>(margin)));
      const auto y0 = static_cast<int>(
          rng.uniform_int(static_cast<int>(margin),
                          cfg.height - h - static_cast<int>(margin)));
      detail::rasterize_rect(mask, x0, y0, w, h);
      break;
    }
    case ShapeKind::kPolygon: {
      // Star-convex polygon: jittered radii around a center, scanline fill.
      const double r0 = std::sqrt(target_px / std::numbers::pi);
      const double cx = rng.uniform(margin + r0, cfg.width - margin - r0);
      const double cy = rng.uniform(margin + r0, cfg.height - margin - r0);
      const auto n = static_cast<int>(rng.uniform_int(3, 7));
      std::vector<double> px(n), py(n);
      for (int i = 0; i < n; ++i) {
        const double ang = 2.0 * std::numbers::pi * i / n +
                           rng.uniform(-0.3, 0.3);
        const double rr = r0 * rng.uniform(0.7, 1.25);
        px[i] = cx + rr * std::cos(ang);
        py[i] = cy + rr * std::sin(ang);
      }
      for (int y = 0; y < cfg.height; ++y) {
        // even-odd rule against pixel centers
        std::vector<double> xs;
        for (int i = 0; i < n; ++i) {
          const int j = (i + 1) % n;
          const double y0 = py[i], y1 = py[j];
          if ((y0 <= y && y1 > y) || (y1 <= y && y0 > y))
            xs.push_back(px[i] + (y - y0) / (y1 - y0) * (px[j] - px[i]));
        }
        std::sort(xs.begin(), xs.end());
        for (std::size_t i = 0; i + 1 < xs.size(); i += 2) {
          const int xa = std::max(0, static_cast<int>(std::ceil(xs[i])));
          const int xb =
              std::min(cfg.width - 1, static_cast<int>(std::floor(xs[i + 1])));
          for (int x = xa; x <= xb; ++x) mask.at(y, x) = 1;
        }
      }
      break;
    }
  }
  return mask;
}

}  // namespace detail

/// Synthesizes one removal triplet. Resamples internally (up to 100
/// attempts) until the shape area lands in the configured range and the
/// shape color contrasts the covered background by at least 0.2 per channel.
inline RemovalTriplet synth_triplet(const CorpusConfig& cfg, Rng& rng) {
  validate(cfg);
  const ImageTensor background = detail::make_background(cfg, rng);
  const double total_px = static_cast<double>(cfg.width) * cfg.height;
  for (int attempt = 0; attempt < 100; ++attempt) {
    const BinaryMask mask = detail::make_shape_mask(cfg, rng);
    const double frac = static_cast<double>(mask.count()) / total_px;
    if (frac < cfg.shape_area_min || frac > cfg.shape_area_max) continue;

    // Pick a shape color contrasting the local background in every channel.
    std::vector<double> color(cfg.channels);
    bool ok = true;
    for (int c = 0; c < cfg.channels && ok; ++c) {
      double bg_mean = 0.0;
      for (int y = 0; y < cfg.height; ++y)
        for (int x = 0; x < cfg.width; ++x)
          if (mask.at(y, x)) bg_mean += background.at(c, y, x);
      bg_mean /= static_cast<double>(mask.count());
      const double v = rng.uniform();
      // choose the side of the background mean with room for contrast
      double candidate = bg_mean >= 0.5 ? bg_mean - (0.25 + 0.5 * v) * bg_mean
                                        : bg_mean + (0.25 + 0.5 * v) * (1.0 - bg_mean);
      candidate = std::clamp(candidate, 0.0, 1.0);
      if (std::abs(candidate - bg_mean) < 0.2) {
        ok = false;
        break;
      }
      color[c] = candidate;
    }
    if (!ok) continue;

    RemovalTriplet t;
    t.ground_truth = background;
    t.composite = background;
    t.mask = mask;
    for (int c = 0; c < cfg.channels; ++c)
      for (int y = 0; y < cfg.height; ++y)
        for (int x = 0; x < cfg.width; ++x)
          if (mask.at(y, x)) t.composite.at(c, y, x) = color[c];
    return t;
  }
  throw GenerationFailedError("no valid triplet after 100 attempts");
}

/// Manifest: first line `seed=<u64>`, then one line per triplet:
/// index<TAB>composite<TAB>truth<TAB>mask (paths relative to the manifest).
struct ManifestEntry {
  int index = 0;
  std::string composite;
  std::string truth;
  std::string mask;
};

struct Manifest {
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;
};

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  Manifest m;
  std::string line;
  if (!std::getline(in, line) || line.rfind("seed=", 0) != 0)
    throw MalformedFileError("manifest must start with seed=<u64>");
  try {
    m.seed = std::stoull(line.substr(5));
  } catch (const std::exception&) {
    throw MalformedFileError("bad manifest seed line: " + line);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    ManifestEntry e;
    std::string idx;
    if (!std::getline(ss, idx, '\t') || !std::getline(ss, e.composite, '\t') ||
        !std::getline(ss, e.truth, '\t') || !std::getline(ss, e.mask))
      throw MalformedFileError("bad manifest line: " + line);
    try {
      e.index = std::stoi(idx);
    } catch (const std::exception&) {
      throw MalformedFileError("bad manifest index: " + idx);
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

/// Loads all triplets named by a manifest; paths resolve relative to it.
inline std::vector<RemovalTriplet> load_corpus(
    const std::filesystem::path& manifest_path) {
  const Manifest m = load_manifest(manifest_path);
  const std::filesystem::path dir = manifest_path.parent_path();
  std::vector<RemovalTriplet> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) {
    RemovalTriplet t;
    t.composite = load_image(dir / e.composite);
    t.ground_truth = load_image(dir / e.truth);
    t.mask = load_mask(dir / e.mask);
    validate(t);
    out.push_back(std::move(t));
  }
  return out;
}

/// Writes `count` triplets plus the manifest into out_dir and returns the
/// manifest path. Pure function of cfg (per-triplet seeds derive from
/// cfg.seed and the index).
inline std::filesystem::path make_corpus(const CorpusConfig& cfg,
                                         const std::filesystem::path& out_dir) {
  validate(cfg);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec && !std::filesystem::is_directory(out_dir))
    throw IoError("cannot create " + out_dir.string());

  const char* img_ext = cfg.channels == 1 ? ".pgm" : ".ppm";
  std::ostringstream manifest;
  manifest << "seed=" << cfg.seed << "\n";
  for (int i = 0; i < cfg.count; ++i) {
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    const RemovalTriplet t = synth_triplet(cfg, rng);
    char name[32];
    std::snprintf(name, sizeof(name), "%04d", i);
    const std::string composite = std::string(name) + "_composite" + img_ext;
    const std::string truth = std::string(name) + "_truth" + img_ext;
    const std::string mask = std::string(name) + "_mask.pgm";
    save_image(out_dir / composite, t.composite);
    save_image(out_dir / truth, t.ground_truth);
    save_mask(out_dir / mask, t.mask);
    manifest << i << '\t' << composite << '\t' << truth << '\t' << mask << "\n";
  }
  const std::filesystem::path manifest_path = out_dir / "manifest.tsv";
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + manifest_path.string());
  out << manifest.str();
  if (!out.flush()) throw IoError("short write to " + manifest_path.string());
  return manifest_path;
}

}  // namespace mcr
