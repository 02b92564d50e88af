// Copyright (c) 2026 the mcr developers
// SPDX-License-Identifier: Apache-2.0
//
// Dense image tensors (channel-major, row-major planes) and bit-exact
// PGM/PPM round trips. Images live in [0,1]; model-internal tensors reuse
// the same container without the range constraint.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "mcr/errors.hpp"
#include "mcr/mask.hpp"
#include "mcr/pnm.hpp"

namespace mcr {

struct ImageTensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;  // [c][y][x]

  ImageTensor() = default;
  ImageTensor(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const { return data.size(); }

  double& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  bool same_shape(const ImageTensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  bool same_plane(const BinaryMask& m) const {
    return height == m.height && width == m.width;
  }

  bool operator==(const ImageTensor&) const = default;
};

inline void require_same_shape(const ImageTensor& a, const ImageTensor& b,
                               const char* what) {
  if (!a.same_shape(b)) throw ShapeMismatchError(what);
}

/// Mean squared difference over all elements.
inline double mse(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "mse: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

/// Mean squared difference restricted to mask = 1 pixels (all channels).
inline double mse_in_mask(const ImageTensor& a, const ImageTensor& b,
                          const BinaryMask& mask) {
  require_same_shape(a, b, "mse_in_mask: shape mismatch");
  if (!a.same_plane(mask))
    throw ShapeMismatchError("mse_in_mask: mask dimensions mismatch");
  if (mask.empty_mask()) throw EmptyMaskError("mse_in_mask: empty mask");
  double acc = 0.0;
  std::size_t n = 0;
  for (int c = 0; c < a.channels; ++c)
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x)
        if (mask.at(y, x)) {
          const double d = a.at(c, y, x) - b.at(c, y, x);
          acc += d * d;
          ++n;
        }
  return acc / static_cast<double>(n);
}

/// Loads a PGM (1 channel) or PPM (3 channels) into [0,1] values.
inline ImageTensor load_image(const std::filesystem::path& path) {
  const PnmImage raw = load_pnm(path);
  ImageTensor img(raw.channels, raw.height, raw.width);
  const std::size_t plane = img.plane();
  for (std::size_t p = 0; p < plane; ++p)
    for (int c = 0; c < raw.channels; ++c)
      img.data[static_cast<std::size_t>(c) * plane + p] =
          raw.bytes[p * raw.channels + c] / 255.0;
  return img;
}

/// Saves as PGM/PPM, clamping to [0,1] and quantizing to round(v*255).
inline void save_image(const std::filesystem::path& path,
                       const ImageTensor& img) {
  if (img.channels != 1 && img.channels != 3)
    throw ShapeMismatchError("save_image supports 1 or 3 channels");
  PnmImage raw;
  raw.channels = img.channels;
  raw.width = img.width;
  raw.height = img.height;
  raw.bytes.resize(img.size());
  const std::size_t plane = img.plane();
  for (std::size_t p = 0; p < plane; ++p)
    for (int c = 0; c < img.channels; ++c) {
      const double v =
          std::clamp(img.data[static_cast<std::size_t>(c) * plane + p], 0.0, 1.0);
      raw.bytes[p * img.channels + c] =
          static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  save_pnm(path, raw);
}

}  // namespace mcr
