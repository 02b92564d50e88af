// Copyright (c) 2026 the mcr developers
// SPDX-License-Identifier: Apache-2.0
//
// Conditioning channels fed to the denoiser: the masked image plus the mask
// plane. The model works in the [-1,1] domain; images are stored in [0,1].
#pragma once

#include "mcr/errors.hpp"
#include "mcr/image.hpp"
#include "mcr/mask.hpp"

namespace mcr {

/// [0,1] image -> [-1,1] model domain.
inline ImageTensor to_model_domain(const ImageTensor& img) {
  ImageTensor out = img;
  for (auto& v : out.data) v = 2.0 * v - 1.0;
  return out;
}

/// [-1,1] model domain -> [0,1] image, clamped.
inline ImageTensor from_model_domain(const ImageTensor& img) {
  ImageTensor out = img;
  for (auto& v : out.data) v = std::clamp((v + 1.0) / 2.0, 0.0, 1.0);
  return out;
}

/// Builds the C+1 conditioning channels from a model-domain image and a
/// mask: channels 0..C-1 carry the image with masked pixels zeroed, channel
/// C carries the mask itself as {0,1} values. The output depends on the
/// image only outside the mask.
inline ImageTensor cond_encode(const ImageTensor& x0_model, const BinaryMask& mask) {
  if (!x0_model.same_plane(mask))
    throw ShapeMismatchError("cond_encode: mask dimensions mismatch");
  ImageTensor cond(x0_model.channels + 1, x0_model.height, x0_model.width);
  for (int c = 0; c < x0_model.channels; ++c)
    for (int y = 0; y < x0_model.height; ++y)
      for (int x = 0; x < x0_model.width; ++x)
        cond.at(c, y, x) = mask.at(y, x) ? 0.0 : x0_model.at(c, y, x);
  for (int y = 0; y < x0_model.height; ++y)
    for (int x = 0; x < x0_model.width; ++x)
      cond.at(x0_model.channels, y, x) = mask.at(y, x) ? 1.0 : 0.0;
  return cond;
}

}  // namespace mcr
