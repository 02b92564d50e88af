// Copyright (c) 2026 the mcr developers
// SPDX-License-Identifier: Apache-2.0
//
// Minimal binary PGM (P5) / PPM (P6) reader and writer, maxval 255.
#pragma once

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mcr/errors.hpp"

namespace mcr {

/// Raw 8-bit PGM/PPM payload: 1 channel (P5) or 3 channels (P6),
/// pixel-interleaved for P6, row-major.
struct PnmImage {
  int channels = 1;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bytes;
};

namespace detail {

// Reads one whitespace-delimited header token, skipping '#' comments.
inline std::string pnm_token(std::istream& in) {
  std::string tok;
  int c = in.get();
  while (c != EOF && (std::isspace(c) || c == '#')) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    }
    c = in.get();
  }
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  return tok;
}

inline int pnm_int(std::istream& in, const std::string& what) {
  const std::string tok = pnm_token(in);
  if (tok.empty()) throw MalformedFileError("truncated header: missing " + what);
  for (char ch : tok)
    if (!std::isdigit(static_cast<unsigned char>(ch)))
      throw MalformedFileError("bad " + what + " token '" + tok + "'");
  try {
    return std::stoi(tok);
  } catch (const std::exception&) {
    throw MalformedFileError("bad " + what + " token '" + tok + "'");
  }
}

}  // namespace detail

inline PnmImage load_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());

  const std::string magic = detail::pnm_token(in);
  PnmImage img;
  if (magic == "P5")
    img.channels = 1;
  else if (magic == "P6")
    img.channels = 3;
  else
    throw MalformedFileError("bad magic '" + magic + "' in " + path.string());

  img.width = detail::pnm_int(in, "width");
  img.height = detail::pnm_int(in, "height");
  const int maxval = detail::pnm_int(in, "maxval");
  if (img.width < 1 || img.height < 1)
    throw MalformedFileError("bad dimensions in " + path.string());
  if (maxval != 255)
    throw MalformedFileError("unsupported maxval " + std::to_string(maxval) +
                             " in " + path.string());
  // The header ends with exactly one whitespace byte (already consumed by
  // the token reader); raw samples follow.
  const std::size_t n = static_cast<std::size_t>(img.channels) * img.width *
                        static_cast<std::size_t>(img.height);
  img.bytes.resize(n);
  in.read(reinterpret_cast<char*>(img.bytes.data()),
          static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw MalformedFileError("truncated pixel data in " + path.string());
  return img;
}

inline void save_pnm(const std::filesystem::path& path, const PnmImage& img) {
  if (img.channels != 1 && img.channels != 3)
    throw ShapeMismatchError("pnm supports 1 or 3 channels");
  const std::size_t n = static_cast<std::size_t>(img.channels) * img.width *
                        static_cast<std::size_t>(img.height);
  if (img.bytes.size() != n) throw ShapeMismatchError("pnm byte count mismatch");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << (img.channels == 1 ? "P5" : "P6") << ' ' << img.width << ' '
      << img.height << ' ' << 255 << '\n';
  out.write(reinterpret_cast<const char*>(img.bytes.data()),
            static_cast<std::streamsize>(n));
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace mcr
