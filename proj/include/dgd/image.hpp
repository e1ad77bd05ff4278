#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <iterator>
#include <string>
#include <vector>

#include "dgd/error.hpp"

namespace dgd {

// 8-bit grayscale raster, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}
  Image(int w, int h, std::vector<std::uint8_t> px) : width(w), height(h), pixels(std::move(px)) {}

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }

  bool valid() const {
    return width >= 1 && height >= 1 &&
           pixels.size() == static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }

  friend bool operator==(const Image&, const Image&) = default;
};

inline std::uint8_t clamp_round(double v) {
  const double r = std::nearbyint(v);
  if (!(r > 0.0)) return 0;  // also maps NaN to 0
  if (r > 255.0) return 255;
  return static_cast<std::uint8_t>(r);
}

namespace detail {

// Next header token of a netpbm file, skipping whitespace and '#' comments.
inline std::string pnm_token(std::istream& is) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

inline int pnm_int(std::istream& is) {
  const std::string tok = pnm_token(is);
  if (tok.empty()) fail(Errc::TruncatedFile, "incomplete header");
  int v = 0;
  for (char ch : tok) {
    if (ch < '0' || ch > '9') fail(Errc::UnsupportedFormat, "bad header field '" + tok + "'");
    v = v * 10 + (ch - '0');
    if (v > (1 << 24)) fail(Errc::UnsupportedFormat, "header field too large");
  }
  return v;
}

}  // namespace detail

inline std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return clamp_round(0.299 * r + 0.587 * g + 0.114 * b);
}

// Binary PGM (P5) or PPM (P6), maxval 255. Colour input is collapsed to luma.
inline Image read_image(std::istream& is) {
  char magic[2];
  if (!is.read(magic, 2)) fail(Errc::UnsupportedFormat, "missing magic");
  if (magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6'))
    fail(Errc::UnsupportedFormat, std::string("magic ") + magic[0] + magic[1]);
  const bool color = magic[1] == '6';
  const int w = detail::pnm_int(is);
  const int h = detail::pnm_int(is);
  const int maxval = detail::pnm_int(is);
  if (maxval != 255) fail(Errc::UnsupportedFormat, "maxval " + std::to_string(maxval));
  if (w < 1 || h < 1) fail(Errc::UnsupportedFormat, "empty raster");

  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<std::uint8_t> raw(color ? 3 * n : n);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(is.gcount()) != raw.size())
    fail(Errc::TruncatedFile, "payload has " + std::to_string(is.gcount()) + " of " +
                                  std::to_string(raw.size()) + " bytes");
  if (!color) return Image(w, h, std::move(raw));
  Image img(w, h);
  for (std::size_t i = 0; i < n; ++i) img.pixels[i] = luma(raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]);
  return img;
}

inline Image read_image(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(bool(is), Errc::Io, "cannot open " + path);
  return read_image(is);
}

inline void write_pgm(std::ostream& os, const Image& img) {
  os << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()),
           static_cast<std::streamsize>(img.pixels.size()));
}

inline void write_pgm(const Image& img, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(bool(os), Errc::Io, "cannot open " + path);
  write_pgm(os, img);
  require(bool(os), Errc::Io, "write failed: " + path);
}

}  // namespace dgd
