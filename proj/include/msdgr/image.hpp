#pragma once

// Grayscale images and binary PGM/PPM I/O.
//
// Reading accepts P5 (gray) and P6 (RGB, converted with Rec.601 luma) with
// maxval up to 65535; 16-bit samples are big-endian as the format requires.
// Pixel values are scaled to [0, 1]. Writing produces 8-bit P5.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "msdgr/error.hpp"
#include "msdgr/tensor.hpp"

namespace msdgr {

struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;  // row-major

  Image() = default;
  Image(int h, int w, double fill = 0.0) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {
    if (h <= 0 || w <= 0) throw ShapeError("image dims must be positive");
  }

  double& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return pixels.size(); }

  friend bool operator==(const Image&, const Image&) = default;
};

inline Tensor3 to_tensor(const Image& img) { return Tensor3(1, img.height, img.width, img.pixels); }

namespace detail {

inline std::string pnm_token(std::istream& in) {
  std::string tok;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      if (!tok.empty()) break;
    } else {
      tok.push_back(static_cast<char>(c));
    }
    c = in.get();
  }
  return tok;  // the single whitespace after the last header field is consumed
}

inline int pnm_int(std::istream& in, const std::string& path) {
  const std::string tok = pnm_token(in);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size() || v <= 0) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw FormatError("'" + path + "': bad PNM header field '" + tok + "'");
  }
}

}  // namespace detail

inline Image read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open image '" + path + "'");
  const std::string magic = detail::pnm_token(in);
  if (magic != "P5" && magic != "P6") throw FormatError("'" + path + "' is not a binary PGM/PPM file");
  const int width = detail::pnm_int(in, path);
  const int height = detail::pnm_int(in, path);
  const int maxval = detail::pnm_int(in, path);
  if (maxval > 65535) throw FormatError("'" + path + "': maxval above 65535");
  const int channels = magic == "P6" ? 3 : 1;
  const int bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height * channels * bytes);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw FormatError("'" + path + "': truncated pixel data");
  }
  auto sample = [&](std::size_t k) {
    return bytes == 1 ? double(raw[k]) : double((raw[2 * k] << 8) | raw[2 * k + 1]);
  };
  Image img(height, width);
  for (std::size_t p = 0; p < img.size(); ++p) {
    double v;
    if (channels == 1) {
      v = sample(p);
    } else {
      v = 0.299 * sample(3 * p) + 0.587 * sample(3 * p + 1) + 0.114 * sample(3 * p + 2);
    }
    img.pixels[p] = v / maxval;
  }
  return img;
}

// Values are clamped to [0, 1] and quantised to 8 bits.
inline void write_pgm(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> raw(img.size());
  for (std::size_t p = 0; p < img.size(); ++p) {
    raw[p] = static_cast<unsigned char>(std::lround(std::clamp(img.pixels[p], 0.0, 1.0) * 255.0));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw FormatError("failed writing '" + path + "'");
}

// 8-bit quantisation as performed by write_pgm, for in-memory equivalence.
inline Image quantized_8bit(Image img) {
  for (double& v : img.pixels) v = std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  return img;
}

}  // namespace msdgr
