#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "wsikit/core.hpp"

namespace wsikit {

// 8-bit RGB image, row-major, interleaved channels.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // size = width * height * 3

  Raster() = default;
  Raster(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::size_t index(int x, int y) const {
    return (static_cast<std::size_t>(y) * width + x) * 3;
  }

  std::uint8_t* pixel(int x, int y) { return data.data() + index(x, y); }
  const std::uint8_t* pixel(int x, int y) const {
    return data.data() + index(x, y);
  }

  void set_pixel(int x, int y, std::uint8_t r, std::uint8_t g,
                 std::uint8_t b) {
    std::uint8_t* p = pixel(x, y);
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }

  bool operator==(const Raster& other) const = default;
};

// Single-channel 8-bit image (binary analysis maps).
struct GrayRaster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  GrayRaster() = default;
  GrayRaster(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  bool operator==(const GrayRaster& other) const = default;
};

namespace detail {

// Reads one PNM header token, skipping whitespace and '#' comments.
inline std::string pnm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n') continue;
    break;
  }
  if (ch == EOF) return tok;
  tok.push_back(static_cast<char>(ch));
  while ((ch = in.get()) != EOF) {
    if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n' || ch == '#') {
      if (ch == '#') {
        while ((ch = in.get()) != EOF && ch != '\n') {
        }
      }
      break;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

inline long pnm_int(std::istream& in, const std::string& what) {
  std::string tok = pnm_token(in);
  if (tok.empty()) fail(ErrorKind::CorruptRaster, "missing " + what);
  try {
    std::size_t pos = 0;
    long v = std::stol(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::CorruptRaster, "bad " + what + " '" + tok + "'");
  }
}

}  // namespace detail

// Binary PPM (P6, maxval 255). The writer emits a canonical header so that
// write/read round trips are byte-identical.
inline void write_ppm(const Raster& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoFailure, "cannot open " + path.string());
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
  if (!out) fail(ErrorKind::IoFailure, "write failed " + path.string());
}

inline Raster read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoFailure, "cannot open " + path.string());
  std::string magic = detail::pnm_token(in);
  if (magic != "P6")
    fail(ErrorKind::CorruptRaster, "bad magic '" + magic + "' in " + path.string());
  long w = detail::pnm_int(in, "width");
  long h = detail::pnm_int(in, "height");
  long maxval = detail::pnm_int(in, "maxval");
  if (w <= 0 || h <= 0 || maxval != 255)
    fail(ErrorKind::CorruptRaster, "unsupported PPM geometry in " + path.string());
  Raster img(static_cast<int>(w), static_cast<int>(h));
  in.read(reinterpret_cast<char*>(img.data.data()),
          static_cast<std::streamsize>(img.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.data.size()))
    fail(ErrorKind::CorruptRaster, "truncated pixel data in " + path.string());
  return img;
}

// Binary PGM (P5, maxval 255).
inline void write_pgm(const GrayRaster& img,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoFailure, "cannot open " + path.string());
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
  if (!out) fail(ErrorKind::IoFailure, "write failed " + path.string());
}

inline GrayRaster read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoFailure, "cannot open " + path.string());
  std::string magic = detail::pnm_token(in);
  if (magic != "P5")
    fail(ErrorKind::CorruptRaster, "bad magic '" + magic + "' in " + path.string());
  long w = detail::pnm_int(in, "width");
  long h = detail::pnm_int(in, "height");
  long maxval = detail::pnm_int(in, "maxval");
  if (w <= 0 || h <= 0 || maxval != 255)
    fail(ErrorKind::CorruptRaster, "unsupported PGM geometry in " + path.string());
  GrayRaster img(static_cast<int>(w), static_cast<int>(h));
  in.read(reinterpret_cast<char*>(img.data.data()),
          static_cast<std::streamsize>(img.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.data.size()))
    fail(ErrorKind::CorruptRaster, "truncated pixel data in " + path.string());
  return img;
}

}  // namespace wsikit
