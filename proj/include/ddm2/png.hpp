#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddm2/image.hpp"

namespace ddm2 {

/// Minimal 8-bit grayscale PNG writer (zlib-backed).
void write_png_gray8(const std::string& path, int rows, int cols,
                     const std::vector<uint8_t>& pixels);

/// Maps [lo, hi] to 0..255 and writes; lo/hi default to the image min/max.
void write_png_image(const std::string& path, const Image& img, double lo = 0.0, double hi = 0.0);

/// Side-by-side pair with a thin divider, on a shared display range.
void write_png_pair(const std::string& path, const Image& left, const Image& right);

/// Tiny raster canvas for report figures (curves, boxplots).
struct Canvas {
  int rows = 0, cols = 0;
  std::vector<uint8_t> px;

  Canvas(int r, int c, uint8_t bg = 255) : rows(r), cols(c), px(size_t(r) * c, bg) {}
  void set(int r, int c, uint8_t v) {
    if (r >= 0 && r < rows && c >= 0 && c < cols) px[size_t(r) * cols + c] = v;
  }
  void line(double r0, double c0, double r1, double c1, uint8_t v);
  void rect(int r0, int c0, int r1, int c1, uint8_t v, bool fill = false);
  void save(const std::string& path) const { write_png_gray8(path, rows, cols, px); }
};

}  // namespace ddm2
