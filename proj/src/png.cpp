#include "ddm2/png.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace ddm2 {

namespace {

void put_u32_be(std::string& out, uint32_t v) {
  out.push_back(char(v >> 24));
  out.push_back(char(v >> 16));
  out.push_back(char(v >> 8));
  out.push_back(char(v));
}

void put_chunk(std::string& out, const char type[4], const std::string& data) {
  put_u32_be(out, uint32_t(data.size()));
  size_t crc_start = out.size();
  out.append(type, 4);
  out.append(data);
  uint32_t crc = crc32(0, reinterpret_cast<const Bytef*>(out.data() + crc_start),
                       uInt(out.size() - crc_start));
  put_u32_be(out, crc);
}

}  // namespace

void write_png_gray8(const std::string& path, int rows, int cols,
                     const std::vector<uint8_t>& pixels) {
  if (rows <= 0 || cols <= 0 || pixels.size() != size_t(rows) * cols)
    throw Error(ErrorKind::ShapeMismatch, "write_png_gray8: pixel buffer/shape mismatch");

  // scanlines with filter byte 0
  std::vector<uint8_t> raw(size_t(rows) * (cols + 1));
  for (int r = 0; r < rows; r++) {
    raw[size_t(r) * (cols + 1)] = 0;
    std::memcpy(&raw[size_t(r) * (cols + 1) + 1], &pixels[size_t(r) * cols], size_t(cols));
  }
  uLongf comp_len = compressBound(uLong(raw.size()));
  std::vector<uint8_t> comp(comp_len);
  if (compress2(comp.data(), &comp_len, raw.data(), uLong(raw.size()), 6) != Z_OK)
    throw Error(ErrorKind::Internal, "zlib compression failed");

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  put_u32_be(ihdr, uint32_t(cols));
  put_u32_be(ihdr, uint32_t(rows));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter
  ihdr.push_back(0);  // no interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", std::string(reinterpret_cast<char*>(comp.data()), comp_len));
  put_chunk(out, "IEND", "");

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::Internal, "cannot open for writing: " + path);
  f.write(out.data(), std::streamsize(out.size()));
}

namespace {

std::vector<uint8_t> quantize(const Image& img, double lo, double hi) {
  std::vector<uint8_t> px(img.v.size());
  double range = hi > lo ? hi - lo : 1.0;
  for (size_t i = 0; i < img.v.size(); i++) {
    double t = (img.v[i] - lo) / range;
    px[i] = uint8_t(std::clamp(t, 0.0, 1.0) * 255.0 + 0.5);
  }
  return px;
}

}  // namespace

void write_png_image(const std::string& path, const Image& img, double lo, double hi) {
  if (lo == 0.0 && hi == 0.0) {
    auto [mn, mx] = std::minmax_element(img.v.begin(), img.v.end());
    lo = *mn;
    hi = *mx;
  }
  write_png_gray8(path, img.rows, img.cols, quantize(img, lo, hi));
}

void write_png_pair(const std::string& path, const Image& left, const Image& right) {
  require_same_shape(left, right, "write_png_pair");
  double lo = left.v[0], hi = left.v[0];
  for (const Image* im : {&left, &right})
    for (double v : im->v) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const int gap = 4;
  int rows = left.rows, cols = left.cols * 2 + gap;
  std::vector<uint8_t> px(size_t(rows) * cols, 32);
  auto lq = quantize(left, lo, hi);
  auto rq = quantize(right, lo, hi);
  for (int r = 0; r < rows; r++) {
    std::memcpy(&px[size_t(r) * cols], &lq[size_t(r) * left.cols], size_t(left.cols));
    std::memcpy(&px[size_t(r) * cols + left.cols + gap], &rq[size_t(r) * right.cols],
                size_t(right.cols));
  }
  write_png_gray8(path, rows, cols, px);
}

void Canvas::line(double r0, double c0, double r1, double c1, uint8_t v) {
  double dr = r1 - r0, dc = c1 - c0;
  int steps = int(std::max(std::abs(dr), std::abs(dc))) + 1;
  for (int i = 0; i <= steps; i++) {
    double t = double(i) / steps;
    set(int(std::lround(r0 + t * dr)), int(std::lround(c0 + t * dc)), v);
  }
}

void Canvas::rect(int r0, int c0, int r1, int c1, uint8_t v, bool fill) {
  if (r0 > r1) std::swap(r0, r1);
  if (c0 > c1) std::swap(c0, c1);
  if (fill) {
    for (int r = r0; r <= r1; r++)
      for (int c = c0; c <= c1; c++) set(r, c, v);
  } else {
    for (int c = c0; c <= c1; c++) {
      set(r0, c, v);
      set(r1, c, v);
    }
    for (int r = r0; r <= r1; r++) {
      set(r, c0, v);
      set(r, c1, v);
    }
  }
}

}  // namespace ddm2
