#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "ddm2/error.hpp"

namespace ddm2 {

/// A 2D slice, row-major, `rows` = h, `cols` = w.
struct Image {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Image() = default;
  Image(int r, int c, double fill = 0.0) : rows(r), cols(c), v(size_t(r) * c, fill) {}

  size_t size() const { return v.size(); }
  double& at(int r, int c) { return v[size_t(r) * cols + c]; }
  double at(int r, int c) const { return v[size_t(r) * cols + c]; }
  bool same_shape(const Image& o) const { return rows == o.rows && cols == o.cols; }

  bool finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

inline void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b))
    throw Error(ErrorKind::ShapeMismatch, std::string(what) + ": " + std::to_string(a.rows) + "x" +
                                              std::to_string(a.cols) + " vs " +
                                              std::to_string(b.rows) + "x" + std::to_string(b.cols));
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / double(v.size());
}

/// Sample standard deviation (ddof = 1).
inline double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / double(v.size() - 1));
}

inline double rmse(const Image& a, const Image& b) {
  require_same_shape(a, b, "rmse");
  double s = 0;
  for (size_t i = 0; i < a.v.size(); i++) {
    double d = a.v[i] - b.v[i];
    s += d * d;
  }
  return std::sqrt(s / double(a.v.size()));
}

}  // namespace ddm2
