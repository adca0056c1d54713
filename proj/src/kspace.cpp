#include "ddm2/kspace.hpp"

#include <fftw3.h>

#include <cmath>
#include <numbers>

#include "ddm2/rng.hpp"

namespace ddm2 {

void unitary_fft2(std::vector<std::complex<double>>& data, int rows, int cols, bool forward) {
  if (data.size() != size_t(rows) * cols)
    throw Error(ErrorKind::ShapeMismatch, "fft buffer does not match shape");
  fftw_complex* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_plan plan = fftw_plan_dft_2d(rows, cols, buf, buf,
                                    forward ? FFTW_FORWARD : FFTW_BACKWARD, FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  double scale = 1.0 / std::sqrt(double(rows) * cols);
  for (auto& v : data) v *= scale;
}

std::vector<std::vector<std::complex<double>>> make_coil_sensitivities(int rows, int cols,
                                                                       int coils) {
  if (coils < 1) throw Error(ErrorKind::ConfigInvalid, "need at least one coil");
  std::vector<std::vector<std::complex<double>>> sens(
      size_t(coils), std::vector<std::complex<double>>(size_t(rows) * cols));

  if (coils == 1) {
    for (auto& v : sens[0]) v = 1.0;
    return sens;
  }

  // Gaussian magnitude bumps centered around the FOV with a per-coil phase
  for (int c = 0; c < coils; c++) {
    double ang = 2.0 * std::numbers::pi * c / coils;
    double cx = 0.6 * std::cos(ang), cy = 0.6 * std::sin(ang);
    for (int r = 0; r < rows; r++) {
      double ny = rows == 1 ? 0.0 : 2.0 * r / double(rows - 1) - 1.0;
      for (int x = 0; x < cols; x++) {
        double nx = cols == 1 ? 0.0 : 2.0 * x / double(cols - 1) - 1.0;
        double d2 = (nx - cx) * (nx - cx) + (ny - cy) * (ny - cy);
        double mag = std::exp(-d2 / 1.2) + 0.05;
        sens[size_t(c)][size_t(r) * cols + x] = std::polar(mag, 0.35 * ang);
      }
    }
  }
  // normalize so sum over coils of |s|^2 is 1 everywhere
  for (size_t i = 0; i < size_t(rows) * cols; i++) {
    double norm2 = 0;
    for (int c = 0; c < coils; c++) norm2 += std::norm(sens[size_t(c)][i]);
    double inv = 1.0 / std::sqrt(norm2);
    for (int c = 0; c < coils; c++) sens[size_t(c)][i] *= inv;
  }
  return sens;
}

KspaceNoiseResult inject_kspace_noise(const Image& clean, int coils, double sigma_k,
                                      uint64_t seed) {
  if (sigma_k < 0) throw Error(ErrorKind::ConfigInvalid, "sigma_k must be >= 0");
  if (!clean.finite()) throw Error(ErrorKind::NonFiniteData, "clean image has non-finite values");
  int rows = clean.rows, cols = clean.cols;
  auto sens = make_coil_sensitivities(rows, cols, coils);

  KspaceNoiseResult out;
  out.coil_images.resize(size_t(coils));
  Rng rng(mix_seed(seed, 0x6b5face));

  for (int c = 0; c < coils; c++) {
    std::vector<std::complex<double>> img(size_t(rows) * cols);
    for (size_t i = 0; i < img.size(); i++) img[i] = clean.v[i] * sens[size_t(c)][i];
    unitary_fft2(img, rows, cols, true);
    if (sigma_k > 0)
      for (auto& v : img) v += std::complex<double>(rng.normal(0, sigma_k), rng.normal(0, sigma_k));
    unitary_fft2(img, rows, cols, false);
    out.coil_images[size_t(c)] = std::move(img);
  }

  out.magnitude = Image(rows, cols);
  for (size_t i = 0; i < out.magnitude.v.size(); i++) {
    double ss = 0;
    for (int c = 0; c < coils; c++) ss += std::norm(out.coil_images[size_t(c)][i]);
    out.magnitude.v[i] = std::sqrt(ss);
  }
  return out;
}

}  // namespace ddm2
