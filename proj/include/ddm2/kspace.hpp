#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "ddm2/image.hpp"

namespace ddm2 {

/// Result of simulated k-space corruption: the root-sum-of-squares
/// magnitude reconstruction plus the per-coil complex image-domain data
/// (kept so tests can measure per-component noise statistics).
struct KspaceNoiseResult {
  Image magnitude;
  std::vector<std::vector<std::complex<double>>> coil_images;
};

/// Promotes `clean` to k-space per coil via a unitary 2D DFT, adds complex
/// Gaussian noise (std sigma_k per real/imag component) independently to
/// each coil, inverse-transforms, and combines coils by root-sum-of-squares.
/// With the unitary transform, image-domain complex noise std equals
/// sigma_k per component.
KspaceNoiseResult inject_kspace_noise(const Image& clean, int coils, double sigma_k,
                                      uint64_t seed);

/// Smooth complex coil sensitivities normalized so sum |s_c|^2 = 1 at every
/// pixel (the sigma_k = 0 reconstruction is exactly |clean|).
std::vector<std::vector<std::complex<double>>> make_coil_sensitivities(int rows, int cols,
                                                                       int coils);

/// Unitary 2D DFT helpers (forward = true transforms image -> k-space).
void unitary_fft2(std::vector<std::complex<double>>& data, int rows, int cols, bool forward);

}  // namespace ddm2
