#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ddm2/image.hpp"

namespace ddm2 {

/// Externally supplied region-of-interest masks (segmentation is out of
/// scope here). Masks must be disjoint and non-empty.
struct RoiMasks {
  int rows = 0, cols = 0;
  std::vector<uint8_t> signal, background;
  std::string provenance;

  void validate() const;
  std::string fingerprint() const;
};

/// SNR = mean(signal) / std(background); CNR = (mean(signal) -
/// mean(background)) / std(background). Population std.
double snr(const Image& img, const RoiMasks& masks);
double cnr(const Image& img, const RoiMasks& masks);

struct SliceScores {
  double snr = 0, cnr = 0;
  std::string mask_fingerprint;
};

SliceScores score_slice(const Image& img, const RoiMasks& masks);

/// (delta SNR, delta CNR) = scores(denoised) - scores(noisy). The two score
/// sets must come from the same masks.
std::pair<double, double> relative_scores(const SliceScores& denoised, const SliceScores& noisy);
std::pair<double, double> relative_scores(const Image& denoised, const Image& noisy,
                                          const RoiMasks& masks);

/// Peak signal-to-noise ratio in dB; identical images report the 99 dB cap.
double psnr(const Image& a, const Image& b, double data_range);

/// SSIM with a 7x7 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, averaged
/// over the interior (3-pixel border skipped).
double ssim(const Image& a, const Image& b, double data_range);

/// Symmetric KL divergence between intensity histograms over a shared range.
double histogram_sym_kl(const Image& a, const Image& b, int bins = 64);

/// Jarque-Bera normality test p-value (chi-squared with 2 dof).
double jarque_bera_pvalue(const std::vector<double>& sample);

}  // namespace ddm2
