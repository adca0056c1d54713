#include "ddm2/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "ddm2/sha256.hpp"

namespace ddm2 {

void RoiMasks::validate() const {
  size_t n = size_t(rows) * cols;
  if (rows <= 0 || cols <= 0 || signal.size() != n || background.size() != n)
    throw Error(ErrorKind::ShapeMismatch, "mask buffers do not match the declared shape");
  size_t sig = 0, bg = 0;
  for (size_t i = 0; i < n; i++) {
    if (signal[i] && background[i])
      throw Error(ErrorKind::MaskMismatch, "signal and background masks overlap");
    sig += signal[i] ? 1 : 0;
    bg += background[i] ? 1 : 0;
  }
  if (sig == 0 || bg == 0) throw Error(ErrorKind::MaskMismatch, "each mask must be non-empty");
}

std::string RoiMasks::fingerprint() const {
  Sha256 h;
  h.update(&rows, sizeof(rows));
  h.update(&cols, sizeof(cols));
  h.update(signal.data(), signal.size());
  h.update(background.data(), background.size());
  return hex_string(h.digest());
}

namespace {

struct RegionStats {
  double signal_mean = 0, bg_mean = 0, bg_std = 0;
};

RegionStats region_stats(const Image& img, const RoiMasks& masks) {
  masks.validate();
  if (img.rows != masks.rows || img.cols != masks.cols)
    throw Error(ErrorKind::ShapeMismatch, "image does not match mask shape");
  double ssum = 0, bsum = 0;
  size_t sn = 0, bn = 0;
  for (size_t i = 0; i < img.v.size(); i++) {
    if (masks.signal[i]) {
      ssum += img.v[i];
      sn++;
    }
    if (masks.background[i]) {
      bsum += img.v[i];
      bn++;
    }
  }
  RegionStats st;
  st.signal_mean = ssum / double(sn);
  st.bg_mean = bsum / double(bn);
  double var = 0;
  for (size_t i = 0; i < img.v.size(); i++)
    if (masks.background[i]) {
      double d = img.v[i] - st.bg_mean;
      var += d * d;
    }
  st.bg_std = std::sqrt(var / double(bn));  // population std
  if (st.bg_std == 0.0)
    throw Error(ErrorKind::DegenerateBackground, "background region has zero variance");
  return st;
}

}  // namespace

double snr(const Image& img, const RoiMasks& masks) {
  RegionStats st = region_stats(img, masks);
  return st.signal_mean / st.bg_std;
}

double cnr(const Image& img, const RoiMasks& masks) {
  RegionStats st = region_stats(img, masks);
  return (st.signal_mean - st.bg_mean) / st.bg_std;
}

SliceScores score_slice(const Image& img, const RoiMasks& masks) {
  RegionStats st = region_stats(img, masks);
  SliceScores s;
  s.snr = st.signal_mean / st.bg_std;
  s.cnr = (st.signal_mean - st.bg_mean) / st.bg_std;
  s.mask_fingerprint = masks.fingerprint();
  return s;
}

std::pair<double, double> relative_scores(const SliceScores& denoised, const SliceScores& noisy) {
  if (denoised.mask_fingerprint != noisy.mask_fingerprint)
    throw Error(ErrorKind::MaskMismatch, "scores were computed with different masks");
  return {denoised.snr - noisy.snr, denoised.cnr - noisy.cnr};
}

std::pair<double, double> relative_scores(const Image& denoised, const Image& noisy,
                                          const RoiMasks& masks) {
  return relative_scores(score_slice(denoised, masks), score_slice(noisy, masks));
}

double psnr(const Image& a, const Image& b, double data_range) {
  require_same_shape(a, b, "psnr");
  if (data_range <= 0) throw Error(ErrorKind::ConfigInvalid, "data_range must be positive");
  double mse = 0;
  for (size_t i = 0; i < a.v.size(); i++) {
    double d = a.v[i] - b.v[i];
    mse += d * d;
  }
  mse /= double(a.v.size());
  if (mse == 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(data_range * data_range / mse));
}

double ssim(const Image& a, const Image& b, double data_range) {
  require_same_shape(a, b, "ssim");
  if (data_range <= 0) throw Error(ErrorKind::ConfigInvalid, "data_range must be positive");
  const int half = 3;  // 7x7 window
  if (a.rows < 7 || a.cols < 7)
    throw Error(ErrorKind::ShapeMismatch, "ssim needs at least 7x7 images");

  // Gaussian window, sigma 1.5, normalized
  double wsum = 0;
  double win[7][7];
  for (int i = -half; i <= half; i++)
    for (int j = -half; j <= half; j++) {
      win[i + half][j + half] = std::exp(-(i * i + j * j) / (2.0 * 1.5 * 1.5));
      wsum += win[i + half][j + half];
    }
  for (auto& row : win)
    for (double& w : row) w /= wsum;

  const double c1 = (0.01 * data_range) * (0.01 * data_range);
  const double c2 = (0.03 * data_range) * (0.03 * data_range);

  double total = 0;
  size_t count = 0;
  for (int r = half; r < a.rows - half; r++) {
    for (int c = half; c < a.cols - half; c++) {
      double ma = 0, mb = 0;
      for (int i = -half; i <= half; i++)
        for (int j = -half; j <= half; j++) {
          double w = win[i + half][j + half];
          ma += w * a.at(r + i, c + j);
          mb += w * b.at(r + i, c + j);
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = -half; i <= half; i++)
        for (int j = -half; j <= half; j++) {
          double w = win[i + half][j + half];
          double da = a.at(r + i, c + j) - ma;
          double db = b.at(r + i, c + j) - mb;
          va += w * da * da;
          vb += w * db * db;
          cov += w * da * db;
        }
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
      count++;
    }
  }
  return total / double(count);
}

double histogram_sym_kl(const Image& a, const Image& b, int bins) {
  require_same_shape(a, b, "histogram_sym_kl");
  double lo = a.v[0], hi = a.v[0];
  for (const Image* im : {&a, &b})
    for (double v : im->v) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (hi == lo) return 0.0;

  std::vector<double> pa(size_t(bins), 0.0), pb(size_t(bins), 0.0);
  auto bin_of = [&](double v) {
    int k = int((v - lo) / (hi - lo) * bins);
    return std::clamp(k, 0, bins - 1);
  };
  for (double v : a.v) pa[size_t(bin_of(v))] += 1.0;
  for (double v : b.v) pb[size_t(bin_of(v))] += 1.0;

  const double eps = 1e-9;
  double na = double(a.v.size()) + eps * bins, nb = double(b.v.size()) + eps * bins;
  double kl = 0;
  for (int k = 0; k < bins; k++) {
    double p = (pa[size_t(k)] + eps) / na;
    double q = (pb[size_t(k)] + eps) / nb;
    kl += p * std::log(p / q) + q * std::log(q / p);
  }
  return kl;
}

double jarque_bera_pvalue(const std::vector<double>& sample) {
  if (sample.size() < 8) throw Error(ErrorKind::EmptySample, "sample too small for JB test");
  double n = double(sample.size());
  double m = mean_of(sample);
  double m2 = 0, m3 = 0, m4 = 0;
  for (double x : sample) {
    double d = x - m;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  double skew = m3 / std::pow(m2, 1.5);
  double kurt = m4 / (m2 * m2) - 3.0;
  double jb = n / 6.0 * (skew * skew + kurt * kurt / 4.0);
  return std::exp(-jb / 2.0);  // chi-squared(2) survival function
}

}  // namespace ddm2
