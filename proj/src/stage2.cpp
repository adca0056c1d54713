#include "ddm2/stage2.hpp"

#include <algorithm>
#include <cmath>

#include "ddm2/png.hpp"
#include "ddm2/rng.hpp"

namespace ddm2 {

namespace {

// scope units enumerated as ranges of (vol, z) slice indices
struct ScopeUnit {
  int volume_index = -1;
  int slice_index = -1;
  std::vector<std::pair<int, int>> slices;  // (vol, z)
};

std::vector<ScopeUnit> scope_units(const Stage1Output& out, FitScope scope) {
  std::vector<ScopeUnit> units;
  if (scope == FitScope::global) {
    ScopeUnit u;
    for (int vol = 0; vol < out.l; vol++)
      for (int z = 0; z < out.d; z++) u.slices.push_back({vol, z});
    units.push_back(std::move(u));
  } else if (scope == FitScope::per_volume) {
    for (int vol = 0; vol < out.l; vol++) {
      ScopeUnit u;
      u.volume_index = vol;
      for (int z = 0; z < out.d; z++) u.slices.push_back({vol, z});
      units.push_back(std::move(u));
    }
  } else {
    for (int vol = 0; vol < out.l; vol++)
      for (int z = 0; z < out.d; z++) {
        ScopeUnit u;
        u.volume_index = vol;
        u.slice_index = z;
        u.slices.push_back({vol, z});
        units.push_back(std::move(u));
      }
  }
  return units;
}

}  // namespace

Stage1Output calibrate(const Stage1Output& out, FitScope scope) {
  if (out.calibrated) throw Error(ErrorKind::AlreadyCalibrated, "output is already calibrated");
  Stage1Output cal = out;
  cal.removed_mean_per_slice.assign(size_t(out.d) * out.l, 0.0);

  size_t plane = size_t(out.w) * out.h;
  for (const ScopeUnit& u : scope_units(out, scope)) {
    double sum = 0;
    for (auto [vol, z] : u.slices) {
      const double* eps = &out.residual[out.index(0, 0, z, vol)];
      for (size_t i = 0; i < plane; i++) sum += eps[i];
    }
    double mu = sum / (double(u.slices.size()) * double(plane));
    for (auto [vol, z] : u.slices) {
      double* eps = &cal.residual[cal.index(0, 0, z, vol)];
      double* yb = &cal.y_bar[cal.index(0, 0, z, vol)];
      for (size_t i = 0; i < plane; i++) {
        eps[i] -= mu;
        yb[i] += mu;
      }
      cal.removed_mean_per_slice[size_t(vol) * out.d + z] = mu;
      auto& st = cal.slice_stats[size_t(vol) * out.d + z];
      st.mean -= mu;
    }
  }
  cal.calibrated = true;
  return cal;
}

std::vector<NoiseModelFit> fit_noise_model(const Stage1Output& out, FitScope scope,
                                           const std::vector<uint8_t>* background_mask,
                                           int mask_rows, int mask_cols) {
  if (!out.calibrated)
    throw Error(ErrorKind::Internal, "fit_noise_model requires a calibrated Stage1Output");
  if (background_mask != nullptr && (mask_rows != out.h || mask_cols != out.w))
    throw Error(ErrorKind::ShapeMismatch, "background mask shape does not match slices");

  size_t plane = size_t(out.w) * out.h;
  std::vector<NoiseModelFit> fits;
  for (const ScopeUnit& u : scope_units(out, scope)) {
    std::vector<double> sample;
    double removed_sum = 0;
    for (auto [vol, z] : u.slices) {
      const double* eps = &out.residual[out.index(0, 0, z, vol)];
      for (size_t i = 0; i < plane; i++) {
        if (background_mask != nullptr && (*background_mask)[i]) continue;
        sample.push_back(eps[i]);
      }
      removed_sum += out.removed_mean_per_slice.empty()
                         ? 0.0
                         : out.removed_mean_per_slice[size_t(vol) * out.d + z];
    }
    if (sample.size() < 2)
      throw Error(ErrorKind::EmptySample, "scope unit has fewer than two usable voxels");
    NoiseModelFit f;
    f.scope = scope;
    f.volume_index = u.volume_index;
    f.slice_index = u.slice_index;
    f.sample_count = sample.size();
    f.sigma = stddev_of(sample);
    // pre-calibration mean = current residual mean + mean removed per slice
    f.mu_raw = mean_of(sample) + removed_sum / double(u.slices.size());
    fits.push_back(f);
  }
  return fits;
}

StateMatch match_state(const NoiseModelFit& fit, const NoiseSchedule& sched, double p,
                       MatchMetric metric) {
  if (fit.sigma < 0) throw Error(ErrorKind::Internal, "negative sigma");
  StateMatch m;
  m.p = p;
  m.sigma = fit.sigma;
  m.schedule_fingerprint = sched.fingerprint();

  auto level = [&](int t) {
    return metric == MatchMetric::sqrt_beta ? sched.sqrt_beta(t) : sched.lambda2(t);
  };

  if (fit.sigma == 0.0) {
    m.t_star = 1;
    m.distance = std::pow(std::abs(level(1)), p);
    m.warning = "sigma is zero; clamped to t=1 (single terminal transition)";
    return m;
  }

  int best_t = 1;
  double best_d = std::abs(level(1) - fit.sigma);
  double max_level = level(1);
  for (int t = 2; t <= sched.T(); t++) {
    double d = std::abs(level(t) - fit.sigma);
    if (d <= best_d) {  // <= so ties break toward the largest t
      best_d = d;
      best_t = t;
    }
    max_level = std::max(max_level, level(t));
  }
  m.t_star = best_t;
  m.distance = std::pow(best_d, p);
  if (fit.sigma > max_level)
    m.warning = "sigma exceeds the schedule's noise range; clamped to t=" + std::to_string(best_t);
  return m;
}

std::pair<Image, Image> visualize_match(const Stage1Output& out, const NoiseSchedule& sched, int t,
                                        int volume_index, int slice_index, uint64_t seed,
                                        const std::string& png_path) {
  if (t < 1 || t > sched.T())
    throw Error(ErrorKind::StateOutOfRange, "visualize_match: t=" + std::to_string(t));
  Image yb = out.y_bar_slice(volume_index, slice_index);
  Image eps = out.residual_slice(volume_index, slice_index);
  Image x(yb.rows, yb.cols);
  for (size_t i = 0; i < x.v.size(); i++) x.v[i] = yb.v[i] + eps.v[i];

  double scale = sched.lambda1(t);
  double noise_std = std::sqrt(sched.beta(t));
  Rng rng(seed);
  Image c(yb.rows, yb.cols);
  for (size_t i = 0; i < c.v.size(); i++) c.v[i] = scale * yb.v[i] + rng.normal(0.0, noise_std);

  if (!png_path.empty()) write_png_pair(png_path, x, c);
  return {x, c};
}

}  // namespace ddm2
