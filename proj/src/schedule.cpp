#include "ddm2/schedule.hpp"

#include <cmath>
#include <fstream>

#include "ddm2/rng.hpp"
#include "ddm2/sha256.hpp"

namespace ddm2 {

NoiseSchedule NoiseSchedule::build(ScheduleShape shape, int T, double beta_start, double beta_end,
                                   double linear_ratio) {
  if (T < 2) throw Error(ErrorKind::ConfigInvalid, "schedule needs T >= 2");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw Error(ErrorKind::ConfigInvalid, "need 0 < beta_start <= beta_end < 1");
  if (!(linear_ratio > 0.0 && linear_ratio <= 1.0))
    throw Error(ErrorKind::ConfigInvalid, "need 0 < linear_ratio <= 1");

  NoiseSchedule s;
  s.shape_ = shape;
  s.beta_start_ = beta_start;
  s.beta_end_ = beta_end;
  s.linear_ratio_ = linear_ratio;
  s.beta_.resize(T);

  // the +1e-9 keeps e.g. (1-0.7)*1000 from flooring to 299 under fp noise
  if (shape == ScheduleShape::reverse_warmup) {
    int const_end = int(std::floor((1.0 - linear_ratio) * T + 1e-9));
    s.constant_end_ = const_end;
    for (int t = 1; t <= T; t++) {
      if (t <= const_end)
        s.beta_[t - 1] = beta_start;
      else
        s.beta_[t - 1] = std::lerp(beta_start, beta_end, double(t - const_end) / (T - const_end));
    }
  } else {
    int ramp_end = int(std::floor(linear_ratio * T + 1e-9));
    s.constant_end_ = 0;
    for (int t = 1; t <= T; t++) {
      if (t >= ramp_end || ramp_end < 2)
        s.beta_[t - 1] = beta_end;
      else
        s.beta_[t - 1] = std::lerp(beta_start, beta_end, double(t - 1) / (ramp_end - 1));
    }
  }

  s.alpha_.resize(T);
  s.alpha_bar_.resize(T);
  s.lambda1_.resize(T);
  s.lambda2_.resize(T);
  s.sqrt_beta_.resize(T);
  double prod = 1.0;
  for (int i = 0; i < T; i++) {
    s.alpha_[i] = 1.0 - s.beta_[i];
    prod *= s.alpha_[i];
    s.alpha_bar_[i] = prod;
    s.lambda1_[i] = std::sqrt(prod);
    s.lambda2_[i] = std::sqrt(1.0 - prod);
    s.sqrt_beta_[i] = std::sqrt(s.beta_[i]);
  }

  Sha256 hash;
  int shape_tag = int(shape);
  hash.update(&shape_tag, sizeof(shape_tag));
  hash.update(&beta_start, sizeof(beta_start));
  hash.update(&beta_end, sizeof(beta_end));
  hash.update(&linear_ratio, sizeof(linear_ratio));
  hash.update(s.beta_.data(), s.beta_.size() * sizeof(double));
  s.fingerprint_ = hex_string(hash.digest());
  return s;
}

void NoiseSchedule::export_csv(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorKind::Internal, "cannot open for writing: " + path);
  f << "t,beta,alpha_bar,sqrt_beta\n";
  f.precision(17);
  for (int t = 1; t <= T(); t++)
    f << t << ',' << beta(t) << ',' << alpha_bar(t) << ',' << sqrt_beta(t) << '\n';
}

ForwardSample forward_sample(const NoiseSchedule& sched, const Image& clean, int t,
                             const Image* noise, uint64_t seed) {
  if (t < 1 || t > sched.T())
    throw Error(ErrorKind::StateOutOfRange, "forward_sample: t=" + std::to_string(t));

  Image z;
  if (noise != nullptr) {
    require_same_shape(clean, *noise, "forward_sample noise");
    z = *noise;
  } else {
    z = Image(clean.rows, clean.cols);
    Rng rng(seed);
    for (double& x : z.v) x = rng.normal();
  }

  double l1 = sched.lambda1(t), l2 = sched.lambda2(t);
  ForwardSample out;
  out.t = t;
  out.noise_used = Image(clean.rows, clean.cols);
  out.state = Image(clean.rows, clean.cols);
  for (size_t i = 0; i < clean.v.size(); i++) {
    out.noise_used.v[i] = l2 * z.v[i];
    out.state.v[i] = l1 * clean.v[i] + out.noise_used.v[i];
  }
  return out;
}

PosteriorCoeffs posterior_mean_coeffs(const NoiseSchedule& sched, int t) {
  if (t < 1 || t > sched.T())
    throw Error(ErrorKind::StateOutOfRange, "posterior_mean_coeffs: t=" + std::to_string(t));
  if (t == 1) return {1.0, 0.0, 0.0};
  double ab_t = sched.alpha_bar(t);
  double ab_prev = sched.alpha_bar(t - 1);
  PosteriorCoeffs c;
  c.coef_clean = std::sqrt(ab_prev) * sched.beta(t) / (1.0 - ab_t);
  c.coef_state = std::sqrt(sched.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab_t);
  c.sigma = sched.sqrt_beta(t);
  return c;
}

}  // namespace ddm2
