#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddm2/image.hpp"

namespace ddm2 {

enum class ScheduleShape { warmup, reverse_warmup };

/// Discrete diffusion noise schedule over states t in [1, T].
///
/// reverse_warmup holds beta at beta_start for t in [1, floor((1-ratio)*T)]
/// and then ramps linearly (in beta) to beta_end at t = T, endpoints
/// inclusive. warmup is the mirror image: linear ramp over the first
/// floor(ratio*T) states, then constant at beta_end.
class NoiseSchedule {
 public:
  static NoiseSchedule build(ScheduleShape shape, int T, double beta_start, double beta_end,
                             double linear_ratio);

  int T() const { return int(beta_.size()); }
  ScheduleShape shape() const { return shape_; }
  double beta_start() const { return beta_start_; }
  double beta_end() const { return beta_end_; }
  double linear_ratio() const { return linear_ratio_; }

  // Accessors take 1-based state indices; alpha_bar(0) == 1 by convention.
  double beta(int t) const { return beta_[check(t) - 1]; }
  double alpha(int t) const { return alpha_[check(t) - 1]; }
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bar_[check(t) - 1]; }
  double lambda1(int t) const { return lambda1_[check(t) - 1]; }  // sqrt(alpha_bar)
  double lambda2(int t) const { return lambda2_[check(t) - 1]; }  // sqrt(1 - alpha_bar)
  double sqrt_beta(int t) const { return sqrt_beta_[check(t) - 1]; }

  /// Last state of the reverse_warmup constant segment (0 when the ramp
  /// starts immediately).
  int constant_segment_end() const { return constant_end_; }

  /// SHA-256 over shape, parameters, and the beta table; identifies the
  /// schedule in run manifests and state matches.
  const std::string& fingerprint() const { return fingerprint_; }

  /// CSV export: t, beta, alpha_bar, sqrt_beta.
  void export_csv(const std::string& path) const;

 private:
  int check(int t) const {
    if (t < 1 || t > T())
      throw Error(ErrorKind::StateOutOfRange,
                  "state t=" + std::to_string(t) + " outside [1, " + std::to_string(T()) + "]");
    return t;
  }

  ScheduleShape shape_ = ScheduleShape::reverse_warmup;
  double beta_start_ = 0, beta_end_ = 0, linear_ratio_ = 0;
  int constant_end_ = 0;
  std::vector<double> beta_, alpha_, alpha_bar_, lambda1_, lambda2_, sqrt_beta_;
  std::string fingerprint_;
};

/// State sampled from the forward (corruption) process at state t.
/// state = lambda1(t) * clean + noise_term, recomputable bit-exactly.
struct ForwardSample {
  Image state;
  int t = 0;
  Image noise_used;  // the additive term actually applied (already scaled)
};

/// q(S_t | clean): lambda1(t)*clean + lambda2(t)*noise. When `noise` is
/// null a standard-normal field is drawn from `seed`.
ForwardSample forward_sample(const NoiseSchedule& sched, const Image& clean, int t,
                             const Image* noise = nullptr, uint64_t seed = 0);

/// Reverse-transition coefficients for the x0-parameterized DDPM posterior
/// mean, with sigma_t = sqrt(beta_t). t = 1 yields (1, 0, 0): the terminal
/// step emits the prediction with no added noise.
struct PosteriorCoeffs {
  double coef_clean = 0;  // sqrt(alpha_bar_{t-1}) * beta_t / (1 - alpha_bar_t)
  double coef_state = 0;  // sqrt(alpha_t) * (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t)
  double sigma = 0;       // sqrt(beta_t)
};

PosteriorCoeffs posterior_mean_coeffs(const NoiseSchedule& sched, int t);

}  // namespace ddm2
