#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ddm2/schedule.hpp"
#include "ddm2/stage1.hpp"

namespace ddm2 {

enum class FitScope { per_slice, per_volume, global };

/// Fitted Gaussian noise model for one scope unit.
struct NoiseModelFit {
  double sigma = 0;   // sample std of the calibrated residual
  double mu_raw = 0;  // residual mean removed by calibration
  FitScope scope = FitScope::per_volume;
  size_t sample_count = 0;
  int volume_index = -1;  // -1 when not applicable to the scope
  int slice_index = -1;
};

struct StateMatch {
  int t_star = 0;
  double distance = 0;  // |metric(t_star) - sigma|^p
  double p = 1.0;
  double sigma = 0;
  std::string schedule_fingerprint;
  std::string warning;  // non-empty when the match was clamped
};

/// Zero-means the residual per scope unit and shifts y_bar by the same
/// amount (unit-scale convention), preserving y_bar + residual exactly.
Stage1Output calibrate(const Stage1Output& out, FitScope scope = FitScope::per_volume);

/// Sample standard deviation of the calibrated residual per scope unit.
/// `background_mask` (slice-shaped, nonzero = excluded) removes voxels from
/// every slice's sample.
std::vector<NoiseModelFit> fit_noise_model(const Stage1Output& out, FitScope scope,
                                           const std::vector<uint8_t>* background_mask = nullptr,
                                           int mask_rows = 0, int mask_cols = 0);

enum class MatchMetric { sqrt_beta, sqrt_one_minus_alphabar };

/// Exhaustive scan over t in [1, T] minimizing |metric(t) - sigma|; ties
/// break toward the largest t. sigma = 0 clamps to t = 1 with a warning;
/// sigma above the schedule range clamps to T with a warning.
StateMatch match_state(const NoiseModelFit& fit, const NoiseSchedule& sched, double p = 1.0,
                       MatchMetric metric = MatchMetric::sqrt_beta);

/// Appendix-style state-match check: corrupts y_bar at state t with
/// N(0, beta_t I) noise and returns (x, corrupted) for one slice; writes a
/// side-by-side PNG when `png_path` is non-empty.
std::pair<Image, Image> visualize_match(const Stage1Output& out, const NoiseSchedule& sched, int t,
                                        int volume_index, int slice_index, uint64_t seed,
                                        const std::string& png_path = "");

}  // namespace ddm2
