#pragma once

#include <string>
#include <vector>

#include "ddm2/denoiser.hpp"
#include "ddm2/schedule.hpp"
#include "ddm2/stage2.hpp"

namespace ddm2 {

enum class MeanMode {
  x0_posterior,  // DDPM posterior mean from the clean-image prediction
  literal,       // F's output used as the transition mean verbatim
};

struct SamplerOptions {
  MeanMode mean_mode = MeanMode::x0_posterior;
  bool keep_trace = true;
  bool keep_states = false;  // also retain intermediate images
  uint64_t seed = 0;
};

struct TracePoint {
  int t = 0;
  double rmse_vs_input = 0;
};

/// Reverse-chain record. The curve holds the initial state (RMSE 0 against
/// itself) plus one point per executed transition, so
/// transitions() == rmse_curve.size() - 1 == t_start.
struct SamplerTrace {
  std::vector<TracePoint> rmse_curve;
  std::vector<Image> states;
  int t_start = 0;
  uint64_t seed = 0;
  double wall_time_s = 0;
  bool range_warning = false;

  int transitions() const { return int(rmse_curve.size()) - 1; }
  double final_rmse() const {
    if (rmse_curve.empty()) throw Error(ErrorKind::EmptyTrace, "empty RMSE curve");
    return rmse_curve.back().rmse_vs_input;
  }
};

struct DenoiseResult {
  Image s0;
  SamplerTrace trace;
};

/// Conditional reverse sampling: S_{t*} := x, then t* transitions down to
/// S_0. The terminal step emits the prediction with no added noise.
DenoiseResult denoise(const Image& x, const Denoiser& F, const NoiseSchedule& sched,
                      const StateMatch& match, const SamplerOptions& opts = {});

/// Full-chain generation from S_T = z ~ N(0, I).
Image sample_unconditional(const Denoiser& F, const NoiseSchedule& sched, int rows, int cols,
                           uint64_t seed, MeanMode mean_mode = MeanMode::x0_posterior);

enum class Verdict { ok, outlier };

struct OutlierPolicy {
  double threshold = 0;  // flag when final RMSE < threshold
};

/// Default policy: half the median final RMSE over the run's population.
double population_threshold(std::vector<double> final_rmses, double fraction = 0.5);

/// A run whose generated states never depart from the noisy input indicates
/// poor denoising.
Verdict detect_outlier(const SamplerTrace& trace, const OutlierPolicy& policy);

/// CSV emission of a trace (t, rmse), for the report tooling.
void write_trace_csv(const std::string& path, const SamplerTrace& trace);

}  // namespace ddm2
