#include "ddm2/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "ddm2/rng.hpp"

namespace ddm2 {

namespace {

void check_finite(const Image& img, int t) {
  if (!img.finite())
    throw Error(ErrorKind::NonFiniteState,
                "non-finite state encountered at t=" + std::to_string(t));
}

Image reverse_chain(Image state, int t_start, const Image* rmse_ref, const Denoiser& F,
                    const NoiseSchedule& sched, MeanMode mean_mode, uint64_t seed,
                    SamplerTrace* trace, bool keep_states) {
  Rng rng(seed);
  if (trace != nullptr) {
    trace->t_start = t_start;
    trace->seed = seed;
    trace->rmse_curve.push_back({t_start, rmse_ref ? rmse(state, *rmse_ref) : 0.0});
    if (keep_states) trace->states.push_back(state);
  }

  for (int t = t_start; t >= 1; t--) {
    Image x0 = F.apply({state}, sched.alpha_bar(t));
    check_finite(x0, t);
    if (t == 1) {
      state = std::move(x0);  // terminal step: emit the prediction, no noise
    } else {
      PosteriorCoeffs c = posterior_mean_coeffs(sched, t);
      Image next(state.rows, state.cols);
      if (mean_mode == MeanMode::x0_posterior) {
        for (size_t i = 0; i < next.v.size(); i++)
          next.v[i] = c.coef_clean * x0.v[i] + c.coef_state * state.v[i] +
                      c.sigma * rng.normal();
      } else {
        for (size_t i = 0; i < next.v.size(); i++) next.v[i] = x0.v[i] + c.sigma * rng.normal();
      }
      state = std::move(next);
      check_finite(state, t - 1);
    }
    if (trace != nullptr) {
      trace->rmse_curve.push_back({t - 1, rmse_ref ? rmse(state, *rmse_ref) : 0.0});
      if (keep_states) trace->states.push_back(state);
    }
  }
  return state;
}

}  // namespace

DenoiseResult denoise(const Image& x, const Denoiser& F, const NoiseSchedule& sched,
                      const StateMatch& match, const SamplerOptions& opts) {
  if (!F.conditioned())
    throw Error(ErrorKind::SpecMismatch, "conditional sampling needs a conditioned denoiser");
  if (match.t_star < 1 || match.t_star > sched.T())
    throw Error(ErrorKind::StateOutOfRange, "t_star=" + std::to_string(match.t_star));
  if (match.schedule_fingerprint != sched.fingerprint())
    throw Error(ErrorKind::SpecMismatch, "state match belongs to a different schedule");
  check_finite(x, match.t_star);

  auto start = std::chrono::steady_clock::now();
  DenoiseResult res;
  res.s0 = reverse_chain(x, match.t_star, &x, F, sched, opts.mean_mode, opts.seed,
                         opts.keep_trace ? &res.trace : nullptr, opts.keep_states);
  res.trace.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  for (double v : res.s0.v)
    if (v < -1.5 || v > 1.5) {
      res.trace.range_warning = true;
      break;
    }
  return res;
}

Image sample_unconditional(const Denoiser& F, const NoiseSchedule& sched, int rows, int cols,
                           uint64_t seed, MeanMode mean_mode) {
  if (!F.conditioned())
    throw Error(ErrorKind::SpecMismatch, "unconditional sampling needs a conditioned denoiser");
  Image z(rows, cols);
  Rng init(mix_seed(seed, 0x5eedULL));
  for (double& v : z.v) v = init.normal();
  return reverse_chain(std::move(z), sched.T(), nullptr, F, sched, mean_mode, seed, nullptr,
                       false);
}

double population_threshold(std::vector<double> final_rmses, double fraction) {
  if (final_rmses.empty()) throw Error(ErrorKind::EmptyTrace, "no final RMSE values");
  std::sort(final_rmses.begin(), final_rmses.end());
  size_t n = final_rmses.size();
  double median =
      n % 2 == 1 ? final_rmses[n / 2] : 0.5 * (final_rmses[n / 2 - 1] + final_rmses[n / 2]);
  return fraction * median;
}

Verdict detect_outlier(const SamplerTrace& trace, const OutlierPolicy& policy) {
  if (trace.rmse_curve.size() < 2)
    throw Error(ErrorKind::EmptyTrace, "trace needs at least two RMSE points");
  return trace.final_rmse() < policy.threshold ? Verdict::outlier : Verdict::ok;
}

void write_trace_csv(const std::string& path, const SamplerTrace& trace) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorKind::Internal, "cannot open for writing: " + path);
  f << "t,rmse\n";
  for (const TracePoint& p : trace.rmse_curve) f << p.t << ',' << p.rmse_vs_input << '\n';
}

}  // namespace ddm2
