#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "ddm2/metrics.hpp"
#include "ddm2/stage2.hpp"

using namespace ddm2;

namespace {

Stage1Output make_output(int w, int h, int d, int l, uint64_t seed, double sigma = 0.1) {
  Stage1Output out;
  out.w = w;
  out.h = h;
  out.d = d;
  out.l = l;
  out.y_bar.resize(size_t(w) * h * d * l);
  out.residual.resize(out.y_bar.size());
  out.slice_stats.resize(size_t(d) * l);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  for (size_t i = 0; i < out.y_bar.size(); i++) {
    out.y_bar[i] = u(rng);
    out.residual[i] = g(rng) + 0.05;  // deliberately non-zero mean
  }
  return out;
}

NoiseSchedule defaults() {
  return NoiseSchedule::build(ScheduleShape::reverse_warmup, 1000, 5e-5, 1e-2, 0.7);
}

// independent exhaustive-scan oracle with largest-t tie break
int scan_oracle(const NoiseSchedule& s, double sigma, bool use_lambda2 = false) {
  int best = 1;
  double bd = std::abs((use_lambda2 ? s.lambda2(1) : s.sqrt_beta(1)) - sigma);
  for (int t = 2; t <= s.T(); t++) {
    double d = std::abs((use_lambda2 ? s.lambda2(t) : s.sqrt_beta(t)) - sigma);
    if (d <= bd) {
      bd = d;
      best = t;
    }
  }
  return best;
}

NoiseModelFit fit_of(double sigma) {
  NoiseModelFit f;
  f.sigma = sigma;
  f.sample_count = 1000;
  return f;
}

}  // namespace

TEST_CASE("calibrate: forced arithmetic on a four-pixel residual") {
  Stage1Output out;
  out.w = 2;
  out.h = 2;
  out.d = 1;
  out.l = 1;
  out.y_bar = {1.0, 2.0, 3.0, 4.0};
  out.residual = {0.1, -0.3, 0.2, 0.4};
  out.slice_stats.resize(1);

  Stage1Output cal = calibrate(out, FitScope::global);
  CHECK(cal.residual[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(cal.residual[1] == doctest::Approx(-0.4));
  CHECK(cal.residual[2] == doctest::Approx(0.1));
  CHECK(cal.residual[3] == doctest::Approx(0.3));
  for (int i = 0; i < 4; i++) CHECK(cal.y_bar[size_t(i)] == doctest::Approx(1.0 + i + 0.1));
  CHECK(cal.calibrated);
}

TEST_CASE("calibrate: zero-mean residual is a fixed point") {
  Stage1Output out;
  out.w = 2;
  out.h = 1;
  out.d = 1;
  out.l = 1;
  out.y_bar = {0.5, 0.5};
  out.residual = {0.25, -0.25};
  out.slice_stats.resize(1);
  Stage1Output cal = calibrate(out, FitScope::global);
  CHECK(cal.residual == out.residual);
  CHECK(cal.y_bar == out.y_bar);
}

TEST_CASE("calibrate: twice is AlreadyCalibrated") {
  Stage1Output out = make_output(4, 4, 2, 2, 1);
  Stage1Output cal = calibrate(out, FitScope::per_volume);
  CHECK_THROWS_AS(calibrate(cal, FitScope::per_volume), Error);
}

TEST_CASE("calibrate: preserves y_bar + residual and zeroes the mean, all scopes") {
  std::mt19937_64 rng(2);
  for (auto scope : {FitScope::per_slice, FitScope::per_volume, FitScope::global}) {
    for (int trial = 0; trial < 33; trial++) {
      Stage1Output out = make_output(6, 5, 3, 4, rng());
      Stage1Output cal = calibrate(out, scope);
      for (size_t i = 0; i < out.y_bar.size(); i++) {
        double before = out.y_bar[i] + out.residual[i];
        double after = cal.y_bar[i] + cal.residual[i];
        CHECK(std::abs(before - after) <= 1e-12);
      }
      // the whole-residual mean is zero for every scope granularity
      CHECK(std::abs(mean_of(cal.residual)) < 1e-6);
      if (scope == FitScope::per_slice)
        for (int vol = 0; vol < cal.l; vol++)
          for (int z = 0; z < cal.d; z++)
            CHECK(std::abs(mean_of(cal.residual_slice(vol, z).v)) < 1e-6);
    }
  }
}

TEST_CASE("fit_noise_model: recovers a known sigma from one million samples") {
  const double sigma = 0.05;
  Stage1Output out;
  out.w = 1000;
  out.h = 1000;
  out.d = 1;
  out.l = 2;
  out.y_bar.assign(size_t(out.w) * out.h * out.l, 0.0);
  out.residual.resize(out.y_bar.size());
  out.slice_stats.resize(2);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, sigma);
  for (double& x : out.residual) x = g(rng);
  Stage1Output cal = calibrate(out, FitScope::global);
  auto fits = fit_noise_model(cal, FitScope::global);
  REQUIRE(fits.size() == 1);
  CHECK(fits[0].sigma == doctest::Approx(sigma).epsilon(0.02));
  CHECK(std::abs(fits[0].sigma - sigma) < 0.001);
}

TEST_CASE("fit_noise_model: scope cardinality and mu_raw bookkeeping") {
  Stage1Output out = make_output(8, 8, 2, 2, 5);
  Stage1Output cal = calibrate(out, FitScope::per_slice);
  CHECK(fit_noise_model(cal, FitScope::per_slice).size() == 4);
  CHECK(fit_noise_model(cal, FitScope::per_volume).size() == 2);
  auto fits = fit_noise_model(cal, FitScope::global);
  CHECK(fits.size() == 1);
  // mu_raw reconstructs the pre-calibration mean (injected offset 0.05)
  CHECK(fits[0].mu_raw == doctest::Approx(0.05).epsilon(0.2));
}

TEST_CASE("fit_noise_model: background mask exclusion and empty sample") {
  Stage1Output out = make_output(4, 4, 1, 2, 9);
  Stage1Output cal = calibrate(out, FitScope::global);
  std::vector<uint8_t> exclude_all(16, 1);
  CHECK_THROWS_AS(fit_noise_model(cal, FitScope::global, &exclude_all, 4, 4), Error);
  std::vector<uint8_t> keep_half(16, 0);
  for (int i = 0; i < 8; i++) keep_half[size_t(i)] = 1;
  auto fits = fit_noise_model(cal, FitScope::global, &keep_half, 4, 4);
  CHECK(fits[0].sample_count == 16);  // 8 kept voxels x 2 volumes
}

TEST_CASE("match_state: pinned values on the default schedule") {
  NoiseSchedule s = defaults();
  CHECK(match_state(fit_of(0.1), s).t_star == 1000);             // sqrt(beta_T) = 0.1
  CHECK(match_state(fit_of(std::sqrt(5e-5)), s).t_star == 300);  // largest tie in constant run
  CHECK(match_state(fit_of(0.05), s).t_star == 472);             // on the linear-in-beta ramp
}

TEST_CASE("match_state: equals the exhaustive-scan oracle on 1000 random sigmas") {
  NoiseSchedule s = defaults();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 0.12);
  for (int i = 0; i < 1000; i++) {
    double sigma = u(rng);
    if (sigma == 0.0) continue;
    StateMatch m = match_state(fit_of(sigma), s);
    CHECK(m.t_star == scan_oracle(s, sigma));
    CHECK(m.distance == doctest::Approx(std::abs(s.sqrt_beta(m.t_star) - sigma)));
  }
}

TEST_CASE("match_state: monotone in sigma on reverse warm-up schedules") {
  NoiseSchedule s = defaults();
  int prev = 1;
  for (double sigma = 0.004; sigma <= 0.12; sigma += 0.001) {
    int t = match_state(fit_of(sigma), s).t_star;
    CHECK(t >= prev);
    prev = t;
  }
}

TEST_CASE("match_state: clamping edges carry warnings") {
  NoiseSchedule s = defaults();
  StateMatch zero = match_state(fit_of(0.0), s);
  CHECK(zero.t_star == 1);
  CHECK(!zero.warning.empty());
  StateMatch high = match_state(fit_of(0.5), s);
  CHECK(high.t_star == 1000);
  CHECK(!high.warning.empty());
  StateMatch low = match_state(fit_of(0.001), s);  // below sqrt(beta_1)
  CHECK(low.t_star == 300);
  CHECK(low.warning.empty());
}

TEST_CASE("match_state: argmin is p-invariant and metric is configurable") {
  NoiseSchedule s = defaults();
  for (double p : {1.0, 2.0, 3.0})
    CHECK(match_state(fit_of(0.05), s, p).t_star == 472);

  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> u(0.001, 0.9);
  for (int i = 0; i < 200; i++) {
    double sigma = u(rng);
    StateMatch m = match_state(fit_of(sigma), s, 1.0, MatchMetric::sqrt_one_minus_alphabar);
    CHECK(m.t_star == scan_oracle(s, sigma, true));
  }
}

TEST_CASE("visualize_match: limits, errors, and the histogram check") {
  // noise-free Stage I output: corrupting at t=1 stays close to y_bar
  Stage1Output out = make_output(32, 32, 1, 2, 21, 1e-9);
  Stage1Output cal = calibrate(out, FitScope::global);
  NoiseSchedule s = defaults();
  auto [x1, c1] = visualize_match(cal, s, 1, 0, 0, 5);
  CHECK(rmse(c1, cal.y_bar_slice(0, 0)) < 0.02);
  CHECK_THROWS_AS(visualize_match(cal, s, 0, 0, 0, 5), Error);

  // sigma = 0.03 data: the matched state's corruption resembles x more than
  // the middle state's does
  Stage1Output noisy = make_output(64, 64, 1, 2, 23, 0.03);
  Stage1Output ncal = calibrate(noisy, FitScope::global);
  auto fits = fit_noise_model(ncal, FitScope::global);
  StateMatch m = match_state(fits[0], s);
  auto [xa, ca] = visualize_match(ncal, s, m.t_star, 0, 0, 7);
  auto [xb, cb] = visualize_match(ncal, s, 500, 0, 0, 7);
  CHECK(histogram_sym_kl(xa, ca) <= histogram_sym_kl(xb, cb));

  auto png = std::filesystem::temp_directory_path() / "ddm2_match.png";
  visualize_match(ncal, s, m.t_star, 0, 0, 7, png.string());
  CHECK(std::filesystem::exists(png));
}
