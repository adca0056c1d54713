#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "ddm2/schedule.hpp"

using namespace ddm2;

namespace {
NoiseSchedule defaults() {
  return NoiseSchedule::build(ScheduleShape::reverse_warmup, 1000, 5e-5, 1e-2, 0.7);
}
}  // namespace

TEST_CASE("reverse warm-up: constant segment then linear ramp, endpoints bit-exact") {
  NoiseSchedule s = defaults();
  CHECK(s.beta(1) == 5e-5);
  CHECK(s.beta(300) == 5e-5);
  CHECK(s.beta(1000) == 1e-2);
  CHECK(s.constant_segment_end() == 300);
  for (int t = 301; t < 1000; t++) CHECK(s.beta(t + 1) > s.beta(t));
  CHECK(s.beta(301) > 5e-5);
}

TEST_CASE("alpha_bar: single-term product and direct product oracle") {
  NoiseSchedule s = defaults();
  CHECK(s.alpha_bar(1) == 1.0 - s.beta(1));

  // independent oracle: long-double running product over the beta table
  long double prod = 1.0L;
  for (int t = 1; t <= 300; t++) prod *= 1.0L - (long double)s.beta(t);
  CHECK(std::abs(s.alpha_bar(300) - double(prod)) < 1e-12);
  CHECK(s.alpha_bar(300) == doctest::Approx(0.98511).epsilon(1e-4));
}

TEST_CASE("lambda identity and monotonicity invariants") {
  NoiseSchedule s = defaults();
  for (int t = 1; t <= s.T(); t++) {
    double r = s.lambda1(t) * s.lambda1(t) + s.lambda2(t) * s.lambda2(t);
    CHECK(std::abs(r - 1.0) <= 1e-12);
  }
  for (int t = 2; t <= s.T(); t++) {
    CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    CHECK(s.sqrt_beta(t) >= s.sqrt_beta(t - 1));
  }
}

TEST_CASE("warmup shape mirrors the ramp to the front") {
  NoiseSchedule s = NoiseSchedule::build(ScheduleShape::warmup, 1000, 5e-5, 1e-2, 0.7);
  CHECK(s.beta(1) == 5e-5);
  CHECK(s.beta(700) == 1e-2);
  CHECK(s.beta(1000) == 1e-2);
  for (int t = 2; t <= 700; t++) CHECK(s.beta(t) > s.beta(t - 1));
}

TEST_CASE("build_schedule rejects invalid parameters") {
  CHECK_THROWS_AS(NoiseSchedule::build(ScheduleShape::reverse_warmup, 1, 5e-5, 1e-2, 0.7), Error);
  CHECK_THROWS_AS(NoiseSchedule::build(ScheduleShape::reverse_warmup, 100, 0.0, 1e-2, 0.7), Error);
  CHECK_THROWS_AS(NoiseSchedule::build(ScheduleShape::reverse_warmup, 100, 2e-2, 1e-2, 0.7),
                  Error);
  CHECK_THROWS_AS(NoiseSchedule::build(ScheduleShape::reverse_warmup, 100, 5e-5, 1e-2, 0.0),
                  Error);
}

TEST_CASE("forward_sample: zero-noise and zero-signal limits are exact") {
  NoiseSchedule s = defaults();
  Image clean(6, 6);
  for (size_t i = 0; i < clean.v.size(); i++) clean.v[i] = 0.1 * double(i);
  Image zero(6, 6);

  ForwardSample a = forward_sample(s, clean, 200, &zero);
  for (size_t i = 0; i < clean.v.size(); i++)
    CHECK(a.state.v[i] == s.lambda1(200) * clean.v[i]);

  Image noise(6, 6);
  for (size_t i = 0; i < noise.v.size(); i++) noise.v[i] = double(i) - 17.0;
  Image zsignal(6, 6);
  ForwardSample b = forward_sample(s, zsignal, 900, &noise);
  for (size_t i = 0; i < noise.v.size(); i++)
    CHECK(b.state.v[i] == s.lambda2(900) * noise.v[i]);
}

TEST_CASE("forward_sample: bitwise recomputation at t=700 and seed determinism") {
  NoiseSchedule s = defaults();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  Image clean(8, 8), noise(8, 8);
  for (double& x : clean.v) x = g(rng);
  for (double& x : noise.v) x = g(rng);

  ForwardSample fs = forward_sample(s, clean, 700, &noise);
  for (size_t i = 0; i < clean.v.size(); i++) {
    double expect = s.lambda1(700) * clean.v[i] + s.lambda2(700) * noise.v[i];
    CHECK(fs.state.v[i] == expect);
    CHECK(fs.state.v[i] == s.lambda1(700) * clean.v[i] + fs.noise_used.v[i]);
  }

  ForwardSample d1 = forward_sample(s, clean, 700, nullptr, 1234);
  ForwardSample d2 = forward_sample(s, clean, 700, nullptr, 1234);
  CHECK(d1.state.v == d2.state.v);
}

TEST_CASE("forward_sample: shape and state-range errors") {
  NoiseSchedule s = defaults();
  Image clean(4, 4), bad(3, 4);
  CHECK_THROWS_AS(forward_sample(s, clean, 1, &bad), Error);
  CHECK_THROWS_AS(forward_sample(s, clean, 0), Error);
  CHECK_THROWS_AS(forward_sample(s, clean, 1001), Error);
}

TEST_CASE("posterior coefficients: terminal convention and sigma endpoint") {
  NoiseSchedule s = defaults();
  PosteriorCoeffs c1 = posterior_mean_coeffs(s, 1);
  CHECK(c1.coef_clean == 1.0);
  CHECK(c1.coef_state == 0.0);
  CHECK(c1.sigma == 0.0);
  PosteriorCoeffs cT = posterior_mean_coeffs(s, 1000);
  CHECK(cT.sigma == doctest::Approx(0.1).epsilon(1e-12));
  CHECK_THROWS_AS(posterior_mean_coeffs(s, 0), Error);
  CHECK_THROWS_AS(posterior_mean_coeffs(s, 1001), Error);
}

TEST_CASE("posterior mean reduces state t to state t-1 on noiseless forward samples") {
  // substituting S_t = lambda1(t)*y (z = 0) must give mean = lambda1(t-1)*y
  NoiseSchedule s = defaults();
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> pick_t(2, 1000);
  for (int trial = 0; trial < 100; trial++) {
    int t = pick_t(rng);
    double y = std::normal_distribution<double>(0.0, 0.5)(rng);
    double st = s.lambda1(t) * y;
    PosteriorCoeffs c = posterior_mean_coeffs(s, t);
    double mean = c.coef_clean * y + c.coef_state * st;
    CHECK(std::abs(mean - s.lambda1(t - 1) * y) <= 1e-12);
  }
}

TEST_CASE("fingerprint distinguishes schedules; CSV export has one row per state") {
  NoiseSchedule a = defaults();
  NoiseSchedule b = NoiseSchedule::build(ScheduleShape::reverse_warmup, 1000, 5e-5, 2e-2, 0.7);
  CHECK(a.fingerprint() != b.fingerprint());
  CHECK(a.fingerprint() == defaults().fingerprint());

  auto path = std::filesystem::temp_directory_path() / "ddm2_sched.csv";
  a.export_csv(path.string());
  std::ifstream f(path);
  int lines = 0;
  std::string line;
  while (std::getline(f, line)) lines++;
  CHECK(lines == 1001);  // header + 1000 states
  CHECK(line.find("0.01") != std::string::npos);
}
