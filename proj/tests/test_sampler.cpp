#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ddm2/metrics.hpp"
#include "ddm2/sampler.hpp"

using namespace ddm2;

namespace {

NoiseSchedule defaults() {
  return NoiseSchedule::build(ScheduleShape::reverse_warmup, 1000, 5e-5, 1e-2, 0.7);
}

Image random_image(int rows, int cols, uint64_t seed, double sigma = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  Image img(rows, cols);
  for (double& x : img.v) x = g(rng);
  return img;
}

/// perfect denoiser: always returns a fixed clean slice
class OracleDenoiser final : public Denoiser {
 public:
  explicit OracleDenoiser(Image clean) : clean_(std::move(clean)) {}
  Image apply(const std::vector<Image>&, std::optional<double>) const override { return clean_; }
  int in_channels() const override { return 1; }
  bool conditioned() const override { return true; }

 private:
  Image clean_;
};

/// input-dependent stub: 3x3 box blur (so chain noise shows in the output)
class BlurDenoiser final : public Denoiser {
 public:
  Image apply(const std::vector<Image>& in, std::optional<double>) const override {
    const Image& x = in.at(0);
    Image y(x.rows, x.cols);
    for (int r = 0; r < x.rows; r++)
      for (int c = 0; c < x.cols; c++) {
        double sum = 0;
        int cnt = 0;
        for (int dr = -1; dr <= 1; dr++)
          for (int dc = -1; dc <= 1; dc++) {
            int rr = r + dr, cc = c + dc;
            if (rr < 0 || rr >= x.rows || cc < 0 || cc >= x.cols) continue;
            sum += x.at(rr, cc);
            cnt++;
          }
        y.at(r, c) = sum / cnt;
      }
    return y;
  }
  int in_channels() const override { return 1; }
  bool conditioned() const override { return true; }
};

class NanDenoiser final : public Denoiser {
 public:
  Image apply(const std::vector<Image>& in, std::optional<double>) const override {
    Image y = in.at(0);
    y.v[0] = std::numeric_limits<double>::quiet_NaN();
    return y;
  }
  int in_channels() const override { return 1; }
  bool conditioned() const override { return true; }
};

StateMatch match_at(const NoiseSchedule& s, int t) {
  StateMatch m;
  m.t_star = t;
  m.sigma = s.sqrt_beta(t);
  m.schedule_fingerprint = s.fingerprint();
  return m;
}

}  // namespace

TEST_CASE("oracle denoiser: exact fixed point from every start state") {
  NoiseSchedule s = defaults();
  Image clean = random_image(12, 12, 1, 0.4);
  Image noisy = clean;
  for (size_t i = 0; i < noisy.v.size(); i++) noisy.v[i] += 0.05 * double(i % 7);
  OracleDenoiser F(clean);

  for (int t : {1, 300, 472, 1000}) {
    DenoiseResult res = denoise(noisy, F, s, match_at(s, t), {.seed = 9});
    CHECK(res.s0.v == clean.v);                 // terminal step is noiseless
    CHECK(res.trace.transitions() == t);        // one transition per state
    CHECK(res.trace.t_start == t);
    CHECK(res.trace.rmse_curve.front().t == t);
    CHECK(res.trace.rmse_curve.front().rmse_vs_input == 0.0);
  }
}

TEST_CASE("t_star = 1 degenerates to a single conditioned application") {
  NoiseSchedule s = defaults();
  Image x = random_image(10, 10, 3);
  BlurDenoiser F;
  DenoiseResult res = denoise(x, F, s, match_at(s, 1), {});
  Image direct = F.apply({x}, s.alpha_bar(1));
  CHECK(res.s0.v == direct.v);
  CHECK(res.trace.transitions() == 1);
}

TEST_CASE("conditional sampling is deterministic per seed") {
  NoiseSchedule s = defaults();
  Image x = random_image(8, 8, 5);
  BlurDenoiser F;
  SamplerOptions a{.seed = 44};
  DenoiseResult r1 = denoise(x, F, s, match_at(s, 120), a);
  DenoiseResult r2 = denoise(x, F, s, match_at(s, 120), a);
  CHECK(r1.s0.v == r2.s0.v);
  SamplerOptions b{.seed = 45};
  DenoiseResult r3 = denoise(x, F, s, match_at(s, 120), b);
  CHECK(r1.s0.v != r3.s0.v);
}

TEST_CASE("sampler contract errors") {
  NoiseSchedule s = defaults();
  Image x = random_image(8, 8, 6);
  BlurDenoiser F;

  StateMatch wrong = match_at(s, 10);
  wrong.schedule_fingerprint = "not-this-schedule";
  CHECK_THROWS_AS(denoise(x, F, s, wrong, {}), Error);

  StateMatch oob = match_at(s, 10);
  oob.t_star = 1001;
  CHECK_THROWS_AS(denoise(x, F, s, oob, {}), Error);

  NanDenoiser bad;
  try {
    denoise(x, bad, s, match_at(s, 5), {});
    FAIL("expected NonFiniteState");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonFiniteState);
  }
}

TEST_CASE("literal mean mode uses the prediction as the transition mean") {
  NoiseSchedule s = defaults();
  Image clean = random_image(8, 8, 7, 0.2);
  OracleDenoiser F(clean);
  Image x = random_image(8, 8, 8, 0.5);
  DenoiseResult res =
      denoise(x, F, s, match_at(s, 40), {.mean_mode = MeanMode::literal, .seed = 3});
  CHECK(res.s0.v == clean.v);  // oracle fixed point holds in literal mode too
}

TEST_CASE("unconditional sampling: determinism, stochasticity, oracle limit") {
  NoiseSchedule s = NoiseSchedule::build(ScheduleShape::reverse_warmup, 120, 5e-5, 1e-2, 0.7);
  Image clean = random_image(8, 8, 11, 0.4);
  OracleDenoiser F(clean);

  Image a = sample_unconditional(F, s, 8, 8, 100);
  Image b = sample_unconditional(F, s, 8, 8, 100);
  CHECK(a.v == b.v);
  CHECK(a.v == clean.v);  // terminal prediction
  CHECK(histogram_sym_kl(a, clean) < 0.5);

  BlurDenoiser G;
  Image c = sample_unconditional(G, s, 8, 8, 100);
  Image d = sample_unconditional(G, s, 8, 8, 101);
  double dist = 0;
  for (size_t i = 0; i < c.v.size(); i++) dist += (c.v[i] - d.v[i]) * (c.v[i] - d.v[i]);
  CHECK(dist > 0.0);
}

TEST_CASE("outlier detection: degenerate curves, policy, and population split") {
  SamplerTrace flat;
  flat.t_start = 10;
  for (int t = 10; t >= 0; t--) flat.rmse_curve.push_back({t, 0.0});

  SamplerTrace rising;
  rising.t_start = 10;
  for (int t = 10; t >= 0; t--) rising.rmse_curve.push_back({t, 0.02 * double(10 - t)});

  std::vector<double> population;
  for (int i = 0; i < 8; i++) population.push_back(0.01);   // low departure
  for (int i = 0; i < 8; i++) population.push_back(0.20);   // high departure
  OutlierPolicy policy{population_threshold(population)};
  CHECK(policy.threshold == doctest::Approx(0.5 * 0.105));

  CHECK(detect_outlier(flat, policy) == Verdict::outlier);
  CHECK(detect_outlier(rising, policy) == Verdict::ok);

  SamplerTrace empty;
  empty.rmse_curve.push_back({5, 0.0});
  CHECK_THROWS_AS(detect_outlier(empty, policy), Error);
}

TEST_CASE("speed-up invariant: transitions strictly below T when sigma < sqrt(beta_T)") {
  NoiseSchedule s = defaults();
  NoiseModelFit fit;
  fit.sigma = 0.05;
  StateMatch m = match_state(fit, s);
  Image clean = random_image(8, 8, 13, 0.3);
  OracleDenoiser F(clean);
  DenoiseResult res = denoise(clean, F, s, m, {});
  CHECK(res.trace.transitions() == m.t_star);
  CHECK(res.trace.transitions() < s.T());
}
