#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "ddm2/phantom.hpp"
#include "ddm2/sha256.hpp"
#include "ddm2/stage3.hpp"

using namespace ddm2;

namespace {

NoiseSchedule defaults(int T = 1000) {
  return NoiseSchedule::build(ScheduleShape::reverse_warmup, T, 5e-5, 1e-2, 0.7);
}

Image random_image(int rows, int cols, uint64_t seed, double sigma = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  Image img(rows, cols);
  for (double& x : img.v) x = g(rng);
  return img;
}

std::string image_sha(const Image& img) {
  return sha256_hex(img.v.data(), img.v.size() * sizeof(double));
}

struct TinySetup {
  Volume4D v;
  Stage1Output cal;
  std::vector<NoiseModelFit> fits;
};

TinySetup tiny_setup(uint64_t seed, int w = 16, int h = 16, int d = 1, int l = 2) {
  TinySetup s;
  PhantomSpec spec;
  spec.w = w;
  spec.h = h;
  spec.d = d;
  spec.l = l;
  spec.sigma = 0;
  spec.seed = seed;
  s.v = normalize(make_phantom(spec).clean, NormalizationMode::global_minmax);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.08);
  for (double& x : s.v.data) x += g(rng);

  // Stage I surrogate: y_bar = smoothed x (3x3 box), residual = x - y_bar
  Stage1Output out;
  out.w = w;
  out.h = h;
  out.d = d;
  out.l = l;
  out.y_bar.resize(s.v.data.size());
  out.residual.resize(s.v.data.size());
  out.slice_stats.resize(size_t(d) * l);
  for (int vol = 0; vol < l; vol++)
    for (int z = 0; z < d; z++) {
      Image x = s.v.slice(vol, z);
      Image yb(h, w);
      for (int r = 0; r < h; r++)
        for (int c = 0; c < w; c++) {
          double sum = 0;
          int cnt = 0;
          for (int dr = -1; dr <= 1; dr++)
            for (int dc = -1; dc <= 1; dc++) {
              int rr = r + dr, cc = c + dc;
              if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
              sum += x.at(rr, cc);
              cnt++;
            }
          yb.at(r, c) = sum / cnt;
        }
      Image eps(h, w);
      for (size_t i = 0; i < eps.v.size(); i++) eps.v[i] = x.v[i] - yb.v[i];
      out.set_y_bar_slice(vol, z, yb);
      out.set_residual_slice(vol, z, eps);
    }
  s.cal = calibrate(out, FitScope::per_volume);
  s.fits = fit_noise_model(s.cal, FitScope::per_volume);
  return s;
}

Stage3Config quick_cfg(long steps, int batch = 4) {
  Stage3Config c;
  c.steps = steps;
  c.batch = batch;
  c.lr = 2e-3;
  c.seed = 5;
  c.depth = 2;
  c.base_width = 8;
  c.embed_dim = 8;
  return c;
}

}  // namespace

TEST_CASE("noise_shuffle: permutation preserves the value multiset exactly") {
  Image img(2, 2);
  img.v = {1, 2, 3, 4};
  for (uint64_t seed : {0ULL, 1ULL, 99ULL}) {
    Image s = noise_shuffle(img, seed);
    std::vector<double> sorted = s.v;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<double>{1, 2, 3, 4});
  }
  std::mt19937_64 rng(3);
  Image big = random_image(32, 32, 7);
  Image sh = noise_shuffle(big, 11);
  std::vector<double> a = big.v, b = sh.v;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  CHECK(a == b);  // multiset equality implies mean/std preserved exactly
}

TEST_CASE("noise_shuffle: deterministic per seed, constant arrays invariant") {
  Image img = random_image(16, 16, 4);
  CHECK(noise_shuffle(img, 42).v == noise_shuffle(img, 42).v);
  CHECK(noise_shuffle(img, 42).v != noise_shuffle(img, 43).v);
  Image constant(8, 8, 3.25);
  CHECK(noise_shuffle(constant, 7).v == constant.v);
}

TEST_CASE("corrupt_for_training: literal mode reproduces the shuffle formula bitwise") {
  NoiseSchedule s = defaults();
  Image yb = random_image(12, 12, 1, 0.4);
  Image eps = random_image(12, 12, 2, 0.08);
  const uint64_t seed = 77;
  ForwardSample fs = corrupt_for_training(s, yb, eps, 850, ShuffleMode::literal, 0.0, seed);
  Image shuffled = noise_shuffle(eps, seed);
  for (size_t i = 0; i < yb.v.size(); i++) {
    CHECK(fs.noise_used.v[i] == shuffled.v[i]);
    CHECK(fs.state.v[i] == s.lambda1(850) * yb.v[i] + fs.noise_used.v[i]);
  }
}

TEST_CASE("corrupt_for_training: scaled mode injects lambda2-consistent noise") {
  NoiseSchedule s = defaults();
  const double sigma = 0.07;
  Image yb(96, 96, 0.0);
  Image eps = random_image(96, 96, 9, sigma);
  ForwardSample fs = corrupt_for_training(s, yb, eps, 900, ShuffleMode::scaled, sigma, 3);
  double injected = stddev_of(fs.state.v);  // y_bar = 0, so the state is pure noise
  CHECK(injected == doctest::Approx(s.lambda2(900)).epsilon(0.05));
}

TEST_CASE("corrupt_for_training: zero sigma and zero residual edge cases") {
  NoiseSchedule s = defaults();
  Image yb = random_image(8, 8, 4, 0.3);
  Image zero(8, 8);
  CHECK_THROWS_AS(corrupt_for_training(s, yb, zero, 10, ShuffleMode::scaled, 0.0, 1), Error);

  for (ShuffleMode mode : {ShuffleMode::literal, ShuffleMode::scaled}) {
    ForwardSample fs = corrupt_for_training(s, yb, zero, 500, mode, 0.05, 1);
    for (size_t i = 0; i < yb.v.size(); i++)
      CHECK(fs.state.v[i] == s.lambda1(500) * yb.v[i]);
  }
}

TEST_CASE("train_stage3: the supervision target is the original noisy x") {
  TinySetup ts = tiny_setup(31);
  NoiseSchedule sched = defaults(50);
  Stage3Config cfg = quick_cfg(3);

  bool saw_steps = false;
  cfg.observer = [&](const Stage3StepInfo& info) {
    saw_steps = true;
    for (size_t b = 0; b < info.targets->size(); b++) {
      int vol = info.volume_index[b], z = info.slice_index[b];
      CHECK(image_sha((*info.targets)[b]) == image_sha(ts.v.slice(vol, z)));
      CHECK(image_sha((*info.targets)[b]) != image_sha(ts.cal.y_bar_slice(vol, z)));
    }
  };
  train_stage3(ts.v, ts.cal, sched, ts.fits, cfg);
  CHECK(saw_steps);
}

TEST_CASE("train_stage3: ablation flags swap the target and the corruption") {
  TinySetup ts = tiny_setup(37);
  NoiseSchedule sched = defaults(50);
  Stage3Config cfg = quick_cfg(2);
  cfg.ablation_target_ybar = true;
  cfg.ablation_force_t = 25;
  cfg.observer = [&](const Stage3StepInfo& info) {
    for (size_t b = 0; b < info.targets->size(); b++) {
      int vol = info.volume_index[b], z = info.slice_index[b];
      CHECK(info.t[b] == 25);
      CHECK(image_sha((*info.targets)[b]) == image_sha(ts.cal.y_bar_slice(vol, z)));
    }
  };
  train_stage3(ts.v, ts.cal, sched, ts.fits, cfg);

  Stage3Config cfg2 = quick_cfg(2);
  cfg2.ablation_no_shuffle = true;
  CHECK_NOTHROW(train_stage3(ts.v, ts.cal, sched, {}, cfg2));
}

TEST_CASE("train_stage3: smoke training halves the initial loss on one slice") {
  TinySetup ts = tiny_setup(41, 16, 16, 1, 2);
  NoiseSchedule sched = defaults(100);
  Stage3Config cfg = quick_cfg(2000, 4);
  std::vector<double> losses;
  cfg.observer = [&](const Stage3StepInfo& info) { losses.push_back(info.loss); };
  NetDenoiser F = train_stage3(ts.v, ts.cal, sched, ts.fits, cfg);
  CHECK(F.conditioned());
  double head = 0, tail = 0;
  size_t w = losses.size() / 10;
  for (size_t i = 0; i < w; i++) {
    head += losses[i];
    tail += losses[losses.size() - 1 - i];
  }
  CHECK(tail < 0.5 * head);
  CHECK(F.train_steps() == 2000);
}
