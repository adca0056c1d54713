#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "ddm2/denoiser.hpp"

using namespace ddm2;
namespace fs = std::filesystem;

namespace {

DenoiserSpec small_spec(int in_ch = 2, Conditioning cond = Conditioning::none) {
  DenoiserSpec s;
  s.in_channels = in_ch;
  s.out_channels = 1;
  s.depth = 2;
  s.base_width = 8;
  s.embed_dim = 8;
  s.conditioning = cond;
  return s;
}

Image random_image(int rows, int cols, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.3);
  Image img(rows, cols);
  for (double& x : img.v) x = g(rng);
  return img;
}

}  // namespace

TEST_CASE("apply is deterministic and shape-preserving on an untrained handle") {
  NetDenoiser h(small_spec(), 42);
  Image a = random_image(16, 16, 1), b = random_image(16, 16, 2);
  Image y1 = h.apply({a, b});
  Image y2 = h.apply({a, b});
  CHECK(y1.v == y2.v);
  CHECK(y1.rows == 16);
  CHECK(y1.cols == 16);
}

TEST_CASE("apply pads odd sizes internally and crops the output back") {
  NetDenoiser h(small_spec(1), 3);
  Image a = random_image(13, 11, 5);
  Image y = h.apply({a});
  CHECK(y.rows == 13);
  CHECK(y.cols == 11);
  CHECK(y.finite());
}

TEST_CASE("conditioning contract violations") {
  NetDenoiser plain(small_spec(1, Conditioning::none), 1);
  NetDenoiser cond(small_spec(1, Conditioning::noise_level_scalar), 1);
  Image a = random_image(8, 8, 9);

  CHECK_THROWS_AS(plain.apply({a}, 0.5), Error);  // UnexpectedCondition
  try {
    plain.apply({a}, 0.5);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnexpectedCondition);
  }
  try {
    cond.apply({a});
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingCondition);
  }
  CHECK_THROWS_AS(cond.apply({a}, 0.0), Error);   // out of (0, 1]
  CHECK_THROWS_AS(cond.apply({a}, 1.5), Error);
  CHECK_NOTHROW(cond.apply({a}, 1.0));
}

TEST_CASE("wrong channel count is a ShapeMismatch") {
  NetDenoiser h(small_spec(2), 4);
  Image a = random_image(8, 8, 1);
  try {
    h.apply({a});
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ShapeMismatch);
  }
}

TEST_CASE("same seed reproduces initialization; training overfits one sample") {
  CHECK(NetDenoiser(small_spec(), 7).fingerprint() == NetDenoiser(small_spec(), 7).fingerprint());
  CHECK(NetDenoiser(small_spec(), 7).fingerprint() != NetDenoiser(small_spec(), 8).fingerprint());

  // single (input, target) pair; the function must drive MSE below 1e-3
  NetDenoiser h(small_spec(2), 11);
  Image in1 = random_image(16, 16, 21), in2 = random_image(16, 16, 22);
  Image target = random_image(16, 16, 23);
  nn::Tensor x = stack_slices({{in1, in2}}, 2);
  nn::Tensor t = stack_slices({{target}}, 2);
  nn::Adam opt(3e-3);
  double loss = 0;
  for (int step = 0; step < 400; step++) {
    h.net().params().zero_grads();
    loss = h.net().mse_step(x, t, nullptr);
    opt.step(h.net().params());
  }
  CHECK(loss < 1e-3);
}

TEST_CASE("checkpoint round trip reproduces outputs bit-identically") {
  fs::path p = fs::temp_directory_path() / "ddm2_ckpt_rt.ckpt";
  NetDenoiser h(small_spec(1, Conditioning::noise_level_scalar), 99);
  h.set_train_steps(123);
  Image a = random_image(12, 12, 31);
  Image before = h.apply({a}, 0.7);
  h.save(p.string());

  NetDenoiser loaded = NetDenoiser::load(p.string());
  CHECK(loaded.train_steps() == 123);
  CHECK(loaded.seed() == 99);
  CHECK(loaded.fingerprint() == h.fingerprint());
  Image after = loaded.apply({a}, 0.7);
  CHECK(before.v == after.v);
}

TEST_CASE("tampered checkpoint blob fails the integrity trailer") {
  fs::path p = fs::temp_directory_path() / "ddm2_ckpt_tamper.ckpt";
  NetDenoiser h(small_spec(1), 5);
  h.save(p.string());
  {
    std::fstream f(p, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(200);
    char c = 0x5a;
    f.write(&c, 1);
  }
  try {
    NetDenoiser::load(p.string());
    FAIL("expected HashMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::HashMismatch);
  }
}

TEST_CASE("loading against a different expected spec is a SpecMismatch") {
  fs::path p = fs::temp_directory_path() / "ddm2_ckpt_spec.ckpt";
  NetDenoiser h(small_spec(1), 5);
  h.save(p.string());
  DenoiserSpec other = small_spec(2);
  try {
    NetDenoiser::load(p.string(), &other);
    FAIL("expected SpecMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SpecMismatch);
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  // conditioned net so the embedding MLP and projections are covered
  DenoiserSpec spec = small_spec(1, Conditioning::noise_level_scalar);
  spec.base_width = 4;
  NetDenoiser h(spec, 77);
  nn::UNet& net = h.net();

  Image in = random_image(8, 8, 51);
  Image target = random_image(8, 8, 52);
  nn::Tensor x = stack_slices({{in}}, 2);
  nn::Tensor t = stack_slices({{target}}, 2);
  std::vector<double> levels{0.63};

  auto loss_only = [&]() {
    nn::Tensor y = net.forward(x, &levels, nullptr);
    double s = 0;
    for (size_t i = 0; i < y.v.size(); i++) {
      double d = y.v[i] - t.v[i];
      s += d * d;
    }
    return s / double(y.v.size());
  };

  net.params().zero_grads();
  net.mse_step(x, t, &levels);

  std::mt19937_64 rng(4242);
  auto& params = net.params().all();
  int checked = 0;
  for (int trial = 0; trial < 60; trial++) {
    size_t pi = std::uniform_int_distribution<size_t>(0, params.size() - 1)(rng);
    auto& p = params[pi];
    size_t wi = std::uniform_int_distribution<size_t>(0, p.size() - 1)(rng);
    double orig = p.w[wi];
    double eps = 1e-5 * std::max(1.0, std::abs(orig));
    p.w[wi] = orig + eps;
    double lp = loss_only();
    p.w[wi] = orig - eps;
    double lm = loss_only();
    p.w[wi] = orig;
    double fd = (lp - lm) / (2 * eps);
    double an = p.g[wi];
    double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
    CHECK(std::abs(fd - an) / denom < 1e-5);
    checked++;
  }
  CHECK(checked == 60);
}
