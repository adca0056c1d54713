#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ddm2/error.hpp"

namespace ddm2::nn {

/// Dense NCHW tensor of doubles.
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_), v(size_t(n_) * c_ * h_ * w_, 0.0) {}

  size_t plane() const { return size_t(h) * w; }
  size_t sample_size() const { return size_t(c) * h * w; }
  double* sample(int i) { return v.data() + size_t(i) * sample_size(); }
  const double* sample(int i) const { return v.data() + size_t(i) * sample_size(); }
  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
};

struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<double> w;  // values (always exactly representable in float32)
  std::vector<double> g;  // gradient accumulator

  size_t size() const { return w.size(); }
};

class ParamStore {
 public:
  int add(std::string name, std::vector<int> shape);
  Param& operator[](int idx) { return params_[size_t(idx)]; }
  const Param& operator[](int idx) const { return params_[size_t(idx)]; }
  size_t count() const { return params_.size(); }
  size_t total_weights() const;
  void zero_grads();

  std::vector<Param>& all() { return params_; }
  const std::vector<Param>& all() const { return params_; }

 private:
  std::vector<Param> params_;
};

/// Rounds every weight to its nearest float32 value. Called after init and
/// after every optimizer step so that float32 checkpoints are lossless.
void quantize_f32(ParamStore& store);

struct UNetConfig {
  int in_channels = 2;
  int out_channels = 1;
  int depth = 3;       // resolution levels; spatial /2 per level
  int base_width = 32; // channels at the first level, doubled per level
  int embed_dim = 32;  // sinusoidal noise-level embedding size (even)
  bool conditioned = false;

  bool operator==(const UNetConfig&) const = default;
};

/// Encoder-decoder with skip connections and optional continuous
/// noise-level conditioning injected as a per-channel bias in every block.
/// Forward/backward are hand-rolled; convolutions are im2col + GEMM.
class UNet {
 public:
  struct Trace;  // opaque activation cache for backward

  UNet(const UNetConfig& cfg, uint64_t init_seed);
  ~UNet();
  UNet(UNet&&) noexcept;
  UNet& operator=(UNet&&) noexcept;
  UNet(const UNet&) = delete;
  UNet& operator=(const UNet&) = delete;

  const UNetConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  /// x: [N, in_channels, H, W] with H and W divisible by 2^(depth-1).
  /// noise_level: one alpha_bar per sample (required iff conditioned).
  /// When `trace` is non-null the activations needed by backward are kept.
  Tensor forward(const Tensor& x, const std::vector<double>* noise_level, Trace* trace) const;

  /// Accumulates parameter gradients for d(loss)/d(output) = dout.
  void backward(const Tensor& dout, const Trace& trace);

  /// One MSE training step helper: forward, loss, backward. Gradients are
  /// accumulated into the store (caller zeroes and steps the optimizer).
  double mse_step(const Tensor& x, const Tensor& target, const std::vector<double>* noise_level);

 private:
  struct Blocks;
  UNetConfig cfg_;
  ParamStore store_;
  std::unique_ptr<Blocks> blocks_;
};

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& store);
  long steps_taken() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Replicate-pads a [rows x cols] plane so both dims are multiples of m.
void pad_multiple(const std::vector<double>& src, int rows, int cols, int m,
                  std::vector<double>& dst, int& prows, int& pcols);

}  // namespace ddm2::nn
