#include "ddm2/nn.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>

namespace ddm2::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using MapRowC = Eigen::Map<const RowMat>;

int ParamStore::add(std::string name, std::vector<int> shape) {
  Param p;
  p.name = std::move(name);
  p.shape = std::move(shape);
  size_t n = 1;
  for (int s : p.shape) n *= size_t(s);
  p.w.assign(n, 0.0);
  p.g.assign(n, 0.0);
  params_.push_back(std::move(p));
  return int(params_.size()) - 1;
}

size_t ParamStore::total_weights() const {
  size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& p : params_) std::fill(p.g.begin(), p.g.end(), 0.0);
}

void quantize_f32(ParamStore& store) {
  for (auto& p : store.all())
    for (double& x : p.w) x = double(float(x));
}

namespace {

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }
inline double silu_grad(double x) {
  double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

// caffe-style im2col for 3x3, pad 1, stride 1: col is row-major [C*9, H*W]
void im2col3(const double* x, int C, int H, int W, double* col) {
  const size_t hw = size_t(H) * W;
  for (int c = 0; c < C; c++) {
    const double* plane = x + size_t(c) * hw;
    for (int ky = -1; ky <= 1; ky++) {
      for (int kx = -1; kx <= 1; kx++) {
        double* dst = col + (size_t(c) * 9 + size_t(ky + 1) * 3 + (kx + 1)) * hw;
        for (int y = 0; y < H; y++) {
          int sy = y + ky;
          if (sy < 0 || sy >= H) {
            std::fill(dst + size_t(y) * W, dst + size_t(y + 1) * W, 0.0);
            continue;
          }
          const double* srow = plane + size_t(sy) * W;
          double* drow = dst + size_t(y) * W;
          for (int xx = 0; xx < W; xx++) {
            int sx = xx + kx;
            drow[xx] = (sx < 0 || sx >= W) ? 0.0 : srow[sx];
          }
        }
      }
    }
  }
}

// scatter-add transpose of im2col3
void col2im3(const double* col, int C, int H, int W, double* dx) {
  const size_t hw = size_t(H) * W;
  std::fill(dx, dx + size_t(C) * hw, 0.0);
  for (int c = 0; c < C; c++) {
    double* plane = dx + size_t(c) * hw;
    for (int ky = -1; ky <= 1; ky++) {
      for (int kx = -1; kx <= 1; kx++) {
        const double* src = col + (size_t(c) * 9 + size_t(ky + 1) * 3 + (kx + 1)) * hw;
        for (int y = 0; y < H; y++) {
          int sy = y + ky;
          if (sy < 0 || sy >= H) continue;
          double* drow = plane + size_t(sy) * W;
          const double* srow = src + size_t(y) * W;
          for (int xx = 0; xx < W; xx++) {
            int sx = xx + kx;
            if (sx >= 0 && sx < W) drow[sx] += srow[xx];
          }
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// layer primitives (per-sample GEMMs so results land planar in NCHW)
// ---------------------------------------------------------------------------

namespace {

struct Conv3x3 {
  int w_idx = -1, b_idx = -1;
  int cin = 0, cout = 0;

  void init(ParamStore& store, const std::string& name, int cin_, int cout_) {
    cin = cin_;
    cout = cout_;
    w_idx = store.add(name + ".weight", {cout, cin, 3, 3});
    b_idx = store.add(name + ".bias", {cout});
  }

  void forward(const ParamStore& store, const Tensor& x, Tensor& y,
               std::vector<double>& colbuf) const {
    const size_t hw = size_t(x.h) * x.w;
    colbuf.resize(size_t(cin) * 9 * hw);
    MapRowC W(store[w_idx].w.data(), cout, cin * 9);
    const auto& b = store[b_idx].w;
    for (int i = 0; i < x.n; i++) {
      im2col3(x.sample(i), cin, x.h, x.w, colbuf.data());
      MapRowC col(colbuf.data(), cin * 9, long(hw));
      MapRow out(y.sample(i), cout, long(hw));
      out.noalias() = W * col;
      for (int c = 0; c < cout; c++) out.row(c).array() += b[c];
    }
  }

  // accumulates dW/db, writes dx (dx may be empty to skip input grads)
  void backward(ParamStore& store, const Tensor& x, const Tensor& dy, Tensor* dx,
                std::vector<double>& colbuf, std::vector<double>& dcolbuf) const {
    const size_t hw = size_t(x.h) * x.w;
    colbuf.resize(size_t(cin) * 9 * hw);
    dcolbuf.resize(size_t(cin) * 9 * hw);
    MapRowC W(store[w_idx].w.data(), cout, cin * 9);
    MapRow dW(store[w_idx].g.data(), cout, cin * 9);
    auto& db = store[b_idx].g;
    for (int i = 0; i < x.n; i++) {
      im2col3(x.sample(i), cin, x.h, x.w, colbuf.data());
      MapRowC col(colbuf.data(), cin * 9, long(hw));
      MapRowC dout(dy.sample(i), cout, long(hw));
      dW.noalias() += dout * col.transpose();
      for (int c = 0; c < cout; c++) db[c] += dout.row(c).sum();
      if (dx != nullptr) {
        MapRow dcol(dcolbuf.data(), cin * 9, long(hw));
        dcol.noalias() = W.transpose() * dout;
        col2im3(dcolbuf.data(), cin, x.h, x.w, dx->sample(i));
      }
    }
  }
};

struct Conv1x1 {
  int w_idx = -1, b_idx = -1;
  int cin = 0, cout = 0;

  void init(ParamStore& store, const std::string& name, int cin_, int cout_) {
    cin = cin_;
    cout = cout_;
    w_idx = store.add(name + ".weight", {cout, cin, 1, 1});
    b_idx = store.add(name + ".bias", {cout});
  }

  void forward(const ParamStore& store, const Tensor& x, Tensor& y) const {
    const size_t hw = size_t(x.h) * x.w;
    MapRowC W(store[w_idx].w.data(), cout, cin);
    const auto& b = store[b_idx].w;
    for (int i = 0; i < x.n; i++) {
      MapRowC in(x.sample(i), cin, long(hw));
      MapRow out(y.sample(i), cout, long(hw));
      out.noalias() = W * in;
      for (int c = 0; c < cout; c++) out.row(c).array() += b[c];
    }
  }

  void backward(ParamStore& store, const Tensor& x, const Tensor& dy, Tensor* dx) const {
    const size_t hw = size_t(x.h) * x.w;
    MapRowC W(store[w_idx].w.data(), cout, cin);
    MapRow dW(store[w_idx].g.data(), cout, cin);
    auto& db = store[b_idx].g;
    for (int i = 0; i < x.n; i++) {
      MapRowC in(x.sample(i), cin, long(hw));
      MapRowC dout(dy.sample(i), cout, long(hw));
      dW.noalias() += dout * in.transpose();
      for (int c = 0; c < cout; c++) db[c] += dout.row(c).sum();
      if (dx != nullptr) {
        MapRow din(dx->sample(i), cin, long(hw));
        din.noalias() = W.transpose() * dout;
      }
    }
  }
};

struct Linear {
  int w_idx = -1, b_idx = -1;
  int in = 0, out = 0;

  void init(ParamStore& store, const std::string& name, int in_, int out_) {
    in = in_;
    out = out_;
    w_idx = store.add(name + ".weight", {out, in});
    b_idx = store.add(name + ".bias", {out});
  }

  // x: [N, in] row-major
  void forward(const ParamStore& store, const std::vector<double>& x, int N,
               std::vector<double>& y) const {
    y.resize(size_t(N) * out);
    MapRowC W(store[w_idx].w.data(), out, in);
    MapRowC xm(x.data(), N, in);
    MapRow ym(y.data(), N, out);
    ym.noalias() = xm * W.transpose();
    for (int i = 0; i < N; i++)
      for (int o = 0; o < out; o++) ym(i, o) += store[b_idx].w[size_t(o)];
  }

  void backward(ParamStore& store, const std::vector<double>& x, int N,
                const std::vector<double>& dy, std::vector<double>* dx) const {
    MapRowC W(store[w_idx].w.data(), out, in);
    MapRow dW(store[w_idx].g.data(), out, in);
    MapRowC xm(x.data(), N, in);
    MapRowC dym(dy.data(), N, out);
    dW.noalias() += dym.transpose() * xm;
    auto& db = store[b_idx].g;
    for (int i = 0; i < N; i++)
      for (int o = 0; o < out; o++) db[size_t(o)] += dym(i, o);
    if (dx != nullptr) {
      dx->resize(size_t(N) * in);
      MapRow dxm(dx->data(), N, in);
      dxm.noalias() = dym * W;
    }
  }
};

void avgpool2(const Tensor& x, Tensor& y) {
  for (int i = 0; i < x.n; i++)
    for (int c = 0; c < x.c; c++) {
      const double* in = x.sample(i) + size_t(c) * x.plane();
      double* out = y.sample(i) + size_t(c) * y.plane();
      for (int yy = 0; yy < y.h; yy++)
        for (int xx = 0; xx < y.w; xx++) {
          const double* r0 = in + size_t(2 * yy) * x.w + 2 * xx;
          const double* r1 = r0 + x.w;
          out[size_t(yy) * y.w + xx] = 0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
        }
    }
}

void avgpool2_backward(const Tensor& dy, Tensor& dx) {
  std::fill(dx.v.begin(), dx.v.end(), 0.0);
  for (int i = 0; i < dy.n; i++)
    for (int c = 0; c < dy.c; c++) {
      const double* dout = dy.sample(i) + size_t(c) * dy.plane();
      double* din = dx.sample(i) + size_t(c) * dx.plane();
      for (int yy = 0; yy < dy.h; yy++)
        for (int xx = 0; xx < dy.w; xx++) {
          double g = 0.25 * dout[size_t(yy) * dy.w + xx];
          double* r0 = din + size_t(2 * yy) * dx.w + 2 * xx;
          double* r1 = r0 + dx.w;
          r0[0] += g;
          r0[1] += g;
          r1[0] += g;
          r1[1] += g;
        }
    }
}

void upsample2(const Tensor& x, Tensor& y) {
  for (int i = 0; i < x.n; i++)
    for (int c = 0; c < x.c; c++) {
      const double* in = x.sample(i) + size_t(c) * x.plane();
      double* out = y.sample(i) + size_t(c) * y.plane();
      for (int yy = 0; yy < x.h; yy++)
        for (int xx = 0; xx < x.w; xx++) {
          double v = in[size_t(yy) * x.w + xx];
          double* r0 = out + size_t(2 * yy) * y.w + 2 * xx;
          double* r1 = r0 + y.w;
          r0[0] = v;
          r0[1] = v;
          r1[0] = v;
          r1[1] = v;
        }
    }
}

void upsample2_backward(const Tensor& dy, Tensor& dx) {
  for (int i = 0; i < dx.n; i++)
    for (int c = 0; c < dx.c; c++) {
      const double* dout = dy.sample(i) + size_t(c) * dy.plane();
      double* din = dx.sample(i) + size_t(c) * dx.plane();
      for (int yy = 0; yy < dx.h; yy++)
        for (int xx = 0; xx < dx.w; xx++) {
          const double* r0 = dout + size_t(2 * yy) * dy.w + 2 * xx;
          const double* r1 = r0 + dy.w;
          din[size_t(yy) * dx.w + xx] = r0[0] + r0[1] + r1[0] + r1[1];
        }
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// UNet
// ---------------------------------------------------------------------------

namespace {

struct ConvBlock {
  Conv3x3 conv1, conv2;
  Linear cond_proj;  // embed -> per-channel bias, only when conditioned
  bool conditioned = false;

  void init(ParamStore& store, const std::string& name, int cin, int cout, int embed_dim,
            bool cond) {
    conditioned = cond;
    conv1.init(store, name + ".conv1", cin, cout);
    conv2.init(store, name + ".conv2", cout, cout);
    if (cond) cond_proj.init(store, name + ".cond", embed_dim, cout);
  }
};

struct BlockTrace {
  Tensor in, pre1, act1, pre2, out;
};

}  // namespace

struct UNet::Blocks {
  std::vector<ConvBlock> enc;  // depth blocks
  std::vector<ConvBlock> dec;  // depth-1 blocks, dec[j] at level j
  Conv1x1 head;
  Linear emb1, emb2;  // embedding MLP
  std::vector<int> widths;
};

struct UNet::Trace {
  Tensor input;
  std::vector<BlockTrace> enc, dec;
  std::vector<Tensor> pooled;  // pooled[i] = input to enc[i], i >= 1
  std::vector<Tensor> up, cat;
  // conditioning caches, all [N x E] or [N x C]
  std::vector<double> emb0, pre_e1, e1, pre_e2, e2;
  std::vector<std::vector<double>> enc_bias, dec_bias;
  int N = 0;
};

UNet::~UNet() = default;
UNet::UNet(UNet&&) noexcept = default;
UNet& UNet::operator=(UNet&&) noexcept = default;

UNet::UNet(const UNetConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  if (cfg.depth < 1) throw Error(ErrorKind::ConfigInvalid, "depth must be >= 1");
  if (cfg.base_width < 1) throw Error(ErrorKind::ConfigInvalid, "base_width must be >= 1");
  if (cfg.conditioned && (cfg.embed_dim < 2 || cfg.embed_dim % 2 != 0))
    throw Error(ErrorKind::ConfigInvalid, "embed_dim must be even and >= 2");

  blocks_ = std::make_unique<Blocks>();
  auto& B = *blocks_;
  for (int i = 0; i < cfg.depth; i++) B.widths.push_back(cfg.base_width << i);

  if (cfg.conditioned) {
    B.emb1.init(store_, "embed.fc1", cfg.embed_dim, cfg.embed_dim);
    B.emb2.init(store_, "embed.fc2", cfg.embed_dim, cfg.embed_dim);
  }
  B.enc.resize(size_t(cfg.depth));
  for (int i = 0; i < cfg.depth; i++) {
    int cin = i == 0 ? cfg.in_channels : B.widths[size_t(i) - 1];
    B.enc[size_t(i)].init(store_, "enc" + std::to_string(i), cin, B.widths[size_t(i)],
                          cfg.embed_dim, cfg.conditioned);
  }
  B.dec.resize(size_t(cfg.depth - 1));
  for (int j = cfg.depth - 2; j >= 0; j--) {
    int cin = B.widths[size_t(j) + 1] + B.widths[size_t(j)];
    B.dec[size_t(j)].init(store_, "dec" + std::to_string(j), cin, B.widths[size_t(j)],
                          cfg.embed_dim, cfg.conditioned);
  }
  B.head.init(store_, "head", B.widths[0], cfg.out_channels);

  // He-normal init for conv weights; conditioning projections start at zero
  // so the untrained net ignores the condition.
  std::mt19937_64 engine(init_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& p : store_.all()) {
    if (p.name.ends_with(".bias")) continue;
    if (p.name.find(".cond.") != std::string::npos) continue;
    size_t fan_in = 1;
    for (size_t k = 1; k < p.shape.size(); k++) fan_in *= size_t(p.shape[k]);
    double scale = std::sqrt(2.0 / double(fan_in));
    for (double& x : p.w) x = gauss(engine) * scale;
  }
  quantize_f32(store_);
}

namespace {

// sinusoidal features of the scalar noise level (alpha_bar in (0, 1])
void sincos_embed(const std::vector<double>& levels, int E, std::vector<double>& out) {
  int half = E / 2;
  out.resize(levels.size() * size_t(E));
  for (size_t i = 0; i < levels.size(); i++) {
    for (int k = 0; k < half; k++) {
      double freq = half > 1 ? std::pow(10000.0, double(k) / double(half - 1)) : 1.0;
      out[i * size_t(E) + 2 * k] = std::sin(levels[i] * freq);
      out[i * size_t(E) + 2 * k + 1] = std::cos(levels[i] * freq);
    }
  }
}

void silu_inplace(std::vector<double>& v) {
  for (double& x : v) x = silu(x);
}

void add_channel_bias(Tensor& t, const std::vector<double>& bias) {
  // bias laid out [N x C]
  for (int i = 0; i < t.n; i++)
    for (int c = 0; c < t.c; c++) {
      double b = bias[size_t(i) * t.c + c];
      double* p = t.sample(i) + size_t(c) * t.plane();
      for (size_t k = 0; k < t.plane(); k++) p[k] += b;
    }
}

}  // namespace

Tensor UNet::forward(const Tensor& x, const std::vector<double>* noise_level,
                     Trace* trace) const {
  const auto& B = *blocks_;
  if (x.c != cfg_.in_channels)
    throw Error(ErrorKind::ShapeMismatch, "expected " + std::to_string(cfg_.in_channels) +
                                              " input channels, got " + std::to_string(x.c));
  int m = 1 << (cfg_.depth - 1);
  if (x.h % m != 0 || x.w % m != 0)
    throw Error(ErrorKind::ShapeMismatch,
                "spatial dims must be multiples of " + std::to_string(m));
  if (cfg_.conditioned) {
    if (noise_level == nullptr || int(noise_level->size()) != x.n)
      throw Error(ErrorKind::MissingCondition, "conditioned net needs one noise level per sample");
  } else if (noise_level != nullptr) {
    throw Error(ErrorKind::UnexpectedCondition, "unconditioned net given a noise level");
  }

  Trace local;
  Trace& tr = trace ? *trace : local;
  tr.N = x.n;
  tr.enc.resize(B.enc.size());
  tr.dec.resize(B.dec.size());
  tr.pooled.resize(B.enc.size());
  tr.up.resize(B.dec.size());
  tr.cat.resize(B.dec.size());
  tr.enc_bias.assign(B.enc.size(), {});
  tr.dec_bias.assign(B.dec.size(), {});

  std::vector<double> colbuf;

  if (cfg_.conditioned) {
    sincos_embed(*noise_level, cfg_.embed_dim, tr.emb0);
    B.emb1.forward(store_, tr.emb0, x.n, tr.pre_e1);
    tr.e1 = tr.pre_e1;
    silu_inplace(tr.e1);
    B.emb2.forward(store_, tr.e1, x.n, tr.pre_e2);
    tr.e2 = tr.pre_e2;
    silu_inplace(tr.e2);
  }

  auto run_block = [&](const ConvBlock& blk, const Tensor& in, BlockTrace& bt,
                       std::vector<double>& bias_cache) {
    bt.in = in;
    bt.pre1 = Tensor(in.n, blk.conv1.cout, in.h, in.w);
    blk.conv1.forward(store_, in, bt.pre1, colbuf);
    if (blk.conditioned) {
      blk.cond_proj.forward(store_, tr.e2, in.n, bias_cache);
      add_channel_bias(bt.pre1, bias_cache);
    }
    bt.act1 = bt.pre1;
    for (double& v : bt.act1.v) v = silu(v);
    bt.pre2 = Tensor(in.n, blk.conv2.cout, in.h, in.w);
    blk.conv2.forward(store_, bt.act1, bt.pre2, colbuf);
    bt.out = bt.pre2;
    for (double& v : bt.out.v) v = silu(v);
  };

  run_block(B.enc[0], x, tr.enc[0], tr.enc_bias[0]);
  for (size_t i = 1; i < B.enc.size(); i++) {
    const Tensor& prev = tr.enc[i - 1].out;
    tr.pooled[i] = Tensor(prev.n, prev.c, prev.h / 2, prev.w / 2);
    avgpool2(prev, tr.pooled[i]);
    run_block(B.enc[i], tr.pooled[i], tr.enc[i], tr.enc_bias[i]);
  }

  const Tensor* cur = &tr.enc.back().out;
  for (int j = cfg_.depth - 2; j >= 0; j--) {
    size_t ji = size_t(j);
    tr.up[ji] = Tensor(cur->n, cur->c, cur->h * 2, cur->w * 2);
    upsample2(*cur, tr.up[ji]);
    const Tensor& skip = tr.enc[ji].out;
    tr.cat[ji] = Tensor(skip.n, tr.up[ji].c + skip.c, skip.h, skip.w);
    for (int i = 0; i < skip.n; i++) {
      double* dst = tr.cat[ji].sample(i);
      std::copy(tr.up[ji].sample(i), tr.up[ji].sample(i) + tr.up[ji].sample_size(), dst);
      std::copy(skip.sample(i), skip.sample(i) + skip.sample_size(),
                dst + tr.up[ji].sample_size());
    }
    run_block(B.dec[ji], tr.cat[ji], tr.dec[ji], tr.dec_bias[ji]);
    cur = &tr.dec[ji].out;
  }

  Tensor y(x.n, cfg_.out_channels, x.h, x.w);
  B.head.forward(store_, *cur, y);
  return y;
}

void UNet::backward(const Tensor& dout, const Trace& tr) {
  const auto& B = *blocks_;
  std::vector<double> colbuf, dcolbuf;
  std::vector<double> de2(tr.e2.size(), 0.0);

  auto block_backward = [&](const ConvBlock& blk, const BlockTrace& bt,
                            const std::vector<double>& bias_cache, const Tensor& dout_blk,
                            Tensor* din) {
    Tensor dpre2 = dout_blk;
    for (size_t k = 0; k < dpre2.v.size(); k++) dpre2.v[k] *= silu_grad(bt.pre2.v[k]);
    Tensor dact1(bt.act1.n, bt.act1.c, bt.act1.h, bt.act1.w);
    blk.conv2.backward(store_, bt.act1, dpre2, &dact1, colbuf, dcolbuf);
    Tensor& dpre1 = dact1;
    for (size_t k = 0; k < dpre1.v.size(); k++) dpre1.v[k] *= silu_grad(bt.pre1.v[k]);
    if (blk.conditioned) {
      std::vector<double> dbias(size_t(dpre1.n) * dpre1.c, 0.0);
      for (int i = 0; i < dpre1.n; i++)
        for (int c = 0; c < dpre1.c; c++) {
          const double* p = dpre1.sample(i) + size_t(c) * dpre1.plane();
          double s = 0;
          for (size_t k = 0; k < dpre1.plane(); k++) s += p[k];
          dbias[size_t(i) * dpre1.c + c] = s;
        }
      std::vector<double> de2_part;
      blk.cond_proj.backward(store_, tr.e2, dpre1.n, dbias, &de2_part);
      for (size_t k = 0; k < de2.size(); k++) de2[k] += de2_part[k];
      (void)bias_cache;
    }
    blk.conv1.backward(store_, bt.in, dpre1, din, colbuf, dcolbuf);
  };

  // head
  Tensor dcur(tr.dec.empty() ? tr.enc.back().out.n : tr.dec[0].out.n,
              tr.dec.empty() ? tr.enc.back().out.c : tr.dec[0].out.c, dout.h, dout.w);
  {
    const Tensor& head_in = tr.dec.empty() ? tr.enc.back().out : tr.dec[0].out;
    B.head.backward(store_, head_in, dout, &dcur);
  }

  // decoder chain upward, stashing skip gradients
  std::vector<Tensor> dskip(tr.enc.size());
  for (size_t j = 0; j < tr.dec.size(); j++) {
    Tensor dcat(tr.cat[j].n, tr.cat[j].c, tr.cat[j].h, tr.cat[j].w);
    block_backward(B.dec[j], tr.dec[j], tr.dec_bias[j], dcur, &dcat);
    const Tensor& up = tr.up[j];
    Tensor dup(up.n, up.c, up.h, up.w);
    const Tensor& skip = tr.enc[j].out;
    dskip[j] = Tensor(skip.n, skip.c, skip.h, skip.w);
    for (int i = 0; i < dcat.n; i++) {
      const double* src = dcat.sample(i);
      std::copy(src, src + dup.sample_size(), dup.sample(i));
      std::copy(src + dup.sample_size(), src + dcat.sample_size(), dskip[j].sample(i));
    }
    // gradient w.r.t. the deeper level's output
    const Tensor& deeper = j + 1 < tr.dec.size() ? tr.dec[j + 1].out : tr.enc.back().out;
    dcur = Tensor(deeper.n, deeper.c, deeper.h, deeper.w);
    upsample2_backward(dup, dcur);
  }

  // encoder chain downward (deepest first)
  for (size_t i = tr.enc.size(); i-- > 0;) {
    Tensor dtotal = dcur;
    if (i < dskip.size() && dskip[i].v.size() == dtotal.v.size() && !dskip[i].v.empty())
      for (size_t k = 0; k < dtotal.v.size(); k++) dtotal.v[k] += dskip[i].v[k];
    if (i == 0) {
      block_backward(B.enc[0], tr.enc[0], tr.enc_bias[0], dtotal, nullptr);
    } else {
      Tensor dpooled(tr.pooled[i].n, tr.pooled[i].c, tr.pooled[i].h, tr.pooled[i].w);
      block_backward(B.enc[i], tr.enc[i], tr.enc_bias[i], dtotal, &dpooled);
      const Tensor& prev = tr.enc[i - 1].out;
      dcur = Tensor(prev.n, prev.c, prev.h, prev.w);
      avgpool2_backward(dpooled, dcur);
    }
  }

  if (cfg_.conditioned) {
    std::vector<double> dpre_e2 = de2;
    for (size_t k = 0; k < dpre_e2.size(); k++) dpre_e2[k] *= silu_grad(tr.pre_e2[k]);
    std::vector<double> de1;
    B.emb2.backward(store_, tr.e1, tr.N, dpre_e2, &de1);
    for (size_t k = 0; k < de1.size(); k++) de1[k] *= silu_grad(tr.pre_e1[k]);
    B.emb1.backward(store_, tr.emb0, tr.N, de1, nullptr);
  }
}

double UNet::mse_step(const Tensor& x, const Tensor& target,
                      const std::vector<double>* noise_level) {
  Trace tr;
  Tensor y = forward(x, noise_level, &tr);
  if (!y.same_shape(target)) throw Error(ErrorKind::ShapeMismatch, "mse_step: target shape");
  double inv = 1.0 / double(y.v.size());
  double loss = 0;
  Tensor dy(y.n, y.c, y.h, y.w);
  for (size_t k = 0; k < y.v.size(); k++) {
    double d = y.v[k] - target.v[k];
    loss += d * d;
    dy.v[k] = 2.0 * d * inv;
  }
  backward(dy, tr);
  return loss * inv;
}

void Adam::step(ParamStore& store) {
  if (m_.empty()) {
    m_.resize(store.count());
    v_.resize(store.count());
    for (size_t i = 0; i < store.count(); i++) {
      m_[i].assign(store[int(i)].size(), 0.0);
      v_[i].assign(store[int(i)].size(), 0.0);
    }
  }
  t_++;
  double bc1 = 1.0 - std::pow(beta1_, double(t_));
  double bc2 = 1.0 - std::pow(beta2_, double(t_));
  for (size_t i = 0; i < store.count(); i++) {
    Param& p = store[int(i)];
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t k = 0; k < p.size(); k++) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * p.g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * p.g[k] * p.g[k];
      double mhat = m[k] / bc1;
      double vhat = v[k] / bc2;
      p.w[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
  quantize_f32(store);
}

void pad_multiple(const std::vector<double>& src, int rows, int cols, int m,
                  std::vector<double>& dst, int& prows, int& pcols) {
  prows = (rows + m - 1) / m * m;
  pcols = (cols + m - 1) / m * m;
  dst.assign(size_t(prows) * pcols, 0.0);
  for (int r = 0; r < prows; r++) {
    int sr = std::min(r, rows - 1);
    for (int c = 0; c < pcols; c++) {
      int sc = std::min(c, cols - 1);
      dst[size_t(r) * pcols + c] = src[size_t(sr) * cols + sc];
    }
  }
}

}  // namespace ddm2::nn
