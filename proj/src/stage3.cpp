#include "ddm2/stage3.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "ddm2/rng.hpp"

namespace ddm2 {

Image noise_shuffle(const Image& residual, uint64_t seed) {
  if (!residual.finite()) throw Error(ErrorKind::NonFiniteData, "residual has non-finite values");
  Image out = residual;
  std::mt19937_64 engine(seed);
  // Fisher-Yates over all pixel positions
  for (size_t i = out.v.size(); i > 1; i--) {
    size_t j = std::uniform_int_distribution<size_t>(0, i - 1)(engine);
    std::swap(out.v[i - 1], out.v[j]);
  }
  return out;
}

ForwardSample corrupt_for_training(const NoiseSchedule& sched, const Image& y_bar,
                                   const Image& residual, int t, ShuffleMode mode, double sigma,
                                   uint64_t seed) {
  require_same_shape(y_bar, residual, "corrupt_for_training");
  if (t < 1 || t > sched.T())
    throw Error(ErrorKind::StateOutOfRange, "corrupt_for_training: t=" + std::to_string(t));
  if (mode == ShuffleMode::scaled && sigma <= 0.0)
    throw Error(ErrorKind::ZeroSigma, "scaled shuffle mode needs sigma > 0");

  Image shuffled = noise_shuffle(residual, seed);
  double l1 = sched.lambda1(t);
  double noise_scale = mode == ShuffleMode::literal ? 1.0 : sched.lambda2(t) / sigma;

  ForwardSample out;
  out.t = t;
  out.noise_used = Image(y_bar.rows, y_bar.cols);
  out.state = Image(y_bar.rows, y_bar.cols);
  for (size_t i = 0; i < y_bar.v.size(); i++) {
    out.noise_used.v[i] = noise_scale * shuffled.v[i];
    out.state.v[i] = l1 * y_bar.v[i] + out.noise_used.v[i];
  }
  return out;
}

namespace {

double sigma_for_slice(const std::vector<NoiseModelFit>& fits, int vol, int z) {
  for (const NoiseModelFit& f : fits) {
    switch (f.scope) {
      case FitScope::global: return f.sigma;
      case FitScope::per_volume:
        if (f.volume_index == vol) return f.sigma;
        break;
      case FitScope::per_slice:
        if (f.volume_index == vol && f.slice_index == z) return f.sigma;
        break;
    }
  }
  throw Error(ErrorKind::Internal, "no noise-model fit covers volume " + std::to_string(vol) +
                                       ", slice " + std::to_string(z));
}

}  // namespace

NetDenoiser train_stage3(const Volume4D& v, const Stage1Output& s1, const NoiseSchedule& sched,
                         const std::vector<NoiseModelFit>& fits, const Stage3Config& cfg) {
  v.validate();
  if (!s1.calibrated)
    throw Error(ErrorKind::Internal, "train_stage3 requires a calibrated Stage1Output");
  if (s1.w != v.w || s1.h != v.h || s1.d != v.d || s1.l != v.l)
    throw Error(ErrorKind::ShapeMismatch, "Stage1Output shape does not match the sequence");
  if (cfg.shuffle_mode == ShuffleMode::scaled && fits.empty() && !cfg.ablation_no_shuffle)
    throw Error(ErrorKind::Internal, "scaled shuffle mode needs noise-model fits");

  DenoiserSpec spec;
  spec.in_channels = 1;
  spec.out_channels = 1;
  spec.depth = cfg.depth;
  spec.base_width = cfg.base_width;
  spec.embed_dim = cfg.embed_dim;
  spec.conditioning = Conditioning::noise_level_scalar;
  NetDenoiser F(spec, mix_seed(cfg.seed, 0x57a6e3));

  nn::Adam opt(cfg.lr);
  Rng rng(mix_seed(cfg.seed, 0x57a6e4));
  int pad_m = 1 << (cfg.depth - 1);

  std::ofstream log;
  if (!cfg.log_path.empty()) {
    log.open(cfg.log_path, std::ios::trunc);
    log << "step,loss,t_mean,lr\n";
  }

  for (long step = 1; step <= cfg.steps; step++) {
    std::vector<std::vector<Image>> inputs(size_t(cfg.batch));
    std::vector<std::vector<Image>> targets(size_t(cfg.batch));
    std::vector<Image> target_slices(size_t(cfg.batch));
    std::vector<double> levels(size_t(cfg.batch));
    Stage3StepInfo info;
    info.step = step;

    for (int b = 0; b < cfg.batch; b++) {
      int vol = int(rng.uniform_int(0, v.l - 1));
      int z = int(rng.uniform_int(0, v.d - 1));
      int t = cfg.ablation_force_t > 0 ? cfg.ablation_force_t : int(rng.uniform_int(1, sched.T()));

      Image yb = s1.y_bar_slice(vol, z);
      Image state;
      if (cfg.ablation_no_shuffle) {
        // explicit noise model: standard forward corruption with fresh z
        state = forward_sample(sched, yb, t, nullptr, mix_seed(cfg.seed, uint64_t(step), uint64_t(b)))
                    .state;
      } else {
        Image eps = s1.residual_slice(vol, z);
        double sigma =
            cfg.shuffle_mode == ShuffleMode::scaled ? sigma_for_slice(fits, vol, z) : 0.0;
        state = corrupt_for_training(sched, yb, eps, t, cfg.shuffle_mode, sigma,
                                     mix_seed(cfg.seed, uint64_t(step), uint64_t(b)))
                    .state;
      }

      Image target = cfg.ablation_target_ybar ? yb : v.slice(vol, z);
      inputs[size_t(b)] = {std::move(state)};
      target_slices[size_t(b)] = target;
      targets[size_t(b)] = {std::move(target)};
      levels[size_t(b)] = sched.alpha_bar(t);
      info.volume_index.push_back(vol);
      info.slice_index.push_back(z);
      info.t.push_back(t);
    }

    nn::Tensor x = stack_slices(inputs, pad_m);
    nn::Tensor tgt = stack_slices(targets, pad_m);
    F.net().params().zero_grads();
    double loss = F.net().mse_step(x, tgt, &levels);
    if (!std::isfinite(loss))
      throw Error(ErrorKind::DivergedLoss, "NaN loss at step " + std::to_string(step));
    opt.step(F.net().params());

    if (log.is_open() && (step % cfg.log_every == 0 || step == 1 || step == cfg.steps)) {
      double t_mean = std::accumulate(info.t.begin(), info.t.end(), 0.0) / double(info.t.size());
      log << step << ',' << loss << ',' << t_mean << ',' << cfg.lr << '\n';
    }
    if (cfg.observer) {
      info.loss = loss;
      info.targets = &target_slices;
      cfg.observer(info);
    }
  }
  F.set_train_steps(cfg.steps);
  return F;
}

}  // namespace ddm2
