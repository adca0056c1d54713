#include "ddm2/stage1.hpp"

#include <cmath>
#include <fstream>

#include "ddm2/container.hpp"
#include "ddm2/rng.hpp"

namespace ddm2 {

Image Stage1Output::y_bar_slice(int vol, int z) const {
  Image img(h, w);
  const double* src = &y_bar[index(0, 0, z, vol)];
  std::copy(src, src + size_t(w) * h, img.v.begin());
  return img;
}

Image Stage1Output::residual_slice(int vol, int z) const {
  Image img(h, w);
  const double* src = &residual[index(0, 0, z, vol)];
  std::copy(src, src + size_t(w) * h, img.v.begin());
  return img;
}

void Stage1Output::set_y_bar_slice(int vol, int z, const Image& img) {
  std::copy(img.v.begin(), img.v.end(), y_bar.begin() + index(0, 0, z, vol));
}

void Stage1Output::set_residual_slice(int vol, int z, const Image& img) {
  std::copy(img.v.begin(), img.v.end(), residual.begin() + index(0, 0, z, vol));
}

NetDenoiser train_stage1(const Volume4D& v, const Stage1Config& cfg,
                         const TrainObserver& observer) {
  v.validate();
  if (cfg.n > v.l - 1)
    throw Error(ErrorKind::TooFewVolumes, "n=" + std::to_string(cfg.n) + " priors but only " +
                                              std::to_string(v.l - 1) + " other volumes");
  auto pairs = make_slice_pairs(v, cfg.n, cfg.strategy, cfg.seed, cfg.exclude_b0);

  DenoiserSpec spec;
  spec.in_channels = cfg.n;
  spec.out_channels = 1;
  spec.depth = cfg.depth;
  spec.base_width = cfg.base_width;
  spec.conditioning = Conditioning::none;
  NetDenoiser phi(spec, mix_seed(cfg.seed, 0x51a6e1));

  nn::Adam opt(cfg.lr);
  Rng rng(mix_seed(cfg.seed, 0x51a6e2));
  int pad_m = 1 << (cfg.depth - 1);

  std::ofstream log;
  if (!cfg.log_path.empty()) {
    log.open(cfg.log_path, std::ios::trunc);
    log << "step,loss\n";
  }

  for (long step = 1; step <= cfg.steps; step++) {
    std::vector<std::vector<Image>> inputs(size_t(cfg.batch));
    std::vector<std::vector<Image>> targets(size_t(cfg.batch));
    for (int b = 0; b < cfg.batch; b++) {
      const SlicePair& p = pairs[size_t(rng.uniform_int(0, int64_t(pairs.size()) - 1))];
      inputs[size_t(b)] = pair_priors(v, p);
      targets[size_t(b)] = {pair_target(v, p)};
    }
    nn::Tensor x = stack_slices(inputs, pad_m);
    nn::Tensor t = stack_slices(targets, pad_m);
    phi.net().params().zero_grads();
    double loss = phi.net().mse_step(x, t, nullptr);
    if (!std::isfinite(loss))
      throw Error(ErrorKind::DivergedLoss, "NaN loss at step " + std::to_string(step));
    opt.step(phi.net().params());

    if (log.is_open() && (step % cfg.log_every == 0 || step == 1 || step == cfg.steps))
      log << step << ',' << loss << '\n';
    if (observer) observer(step, loss);
  }
  phi.set_train_steps(cfg.steps);
  return phi;
}

Stage1Output infer_stage1(const Denoiser& phi, const Volume4D& v, int n, PriorStrategy strategy,
                          uint64_t seed, bool exclude_b0) {
  if (phi.in_channels() != n)
    throw Error(ErrorKind::SpecMismatch, "denoiser was trained with n=" +
                                             std::to_string(phi.in_channels()) +
                                             " priors, inference requested n=" + std::to_string(n));
  auto pairs = make_slice_pairs(v, n, strategy, seed, exclude_b0);

  Stage1Output out;
  out.w = v.w;
  out.h = v.h;
  out.d = v.d;
  out.l = v.l;
  out.y_bar.resize(v.voxel_count());
  out.residual.resize(v.voxel_count());
  out.slice_stats.resize(size_t(v.d) * v.l);

  for (const SlicePair& p : pairs) {
    Image y = phi.apply(pair_priors(v, p));
    Image x = pair_target(v, p);
    Image eps(x.rows, x.cols);
    for (size_t i = 0; i < eps.v.size(); i++) eps.v[i] = x.v[i] - y.v[i];
    out.set_y_bar_slice(p.volume_index, p.slice_index, y);
    out.set_residual_slice(p.volume_index, p.slice_index, eps);
    auto& st = out.slice_stats[size_t(p.volume_index) * v.d + p.slice_index];
    st.mean = mean_of(eps.v);
    st.stddev = stddev_of(eps.v);
  }
  return out;
}

void save_stage1(const Stage1Output& out, const Volume4D& source, const std::string& y_bar_path,
                 const std::string& residual_path) {
  Volume4D y = source;
  y.data = out.y_bar;
  Volume4D r = source;
  r.data = out.residual;
  r.normalization.reset();  // residuals are differences, not normalized data
  nlohmann::json extra = {{"stage", "1"}, {"calibrated", out.calibrated}};
  write_container(y_bar_path, y, extra);
  nlohmann::json extra_r = extra;
  extra_r["content"] = "residual";
  write_container(residual_path, r, extra_r);
}

Stage1Output load_stage1(const std::string& y_bar_path, const std::string& residual_path) {
  ContainerFile y = read_container(y_bar_path);
  ContainerFile r = read_container(residual_path);
  if (y.volume.w != r.volume.w || y.volume.h != r.volume.h || y.volume.d != r.volume.d ||
      y.volume.l != r.volume.l)
    throw Error(ErrorKind::ShapeMismatch, "y_bar and residual containers disagree on shape");
  Stage1Output out;
  out.w = y.volume.w;
  out.h = y.volume.h;
  out.d = y.volume.d;
  out.l = y.volume.l;
  out.y_bar = std::move(y.volume.data);
  out.residual = std::move(r.volume.data);
  out.calibrated = y.header.value("calibrated", false);
  out.slice_stats.resize(size_t(out.d) * out.l);
  for (int vol = 0; vol < out.l; vol++)
    for (int z = 0; z < out.d; z++) {
      Image eps = out.residual_slice(vol, z);
      auto& st = out.slice_stats[size_t(vol) * out.d + z];
      st.mean = mean_of(eps.v);
      st.stddev = stddev_of(eps.v);
    }
  return out;
}

}  // namespace ddm2
