#include "ddm2/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "ddm2/container.hpp"
#include "ddm2/rng.hpp"
#include "ddm2/sampler.hpp"
#include "ddm2/sha256.hpp"
#include "ddm2/stage1.hpp"
#include "ddm2/stage2.hpp"
#include "ddm2/stage3.hpp"

namespace fs = std::filesystem;

namespace ddm2 {

void save_masks(const std::string& path, const RoiMasks& masks) {
  masks.validate();
  Volume4D v(masks.cols, masks.rows, 1, 2);
  for (size_t i = 0; i < masks.signal.size(); i++) {
    v.data[i] = masks.signal[i] ? 1.0 : 0.0;
    v.data[masks.signal.size() + i] = masks.background[i] ? 1.0 : 0.0;
  }
  v.source_id = masks.provenance;
  write_container(path, v, {{"content", "mask"}});
}

RoiMasks load_masks(const std::string& path) {
  ContainerFile f = read_container(path);
  if (f.volume.l != 2 || f.volume.d != 1)
    throw Error(ErrorKind::ShapeMismatch, "mask container must have shape (w, h, 1, 2)");
  RoiMasks m;
  m.rows = f.volume.h;
  m.cols = f.volume.w;
  m.provenance = f.volume.source_id;
  size_t n = size_t(m.rows) * m.cols;
  m.signal.resize(n);
  m.background.resize(n);
  for (size_t i = 0; i < n; i++) {
    m.signal[i] = f.volume.data[i] != 0.0 ? 1 : 0;
    m.background[i] = f.volume.data[n + i] != 0.0 ? 1 : 0;
  }
  m.validate();
  return m;
}

namespace {

class LockFile {
 public:
  explicit LockFile(const fs::path& path) : path_(path) {
    if (fs::exists(path_))
      throw Error(ErrorKind::LockHeld,
                  "run directory is locked (" + path_.string() + "); remove the lock if stale");
    std::ofstream f(path_);
    f << "locked\n";
  }
  ~LockFile() {
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  fs::path path_;
};

std::string rel_hash(const fs::path& workdir, const char* rel) {
  return sha256_file_hex((workdir / rel).string());
}

struct StageContext {
  const PipelineConfig& cfg;
  fs::path workdir;
  RunManifest& manifest;

  fs::path abs(const char* rel) const { return workdir / rel; }
  void record(const std::string& stage, std::initializer_list<const char*> artifacts,
              nlohmann::json extra = nlohmann::json::object()) {
    nlohmann::json fields = std::move(extra);
    for (const char* rel : artifacts) {
      std::string key = fs::path(rel).stem().string();
      fields[key] = rel;
      fields[key + "_sha256"] = rel_hash(workdir, rel);
    }
    manifest.record_stage(stage, fields);
    manifest.save(abs(paths::manifest).string());
  }
};

void run_ingest(StageContext& ctx) {
  Volume4D v = ingest(ctx.cfg.input_path, ctx.cfg.input_format);
  v.validate();
  write_container(ctx.abs(paths::ingested).string(), v);
  ctx.record("ingest", {paths::ingested},
             {{"input", ctx.cfg.input_path},
              {"input_sha256_external", sha256_file_hex(ctx.cfg.input_path)}});
}

void run_normalize(StageContext& ctx) {
  Volume4D v = ingest_container(ctx.abs(paths::ingested).string());
  std::vector<std::string> warnings;
  Volume4D norm = v.normalized()
                      ? v  // inputs that already carry a normalization record pass through
                      : normalize(v, ctx.cfg.norm_mode, ctx.cfg.p_lo, ctx.cfg.p_hi, &warnings);
  write_container(ctx.abs(paths::normalized).string(), norm);
  ctx.record("normalize", {paths::normalized}, {{"warnings", warnings}});
}

void run_stage1(StageContext& ctx) {
  Volume4D v = ingest_container(ctx.abs(paths::normalized).string());
  Stage1Config s1;
  s1.steps = ctx.cfg.s1_steps;
  s1.lr = ctx.cfg.s1_lr;
  s1.batch = ctx.cfg.s1_batch;
  s1.n = ctx.cfg.n_priors;
  s1.strategy = ctx.cfg.prior_strategy;
  s1.exclude_b0 = ctx.cfg.exclude_b0;
  s1.seed = ctx.cfg.seed;
  s1.depth = ctx.cfg.s1_depth;
  s1.base_width = ctx.cfg.s1_base_width;
  s1.log_every = ctx.cfg.s1_log_every;
  s1.log_path = ctx.abs(paths::s1_log).string();

  NetDenoiser phi = train_stage1(v, s1);
  phi.save(ctx.abs(paths::phi_ckpt).string());
  Stage1Output out = infer_stage1(phi, v, s1.n, s1.strategy, s1.seed, s1.exclude_b0);
  save_stage1(out, v, ctx.abs(paths::ybar).string(), ctx.abs(paths::residual).string());
  ctx.record("stage1", {paths::phi_ckpt, paths::ybar, paths::residual},
             {{"phi_fingerprint", phi.fingerprint()}, {"train_log", paths::s1_log}});
}

nlohmann::json match_to_json(const StateMatch& m, const NoiseModelFit& f) {
  return {{"t_star", m.t_star},       {"sigma", m.sigma},
          {"distance", m.distance},   {"p", m.p},
          {"schedule_fingerprint", m.schedule_fingerprint},
          {"warning", m.warning},     {"volume_index", f.volume_index},
          {"slice_index", f.slice_index}, {"mu_raw", f.mu_raw},
          {"sample_count", f.sample_count}};
}

void run_stage2(StageContext& ctx) {
  Stage1Output raw =
      load_stage1(ctx.abs(paths::ybar).string(), ctx.abs(paths::residual).string());
  Stage1Output cal = calibrate(raw, ctx.cfg.fit_scope);
  Volume4D source = ingest_container(ctx.abs(paths::normalized).string());
  save_stage1(cal, source, ctx.abs(paths::ybar_cal).string(),
              ctx.abs(paths::residual_cal).string());

  auto fits = fit_noise_model(cal, ctx.cfg.fit_scope);
  NoiseSchedule sched = ctx.cfg.build_schedule();
  nlohmann::json matches = nlohmann::json::array();
  for (const NoiseModelFit& f : fits)
    matches.push_back(match_to_json(match_state(f, sched, ctx.cfg.p_norm, ctx.cfg.match_metric), f));

  nlohmann::json mj = {{"matches", matches},
                       {"scope", ctx.cfg.fit_scope == FitScope::per_slice    ? "per_slice"
                                 : ctx.cfg.fit_scope == FitScope::per_volume ? "per_volume"
                                                                             : "global"},
                       {"schedule_fingerprint", sched.fingerprint()}};
  std::ofstream mf(ctx.abs(paths::match_json));
  mf << mj.dump(2) << '\n';
  mf.close();
  ctx.record("stage2", {paths::ybar_cal, paths::residual_cal, paths::match_json});
}

// calibration mus also live in the containers only as shifted data; stage3
// reloads the calibrated pair and reconstructs removed means per slice
Stage1Output load_calibrated(StageContext& ctx) {
  Stage1Output cal =
      load_stage1(ctx.abs(paths::ybar_cal).string(), ctx.abs(paths::residual_cal).string());
  cal.calibrated = true;
  cal.removed_mean_per_slice.assign(size_t(cal.d) * cal.l, 0.0);
  return cal;
}

std::vector<NoiseModelFit> load_fits(StageContext& ctx, FitScope scope) {
  std::ifstream f(ctx.abs(paths::match_json));
  if (!f) throw Error(ErrorKind::Internal, "missing stage2 match file");
  nlohmann::json mj = nlohmann::json::parse(f);
  std::vector<NoiseModelFit> fits;
  for (const auto& m : mj.at("matches")) {
    NoiseModelFit fit;
    fit.sigma = m.at("sigma").get<double>();
    fit.mu_raw = m.value("mu_raw", 0.0);
    fit.scope = scope;
    fit.volume_index = m.value("volume_index", -1);
    fit.slice_index = m.value("slice_index", -1);
    fit.sample_count = m.value("sample_count", size_t(0));
    fits.push_back(fit);
  }
  return fits;
}

void run_stage3(StageContext& ctx) {
  Volume4D v = ingest_container(ctx.abs(paths::normalized).string());
  Stage1Output cal = load_calibrated(ctx);
  auto fits = load_fits(ctx, ctx.cfg.fit_scope);
  NoiseSchedule sched = ctx.cfg.build_schedule();

  Stage3Config s3;
  s3.steps = ctx.cfg.s3_steps;
  s3.lr = ctx.cfg.s3_lr;
  s3.batch = ctx.cfg.s3_batch;
  s3.shuffle_mode = ctx.cfg.shuffle_mode;
  s3.seed = ctx.cfg.seed;
  s3.depth = ctx.cfg.s3_depth;
  s3.base_width = ctx.cfg.s3_base_width;
  s3.embed_dim = ctx.cfg.s3_embed_dim;
  s3.log_every = ctx.cfg.s3_log_every;
  s3.log_path = ctx.abs(paths::s3_log).string();
  s3.ablation_no_shuffle = ctx.cfg.ablation_no_shuffle;
  s3.ablation_target_ybar = ctx.cfg.ablation_target_ybar;
  s3.ablation_force_t = ctx.cfg.ablation_force_t;

  NetDenoiser F = train_stage3(v, cal, sched, fits, s3);
  F.save(ctx.abs(paths::f_ckpt).string());
  ctx.record("stage3", {paths::f_ckpt},
             {{"f_fingerprint", F.fingerprint()},
              {"shuffle_mode", ctx.cfg.shuffle_mode == ShuffleMode::scaled ? "scaled" : "literal"},
              {"train_log", paths::s3_log}});
}

const StateMatch match_for(const nlohmann::json& mj, int vol, int z, FitScope scope) {
  for (const auto& m : mj.at("matches")) {
    int mv = m.value("volume_index", -1);
    int ms = m.value("slice_index", -1);
    bool hit = scope == FitScope::global ? true
               : scope == FitScope::per_volume ? mv == vol
                                               : (mv == vol && ms == z);
    if (!hit) continue;
    StateMatch sm;
    sm.t_star = m.at("t_star").get<int>();
    sm.sigma = m.at("sigma").get<double>();
    sm.distance = m.value("distance", 0.0);
    sm.p = m.value("p", 1.0);
    sm.schedule_fingerprint = m.at("schedule_fingerprint").get<std::string>();
    sm.warning = m.value("warning", "");
    return sm;
  }
  throw Error(ErrorKind::Internal, "no state match for volume " + std::to_string(vol));
}

void run_denoise(StageContext& ctx) {
  Volume4D v = ingest_container(ctx.abs(paths::normalized).string());
  NetDenoiser F = NetDenoiser::load(ctx.abs(paths::f_ckpt).string());
  NoiseSchedule sched = ctx.cfg.build_schedule();
  std::ifstream mf(ctx.abs(paths::match_json));
  nlohmann::json mj = nlohmann::json::parse(mf);

  fs::create_directories(ctx.abs(paths::traces_dir));
  std::ofstream traces(ctx.abs(paths::traces_csv), std::ios::trunc);
  traces << "volume,slice,t_star,transitions,final_rmse,wall_time_s\n";

  Volume4D den = v;
  std::vector<double> final_rmses;
  struct SliceRun {
    int vol, z;
    double final_rmse;
  };
  std::vector<SliceRun> runs;

  SamplerOptions opts;
  opts.mean_mode = ctx.cfg.mean_mode;
  opts.keep_trace = true;

  for (int vol = 0; vol < v.l; vol++) {
    for (int z = 0; z < v.d; z++) {
      StateMatch match = match_for(mj, vol, z, ctx.cfg.fit_scope);
      opts.seed = mix_seed(ctx.cfg.seed, 0xde401ULL ^ uint64_t(vol) << 20, uint64_t(z));
      DenoiseResult res = denoise(v.slice(vol, z), F, sched, match, opts);
      den.set_slice(vol, z, res.s0);
      traces << vol << ',' << z << ',' << match.t_star << ',' << res.trace.transitions() << ','
             << res.trace.final_rmse() << ',' << res.trace.wall_time_s << '\n';
      write_trace_csv(
          (ctx.abs(paths::traces_dir) / ("v" + std::to_string(vol) + "_s" + std::to_string(z) +
                                         ".csv"))
              .string(),
          res.trace);
      final_rmses.push_back(res.trace.final_rmse());
      runs.push_back({vol, z, res.trace.final_rmse()});
    }
  }
  traces.close();
  write_container(ctx.abs(paths::denoised).string(), den, {{"stage", "3"}});

  OutlierPolicy policy{population_threshold(final_rmses)};
  std::ofstream of(ctx.abs(paths::outliers_csv), std::ios::trunc);
  of << "volume,slice,final_rmse,threshold,verdict\n";
  for (const SliceRun& r : runs)
    of << r.vol << ',' << r.z << ',' << r.final_rmse << ',' << policy.threshold << ','
       << (r.final_rmse < policy.threshold ? "outlier" : "ok") << '\n';
  of.close();
  ctx.record("denoise", {paths::denoised, paths::traces_csv, paths::outliers_csv});
}

struct MetricColumn {
  std::string name;
  std::vector<double> values;
};

nlohmann::json column_summary(const MetricColumn& col) {
  if (col.values.empty()) return nullptr;
  std::vector<double> sorted = col.values;
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    double pos = q * double(sorted.size() - 1);
    size_t i = size_t(pos);
    if (i + 1 >= sorted.size()) return sorted.back();
    double frac = pos - double(i);
    return sorted[i] * (1 - frac) + sorted[i + 1] * frac;
  };
  return {{"mean", mean_of(sorted)},   {"std", stddev_of(sorted)}, {"min", sorted.front()},
          {"q25", quantile(0.25)},     {"median", quantile(0.5)},  {"q75", quantile(0.75)},
          {"max", sorted.back()}};
}

void run_eval(StageContext& ctx) {
  Volume4D noisy = ingest_container(ctx.abs(paths::normalized).string());
  Volume4D den = read_container(ctx.abs(paths::denoised).string()).volume;

  bool have_clean = !ctx.cfg.clean_reference_path.empty();
  Volume4D clean;
  double data_range = 2.0;
  Volume4D noisy_raw, den_raw;
  if (have_clean) {
    clean = read_container(ctx.cfg.clean_reference_path).volume;
    auto [mn, mx] = std::minmax_element(clean.data.begin(), clean.data.end());
    data_range = *mx - *mn;
    if (data_range <= 0) data_range = 1.0;
    noisy_raw = noisy.normalized() ? denormalize(noisy) : noisy;
    den_raw = den.normalized() ? denormalize(den) : den;
  }

  bool have_masks = !ctx.cfg.masks_path.empty();
  RoiMasks masks;
  if (have_masks) masks = load_masks(ctx.cfg.masks_path);

  // per-slice final RMSE from the denoise stage
  std::vector<std::vector<double>> rmse_by(size_t(noisy.l), std::vector<double>(size_t(noisy.d)));
  {
    std::ifstream tf(ctx.abs(paths::traces_csv));
    std::string line;
    std::getline(tf, line);
    while (std::getline(tf, line)) {
      int vol, z, tst, trans;
      double fr, wt;
      if (sscanf(line.c_str(), "%d,%d,%d,%d,%lf,%lf", &vol, &z, &tst, &trans, &fr, &wt) == 6)
        rmse_by[size_t(vol)][size_t(z)] = fr;
    }
  }

  std::ofstream csv(ctx.abs(paths::metrics_csv), std::ios::trunc);
  csv << "volume,slice,final_rmse";
  if (have_clean) csv << ",psnr_noisy,psnr_denoised,ssim_noisy,ssim_denoised";
  if (have_masks) csv << ",snr_noisy,snr_denoised,cnr_noisy,cnr_denoised,delta_snr,delta_cnr";
  csv << '\n';

  std::vector<MetricColumn> cols;
  auto col = [&](const std::string& name) -> MetricColumn& {
    for (auto& c : cols)
      if (c.name == name) return c;
    cols.push_back({name, {}});
    return cols.back();
  };

  for (int vol = 0; vol < noisy.l; vol++) {
    for (int z = 0; z < noisy.d; z++) {
      csv << vol << ',' << z << ',' << rmse_by[size_t(vol)][size_t(z)];
      col("final_rmse").values.push_back(rmse_by[size_t(vol)][size_t(z)]);
      if (have_clean) {
        Image c = clean.slice(vol, z);
        Image nz = noisy_raw.slice(vol, z);
        Image dz = den_raw.slice(vol, z);
        double pn = psnr(nz, c, data_range), pd = psnr(dz, c, data_range);
        double sn = ssim(nz, c, data_range), sd = ssim(dz, c, data_range);
        csv << ',' << pn << ',' << pd << ',' << sn << ',' << sd;
        col("psnr_noisy").values.push_back(pn);
        col("psnr_denoised").values.push_back(pd);
        col("ssim_noisy").values.push_back(sn);
        col("ssim_denoised").values.push_back(sd);
      }
      if (have_masks) {
        Image nz = have_clean ? noisy_raw.slice(vol, z) : noisy.slice(vol, z);
        Image dz = have_clean ? den_raw.slice(vol, z) : den.slice(vol, z);
        SliceScores s_n = score_slice(nz, masks);
        SliceScores s_d = score_slice(dz, masks);
        auto [dsnr, dcnr] = relative_scores(s_d, s_n);
        csv << ',' << s_n.snr << ',' << s_d.snr << ',' << s_n.cnr << ',' << s_d.cnr << ','
            << dsnr << ',' << dcnr;
        col("snr_noisy").values.push_back(s_n.snr);
        col("snr_denoised").values.push_back(s_d.snr);
        col("cnr_noisy").values.push_back(s_n.cnr);
        col("cnr_denoised").values.push_back(s_d.cnr);
        col("delta_snr").values.push_back(dsnr);
        col("delta_cnr").values.push_back(dcnr);
      }
      csv << '\n';
    }
  }
  csv.close();

  nlohmann::json summary;
  for (const auto& c : cols) summary[c.name] = column_summary(c);
  std::ofstream sf(ctx.abs(paths::summary_json), std::ios::trunc);
  sf << summary.dump(2) << '\n';
  sf.close();
  ctx.record("eval", {paths::metrics_csv, paths::summary_json});
}

}  // namespace

void run_pipeline(const PipelineConfig& cfg, const std::string& workdir, bool resume,
                  PipelineStage until) {
  fs::path wd(workdir);
  fs::create_directories(wd);
  for (const char* sub : {"stage1", "stage2", "stage3", "denoised", "eval"})
    fs::create_directories(wd / sub);
  LockFile lock(wd / ".lock");

  nlohmann::json config_snapshot = cfg.to_json();
  RunManifest manifest = RunManifest::create(config_snapshot);
  fs::path mpath = wd / paths::manifest;
  if (resume && fs::exists(mpath)) {
    RunManifest prev = RunManifest::load(mpath.string());
    if (prev.config() == config_snapshot) manifest = prev;
  }

  StageContext ctx{cfg, wd, manifest};

  struct StageDef {
    PipelineStage stage;
    const char* name;
    void (*fn)(StageContext&);
    bool always_rerun;
  };
  const StageDef defs[] = {
      {PipelineStage::ingest, "ingest", run_ingest, false},
      {PipelineStage::normalize, "normalize", run_normalize, false},
      {PipelineStage::stage1, "stage1", run_stage1, false},
      {PipelineStage::stage2, "stage2", run_stage2, false},
      {PipelineStage::stage3, "stage3", run_stage3, false},
      {PipelineStage::denoise, "denoise", run_denoise, true},
      {PipelineStage::eval, "eval", run_eval, true},
  };

  for (const StageDef& def : defs) {
    if (int(def.stage) > int(until)) break;
    if (resume && !def.always_rerun && manifest.stage_verified(def.name, workdir)) continue;
    def.fn(ctx);
  }
}

}  // namespace ddm2
