#pragma once

#include <string>

#include <json.hpp>

#include "ddm2/nifti.hpp"
#include "ddm2/sampler.hpp"
#include "ddm2/schedule.hpp"
#include "ddm2/stage2.hpp"
#include "ddm2/stage3.hpp"

namespace ddm2 {

/// Full pipeline configuration. Defaults are the published hyperparameters;
/// everything is overridable from the JSON config file.
struct PipelineConfig {
  uint64_t seed = 1234;
  int workers = 1;

  std::string input_path;
  VolumeFormat input_format = VolumeFormat::raw_container;

  NormalizationMode norm_mode = NormalizationMode::global_minmax;
  double p_lo = 1.0, p_hi = 99.0;

  int n_priors = 2;
  PriorStrategy prior_strategy = PriorStrategy::adjacent_directions;
  bool exclude_b0 = true;

  ScheduleShape schedule_shape = ScheduleShape::reverse_warmup;
  int schedule_T = 1000;
  double beta_start = 5e-5;
  double beta_end = 1e-2;
  double linear_ratio = 0.7;

  long s1_steps = 10000;
  double s1_lr = 1e-4;
  int s1_batch = 32;
  int s1_depth = 3;
  int s1_base_width = 32;
  int s1_log_every = 50;

  FitScope fit_scope = FitScope::per_volume;
  double p_norm = 1.0;
  MatchMetric match_metric = MatchMetric::sqrt_beta;

  long s3_steps = 100000;
  double s3_lr = 1e-4;
  int s3_batch = 32;
  ShuffleMode shuffle_mode = ShuffleMode::scaled;
  int s3_depth = 3;
  int s3_base_width = 32;
  int s3_embed_dim = 32;
  int s3_log_every = 100;

  MeanMode mean_mode = MeanMode::x0_posterior;
  bool keep_trace = true;

  std::string clean_reference_path;  // optional ground truth for PSNR/SSIM
  std::string masks_path;            // optional ROI mask container for SNR/CNR

  bool ablation_no_shuffle = false;
  bool ablation_target_ybar = false;
  int ablation_force_t = 0;

  NoiseSchedule build_schedule() const {
    return NoiseSchedule::build(schedule_shape, schedule_T, beta_start, beta_end, linear_ratio);
  }

  /// Parses + validates; missing required fields raise ConfigInvalid naming
  /// the dotted path (e.g. "schedule.T"). The DDM2_SEED environment
  /// variable, when set, overrides the config seed.
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::string& path);
  nlohmann::json to_json() const;
};

}  // namespace ddm2
