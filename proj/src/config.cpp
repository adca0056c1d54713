#include "ddm2/config.hpp"

#include <cstdlib>
#include <fstream>

namespace ddm2 {

namespace {

const nlohmann::json* walk(const nlohmann::json& j, const std::string& dotted) {
  const nlohmann::json* cur = &j;
  size_t pos = 0;
  while (pos < dotted.size()) {
    size_t dot = dotted.find('.', pos);
    std::string key = dotted.substr(pos, dot == std::string::npos ? dot : dot - pos);
    if (!cur->is_object() || !cur->contains(key)) return nullptr;
    cur = &(*cur)[key];
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  return cur;
}

template <class T>
T get_or(const nlohmann::json& j, const std::string& dotted, T fallback) {
  const nlohmann::json* v = walk(j, dotted);
  if (v == nullptr || v->is_null()) return fallback;
  try {
    return v->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::ConfigInvalid, "field has the wrong type: " + dotted);
  }
}

template <class T>
T get_required(const nlohmann::json& j, const std::string& dotted) {
  const nlohmann::json* v = walk(j, dotted);
  if (v == nullptr || v->is_null())
    throw Error(ErrorKind::ConfigInvalid, "missing required field: " + dotted);
  try {
    return v->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::ConfigInvalid, "field has the wrong type: " + dotted);
  }
}

template <class T>
T parse_enum(const nlohmann::json& j, const std::string& dotted, const char* fallback,
             std::initializer_list<std::pair<const char*, T>> table) {
  std::string s = get_or<std::string>(j, dotted, fallback);
  for (const auto& [name, val] : table)
    if (s == name) return val;
  throw Error(ErrorKind::ConfigInvalid, "invalid value \"" + s + "\" for " + dotted);
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  PipelineConfig c;
  c.input_path = get_required<std::string>(j, "input.path");
  c.schedule_T = get_required<int>(j, "schedule.T");

  c.seed = get_or<uint64_t>(j, "seed", c.seed);
  c.workers = get_or<int>(j, "workers", c.workers);
  c.input_format =
      parse_enum<VolumeFormat>(j, "input.format", "raw_container",
                               {{"raw_container", VolumeFormat::raw_container},
                                {"nifti1", VolumeFormat::nifti1}});

  c.norm_mode = parse_enum<NormalizationMode>(
      j, "normalization.mode", "global_minmax",
      {{"global_minmax", NormalizationMode::global_minmax},
       {"per_volume_percentile", NormalizationMode::per_volume_percentile}});
  c.p_lo = get_or<double>(j, "normalization.p_lo", c.p_lo);
  c.p_hi = get_or<double>(j, "normalization.p_hi", c.p_hi);

  c.n_priors = get_or<int>(j, "priors.n", c.n_priors);
  c.prior_strategy = parse_enum<PriorStrategy>(
      j, "priors.strategy", "adjacent_directions",
      {{"adjacent_directions", PriorStrategy::adjacent_directions},
       {"random_directions", PriorStrategy::random_directions}});
  c.exclude_b0 = get_or<bool>(j, "priors.exclude_b0", c.exclude_b0);

  c.schedule_shape = parse_enum<ScheduleShape>(j, "schedule.shape", "reverse_warmup",
                                               {{"reverse_warmup", ScheduleShape::reverse_warmup},
                                                {"warmup", ScheduleShape::warmup}});
  c.beta_start = get_or<double>(j, "schedule.beta_start", c.beta_start);
  c.beta_end = get_or<double>(j, "schedule.beta_end", c.beta_end);
  c.linear_ratio = get_or<double>(j, "schedule.linear_ratio", c.linear_ratio);

  c.s1_steps = get_or<long>(j, "stage1.steps", c.s1_steps);
  c.s1_lr = get_or<double>(j, "stage1.lr", c.s1_lr);
  c.s1_batch = get_or<int>(j, "stage1.batch", c.s1_batch);
  c.s1_depth = get_or<int>(j, "stage1.depth", c.s1_depth);
  c.s1_base_width = get_or<int>(j, "stage1.base_width", c.s1_base_width);
  c.s1_log_every = get_or<int>(j, "stage1.log_every", c.s1_log_every);

  c.fit_scope = parse_enum<FitScope>(j, "stage2.scope", "per_volume",
                                     {{"per_slice", FitScope::per_slice},
                                      {"per_volume", FitScope::per_volume},
                                      {"global", FitScope::global}});
  c.p_norm = get_or<double>(j, "stage2.p", c.p_norm);
  c.match_metric = parse_enum<MatchMetric>(
      j, "stage2.match_metric", "sqrt_beta",
      {{"sqrt_beta", MatchMetric::sqrt_beta},
       {"sqrt_one_minus_alphabar", MatchMetric::sqrt_one_minus_alphabar}});

  c.s3_steps = get_or<long>(j, "stage3.steps", c.s3_steps);
  c.s3_lr = get_or<double>(j, "stage3.lr", c.s3_lr);
  c.s3_batch = get_or<int>(j, "stage3.batch", c.s3_batch);
  c.shuffle_mode = parse_enum<ShuffleMode>(j, "stage3.shuffle_mode", "scaled",
                                           {{"literal", ShuffleMode::literal},
                                            {"scaled", ShuffleMode::scaled}});
  c.s3_depth = get_or<int>(j, "stage3.depth", c.s3_depth);
  c.s3_base_width = get_or<int>(j, "stage3.base_width", c.s3_base_width);
  c.s3_embed_dim = get_or<int>(j, "stage3.embed_dim", c.s3_embed_dim);
  c.s3_log_every = get_or<int>(j, "stage3.log_every", c.s3_log_every);

  c.mean_mode = parse_enum<MeanMode>(j, "sampler.mean_mode", "x0_posterior",
                                     {{"x0_posterior", MeanMode::x0_posterior},
                                      {"literal", MeanMode::literal}});
  c.keep_trace = get_or<bool>(j, "sampler.keep_trace", c.keep_trace);

  c.clean_reference_path = get_or<std::string>(j, "eval.clean_reference", "");
  c.masks_path = get_or<std::string>(j, "eval.masks", "");

  c.ablation_no_shuffle = get_or<bool>(j, "ablation.no_shuffle", false);
  c.ablation_target_ybar = get_or<bool>(j, "ablation.target_ybar", false);
  c.ablation_force_t = get_or<int>(j, "ablation.force_t", 0);

  if (const char* env = std::getenv("DDM2_SEED")) {
    try {
      c.seed = std::stoull(env);
    } catch (...) {
      throw Error(ErrorKind::ConfigInvalid, "DDM2_SEED is not a valid integer");
    }
  }

  if (c.schedule_T < 2) throw Error(ErrorKind::ConfigInvalid, "schedule.T must be >= 2");
  if (c.n_priors < 1) throw Error(ErrorKind::ConfigInvalid, "priors.n must be >= 1");
  if (c.workers < 1) throw Error(ErrorKind::ConfigInvalid, "workers must be >= 1");
  if (c.s1_batch < 1 || c.s3_batch < 1)
    throw Error(ErrorKind::ConfigInvalid, "batch sizes must be >= 1");
  return c;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::ConfigInvalid, "cannot open config: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigInvalid, std::string("config is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

nlohmann::json PipelineConfig::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["workers"] = workers;
  j["input"] = {{"path", input_path},
                {"format", input_format == VolumeFormat::nifti1 ? "nifti1" : "raw_container"}};
  j["normalization"] = {
      {"mode", norm_mode == NormalizationMode::global_minmax ? "global_minmax"
                                                             : "per_volume_percentile"},
      {"p_lo", p_lo},
      {"p_hi", p_hi}};
  j["priors"] = {{"n", n_priors},
                 {"strategy", prior_strategy == PriorStrategy::adjacent_directions
                                  ? "adjacent_directions"
                                  : "random_directions"},
                 {"exclude_b0", exclude_b0}};
  j["schedule"] = {{"shape", schedule_shape == ScheduleShape::reverse_warmup ? "reverse_warmup"
                                                                             : "warmup"},
                   {"T", schedule_T},
                   {"beta_start", beta_start},
                   {"beta_end", beta_end},
                   {"linear_ratio", linear_ratio}};
  j["stage1"] = {{"steps", s1_steps},       {"lr", s1_lr},
                 {"batch", s1_batch},       {"depth", s1_depth},
                 {"base_width", s1_base_width}, {"log_every", s1_log_every}};
  j["stage2"] = {{"scope", fit_scope == FitScope::per_slice    ? "per_slice"
                           : fit_scope == FitScope::per_volume ? "per_volume"
                                                               : "global"},
                 {"p", p_norm},
                 {"match_metric", match_metric == MatchMetric::sqrt_beta
                                      ? "sqrt_beta"
                                      : "sqrt_one_minus_alphabar"}};
  j["stage3"] = {{"steps", s3_steps},
                 {"lr", s3_lr},
                 {"batch", s3_batch},
                 {"shuffle_mode", shuffle_mode == ShuffleMode::scaled ? "scaled" : "literal"},
                 {"depth", s3_depth},
                 {"base_width", s3_base_width},
                 {"embed_dim", s3_embed_dim},
                 {"log_every", s3_log_every}};
  j["sampler"] = {{"mean_mode", mean_mode == MeanMode::x0_posterior ? "x0_posterior" : "literal"},
                  {"keep_trace", keep_trace}};
  j["eval"] = {{"clean_reference", clean_reference_path}, {"masks", masks_path}};
  j["ablation"] = {{"no_shuffle", ablation_no_shuffle},
                   {"target_ybar", ablation_target_ybar},
                   {"force_t", ablation_force_t}};
  return j;
}

}  // namespace ddm2
