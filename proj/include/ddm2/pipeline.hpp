#pragma once

#include <string>

#include "ddm2/config.hpp"
#include "ddm2/manifest.hpp"
#include "ddm2/metrics.hpp"

namespace ddm2 {

enum class PipelineStage { ingest, normalize, stage1, stage2, stage3, denoise, eval };

/// Executes ingest -> normalize -> stage1 -> stage2 -> stage3 -> denoise ->
/// eval inside `workdir`, recording artifact hashes in manifest.json after
/// each stage. With `resume`, training stages whose artifacts still verify
/// are skipped; denoise and eval always re-execute. Errors propagate as
/// ddm2::Error; partial artifacts are retained.
void run_pipeline(const PipelineConfig& cfg, const std::string& workdir, bool resume = true,
                  PipelineStage until = PipelineStage::eval);

/// Relative artifact paths inside a run directory.
namespace paths {
inline constexpr const char* manifest = "manifest.json";
inline constexpr const char* ingested = "ingested.vol";
inline constexpr const char* normalized = "normalized.vol";
inline constexpr const char* phi_ckpt = "stage1/phi.ckpt";
inline constexpr const char* s1_log = "stage1/train_log.csv";
inline constexpr const char* ybar = "stage1/ybar.vol";
inline constexpr const char* residual = "stage1/residual.vol";
inline constexpr const char* ybar_cal = "stage2/ybar_cal.vol";
inline constexpr const char* residual_cal = "stage2/residual_cal.vol";
inline constexpr const char* match_json = "stage2/match.json";
inline constexpr const char* f_ckpt = "stage3/f.ckpt";
inline constexpr const char* s3_log = "stage3/train_log.csv";
inline constexpr const char* denoised = "denoised/denoised.vol";
inline constexpr const char* traces_csv = "denoised/traces.csv";
inline constexpr const char* traces_dir = "denoised/traces";
inline constexpr const char* outliers_csv = "denoised/outliers.csv";
inline constexpr const char* metrics_csv = "eval/metrics.csv";
inline constexpr const char* summary_json = "eval/summary.json";
}  // namespace paths

/// Writes ROI masks as a raw container of shape (w, h, 1, 2):
/// volume 0 = signal, volume 1 = background, values 0/1.
void save_masks(const std::string& path, const RoiMasks& masks);
RoiMasks load_masks(const std::string& path);

}  // namespace ddm2
