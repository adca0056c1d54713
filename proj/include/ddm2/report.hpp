#pragma once

#include <string>

#include "ddm2/config.hpp"

namespace ddm2 {

/// Renders report artifacts into <workdir>/report: the schedule CSV and a
/// warmup-vs-reverse-warmup lambda1 comparison figure, RMSE trajectory
/// plots from the denoise traces, metric boxplots from eval/metrics.csv,
/// and a summary JSON listing everything written.
void write_report(const PipelineConfig& cfg, const std::string& workdir);

}  // namespace ddm2
