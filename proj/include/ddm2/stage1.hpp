#pragma once

#include <functional>
#include <string>

#include "ddm2/denoiser.hpp"
#include "ddm2/volume.hpp"

namespace ddm2 {

struct Stage1Config {
  long steps = 10000;
  double lr = 1e-4;
  int batch = 32;
  int n = 2;  // prior count
  PriorStrategy strategy = PriorStrategy::adjacent_directions;
  bool exclude_b0 = true;
  uint64_t seed = 0;
  int log_every = 50;
  std::string log_path;  // CSV (step, loss); empty disables
  // architecture
  int depth = 3;
  int base_width = 32;
};

/// Denoised estimate + residual for a whole sequence. x = y_bar + residual
/// holds by construction; calibration shifts both without breaking the sum.
struct Stage1Output {
  int w = 0, h = 0, d = 0, l = 0;
  std::vector<double> y_bar;     // same layout as Volume4D::data
  std::vector<double> residual;  // epsilon_bar = x - y_bar
  struct SliceStat {
    double mean = 0, stddev = 0;
  };
  std::vector<SliceStat> slice_stats;  // indexed vol * d + z
  bool calibrated = false;
  // mean removed from each slice by calibration (finest granularity even
  // for coarser scopes, so any later fit can reconstruct mu_raw)
  std::vector<double> removed_mean_per_slice;

  size_t index(int x_, int y_, int z, int vol) const {
    return ((size_t(vol) * d + z) * h + y_) * w + x_;
  }
  Image y_bar_slice(int vol, int z) const;
  Image residual_slice(int vol, int z) const;
  void set_y_bar_slice(int vol, int z, const Image& img);
  void set_residual_slice(int vol, int z, const Image& img);
};

using TrainObserver = std::function<void(long step, double loss)>;

/// Trains one slice-to-slice function for the entire sequence: inputs are n
/// prior slices from other volumes, the target is the noisy slice itself.
NetDenoiser train_stage1(const Volume4D& v, const Stage1Config& cfg,
                         const TrainObserver& observer = nullptr);

/// Runs the trained function over every (slice, volume) and forms residuals.
/// The target slice itself never enters the input stack.
Stage1Output infer_stage1(const Denoiser& phi, const Volume4D& v, int n, PriorStrategy strategy,
                          uint64_t seed = 0, bool exclude_b0 = true);

/// Persists y_bar and residual as raw containers with a stage:"1" header.
void save_stage1(const Stage1Output& out, const Volume4D& source, const std::string& y_bar_path,
                 const std::string& residual_path);
Stage1Output load_stage1(const std::string& y_bar_path, const std::string& residual_path);

}  // namespace ddm2
