#pragma once

#include <functional>
#include <string>

#include "ddm2/schedule.hpp"
#include "ddm2/stage1.hpp"
#include "ddm2/stage2.hpp"

namespace ddm2 {

enum class ShuffleMode {
  literal,  // sqrt(alpha_bar)*y_bar + shuffle(eps)
  scaled,   // sqrt(alpha_bar)*y_bar + sqrt(1-alpha_bar)*shuffle(eps)/sigma
};

struct Stage3StepInfo {
  long step = 0;
  double loss = 0;
  std::vector<int> volume_index, slice_index, t;
  const std::vector<Image>* targets = nullptr;  // supervision targets, pre-padding
};
using Stage3Observer = std::function<void(const Stage3StepInfo&)>;

struct Stage3Config {
  long steps = 100000;
  double lr = 1e-4;
  int batch = 32;
  ShuffleMode shuffle_mode = ShuffleMode::scaled;
  uint64_t seed = 0;
  int log_every = 100;
  std::string log_path;  // CSV (step, loss, t_mean, lr); empty disables
  // architecture
  int depth = 3;
  int base_width = 32;
  int embed_dim = 32;
  // ablation switches reproducing the degraded variants; never on by default
  bool ablation_no_shuffle = false;   // explicit Gaussian noise instead of shuffle
  bool ablation_target_ybar = false;  // supervise on y_bar instead of x
  int ablation_force_t = 0;           // 0 = t ~ U(1, T)
  Stage3Observer observer;            // instrumentation hook
};

/// Uniform random spatial permutation of the residual pixels. The value
/// multiset is preserved exactly; deterministic given the seed.
Image noise_shuffle(const Image& residual, uint64_t seed);

/// Builds the Stage III training state at t. literal follows the shuffle
/// formula verbatim; scaled (default) rescales the shuffled residual to unit
/// sigma and applies sqrt(1-alpha_bar), so the injected noise magnitude is
/// consistent with the alpha_bar the network is conditioned on.
ForwardSample corrupt_for_training(const NoiseSchedule& sched, const Image& y_bar,
                                   const Image& residual, int t, ShuffleMode mode, double sigma,
                                   uint64_t seed);

/// Trains the conditioned diffusion denoiser: corrupt y_bar at a random
/// state, regress toward the original noisy x.
NetDenoiser train_stage3(const Volume4D& v, const Stage1Output& s1, const NoiseSchedule& sched,
                         const std::vector<NoiseModelFit>& fits, const Stage3Config& cfg);

}  // namespace ddm2
