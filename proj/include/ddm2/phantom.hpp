#pragma once

#include <cstdint>
#include <vector>

#include "ddm2/metrics.hpp"
#include "ddm2/volume.hpp"

namespace ddm2 {

/// One ellipse structure; coordinates are in slice-normalized units
/// ([-1, 1] across each in-plane axis). Per-direction intensity modulation
/// makes the l volumes correlated but distinct, mimicking diffusion
/// directions: intensity * (1 + mod_amp * cos(2*pi*vol/l + mod_phase)).
struct PhantomEllipse {
  double cx = 0, cy = 0;
  double rx = 0.5, ry = 0.5;
  double angle = 0;
  double intensity = 0.3;
  double mod_amp = 0.1;
  double mod_phase = 0;
  bool z_scaled = false;  // radii shrink away from the mid slice
};

enum class PhantomNoise { gaussian, rician };

struct PhantomSpec {
  int w = 32, h = 32, d = 8, l = 6;
  std::vector<PhantomEllipse> ellipses;  // empty selects the default set
  double background = 0.05;
  PhantomNoise noise = PhantomNoise::gaussian;
  double sigma = 0.08;
  uint64_t seed = 0;
};

struct PhantomPair {
  Volume4D clean;
  Volume4D noisy;
  RoiMasks masks;  // signal inside the brightest structure, background outside the disc
};

/// Deterministic ground-truthed phantom: clean intensities in [0, 1],
/// noise applied i.i.d. per voxel.
PhantomPair make_phantom(const PhantomSpec& spec);

std::vector<PhantomEllipse> default_phantom_ellipses();

}  // namespace ddm2
