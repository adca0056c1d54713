#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ddm2/image.hpp"

namespace ddm2 {

enum class NormalizationMode { global_minmax, per_volume_percentile };

/// Affine map(s) that took raw intensities to [-1, 1]. `lo`/`hi` hold one
/// entry for global_minmax and one entry per diffusion volume for the
/// percentile mode.
struct NormalizationRecord {
  NormalizationMode mode = NormalizationMode::global_minmax;
  double p_lo = 0.0;
  double p_hi = 100.0;
  std::vector<double> lo;
  std::vector<double> hi;
};

/// 4D diffusion MRI sequence: w x h in-plane, d slices, l diffusion-direction
/// volumes. Data is C-order with w fastest: ((vol*d + z)*h + y)*w + x.
struct Volume4D {
  int w = 0, h = 0, d = 0, l = 0;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::string source_id;
  std::vector<int> b0_volumes;  // volume indices flagged as b=0 acquisitions
  std::optional<NormalizationRecord> normalization;
  std::vector<double> data;

  Volume4D() = default;
  Volume4D(int w_, int h_, int d_, int l_, double fill = 0.0)
      : w(w_), h(h_), d(d_), l(l_), data(size_t(w_) * h_ * d_ * l_, fill) {}

  size_t voxel_count() const { return size_t(w) * h * d * l; }
  bool normalized() const { return normalization.has_value(); }

  size_t index(int x, int y, int z, int vol) const {
    return ((size_t(vol) * d + z) * h + y) * w + x;
  }
  double& at(int x, int y, int z, int vol) { return data[index(x, y, z, vol)]; }
  double at(int x, int y, int z, int vol) const { return data[index(x, y, z, vol)]; }

  Image slice(int vol, int z) const;
  void set_slice(int vol, int z, const Image& img);

  /// Enforces the type invariants: positive shape, l >= 2, finite data,
  /// data size consistent with shape.
  void validate() const;
};

/// Normalizes raw intensities into [-1, 1] and records the transform.
/// Constant-valued scopes map to all zeros (DegenerateRange is a warning,
/// not an error).
Volume4D normalize(const Volume4D& v, NormalizationMode mode, double p_lo = 1.0,
                   double p_hi = 99.0, std::vector<std::string>* warnings = nullptr);

/// Inverts `normalize` using the stored record.
Volume4D denormalize(const Volume4D& v);

enum class PriorStrategy { adjacent_directions, random_directions };

/// One Stage I training/inference unit: a target slice plus the volumes its
/// priors {x'} are drawn from. The target volume never appears among the
/// priors (J-invariance blindness).
struct SlicePair {
  int volume_index = 0;
  int slice_index = 0;
  std::vector<int> prior_volumes;
};

/// Enumerates one epoch: every (slice, volume) appears exactly once as
/// target, in a fixed order. Priors come from the same slice_index of n
/// other volumes; `adjacent_directions` walks the index ring outward
/// (-1, +1, -2, +2, ...) with wrap-around. b=0 volumes are skipped as
/// priors when `exclude_b0` is set.
std::vector<SlicePair> make_slice_pairs(const Volume4D& v, int n, PriorStrategy strategy,
                                        uint64_t seed = 0, bool exclude_b0 = true);

/// Fetches the target slice and prior slices for a pair.
Image pair_target(const Volume4D& v, const SlicePair& p);
std::vector<Image> pair_priors(const Volume4D& v, const SlicePair& p);

}  // namespace ddm2
