#include "ddm2/volume.hpp"

#include <algorithm>
#include <cmath>

#include "ddm2/rng.hpp"

namespace ddm2 {

Image Volume4D::slice(int vol, int z) const {
  Image img(h, w);
  const double* src = &data[index(0, 0, z, vol)];
  std::copy(src, src + size_t(w) * h, img.v.begin());
  return img;
}

void Volume4D::set_slice(int vol, int z, const Image& img) {
  if (img.rows != h || img.cols != w)
    throw Error(ErrorKind::ShapeMismatch, "set_slice: slice shape does not match volume");
  std::copy(img.v.begin(), img.v.end(), data.begin() + index(0, 0, z, vol));
}

void Volume4D::validate() const {
  if (w <= 0 || h <= 0 || d <= 0 || l <= 0)
    throw Error(ErrorKind::ShapeMismatch, "non-positive shape field");
  if (l < 2)
    throw Error(ErrorKind::TooFewVolumes, "sequence has l=" + std::to_string(l) +
                                              " volumes; need l >= 2 for prior construction");
  if (data.size() != voxel_count())
    throw Error(ErrorKind::ShapeMismatch, "data size does not match shape");
  size_t bad = 0;
  for (double x : data)
    if (!std::isfinite(x)) bad++;
  if (bad > 0)
    throw Error(ErrorKind::NonFiniteData, std::to_string(bad) + " non-finite voxel(s)");
  for (int b : b0_volumes)
    if (b < 0 || b >= l) throw Error(ErrorKind::ShapeMismatch, "b0 volume index out of range");
}

namespace {

// numpy-style linear-interpolation percentile over a sorted copy
double percentile(std::vector<double> vals, double p) {
  std::sort(vals.begin(), vals.end());
  if (vals.size() == 1) return vals[0];
  double pos = p / 100.0 * double(vals.size() - 1);
  size_t i = size_t(pos);
  if (i >= vals.size() - 1) return vals.back();
  double frac = pos - double(i);
  return vals[i] * (1.0 - frac) + vals[i + 1] * frac;
}

void affine_to_unit(const double* src, double* dst, size_t count, double lo, double hi,
                    bool clamp) {
  if (hi == lo) {
    std::fill(dst, dst + count, 0.0);
    return;
  }
  double scale = 2.0 / (hi - lo);
  for (size_t i = 0; i < count; i++) {
    double y = (src[i] - lo) * scale - 1.0;
    if (clamp) y = std::clamp(y, -1.0, 1.0);
    dst[i] = y;
  }
}

}  // namespace

Volume4D normalize(const Volume4D& v, NormalizationMode mode, double p_lo, double p_hi,
                   std::vector<std::string>* warnings) {
  if (v.normalized()) throw Error(ErrorKind::AlreadyNormalized, "volume already normalized");
  if (!(p_lo >= 0.0 && p_lo < p_hi && p_hi <= 100.0))
    throw Error(ErrorKind::ConfigInvalid, "percentile bounds must satisfy 0 <= p_lo < p_hi <= 100");
  v.validate();

  Volume4D out = v;
  NormalizationRecord rec;
  rec.mode = mode;

  if (mode == NormalizationMode::global_minmax) {
    auto [mn, mx] = std::minmax_element(v.data.begin(), v.data.end());
    rec.lo = {*mn};
    rec.hi = {*mx};
    if (*mn == *mx && warnings)
      warnings->push_back("DegenerateRange: constant volume mapped to zeros");
    affine_to_unit(v.data.data(), out.data.data(), v.data.size(), *mn, *mx, false);
  } else {
    rec.p_lo = p_lo;
    rec.p_hi = p_hi;
    size_t per_vol = size_t(v.w) * v.h * v.d;
    for (int vol = 0; vol < v.l; vol++) {
      std::vector<double> vals(v.data.begin() + vol * per_vol,
                               v.data.begin() + (vol + 1) * per_vol);
      double lo = percentile(vals, p_lo);
      double hi = percentile(vals, p_hi);
      rec.lo.push_back(lo);
      rec.hi.push_back(hi);
      if (lo == hi && warnings)
        warnings->push_back("DegenerateRange: constant volume " + std::to_string(vol) +
                            " mapped to zeros");
      affine_to_unit(v.data.data() + vol * per_vol, out.data.data() + vol * per_vol, per_vol, lo,
                     hi, true);
    }
  }
  out.normalization = rec;
  return out;
}

Volume4D denormalize(const Volume4D& v) {
  if (!v.normalized()) throw Error(ErrorKind::Internal, "denormalize: volume has no record");
  const NormalizationRecord& rec = *v.normalization;
  Volume4D out = v;
  out.normalization.reset();
  size_t per_vol = size_t(v.w) * v.h * v.d;
  for (int vol = 0; vol < v.l; vol++) {
    size_t idx = rec.mode == NormalizationMode::global_minmax ? 0 : size_t(vol);
    double lo = rec.lo[idx], hi = rec.hi[idx];
    double* dst = out.data.data() + vol * per_vol;
    const double* src = v.data.data() + vol * per_vol;
    for (size_t i = 0; i < per_vol; i++) dst[i] = (src[i] + 1.0) * 0.5 * (hi - lo) + lo;
  }
  return out;
}

namespace {

std::vector<int> adjacent_priors(int target, int l, int n, const std::vector<int>& excluded) {
  auto is_excluded = [&](int idx) {
    return std::find(excluded.begin(), excluded.end(), idx) != excluded.end();
  };
  std::vector<int> picks;
  // walk the index ring outward: -1, +1, -2, +2, ...
  for (int step = 1; step < l && int(picks.size()) < n; step++) {
    for (int sign : {-1, +1}) {
      int idx = ((target + sign * step) % l + l) % l;
      if (idx == target || is_excluded(idx)) continue;
      if (std::find(picks.begin(), picks.end(), idx) != picks.end()) continue;
      picks.push_back(idx);
      if (int(picks.size()) == n) break;
    }
  }
  return picks;
}

std::vector<int> random_priors(int target, int l, int n, const std::vector<int>& excluded,
                               uint64_t seed) {
  std::vector<int> candidates;
  for (int i = 0; i < l; i++) {
    if (i == target) continue;
    if (std::find(excluded.begin(), excluded.end(), i) != excluded.end()) continue;
    candidates.push_back(i);
  }
  Rng rng(seed);
  // partial Fisher-Yates: the first n entries become the picks
  for (int k = 0; k < n && k < int(candidates.size()); k++) {
    int j = int(rng.uniform_int(k, int64_t(candidates.size()) - 1));
    std::swap(candidates[k], candidates[j]);
  }
  candidates.resize(std::min<size_t>(n, candidates.size()));
  return candidates;
}

}  // namespace

std::vector<SlicePair> make_slice_pairs(const Volume4D& v, int n, PriorStrategy strategy,
                                        uint64_t seed, bool exclude_b0) {
  if (n < 1) throw Error(ErrorKind::ConfigInvalid, "prior count n must be >= 1");
  if (n > v.l - 1)
    throw Error(ErrorKind::TooFewVolumes,
                "n=" + std::to_string(n) + " priors requested but only " + std::to_string(v.l - 1) +
                    " other volumes exist");
  std::vector<int> excluded = exclude_b0 ? v.b0_volumes : std::vector<int>{};

  std::vector<SlicePair> pairs;
  pairs.reserve(size_t(v.d) * v.l);
  for (int vol = 0; vol < v.l; vol++) {
    for (int z = 0; z < v.d; z++) {
      SlicePair p;
      p.volume_index = vol;
      p.slice_index = z;
      p.prior_volumes =
          strategy == PriorStrategy::adjacent_directions
              ? adjacent_priors(vol, v.l, n, excluded)
              : random_priors(vol, v.l, n, excluded, mix_seed(seed, uint64_t(vol), uint64_t(z)));
      if (int(p.prior_volumes.size()) < n)
        throw Error(ErrorKind::TooFewVolumes,
                    "b0 exclusion leaves fewer than n=" + std::to_string(n) +
                        " prior candidates for volume " + std::to_string(vol));
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

Image pair_target(const Volume4D& v, const SlicePair& p) {
  return v.slice(p.volume_index, p.slice_index);
}

std::vector<Image> pair_priors(const Volume4D& v, const SlicePair& p) {
  std::vector<Image> out;
  out.reserve(p.prior_volumes.size());
  for (int vol : p.prior_volumes) out.push_back(v.slice(vol, p.slice_index));
  return out;
}

}  // namespace ddm2
