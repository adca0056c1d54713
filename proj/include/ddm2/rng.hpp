#pragma once

#include <cstdint>
#include <random>

namespace ddm2 {

/// splitmix64 step; used to derive independent stream seeds from a master
/// seed plus arbitrary tags so that results do not depend on worker count
/// or evaluation order.
inline uint64_t mix_seed(uint64_t seed) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t mix_seed(uint64_t seed, uint64_t tag) { return mix_seed(seed ^ mix_seed(tag)); }

inline uint64_t mix_seed(uint64_t seed, uint64_t tag1, uint64_t tag2) {
  return mix_seed(mix_seed(seed, tag1), tag2);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  /// Uniform integer in [lo, hi], inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return std::uniform_int_distribution<int64_t>(lo, hi)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ddm2
