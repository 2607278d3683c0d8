#pragma once

#include <cstdint>

#include "pivotblend/special.hpp"

// Counter-based SplitMix64 generator.  The i-th output is a pure function
// of (seed, stream, i), so replications and bootstrap draws are reproducible
// regardless of evaluation order.  Stream splitting rule (documented and
// frozen): key = mix(mix(seed) ^ mix(0x9E3779B97F4A7C15 * (stream + 1))),
// output_i = mix(key + i * 0x9E3779B97F4A7C15).

namespace pivotblend {

inline std::uint64_t splitmix64_mix(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(splitmix64_mix(splitmix64_mix(seed) ^
                            splitmix64_mix(kGolden * (stream + 1)))) {}

  // Independent child generator; used to give each replication its own
  // stream from a master seed.
  CounterRng stream(std::uint64_t id) const {
    CounterRng r(0);
    r.key_ = splitmix64_mix(key_ ^ splitmix64_mix(kGolden * (id + 1)));
    r.ctr_ = 0;
    return r;
  }

  std::uint64_t next_u64() { return splitmix64_mix(key_ + (++ctr_) * kGolden); }

  // Uniform on the open interval (0,1); never returns an endpoint.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal by inverse CDF, so draws are a deterministic function
  // of the uniform stream.
  double normal() { return normal_quantile(uniform()); }

  // Uniform index in [0, n); rejection-free multiply-shift is fine here
  // since n << 2^64 makes the bias negligible, but we keep exact rejection
  // sampling for reproducibility guarantees independent of n.
  std::uint64_t uniform_index(std::uint64_t n) {
    std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
  std::uint64_t key_;
  std::uint64_t ctr_ = 0;
};

}  // namespace pivotblend
