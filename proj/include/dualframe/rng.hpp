#pragma once

// Deterministic random streams.
//
// Every replication gets its own mt19937_64 stream keyed by
// splitmix64(master_seed, replication index), so replication r is
// bit-reproducible regardless of how many replications ran before it or on
// which thread it ran. Normal draws go through the AS 241 inverse CDF rather
// than std::normal_distribution, whose algorithm the standard leaves
// unspecified.

#include <cstdint>
#include <random>

#include "dualframe/common.hpp"

namespace dualframe {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream for one replication of one run.
  static Rng stream(std::uint64_t master_seed, std::uint64_t replication) {
    return Rng(splitmix64(master_seed + splitmix64(replication)));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on the open interval (0,1): 53 random bits, offset by half an ulp
  // so 0 and 1 are unreachable (the inverse normal CDF needs the open
  // interval).
  double uniform() {
    const std::uint64_t bits = engine_() >> 11;  // top 53 bits
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  double normal() { return norm_quantile(uniform()); }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer on [0, n), unbiased via rejection.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw ArgumentError("uniform_int: n must be positive");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dualframe
