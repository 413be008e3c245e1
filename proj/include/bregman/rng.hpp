#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace bregman {

// Seedable, platform-stable generator. The mt19937_64 engine is fully
// specified by the standard; the uniform/normal transforms below are written
// out by hand because std::*_distribution is not bit-stable across library
// implementations. Per-replication streams are derived as seed ^ run_id
// (run_id >= 1; run_id 0 is reserved for shared data generation).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  static Rng stream(std::uint64_t seed, std::uint64_t run_id) { return Rng(seed ^ run_id); }

  std::uint64_t bits() { return eng_(); }

  // U[0,1) with 53 random bits.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; two engine draws per variate, no cached spare.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  std::mt19937_64 eng_;
};

}  // namespace bregman
