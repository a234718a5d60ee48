#pragma once

#include <cstdint>

namespace ergo {

// Counter-based RNG (Philox-style 2x64 block cipher, 10 rounds). The value drawn at a
// given (seed, stream, counter) triple is a pure function of the triple, so trajectories
// are reproducible and can be generated out of order or in parallel.
class CounterRng {
 public:
  explicit CounterRng(uint64_t seed, uint64_t stream = 0);

  // Uniform in (0,1), strictly interior. Advances the counter.
  double uniform01();
  // Standard normal via inverse CDF. Advances the counter.
  double gaussian();

  void set_counter(uint64_t c) { counter_ = c; }
  uint64_t counter() const { return counter_; }

 private:
  uint64_t word();  // next 64-bit block output

  uint64_t seed_;
  uint64_t stream_;
  uint64_t counter_ = 0;
};

// Inverse of the standard normal CDF, accurate to ~1 ulp after refinement.
double inverse_normal_cdf(double p);

}  // namespace ergo
