#include "ergomeasure/rng.hpp"

#include <cmath>

namespace ergo {

namespace {

// Philox 2x64 constants (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
constexpr uint64_t kPhiloxM = 0xD2B74407B1CE6E93ull;
constexpr uint64_t kWeyl = 0x9E3779B97F4A7C15ull;

inline void mulhilo(uint64_t a, uint64_t b, uint64_t& hi, uint64_t& lo) {
  __uint128_t p = static_cast<__uint128_t>(a) * b;
  hi = static_cast<uint64_t>(p >> 64);
  lo = static_cast<uint64_t>(p);
}

// 10-round Philox 2x64 bijection of (c0,c1) keyed by k.
inline uint64_t philox2x64(uint64_t k, uint64_t c0, uint64_t c1) {
  for (int r = 0; r < 10; ++r) {
    uint64_t hi, lo;
    mulhilo(kPhiloxM, c0, hi, lo);
    c0 = hi ^ k ^ c1;
    c1 = lo;
    k += kWeyl;
  }
  return c0;
}

}  // namespace

CounterRng::CounterRng(uint64_t seed, uint64_t stream) : seed_(seed), stream_(stream) {}

uint64_t CounterRng::word() {
  uint64_t c = counter_++;
  // Mix the stream into the second counter word so distinct streams are
  // independent permutations of the counter sequence.
  return philox2x64(seed_, c, stream_);
}

double CounterRng::uniform01() {
  // 53 random bits, offset by half an ulp so the result lies strictly in (0,1).
  uint64_t w = word();
  return (static_cast<double>(w >> 11) + 0.5) * 0x1p-53;
}

double CounterRng::gaussian() { return inverse_normal_cdf(uniform01()); }

double inverse_normal_cdf(double p) {
  // Acklam's rational approximation followed by one Halley step using erfc,
  // which brings the result to within ~1 ulp over (0,1).
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    double q = p - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement: e = Phi(x) - p, u = e / phi(x).
  static const double sqrt2pi = 2.5066282746310005024;
  double e = 0.5 * std::erfc(-x / 1.4142135623730950488) - p;
  double u = e * sqrt2pi * std::exp(0.5 * x * x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

}  // namespace ergo
