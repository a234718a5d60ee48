#include "ergomeasure/noise.hpp"

#include <cmath>
#include <vector>

#include "ergomeasure/errors.hpp"
#include "ergomeasure/torus.hpp"

namespace ergo {

namespace {

constexpr long double kInvSqrt2Pi = 0.39894228040143267794L;

// Number of wrap terms on each side of k=0; generous enough that the neglected
// tail is far below 2^-60 for every eps <= 1/4.
int wrap_terms(double epsilon) {
  int k = static_cast<int>(std::ceil(6.0 / epsilon));
  return k < 5 ? 5 : k;
}

// Centered Gaussian density with s.d. sigma, evaluated off the torus (real line).
long double gauss(long double u, long double sigma) {
  long double z = u / sigma;
  return kInvSqrt2Pi / sigma * std::exp(-0.5L * z * z);
}

// Tail-truncated wrapped Gaussian density at signed offset u = x - y.
long double wrapped_density(long double u, long double sigma, int kmax) {
  long double s = gauss(u, sigma);
  for (int k = 1; k <= kmax; ++k) {
    long double t = gauss(u + k, sigma) + gauss(u - k, sigma);
    if (t == 0.0L && k > 2) break;
    s += t;
  }
  return s;
}

}  // namespace

NoiseModel uniform_kernel(double epsilon, int dim) {
  if (!(epsilon > 0.0 && epsilon < 0.5))
    throw Error(ErrorCode::EpsilonOutOfRange,
                "uniform kernel requires 0 < epsilon < 1/2, got " + std::to_string(epsilon));
  if (dim < 1)
    throw Error(ErrorCode::ConfigError, "dimension must be >= 1");
  NoiseModel m;
  m.kind = NoiseModel::Kind::UniformBall;
  m.epsilon = epsilon;
  m.dim = dim;
  // Ball volume: 2*eps per circle factor in the product metric (d=1 used throughout).
  double vol = 1.0;
  for (int i = 0; i < dim; ++i) vol *= 2.0 * epsilon;
  m.density_min = 0.0;
  m.density_max = 1.0 / vol;
  return m;
}

NoiseModel wrapped_gaussian_kernel(double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 0.25))
    throw Error(ErrorCode::EpsilonOutOfRange,
                "wrapped Gaussian requires 0 < epsilon <= 1/4, got " + std::to_string(epsilon));
  NoiseModel m;
  m.kind = NoiseModel::Kind::WrappedGaussian;
  m.epsilon = epsilon;
  m.dim = 1;
  int kmax = wrap_terms(epsilon);
  long double sigma = epsilon;
  // c_-: density at the antipode (the minimum over the circle); the truncated sum
  // under-estimates, which is the safe direction for a lower bound.
  m.density_min = static_cast<double>(wrapped_density(0.5L, sigma, kmax));
  // c_+: density at the center (the maximum over the circle).
  m.density_max = static_cast<double>(wrapped_density(0.0L, sigma, kmax));
  // Cauchy estimates on the strip of half-width r = eps/2: on the strip
  // |K(u+iv)| <= exp(v^2/(2 eps^2)) K(u) <= exp(1/8) c_+, and e^gamma = 1/r.
  m.analytic_C = std::exp(0.125) * m.density_max;
  m.analytic_gamma = std::log(2.0 / epsilon);
  m.mixing_theta = 1.0 - m.density_min;
  return m;
}

double kernel_density(const NoiseModel& model, double y, double x) {
  double d = torus_dist(y, x);
  if (model.kind == NoiseModel::Kind::UniformBall)
    return d < model.epsilon ? model.density_max : 0.0;
  return static_cast<double>(
      wrapped_density(d, model.epsilon, wrap_terms(model.epsilon)));
}

void kernel_deriv_coeffs_ld(const NoiseModel& model, long double y,
                            long double x, int lmax, long double* out) {
  if (model.kind != NoiseModel::Kind::WrappedGaussian)
    throw Error(ErrorCode::UnsupportedKernel,
                "Taylor coefficients are defined for the wrapped Gaussian kernel only");
  if (lmax < 0) throw Error(ErrorCode::ConfigError, "coefficient order must be >= 0");
  long double sigma = model.epsilon;
  int kmax = wrap_terms(model.epsilon);
  std::vector<long double> acc(static_cast<size_t>(lmax) + 1, 0.0L);
  // d^l/dx^l of the wrapped sum, via (d/du)^l g = (-1/sigma)^l He_l(u/sigma) g(u)
  // with He_l the probabilists' Hermite polynomials.
  long double u0 = x - y;
  // exp(-u^2 / (2 sigma^2)) underflows even the extended denormal range once
  // u^2 >= 23000 sigma^2, so those wrap terms contribute exactly zero.
  long double skip = 23000.0L * sigma * sigma;
  for (int k = -kmax; k <= kmax; ++k) {
    long double u = u0 + k;
    if (u * u >= skip) continue;
    long double g = gauss(u, sigma);
    if (g == 0.0L) continue;
    long double z = u / sigma;
    long double h_prev = 0.0L, h = 1.0L;  // He_{-1}, He_0
    for (int l = 0; l <= lmax; ++l) {
      acc[static_cast<size_t>(l)] += g * h;
      long double h_next = z * h - static_cast<long double>(l) * h_prev;
      h_prev = h;
      h = h_next;
    }
  }
  long double scale = 1.0L;  // (-1)^l / (sigma^l l!)
  for (int l = 0; l <= lmax; ++l) {
    if (l > 0) scale /= -sigma * static_cast<long double>(l);
    out[l] = acc[static_cast<size_t>(l)] * scale;
  }
}

void kernel_deriv_coeffs(const NoiseModel& model, double y, double x, int lmax,
                         double* out) {
  std::vector<long double> buf(static_cast<size_t>(std::max(lmax, 0)) + 1);
  kernel_deriv_coeffs_ld(model, static_cast<long double>(y),
                         static_cast<long double>(x), lmax, buf.data());
  for (int l = 0; l <= lmax; ++l)
    out[l] = static_cast<double>(buf[static_cast<size_t>(l)]);
}

double kernel_deriv_coeff(const NoiseModel& model, double y, double x, int l) {
  std::vector<double> out(static_cast<size_t>(l) + 1);
  kernel_deriv_coeffs(model, y, x, l, out.data());
  return out[static_cast<size_t>(l)];
}

double sample(const NoiseModel& model, double center, CounterRng& rng) {
  if (model.kind == NoiseModel::Kind::UniformBall) {
    double u = rng.uniform01();
    return wrap01(center + model.epsilon * (2.0 * u - 1.0));
  }
  return wrap01(center + model.epsilon * rng.gaussian());
}

}  // namespace ergo
