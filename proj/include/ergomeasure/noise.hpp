#pragma once

#include <optional>

#include "ergomeasure/rng.hpp"

namespace ergo {

// A perturbation kernel family Q^eps_x on the torus: either Lebesgue measure restricted
// to the eps-ball around the center, or a wrapped Gaussian with standard deviation eps.
struct NoiseModel {
  enum class Kind { UniformBall, WrappedGaussian };

  Kind kind;
  double epsilon;
  int dim = 1;

  double density_min = 0.0;  // c_-: global lower bound on the transition density
  double density_max = 0.0;  // c_+: global upper bound

  // Analyticity constants: the l-th Taylor coefficient of the density in its second
  // argument is bounded by analytic_C * exp(analytic_gamma * l). Absent for UniformBall.
  std::optional<double> analytic_C;
  std::optional<double> analytic_gamma;
  // theta = 1 - c_- (unit-volume state space). Absent for UniformBall.
  std::optional<double> mixing_theta;
};

// Uniform kernel on the eps-ball; requires 0 < eps < 1/2 so the ball is a proper subset
// of each circle factor. Throws EpsilonOutOfRange otherwise.
NoiseModel uniform_kernel(double epsilon, int dim = 1);

// Wrapped Gaussian kernel on the unit circle, standard deviation eps, 0 < eps <= 1/4.
// Fills the density bounds and analyticity constants. Throws EpsilonOutOfRange.
NoiseModel wrapped_gaussian_kernel(double epsilon);

// Transition density of the kernel centered at y, evaluated at x (d=1).
double kernel_density(const NoiseModel& model, double y, double x);

// l-th Taylor coefficient of x' -> K_eps(y, x') at x, i.e. (d/dx)^l K / l!.
// WrappedGaussian only; throws UnsupportedKernel for UniformBall.
double kernel_deriv_coeff(const NoiseModel& model, double y, double x, int l);

// Batch version filling out[0..lmax]; one pass over the wrapped sum.
void kernel_deriv_coeffs(const NoiseModel& model, double y, double x, int lmax,
                         double* out);

// Extended-precision batch variant for quadrature loops whose error budget
// sits below double roundoff.
void kernel_deriv_coeffs_ld(const NoiseModel& model, long double y,
                            long double x, int lmax, long double* out);

// Draw one point from Q^eps_center, wrapped to [0,1). Advances rng.
double sample(const NoiseModel& model, double center, CounterRng& rng);

}  // namespace ergo
