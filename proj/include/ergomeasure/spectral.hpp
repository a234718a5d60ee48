#pragma once

#include <utility>

#include <Eigen/Dense>

#include "ergomeasure/mapdsl.hpp"
#include "ergomeasure/measures.hpp"
#include "ergomeasure/noise.hpp"

namespace ergo {

// Transfer operator of the noisy system acting on per-atom Taylor coefficients
// up to a fixed order. Internally the matrix is stored in the scaled basis
// u_{a,k}(x) = ((x - c_a)/s)^k with s = half the atom width: scaled entries are
// bounded by vol * C * (e^gamma * s)^l uniformly in the source order, which
// keeps long products of the matrix numerically stable and makes the
// per-entry quadrature tolerance meaningful at every order.
struct SpectralOperator {
  int num_atoms = 0;     // regular partition of the circle
  int order = 0;         // highest retained Taylor order N
  double quad_tol = 0.0; // per-entry (scaled basis) quadrature budget met
  double C = 0.0;        // coefficient envelope constant of the kernel
  double gamma = 0.0;    // coefficient growth rate (natural log)
  double theta = 0.0;    // per-step sup-norm mixing factor, < 1
  // Row i*(order+1)+l = target (atom i, order l); column j*(order+1)+m =
  // source (atom j, order m). Stores the scaled-basis matrix in extended
  // precision: the tightest budgets sit below the double-rounding ulp of the
  // entries, so a double store would already exceed them.
  Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic> scaled;

  double diam() const { return 1.0 / static_cast<double>(num_atoms); }
  double half_width() const { return 0.5 / static_cast<double>(num_atoms); }
  int dim() const { return num_atoms * (order + 1); }

  // Matrix element in the plain monomial basis (x - c_a)^k: the integral over
  // atom j of (y - c_j)^m times the l-th Taylor coefficient of the kernel
  // K(f(y), .) at c_i. Equals scaled(row, col) * s^(m - l).
  double entry(int i, int l, int j, int m) const;
};

// Assembles the operator by adaptive panel-doubling Gauss-Legendre quadrature
// in extended precision; a source atom's column block is accepted once doubling
// the panel count moves no scaled entry by more than quad_tol / 2.
// Throws UnsupportedKernel unless the noise is a wrapped Gaussian,
// GammaTooLarge if e^gamma / num_atoms >= 1 (refine the partition),
// QuadratureFailure if the budget is still unmet at the panel cap.
SpectralOperator build_spectral(const MapSpec& system, const NoiseModel& noise,
                                int num_atoms, int order, double quad_tol);

// Iteration count and truncation order sufficient for a certified 2^-n_bits
// sup-norm error, together with the truncation tail weight.
struct TruncationBudget {
  int n_bits = 0;
  long long t = 0;   // operator applications
  int N = 0;         // truncation order
  double q_N = 0.0;  // C * h^(N+1) / (1 - h) with h = e^gamma * diam
};

// With r = ln(1/theta), L = ln(1/h), k = n_bits*ln2 + ln(8.5*C):
//   t = ceil(ln2/r)*n_bits + ceil(ln(8.5*C)/r)        (exactly affine in n_bits)
//   N = max(1, ceil(E) - 1),
//   E = (k + ln k)/L + max(0, ln C - k)/L + (ln(1/(1-h)) - ln r)/L.
// Throws ContractionViolated if theta >= 1 or h >= 1.
TruncationBudget truncation_budget(double C, double gamma, double theta,
                                   double diam, int n_bits);

// Drops all coefficients above order N; densities of order <= N are returned
// unchanged. The sup-norm change is at most
// bound_C * r^(N+1) / (1 - r) with r = exp(bound_gamma) * atom_width / 2.
AnalyticDensity project_truncate(const AnalyticDensity& rho, int N);

// Applies the truncated operator t times to rho0 (t = 0 returns the truncation
// of rho0). rho0 must live on the operator's partition with order <= op.order;
// throws PartitionMismatch otherwise. The matrix power is evaluated by
// repeated squaring, so large t costs O(log t) dense multiplies.
AnalyticDensity iterate_density(const SpectralOperator& op,
                                const AnalyticDensity& rho0, long long t);

// End-to-end solver: fixes the partition at the smallest power of two with
// e^gamma * diam <= 1/2 (independent of n_bits), derives the budget, assembles
// the operator at order N with per-entry quadrature tolerance
// 2^-n_bits / (4 * num_atoms^2 * (N+1)^2 * t), and iterates the uniform
// density t times. The returned density is within 2^-n_bits of the invariant
// density in sup norm, up to the quadrature slack already folded into the
// budget. Errors propagate from truncation_budget and build_spectral.
std::pair<AnalyticDensity, TruncationBudget> invariant_density_spectral(
    const MapSpec& system, const NoiseModel& noise, int n_bits);

}  // namespace ergo
