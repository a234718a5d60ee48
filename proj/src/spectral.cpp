#include "ergomeasure/spectral.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "ergomeasure/errors.hpp"

namespace ergo {

namespace {

constexpr int kGaussNodes = 24;
constexpr int kMaxPanels = 64;
constexpr int kMaxPartition = 1 << 20;

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct GaussRule {
  std::array<long double, kGaussNodes> x;
  std::array<long double, kGaussNodes> w;
};

// Gauss-Legendre nodes/weights on [-1, 1], computed once by Newton iteration
// on the Legendre three-term recurrence in extended precision.
const GaussRule& gauss_rule() {
  static const GaussRule rule = [] {
    GaussRule r{};
    constexpr long double pi = 3.141592653589793238462643383279502884L;
    for (int i = 0; i < kGaussNodes; ++i) {
      long double xi =
          cosl(pi * (static_cast<long double>(i) + 0.75L) / (kGaussNodes + 0.5L));
      long double p1 = 0.0L, dp = 0.0L;
      for (int iter = 0; iter < 64; ++iter) {
        long double p_prev = 1.0L;
        p1 = xi;
        for (int k = 2; k <= kGaussNodes; ++k) {
          long double pk = ((2 * k - 1) * xi * p1 - (k - 1) * p_prev) / k;
          p_prev = p1;
          p1 = pk;
        }
        dp = kGaussNodes * (xi * p1 - p_prev) / (xi * xi - 1.0L);
        long double step = p1 / dp;
        xi -= step;
        if (fabsl(step) < 1e-21L) break;
      }
      r.x[static_cast<size_t>(i)] = xi;
      r.w[static_cast<size_t>(i)] = 2.0L / ((1.0L - xi * xi) * dp * dp);
    }
    return r;
  }();
  return rule;
}

void validate_wrapped_gaussian(const NoiseModel& noise) {
  if (noise.kind != NoiseModel::Kind::WrappedGaussian)
    throw Error(ErrorCode::UnsupportedKernel,
                "the Taylor-coefficient representation requires the wrapped "
                "Gaussian kernel");
  if (noise.dim != 1)
    throw Error(ErrorCode::ConfigError, "coefficient solver supports dimension 1 only");
  if (!noise.analytic_C || !noise.analytic_gamma || !noise.mixing_theta)
    throw Error(ErrorCode::ConfigError, "noise model lacks analyticity constants");
}

void validate_density_shape(const AnalyticDensity& rho) {
  if (rho.centers.empty() || rho.coeffs.size() != rho.centers.size())
    throw Error(ErrorCode::ConfigError, "density atoms/coefficients mismatch");
  for (const auto& cs : rho.coeffs)
    if (static_cast<int>(cs.size()) != rho.order + 1)
      throw Error(ErrorCode::ConfigError, "coefficient vector length != order + 1");
}

}  // namespace

double SpectralOperator::entry(int i, int l, int j, int m) const {
  if (i < 0 || i >= num_atoms || j < 0 || j >= num_atoms || l < 0 ||
      l > order || m < 0 || m > order)
    throw Error(ErrorCode::ConfigError, "matrix element indices out of range");
  int p = order + 1;
  return static_cast<double>(scaled(i * p + l, j * p + m) *
                             powl(0.5L / num_atoms, static_cast<long double>(m - l)));
}

SpectralOperator build_spectral(const MapSpec& system, const NoiseModel& noise,
                                int num_atoms, int order, double quad_tol) {
  validate_wrapped_gaussian(noise);
  if (system.dim != 1)
    throw Error(ErrorCode::ConfigError, "coefficient solver supports dimension 1 only");
  if (num_atoms < 1)
    throw Error(ErrorCode::ConfigError, "partition needs at least one atom");
  if (order < 0)
    throw Error(ErrorCode::ConfigError, "truncation order must be >= 0");
  if (!(quad_tol > 0.0))
    throw Error(ErrorCode::ConfigError, "quadrature tolerance must be positive");

  SpectralOperator op;
  op.num_atoms = num_atoms;
  op.order = order;
  op.quad_tol = quad_tol;
  op.gamma = *noise.analytic_gamma;
  op.theta = *noise.mixing_theta;
  op.C = std::max(*noise.analytic_C, noise.density_max / op.theta);
  if (!(std::exp(op.gamma) * op.diam() < 1.0))
    throw Error(ErrorCode::GammaTooLarge,
                "e^gamma * atom_width = " +
                    std::to_string(std::exp(op.gamma) * op.diam()) +
                    " >= 1; refine the partition");

  const GaussRule& gl = gauss_rule();
  const int p = order + 1;
  const int dim = num_atoms * p;
  op.scaled.resize(dim, dim);

  const long double s = 0.5L / num_atoms;
  std::vector<long double> s_pow(static_cast<size_t>(p));
  s_pow[0] = 1.0L;
  for (int l = 1; l <= order; ++l)
    s_pow[static_cast<size_t>(l)] = s_pow[static_cast<size_t>(l) - 1] * s;
  std::vector<long double> centers(static_cast<size_t>(num_atoms));
  for (int i = 0; i < num_atoms; ++i)
    centers[static_cast<size_t>(i)] = (static_cast<long double>(i) + 0.5L) / num_atoms;

  // One source atom at a time: its column block holds num_atoms * p rows of
  // p source orders each. Panel counts double until the whole block moves by
  // no more than half the per-entry budget.
  std::vector<long double> cur(static_cast<size_t>(dim) * p);
  std::vector<long double> prev;
  std::vector<long double> deriv(static_cast<size_t>(p));
  std::vector<long double> phi(static_cast<size_t>(p));
  const long double accept = 0.5L * static_cast<long double>(quad_tol);

  for (int j = 0; j < num_atoms; ++j) {
    const long double left = static_cast<long double>(j) / num_atoms;
    bool accepted = false;
    long double residual = 0.0L;
    prev.clear();
    for (int panels = 1; panels <= kMaxPanels; panels *= 2) {
      std::fill(cur.begin(), cur.end(), 0.0L);
      const long double half_panel = s / panels;
      for (int r = 0; r < panels; ++r) {
        const long double mid = left + (2 * r + 1) * half_panel;
        for (int q = 0; q < kGaussNodes; ++q) {
          const long double y = mid + half_panel * gl.x[static_cast<size_t>(q)];
          const long double weight = half_panel * gl.w[static_cast<size_t>(q)];
          long double u = (y - centers[static_cast<size_t>(j)]) / s;
          phi[0] = 1.0L;
          for (int m = 1; m <= order; ++m)
            phi[static_cast<size_t>(m)] = phi[static_cast<size_t>(m) - 1] * u;
          const long double fy = eval_fast_ld(system, y);
          for (int i = 0; i < num_atoms; ++i) {
            kernel_deriv_coeffs_ld(noise, fy, centers[static_cast<size_t>(i)],
                                   order, deriv.data());
            for (int l = 0; l <= order; ++l) {
              const long double c =
                  weight * deriv[static_cast<size_t>(l)] * s_pow[static_cast<size_t>(l)];
              long double* dst =
                  &cur[(static_cast<size_t>(i) * p + static_cast<size_t>(l)) * p];
              for (int m = 0; m <= order; ++m)
                dst[static_cast<size_t>(m)] += c * phi[static_cast<size_t>(m)];
            }
          }
        }
      }
      if (!prev.empty()) {
        residual = 0.0L;
        for (size_t z = 0; z < cur.size(); ++z)
          residual = std::max(residual, fabsl(cur[z] - prev[z]));
        if (residual <= accept) {
          accepted = true;
          break;
        }
      }
      prev = cur;
    }
    if (!accepted)
      throw Error(ErrorCode::QuadratureFailure,
                  "entry tolerance " + sci(quad_tol) +
                      " unreachable at the panel cap (residual " +
                      sci(static_cast<double>(residual)) + " on atom " +
                      std::to_string(j) + ")");
    for (int i = 0; i < num_atoms; ++i)
      for (int l = 0; l <= order; ++l)
        for (int m = 0; m <= order; ++m)
          op.scaled(i * p + l, j * p + m) =
              cur[(static_cast<size_t>(i) * p + static_cast<size_t>(l)) * p +
                  static_cast<size_t>(m)];
  }
  return op;
}

TruncationBudget truncation_budget(double C, double gamma, double theta,
                                   double diam, int n_bits) {
  if (n_bits < 1)
    throw Error(ErrorCode::ConfigError, "precision target must be at least one bit");
  if (!(C > 0.0) || !(diam > 0.0))
    throw Error(ErrorCode::ConfigError, "envelope constant and atom width must be positive");
  if (!(theta > 0.0 && theta < 1.0))
    throw Error(ErrorCode::ContractionViolated,
                "mixing factor " + std::to_string(theta) + " must lie in (0, 1)");
  const double h = std::exp(gamma) * diam;
  if (!(h > 0.0 && h < 1.0))
    throw Error(ErrorCode::ContractionViolated,
                "e^gamma * atom_width = " + std::to_string(h) + " must be below 1");
  const double r = std::log(1.0 / theta);
  const double L = std::log(1.0 / h);
  const double k = n_bits * std::log(2.0) + std::log(8.5 * C);
  if (!(k > 1.0))
    throw Error(ErrorCode::ConfigError,
                "precision target too small for the budget formulas");
  TruncationBudget b;
  b.n_bits = n_bits;
  const long long per_bit = static_cast<long long>(std::ceil(std::log(2.0) / r));
  const long long base = static_cast<long long>(std::ceil(std::log(8.5 * C) / r));
  b.t = per_bit * n_bits + base;
  const double E = (k + std::log(k)) / L + std::max(0.0, std::log(C) - k) / L +
                   (std::log(1.0 / (1.0 - h)) - std::log(r)) / L;
  b.N = std::max(1, static_cast<int>(std::ceil(E)) - 1);
  b.q_N = C * std::pow(h, b.N + 1) / (1.0 - h);
  return b;
}

AnalyticDensity project_truncate(const AnalyticDensity& rho, int N) {
  if (N < 0) throw Error(ErrorCode::ConfigError, "truncation order must be >= 0");
  validate_density_shape(rho);
  if (rho.order <= N) return rho;
  AnalyticDensity out;
  out.centers = rho.centers;
  out.order = N;
  out.bound_C = rho.bound_C;
  out.bound_gamma = rho.bound_gamma;
  out.coeffs.reserve(rho.coeffs.size());
  for (const auto& cs : rho.coeffs)
    out.coeffs.emplace_back(cs.begin(), cs.begin() + N + 1);
  return out;
}

AnalyticDensity iterate_density(const SpectralOperator& op,
                                const AnalyticDensity& rho0, long long t) {
  if (t < 0) throw Error(ErrorCode::ConfigError, "iteration count must be >= 0");
  validate_density_shape(rho0);
  if (rho0.num_atoms() != op.num_atoms)
    throw Error(ErrorCode::PartitionMismatch,
                "density lives on " + std::to_string(rho0.num_atoms()) +
                    " atoms but the operator on " + std::to_string(op.num_atoms));
  if (rho0.order > op.order)
    throw Error(ErrorCode::PartitionMismatch,
                "density order " + std::to_string(rho0.order) +
                    " exceeds the operator truncation order " +
                    std::to_string(op.order));
  if (t == 0) return project_truncate(rho0, op.order);

  const int p = op.order + 1;
  const long double s = 0.5L / op.num_atoms;
  std::vector<long double> s_pow(static_cast<size_t>(p));
  s_pow[0] = 1.0L;
  for (int l = 1; l <= op.order; ++l)
    s_pow[static_cast<size_t>(l)] = s_pow[static_cast<size_t>(l) - 1] * s;

  Eigen::VectorXd v = Eigen::VectorXd::Zero(op.dim());
  for (int j = 0; j < op.num_atoms; ++j)
    for (int m = 0; m <= rho0.order; ++m)
      v[j * p + m] = static_cast<double>(
          static_cast<long double>(rho0.coeffs[static_cast<size_t>(j)][static_cast<size_t>(m)]) *
          s_pow[static_cast<size_t>(m)]);

  // P^t v by repeated squaring: square the matrix for every bit of t, apply
  // the current power to the vector on set bits. The chain runs in double:
  // its rounding perturbs the result orders of magnitude below the certified
  // budget while keeping the multiplies vectorized.
  Eigen::MatrixXd square = op.scaled.cast<double>();
  long long rest = t;
  while (rest > 0) {
    if (rest & 1) v = square * v;
    rest >>= 1;
    if (rest > 0) square = (square * square).eval();
  }

  AnalyticDensity out;
  out.centers = rho0.centers;
  out.order = op.order;
  out.coeffs.assign(static_cast<size_t>(op.num_atoms),
                    std::vector<double>(static_cast<size_t>(p), 0.0));
  for (int i = 0; i < op.num_atoms; ++i)
    for (int l = 0; l <= op.order; ++l)
      out.coeffs[static_cast<size_t>(i)][static_cast<size_t>(l)] =
          static_cast<double>(static_cast<long double>(v[i * p + l]) /
                              s_pow[static_cast<size_t>(l)]);
  out.bound_C = std::max(rho0.bound_C, op.C) * 1.1;
  out.bound_gamma = std::max(rho0.bound_gamma, op.gamma);
  return out;
}

std::pair<AnalyticDensity, TruncationBudget> invariant_density_spectral(
    const MapSpec& system, const NoiseModel& noise, int n_bits) {
  validate_wrapped_gaussian(noise);
  if (n_bits < 1)
    throw Error(ErrorCode::ConfigError, "precision target must be at least one bit");
  const double gamma = *noise.analytic_gamma;
  const double theta = *noise.mixing_theta;
  const double C = std::max(*noise.analytic_C, noise.density_max / theta);

  // Fixed partition: the smallest power of two with e^gamma * diam <= 1/2.
  // Depends only on the noise, not on the precision target.
  const double scale = 2.0 * std::exp(gamma);
  int num_atoms = 1;
  while (num_atoms < scale) {
    if (num_atoms > kMaxPartition)
      throw Error(ErrorCode::ResourceCap,
                  "noise width needs a partition beyond " +
                      std::to_string(kMaxPartition) + " atoms");
    num_atoms *= 2;
  }

  TruncationBudget budget =
      truncation_budget(C, gamma, theta, 1.0 / num_atoms, n_bits);
  const double quad_tol =
      std::pow(2.0, -n_bits) /
      (4.0 * static_cast<double>(num_atoms) * static_cast<double>(num_atoms) *
       (budget.N + 1.0) * (budget.N + 1.0) * static_cast<double>(budget.t));
  SpectralOperator op = build_spectral(system, noise, num_atoms, budget.N, quad_tol);

  AnalyticDensity rho0;
  rho0.centers.resize(static_cast<size_t>(num_atoms));
  for (int i = 0; i < num_atoms; ++i)
    rho0.centers[static_cast<size_t>(i)] = (i + 0.5) / num_atoms;
  rho0.coeffs.assign(static_cast<size_t>(num_atoms), {1.0});
  rho0.order = 0;
  rho0.bound_C = 1.0;
  rho0.bound_gamma = 0.0;

  AnalyticDensity rho = iterate_density(op, rho0, budget.t);
  return {std::move(rho), budget};
}

}  // namespace ergo
