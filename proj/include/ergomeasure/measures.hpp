#pragma once

#include <string>
#include <vector>

namespace ergo {

// Piecewise-constant density on the uniform partition of the circle into
// weights.size() atoms [i/m, (i+1)/m); weights are atom masses.
struct GridDensity {
  std::vector<double> weights;

  int num_atoms() const { return static_cast<int>(weights.size()); }
  double atom_width() const { return 1.0 / static_cast<double>(weights.size()); }
  double left_endpoint(int i) const { return i * atom_width(); }
  double center(int i) const { return (i + 0.5) * atom_width(); }
  double total_mass() const;
  // Density value at a point (mass / atom volume).
  double value_at(double x) const;
};

// Uniform density of the given total mass.
GridDensity uniform_grid_density(int num_atoms, double mass = 1.0);

// Throws ConfigError if weights are negative or mass exceeds 1 + 1e-12.
void check_grid_invariants(const GridDensity& g);

// Re-expresses the density on a finer commensurable partition (target a multiple
// of the current atom count); mass is preserved exactly per atom.
GridDensity refine_to(const GridDensity& g, int target_atoms);

// Total variation distance: sup_A |a(A) - b(A)| = half the L1 distance of the
// densities, computed on the common refinement. Throws PartitionMismatch if the
// partitions have no common refinement of reasonable size.
double tv_distance(const GridDensity& a, const GridDensity& b);

// Exact Wasserstein-1 distance on the circle via the CDF method:
// min over offsets c of the integral of |F_a - F_b - c|. Requires equal total
// mass within 1e-9 (MassMismatch otherwise).
double w1_distance(const GridDensity& a, const GridDensity& b);

// CSV serialization: header "atom_index,left_endpoint,mass", one row per atom.
std::string grid_to_csv(const GridDensity& g);
GridDensity grid_from_csv(const std::string& text);

// Per-atom Taylor expansions around atom centers with a uniform coefficient
// envelope |coeff_k| <= bound_C * exp(bound_gamma * k).
struct AnalyticDensity {
  std::vector<double> centers;              // atom centers, uniform partition
  std::vector<std::vector<double>> coeffs;  // per atom, orders 0..N
  int order = 0;                            // N
  double bound_C = 0.0;
  double bound_gamma = 0.0;

  int num_atoms() const { return static_cast<int>(centers.size()); }
  double atom_width() const { return 1.0 / static_cast<double>(centers.size()); }
};

// Throws ConfigError if the coefficient envelope or the contraction condition
// exp(bound_gamma) * atom_width < 1 fails.
void check_analytic_invariants(const AnalyticDensity& rho);

struct EvalWithTail {
  double value;       // truncated Taylor sum on the atom containing x
  double tail_bound;  // certified bound on the discarded tail
};

// Evaluates the expansion at x on the atom containing x; the tail bound is
// bound_C * r^{N+1} / (1 - r) with r = exp(bound_gamma) * |x - center|.
EvalWithTail eval_analytic_density(const AnalyticDensity& rho, double x);

// JSON serialization: {"atoms":[{"center":..,"coeffs":[..]},..],"C":..,"gamma":..}.
std::string analytic_to_json(const AnalyticDensity& rho);
AnalyticDensity analytic_from_json(const std::string& text);

// Integrates the piecewise-polynomial density over a uniform partition with
// num_atoms cells (exact antiderivative per piece). num_atoms must be a
// positive multiple of rho.num_atoms(); throws PartitionMismatch otherwise.
GridDensity project_to_grid(const AnalyticDensity& rho, int num_atoms);

}  // namespace ergo
