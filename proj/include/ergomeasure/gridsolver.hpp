#pragma once

#include <Eigen/Dense>
#include <optional>
#include <utility>
#include <vector>

#include "ergomeasure/cover.hpp"
#include "ergomeasure/mapdsl.hpp"
#include "ergomeasure/measures.hpp"
#include "ergomeasure/noise.hpp"
#include "ergomeasure/torus.hpp"

namespace ergo {

// Sub-Markov transition matrix of the uniform-noise chain on a regular circle
// partition: every nonzero entry equals the single dyadic value p_hat, rounded
// down from (atom length)/(ball volume), and an entry (i,j) is nonzero exactly
// when the computed image of the i-th center is closer to the j-th center than
// a certified threshold. Optionally restricted to the partition atoms whose
// centers lie in `domain`.
struct GridOperator {
  int num_atoms = 0;              // full-circle partition size
  double delta = 0.0;             // atom length = 1/num_atoms
  double eval_tol = 0.0;          // dyadic computation precision eta
  double noise_epsilon = 0.0;
  double p_hat = 0.0;             // the shared nonzero entry value
  double deficiency_bound = 0.0;  // 2(m(delta)+2delta+2eta)/epsilon
  std::optional<Arc> domain;      // restriction hull, if any
  std::vector<int> rows;          // included global atom indices, ascending
  std::vector<std::vector<int>> targets;  // per included row: local target idx

  int size() const { return static_cast<int>(rows.size()); }
  double row_sum(int local_row) const {
    return p_hat *
           static_cast<double>(targets[static_cast<size_t>(local_row)].size());
  }
  // Center of the local row's partition atom.
  double center(int local_row) const {
    return (rows[static_cast<size_t>(local_row)] + 0.5) * delta;
  }
  // 1 - min/max row sums over included rows.
  double kappa_plus() const;
  double kappa_minus() const;
};

// Builds the matrix for the uniform-ball kernel. Requires eval_tol to be a
// power of two with eval_tol <= delta/8; throws DegenerateScale when the
// decision threshold epsilon - m(delta) - delta - 2 eta is not positive.
GridOperator build_submarkov(const MapSpec& system, const NoiseModel& noise,
                             int num_atoms, double eval_tol,
                             const std::optional<Arc>& domain = std::nullopt);

// rho'_j = sum_i rho_i p_ij on the operator's local index space.
GridDensity apply_operator(const GridOperator& op, const GridDensity& rho);

// Leading left eigenvector by power iteration with L1 normalization: returns
// psi (nonnegative, mass 1) and lambda with ||psi P - lambda psi||_1 <=
// residual_tol. Throws ZeroMatrix when the matrix has no nonzero entry and
// NoConvergence when the residual stalls above the tolerance.
std::pair<GridDensity, double> perron_vector(const GridOperator& op,
                                             double residual_tol,
                                             int max_iters);

// Same extraction on an explicit dense matrix acting from the left.
std::pair<Eigen::VectorXd, double> perron_dense(const Eigen::MatrixXd& P,
                                                double residual_tol,
                                                int max_iters);

// Minorization certificate of the averaged chain built from a cover with
// private parts: Q_ij = vol(private part of atom j)/vol(ball) on inner-map
// edges, hitting numbers by breadth-first search, and beta by the exact
// matrix-power minimum.
struct DoeblinCertificate {
  Cover cover_xi;
  std::vector<int> included;  // cover atoms the certificate runs over
  std::vector<int> xi_irr;    // atoms lying in every included atom's orbit
  int N_xi = 0;               // max hitting number into xi_irr
  double beta = 0.0;          // minorization constant, in (0, 1]
  double q = 0.0;             // min private-part mass ratio
};

// `included` empty means all cover atoms. Throws NotIrreducible when some atom
// orbit misses every candidate (xi_irr empty) or an irreducible atom cannot be
// re-entered; CertificateUnobtainable when the private parts are empty.
DoeblinCertificate doeblin_certificate(const MapSpec& system,
                                       const NoiseModel& noise,
                                       const Cover& cover,
                                       const std::vector<int>& included = {});

// Certified distance from the extracted eigenvector to the true invariant
// density, in total variation.
struct ErrorCertificate {
  double kappa_minus = 0.0;
  double kappa_plus = 0.0;
  double lambda = 0.0;
  double spectral_C = 1.0;
  double spectral_theta = 0.0;  // = beta of the averaged chain by default
  double tv_bound = 0.0;
  int num_atoms = 0;
  double delta = 0.0;
  double eta = 0.0;
  double beta = 0.0;
  int N_xi = 0;
};

struct GridPlanOptions {
  int min_atoms = 64;
  int max_atoms = 16384;
  double eval_tol = 9.094947017729282379e-13;  // 2^-40
  double doeblin_mesh_factor = 0.5;            // cover mesh = factor * epsilon
  double doeblin_overlap = 0.2;
  double residual_tol = 1e-12;
  int max_power_iters = 100000;
  // Optional restriction to one ergodic component.
  const DecompositionResult* restrict_to = nullptr;
  int component = -1;
};

// Escalates the partition over powers of two until the certified tv_bound
// (C/theta)[1 - (1/N) sum_{k=1..N} (1-kappa_plus)^k] with (C, theta) =
// (1, beta) and N = N_xi drops below target_accuracy. The returned density
// lives on the full partition (zero outside a restricted domain). Throws
// ResourceCap past max_atoms and CertificateUnobtainable when no minorization
// constant can be established.
std::pair<GridDensity, ErrorCertificate> invariant_density_grid(
    const MapSpec& system, const NoiseModel& noise, double target_accuracy,
    const GridPlanOptions& opts = {});

}  // namespace ergo
