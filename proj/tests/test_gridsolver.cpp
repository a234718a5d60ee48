#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "ergomeasure/cover.hpp"
#include "ergomeasure/errors.hpp"
#include "ergomeasure/gridsolver.hpp"
#include "ergomeasure/mapdsl.hpp"
#include "ergomeasure/measures.hpp"
#include "ergomeasure/montecarlo.hpp"
#include "ergomeasure/noise.hpp"

using namespace ergo;

namespace {

// Length of the intersection of two circle arcs.
double arc_overlap(const Arc& a, const Arc& b) {
  double off = wrap01(b.lo - a.lo);
  double total = 0.0;
  for (double start : {off, off - 1.0}) {
    double lo = std::max(0.0, start);
    double hi = std::min(a.len, start + b.len);
    if (hi > lo) total += hi - lo;
  }
  return total;
}

std::vector<int> sorted_mod(std::vector<int> v, int n) {
  for (int& x : v) x = ((x % n) + n) % n;
  std::sort(v.begin(), v.end());
  return v;
}

double density_mass(const GridDensity& d) {
  double m = 0.0;
  for (double w : d.weights) m += w;
  return m;
}

}  // namespace

TEST_CASE("identity-map operator has three-band rows with exact dyadic weight") {
  MapSpec id = parse_map("x1 mod 1", 1);
  NoiseModel noise = uniform_kernel(0.4, 1);
  GridOperator op = build_submarkov(id, noise, 10, std::ldexp(1.0, -10));

  CHECK(op.num_atoms == 10);
  CHECK(op.delta == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(op.p_hat == 0.125);  // floor((0.1/0.8)/2^-10) * 2^-10, exactly dyadic
  CHECK(op.size() == 10);
  for (int i = 0; i < 10; ++i) {
    CHECK(op.rows[i] == i);
    CHECK(op.targets[i] == sorted_mod({i - 1, i, i + 1}, 10));
    CHECK(op.row_sum(i) == doctest::Approx(0.375).epsilon(1e-15));
    CHECK(op.center(i) == doctest::Approx((i + 0.5) * 0.1).epsilon(1e-15));
  }
  CHECK(op.kappa_plus() == doctest::Approx(0.625).epsilon(1e-15));
  CHECK(op.kappa_minus() == doctest::Approx(0.625).epsilon(1e-15));
  double expected_def = 2.0 * (0.1 + 0.2 + std::ldexp(1.0, -9)) / 0.4;
  CHECK(op.deficiency_bound == doctest::Approx(expected_def).epsilon(1e-14));

  SUBCASE("the circulant structure makes the flat vector the Perron vector") {
    auto [psi, lambda] = perron_vector(op, 1e-13, 100000);
    CHECK(lambda == doctest::Approx(0.375).epsilon(1e-12));
    for (double w : psi.weights) CHECK(w == doctest::Approx(0.1).epsilon(1e-11));
    CHECK(density_mass(psi) == doctest::Approx(1.0).epsilon(1e-13));
    // Eigenvalue sandwich and residual contract.
    CHECK(1.0 - op.kappa_plus() <= lambda + 1e-13);
    CHECK(lambda <= 1.0 - op.kappa_minus() + 1e-13);
    GridDensity pushed = apply_operator(op, psi);
    double residual = 0.0;
    for (size_t k = 0; k < psi.weights.size(); ++k)
      residual += std::fabs(pushed.weights[k] - lambda * psi.weights[k]);
    CHECK(residual <= 1e-13);
  }
}

TEST_CASE("operator construction refuses degenerate scales and bad configs") {
  MapSpec id = parse_map("x1 mod 1", 1);
  MapSpec dbl = resolve_map("doubling", 1);

  // epsilon 0.15 with delta 0.1: 0.15 - 0.1 - 0.1 - 2^-9 < 0.
  CHECK_THROWS_WITH_AS(
      build_submarkov(id, uniform_kernel(0.15, 1), 10, std::ldexp(1.0, -10)),
      doctest::Contains("not positive"), Error);
  try {
    build_submarkov(id, uniform_kernel(0.15, 1), 10, std::ldexp(1.0, -10));
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateScale);
  }
  // Expansion factor 2 burns the margin even faster.
  CHECK_THROWS_AS(
      build_submarkov(dbl, uniform_kernel(0.15, 1), 10, std::ldexp(1.0, -10)),
      Error);

  // Gaussian noise is not accepted by the grid path.
  CHECK_THROWS_AS(build_submarkov(id, wrapped_gaussian_kernel(0.1), 16,
                                  std::ldexp(1.0, -10)),
                  Error);
  // Fewer than two atoms.
  CHECK_THROWS_AS(
      build_submarkov(id, uniform_kernel(0.4, 1), 1, std::ldexp(1.0, -10)),
      Error);
  // eval_tol must be a dyadic power no larger than delta/8.
  CHECK_THROWS_AS(build_submarkov(id, uniform_kernel(0.4, 1), 10, 0.01), Error);
  CHECK_THROWS_AS(
      build_submarkov(id, uniform_kernel(0.4, 1), 10, std::ldexp(1.0, -3)),
      Error);
  // Empty restriction domain.
  CHECK_THROWS_AS(build_submarkov(id, uniform_kernel(0.4, 1), 10,
                                  std::ldexp(1.0, -10), Arc{0.02, 0.01}),
                  Error);
}

TEST_CASE("doubling-map operator at 64 atoms: uniform window of 20 targets") {
  MapSpec dbl = resolve_map("doubling", 1);
  NoiseModel noise = uniform_kernel(0.2, 1);
  GridOperator op = build_submarkov(dbl, noise, 64, std::ldexp(1.0, -40));

  CHECK(op.p_hat == 5.0 / 128.0);  // delta/(2 eps) is already dyadic here
  for (int i = 0; i < 64; ++i) {
    CHECK(op.targets[i].size() == 20);
    CHECK(op.row_sum(i) == doctest::Approx(0.78125).epsilon(1e-15));
    CHECK(op.row_sum(i) <= 1.0);  // sub-Markov
  }
  CHECK(op.targets[0] == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 55,
                                          56, 57, 58, 59, 60, 61, 62, 63});
  CHECK(op.kappa_plus() == doctest::Approx(0.21875).epsilon(1e-15));

  SUBCASE("uniform density is the Perron vector of the circulant") {
    auto [psi, lambda] = perron_vector(op, 1e-13, 100000);
    CHECK(lambda == doctest::Approx(0.78125).epsilon(1e-12));
    for (double w : psi.weights)
      CHECK(w == doctest::Approx(1.0 / 64).epsilon(1e-11));
  }

  SUBCASE("pushing the uniform density scales it by the row sum") {
    GridDensity u = uniform_grid_density(64);
    GridDensity out = apply_operator(op, u);
    for (double w : out.weights)
      CHECK(w == doctest::Approx(0.78125 / 64).epsilon(1e-13));
  }
}

TEST_CASE("matrix entries never exceed the true transition probabilities") {
  // For any x in the source atom, the entry must stay below the kernel mass
  // the true chain puts on the target atom (the construction rounds down).
  struct CaseDef {
    const char* map;
    double eps;
    int n;
  };
  for (CaseDef c : {CaseDef{"rotation:0.3", 0.2, 128},
                    CaseDef{"doubling", 0.2, 64}}) {
    CAPTURE(c.map);
    MapSpec spec = resolve_map(c.map, 1);
    NoiseModel noise = uniform_kernel(c.eps, 1);
    GridOperator op = build_submarkov(spec, noise, c.n, std::ldexp(1.0, -40));
    std::mt19937 gen(12345);
    std::uniform_int_distribution<int> pick(0, c.n - 1);
    for (int trial = 0; trial < 100; ++trial) {
      int i = pick(gen), j = pick(gen);
      bool has_edge = std::binary_search(op.targets[i].begin(),
                                         op.targets[i].end(), j);
      double entry = has_edge ? op.p_hat : 0.0;
      Arc atom_i{i * op.delta, op.delta};
      Arc atom_j{j * op.delta, op.delta};
      double min_true = 1.0;
      for (int s = 0; s < 16; ++s) {
        double x = wrap01(atom_i.lo + (s + 0.5) * op.delta / 16.0);
        double fx = wrap01(eval_fast(spec, x));
        Arc ball{wrap01(fx - c.eps), 2.0 * c.eps};
        min_true = std::min(min_true, arc_overlap(ball, atom_j) / (2.0 * c.eps));
      }
      CHECK(entry <= min_true + 1e-12);
    }
  }
}

TEST_CASE("row deficiency stays within the certified bound across scales") {
  struct CaseDef {
    const char* map;
    double eps;
  };
  for (CaseDef c : {CaseDef{"rotation:0.3", 0.2}, CaseDef{"doubling", 0.2}}) {
    MapSpec spec = resolve_map(c.map, 1);
    NoiseModel noise = uniform_kernel(c.eps, 1);
    for (int n : {32, 128, 1024}) {
      CAPTURE(c.map);
      CAPTURE(n);
      GridOperator op = build_submarkov(spec, noise, n, std::ldexp(1.0, -40));
      CHECK(op.kappa_plus() <= op.deficiency_bound + 1e-15);
      CHECK(op.kappa_minus() >= 0.0);
      CHECK(op.kappa_minus() <= op.kappa_plus() + 1e-15);
    }
  }
  MapSpec id = parse_map("x1 mod 1", 1);
  for (int n : {16, 64, 512}) {
    CAPTURE(n);
    GridOperator op =
        build_submarkov(id, uniform_kernel(0.4, 1), n, std::ldexp(1.0, -40));
    CHECK(op.kappa_plus() <= op.deficiency_bound + 1e-15);
  }
}

TEST_CASE("restricting the operator to a sub-arc clips rows and targets") {
  MapSpec id = parse_map("x1 mod 1", 1);
  NoiseModel noise = uniform_kernel(0.4, 1);
  GridOperator op = build_submarkov(id, noise, 10, std::ldexp(1.0, -10),
                                    Arc{0.05, 0.3});
  // Centers 0.05, 0.15, 0.25 fall inside [0.05, 0.35).
  CHECK(op.rows == std::vector<int>{0, 1, 2});
  CHECK(op.size() == 3);
  // Local target indices; edges leaving the domain are dropped.
  CHECK(op.targets[0] == std::vector<int>{0, 1});
  CHECK(op.targets[1] == std::vector<int>{0, 1, 2});
  CHECK(op.targets[2] == std::vector<int>{1, 2});
  CHECK(op.row_sum(0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(op.kappa_plus() == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(op.kappa_minus() == doctest::Approx(0.625).epsilon(1e-15));

  // Tridiagonal [[1,1,0],[1,1,1],[0,1,1]] * 0.125: top eigenvalue (1+sqrt 2)/8.
  auto [psi, lambda] = perron_vector(op, 1e-13, 100000);
  CHECK(lambda == doctest::Approx((1.0 + std::sqrt(2.0)) * 0.125).epsilon(1e-11));
  CHECK(psi.weights[1] ==
        doctest::Approx(std::sqrt(2.0) / (2.0 + std::sqrt(2.0))).epsilon(1e-9));
  CHECK(psi.weights[0] == doctest::Approx(psi.weights[2]).epsilon(1e-9));
}

TEST_CASE("pushing densities through the operator is linear and mass-bounded") {
  MapSpec dbl = resolve_map("doubling", 1);
  NoiseModel noise = uniform_kernel(0.2, 1);
  GridOperator op = build_submarkov(dbl, noise, 64, std::ldexp(1.0, -40));

  GridDensity zero;
  zero.weights.assign(64, 0.0);
  GridDensity out = apply_operator(op, zero);
  for (double w : out.weights) CHECK(w == 0.0);

  GridDensity bad;
  bad.weights.assign(32, 1.0 / 32);
  CHECK_THROWS_AS(apply_operator(op, bad), Error);
  try {
    apply_operator(op, bad);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PartitionMismatch);
  }

  std::mt19937 gen(777);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    GridDensity rho;
    rho.weights.resize(64);
    double mass = 0.0;
    for (double& w : rho.weights) {
      w = unif(gen);
      mass += w;
    }
    for (double& w : rho.weights) w /= mass;
    GridDensity pushed = apply_operator(op, rho);
    double pmass = density_mass(pushed);
    CHECK(pmass <= 1.0 + 1e-14);
    CHECK(pmass >= (1.0 - op.kappa_plus()) - 1e-14);
    CHECK(pmass >= (1.0 - op.deficiency_bound) - 1e-14);
  }
}

TEST_CASE("dense eigensolver handles the textbook matrices") {
  SUBCASE("two-state symmetric chain") {
    Eigen::MatrixXd P(2, 2);
    P << 0.5, 0.25, 0.25, 0.5;
    auto [v, lambda] = perron_dense(P, 1e-14, 100000);
    CHECK(lambda == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(v[0] == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(v[1] == doctest::Approx(0.5).epsilon(1e-10));
  }
  SUBCASE("symmetric doubly-stochastic matrix fixes the uniform vector") {
    Eigen::MatrixXd P(4, 4);
    P << 0.4, 0.3, 0.2, 0.1,
         0.3, 0.4, 0.1, 0.2,
         0.2, 0.1, 0.4, 0.3,
         0.1, 0.2, 0.3, 0.4;
    auto [v, lambda] = perron_dense(P, 1e-14, 100000);
    CHECK(lambda == doctest::Approx(1.0).epsilon(1e-12));
    for (int k = 0; k < 4; ++k)
      CHECK(v[k] == doctest::Approx(0.25).epsilon(1e-10));
  }
  SUBCASE("zero matrix and malformed input are rejected") {
    CHECK_THROWS_AS(perron_dense(Eigen::MatrixXd::Zero(3, 3), 1e-12, 100),
                    Error);
    Eigen::MatrixXd neg(2, 2);
    neg << 0.5, -0.1, 0.2, 0.5;
    CHECK_THROWS_AS(perron_dense(neg, 1e-12, 100), Error);
    CHECK_THROWS_AS(perron_dense(Eigen::MatrixXd::Ones(2, 3), 1e-12, 100),
                    Error);
  }
  SUBCASE("periodic permutation matrix trips the stall alarm") {
    Eigen::MatrixXd P(2, 2);
    P << 0.0, 1.0, 1.0, 0.0;
    // The flat start vector is the eigenvector, so perturb via a 3-state cycle
    // whose power iteration genuinely oscillates.
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(3, 3);
    C(0, 1) = 1.0;
    C(1, 2) = 0.7;
    C(2, 0) = 1.0;
    try {
      auto [v, lambda] = perron_dense(C, 1e-12, 60);
      FAIL("expected a stall");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NoConvergence);
      CHECK(std::string(e.what()).find("stalled") != std::string::npos);
    }
  }
}

TEST_CASE("sparse eigensolver rejects an operator with no entries") {
  GridOperator op;
  op.num_atoms = 4;
  op.delta = 0.25;
  op.p_hat = 0.1;
  op.rows = {0, 1};
  op.targets = {{}, {}};
  CHECK_THROWS_AS(perron_vector(op, 1e-12, 100), Error);
  try {
    perron_vector(op, 1e-12, 100);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroMatrix);
  }
}

TEST_CASE("minorization certificate for the rotation on a ten-atom cover") {
  MapSpec rot = resolve_map("rotation:0.3", 1);
  NoiseModel noise = uniform_kernel(0.2, 1);
  Cover xi = build_cover(0.125, 0.2, 0.2);
  REQUIRE(xi.size() == 10);

  // Each atom keeps a private part of length 2/10 - 0.125 = 0.075.
  DoeblinCertificate cert = doeblin_certificate(rot, noise, xi);
  CHECK(cert.q == doctest::Approx(0.075 / 0.4).epsilon(1e-12));
  CHECK(cert.N_xi == 10);
  CHECK(cert.xi_irr.size() == 10);

  // The inner graph is the single-successor shift i -> i+3, so the n-step
  // mass toward the irreducible part is exactly q^n.
  IterationGraph g = build_inner_graph(rot, noise, xi);
  for (int i = 0; i < 10; ++i)
    CHECK(g.adjacency[i] == std::vector<int>{(i + 3) % 10});
  double q = 0.1875, expect_beta = 0.0;
  double pw = 1.0;
  for (int n = 1; n <= 10; ++n) {
    pw *= q;
    expect_beta += pw;
  }
  expect_beta /= 10.0;
  CHECK(cert.beta == doctest::Approx(expect_beta).epsilon(1e-10));

  // Pessimistic lower bound from the lemma.
  double lower = cert.xi_irr.size() / double(cert.N_xi) *
                 std::pow(cert.q, cert.N_xi);
  CHECK(cert.beta >= lower);
}

TEST_CASE("minorization certificate for the doubling map after refinement") {
  MapSpec dbl = resolve_map("doubling", 1);
  NoiseModel noise = uniform_kernel(0.2, 1);

  // At mesh 0.1 the inner graph of an expansion-factor-2 map is empty.
  CHECK_THROWS_AS(doeblin_certificate(dbl, noise, build_cover(0.1, 0.2, 0.2)),
                  Error);
  try {
    doeblin_certificate(dbl, noise, build_cover(0.1, 0.2, 0.2));
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotIrreducible);
  }

  Cover xi = build_cover(0.05, 0.2, 0.2);
  REQUIRE(xi.size() == 25);
  DoeblinCertificate cert = doeblin_certificate(dbl, noise, xi);
  CHECK(cert.q == doctest::Approx(0.075).epsilon(1e-12));
  CHECK(cert.N_xi == 3);
  CHECK(cert.xi_irr.size() == 25);
  CHECK(cert.beta == doctest::Approx(0.247875).epsilon(1e-10));
  double lower = cert.xi_irr.size() / double(cert.N_xi) *
                 std::pow(cert.q, cert.N_xi);
  CHECK(cert.beta >= lower);
}

TEST_CASE("certificate requests fail cleanly on disconnected or fat covers") {
  NoiseModel noise = uniform_kernel(0.05, 1);
  MapSpec sine = resolve_map("sine2:0.1", 1);
  // Two attracting wells: the inner orbits never meet, so there is no
  // irreducible part on the full circle.
  Cover xi = build_cover(0.0125, 0.05, 0.2);
  try {
    doeblin_certificate(sine, noise, xi);
    FAIL("expected a reducibility failure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotIrreducible);
  }

  // 50% overlap leaves no atom a private part, so no minorization mass.
  MapSpec rot = resolve_map("rotation:0.3", 1);
  NoiseModel wide = uniform_kernel(0.2, 1);
  Cover fat = build_cover(0.125, 0.2, 0.5);
  try {
    doeblin_certificate(rot, wide, fat);
    FAIL("expected an empty-private-part failure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CertificateUnobtainable);
  }
}

TEST_CASE("averaged-operator contraction rate holds along trajectories") {
  MapSpec rot = resolve_map("rotation:0.3", 1);
  NoiseModel noise = uniform_kernel(0.2, 1);
  GridOperator op = build_submarkov(rot, noise, 512, std::ldexp(1.0, -40));
  CHECK(op.kappa_plus() == doctest::Approx(3.0 / 128).epsilon(1e-13));

  DoeblinCertificate cert =
      doeblin_certificate(rot, noise, build_cover(0.1, 0.2, 0.2));
  double kplus = op.kappa_plus();
  double geo = 0.0, pw = 1.0;
  for (int k = 1; k <= cert.N_xi; ++k) {
    pw *= 1.0 - kplus;
    geo += pw;
  }
  double tv_bound = (1.0 / cert.beta) * (1.0 - geo / cert.N_xi);
  CHECK(tv_bound < 0.3);  // meaningful at this resolution

  auto [psi, lambda] = perron_vector(op, 1e-13, 100000);
  auto averaged = [&](GridDensity rho) {
    GridDensity acc;
    acc.weights.assign(rho.weights.size(), 0.0);
    for (int k = 1; k <= cert.N_xi; ++k) {
      rho = apply_operator(op, rho);
      for (size_t t = 0; t < acc.weights.size(); ++t)
        acc.weights[t] += rho.weights[t] / cert.N_xi;
    }
    return acc;
  };
  std::mt19937 gen(424242);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 3; ++trial) {
    GridDensity rho;
    rho.weights.resize(512);
    double mass = 0.0;
    for (double& w : rho.weights) {
      w = unif(gen);
      mass += w;
    }
    for (double& w : rho.weights) w /= mass;
    double decay = 1.0;
    for (int t = 1; t <= 50; ++t) {
      rho = averaged(rho);
      double m = density_mass(rho);
      REQUIRE(m > 0.0);
      GridDensity normalized = rho;
      for (double& w : normalized.weights) w /= m;
      decay *= 1.0 - cert.beta;
      CHECK(tv_distance(normalized, psi) <= decay + tv_bound + 1e-9);
    }
  }
}

TEST_CASE("planner certifies the rotation within five percent accuracy") {
  MapSpec rot = resolve_map("rotation:0.3", 1);
  NoiseModel noise = uniform_kernel(0.2, 1);
  auto [psi, cert] = invariant_density_grid(rot, noise, 0.05);

  CHECK(cert.num_atoms == 2048);
  CHECK(cert.kappa_plus == doctest::Approx(0.005126953125).epsilon(1e-13));
  CHECK(cert.kappa_minus == doctest::Approx(0.005126953125).epsilon(1e-13));
  CHECK(cert.lambda == doctest::Approx(0.994873046875).epsilon(1e-11));
  CHECK(cert.beta == doctest::Approx(0.21093394401456497).epsilon(1e-9));
  CHECK(cert.N_xi == 3);
  CHECK(cert.tv_bound == doctest::Approx(0.048445989517594).epsilon(1e-9));
  CHECK(cert.tv_bound <= 0.05);
  CHECK(cert.spectral_C == 1.0);
  CHECK(cert.spectral_theta == doctest::Approx(cert.beta).epsilon(1e-15));
  CHECK(1.0 - cert.kappa_plus <= cert.lambda + 1e-12);
  CHECK(cert.lambda <= 1.0 - cert.kappa_minus + 1e-12);

  // Lebesgue is invariant under a rotation with symmetric noise.
  CHECK(density_mass(psi) == doctest::Approx(1.0).epsilon(1e-12));
  double tv_flat = tv_distance(psi, uniform_grid_density(cert.num_atoms));
  CHECK(tv_flat <= cert.tv_bound);
  CHECK(tv_flat <= 1e-12);
}

TEST_CASE("planner certifies the doubling map within five percent accuracy") {
  MapSpec dbl = resolve_map("doubling", 1);
  NoiseModel noise = uniform_kernel(0.2, 1);
  auto [psi, cert] = invariant_density_grid(dbl, noise, 0.05);

  CHECK(cert.num_atoms == 4096);
  CHECK(cert.kappa_plus == doctest::Approx(0.00390625).epsilon(1e-13));
  CHECK(cert.lambda == doctest::Approx(0.99609375).epsilon(1e-11));
  CHECK(cert.beta == doctest::Approx(0.247875).epsilon(1e-9));
  CHECK(cert.N_xi == 3);
  CHECK(cert.tv_bound == doctest::Approx(0.0314359044523715).epsilon(1e-9));
  CHECK(cert.tv_bound <= 0.05);

  // The doubling map preserves Lebesgue and so does the noise convolution.
  double tv_flat = tv_distance(psi, uniform_grid_density(cert.num_atoms));
  CHECK(tv_flat <= cert.tv_bound);
  CHECK(tv_flat <= 1e-12);
}

TEST_CASE("planner solves the two-well map on one component and matches "
          "simulation") {
  MapSpec sine = resolve_map("sine2:0.1", 1);
  NoiseModel noise = uniform_kernel(0.05, 1);
  DecompositionResult dec = decompose(sine, noise, 0.02, 8);
  REQUIRE(dec.status == DecompositionResult::Status::Decomposed);
  REQUIRE(dec.components.size() == 2);

  int comp = -1;
  for (size_t c = 0; c < dec.components.size(); ++c)
    if (component_hull(dec, static_cast<int>(c)).contains(0.25))
      comp = static_cast<int>(c);
  REQUIRE(comp == 0);
  Arc hull = component_hull(dec, comp);
  CHECK(hull.lo == doctest::Approx(0.16).epsilon(1e-12));
  CHECK(hull.len == doctest::Approx(0.18).epsilon(1e-12));

  GridPlanOptions opts;
  opts.restrict_to = &dec;
  opts.component = comp;
  auto [psi, cert] = invariant_density_grid(sine, noise, 0.1, opts);

  CHECK(cert.num_atoms == 8192);
  CHECK(cert.tv_bound == doctest::Approx(0.05859375).epsilon(1e-9));
  CHECK(cert.tv_bound <= 0.1);
  CHECK(cert.beta == doctest::Approx(0.15).epsilon(1e-9));
  CHECK(cert.N_xi == 1);
  CHECK(cert.kappa_plus == doctest::Approx(9.0 / 1024).epsilon(1e-12));
  CHECK(cert.kappa_minus == doctest::Approx(31.0 / 4096).epsilon(1e-12));
  CHECK(1.0 - cert.kappa_plus <= cert.lambda + 1e-12);
  CHECK(cert.lambda <= 1.0 - cert.kappa_minus + 1e-12);

  // Density lives on the full partition but is supported inside the component.
  REQUIRE(psi.weights.size() == 8192);
  CHECK(density_mass(psi) == doctest::Approx(1.0).epsilon(1e-10));
  for (size_t k = 0; k < psi.weights.size(); ++k)
    if (psi.weights[k] > 0.0)
      CHECK(hull.contains((k + 0.5) / 8192.0));

  // The restriction loses no mass at this resolution: the measured deficiency
  // still satisfies the full-circle bound.
  GridOperator op =
      build_submarkov(sine, noise, cert.num_atoms, cert.eta, hull);
  CHECK(op.size() == 1474);
  CHECK(cert.kappa_plus <= op.deficiency_bound);

  // Cross-validation against a million-step simulated histogram.
  Trajectory sim = simulate(sine, noise, 0.25, 1000000, 20260825ULL);
  EmpiricalDensity mc = empirical_density({sim}, cert.num_atoms, 2000);
  double stat = 0.0;
  for (double b : mc.band95) stat += b;
  stat /= 2.0;  // TV-scale statistical error of the histogram
  double tv_mc = tv_distance(psi, mc.density);
  CHECK(tv_mc <= cert.tv_bound + 3.0 * stat);
  CHECK(tv_mc <= 0.03);
}

TEST_CASE("planner reports honest failures") {
  MapSpec sine = resolve_map("sine2:0.1", 1);
  NoiseModel noise = uniform_kernel(0.05, 1);

  SUBCASE("two ergodic components on the full circle") {
    try {
      invariant_density_grid(sine, noise, 0.1);
      FAIL("expected no certificate");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::CertificateUnobtainable);
      CHECK(std::string(e.what()).find("decompose") != std::string::npos);
    }
  }

  SUBCASE("partition cap reached before the target accuracy") {
    MapSpec rot = resolve_map("rotation:0.3", 1);
    NoiseModel wide = uniform_kernel(0.2, 1);
    GridPlanOptions opts;
    opts.max_atoms = 256;
    try {
      invariant_density_grid(rot, wide, 1e-4, opts);
      FAIL("expected a resource failure");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ResourceCap);
      CHECK(std::string(e.what()).find("256") != std::string::npos);
    }
  }

  SUBCASE("bad arguments") {
    MapSpec rot = resolve_map("rotation:0.3", 1);
    NoiseModel wide = uniform_kernel(0.2, 1);
    CHECK_THROWS_AS(invariant_density_grid(rot, wide, 0.0), Error);
    GridPlanOptions bad;
    bad.min_atoms = 1024;
    bad.max_atoms = 64;
    CHECK_THROWS_AS(invariant_density_grid(rot, wide, 0.05, bad), Error);

    DecompositionResult dec = decompose(sine, noise, 0.02, 8);
    GridPlanOptions oob;
    oob.restrict_to = &dec;
    oob.component = 7;
    CHECK_THROWS_AS(invariant_density_grid(sine, noise, 0.1, oob), Error);

    // Restriction demands a decomposed input.
    DecompositionResult und =
        decompose(sine, uniform_kernel(0.1, 1), 0.02, 3);
    REQUIRE(und.status ==
            DecompositionResult::Status::UndecidedAtMaxResolution);
    GridPlanOptions undecided;
    undecided.restrict_to = &und;
    undecided.component = 0;
    CHECK_THROWS_AS(
        invariant_density_grid(sine, uniform_kernel(0.1, 1), 0.1, undecided),
        Error);
  }
}

TEST_CASE("refining the partition tightens the certificate and tracks "
          "simulation") {
  struct CaseDef {
    const char* map;
    double doeblin_mesh;
  };
  NoiseModel noise = uniform_kernel(0.2, 1);
  for (CaseDef c :
       {CaseDef{"rotation:0.3", 0.1}, CaseDef{"doubling", 0.05}}) {
    CAPTURE(c.map);
    MapSpec spec = resolve_map(c.map, 1);
    DoeblinCertificate doeblin =
        doeblin_certificate(spec, noise, build_cover(c.doeblin_mesh, 0.2, 0.2));
    Trajectory sim = simulate(spec, noise, 0.37, 200000, 991188ULL);

    double prev_bound = 2.0;
    for (int n : {512, 1024, 2048}) {
      CAPTURE(n);
      GridOperator op = build_submarkov(spec, noise, n, std::ldexp(1.0, -40));
      double kplus = op.kappa_plus();
      double geo = 0.0, pw = 1.0;
      for (int k = 1; k <= doeblin.N_xi; ++k) {
        pw *= 1.0 - kplus;
        geo += pw;
      }
      double tv_bound = (1.0 / doeblin.beta) * (1.0 - geo / doeblin.N_xi);
      CHECK(tv_bound < prev_bound);
      prev_bound = tv_bound;

      auto [psi, lambda] = perron_vector(op, 1e-12, 100000);
      EmpiricalDensity mc = empirical_density({sim}, n, 2000);
      double stat = 0.0;
      for (double b : mc.band95) stat += b;
      stat /= 2.0;
      CHECK(tv_distance(psi, mc.density) <= tv_bound + 3.0 * stat);
    }
  }
}
