#include "ergomeasure/gridsolver.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "ergomeasure/errors.hpp"

namespace ergo {

namespace {

bool is_power_of_two_dyadic(double x) {
  if (!(x > 0.0)) return false;
  int exp = 0;
  double mant = std::frexp(x, &exp);
  return mant == 0.5;
}

void require_uniform(const NoiseModel& noise, const char* who) {
  if (noise.kind != NoiseModel::Kind::UniformBall)
    throw Error(ErrorCode::ConfigError,
                std::string(who) + " requires the uniform-ball kernel");
  if (noise.dim != 1)
    throw Error(ErrorCode::DimensionMismatch,
                std::string(who) + " is implemented for dim 1");
}

// Shared power-iteration core: action(v) must implement v -> v P.
std::pair<std::vector<double>, double> perron_core(
    const std::function<std::vector<double>(const std::vector<double>&)>& action,
    size_t n, double residual_tol, int max_iters) {
  std::vector<double> v(n, 1.0 / static_cast<double>(n));
  double lambda = 0.0;
  double residual = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    std::vector<double> w = action(v);
    double mass = 0.0;
    for (double x : w) mass += x;
    if (!(mass > 0.0))
      throw Error(ErrorCode::ZeroMatrix,
                  "operator annihilates the positive cone");
    lambda = mass;  // v has mass 1, so |v P|_1 estimates the eigenvalue
    residual = 0.0;
    for (size_t k = 0; k < n; ++k) residual += std::fabs(w[k] - lambda * v[k]);
    for (size_t k = 0; k < n; ++k) w[k] /= mass;
    v.swap(w);
    if (residual <= residual_tol) return {v, lambda};
  }
  std::ostringstream os;
  os << "power iteration stalled at residual " << residual << " after "
     << max_iters << " iterations (tolerance " << residual_tol
     << "); the discretized chain may not be uniquely ergodic";
  throw Error(ErrorCode::NoConvergence, os.str());
}

// Length of arc `a` not covered by any of the other arcs (circle geometry).
double private_length(const std::vector<Arc>& atoms, size_t self) {
  const Arc& a = atoms[self];
  // Work in local coordinates u in [0, len] along the atom.
  std::vector<std::pair<double, double>> covered;
  for (size_t k = 0; k < atoms.size(); ++k) {
    if (k == self) continue;
    const Arc& b = atoms[k];
    // Offset of b's start relative to a's start, wrapped to [0, 1).
    double off = wrap01(b.lo - a.lo);
    // Segment [off, off + b.len) intersected with [0, a.len), plus the wrap
    // copy starting at off - 1.
    for (double start : {off, off - 1.0}) {
      double lo = std::max(0.0, start);
      double hi = std::min(a.len, start + b.len);
      if (hi > lo) covered.emplace_back(lo, hi);
    }
  }
  std::sort(covered.begin(), covered.end());
  double total = 0.0, reach = 0.0;
  for (const auto& seg : covered) {
    double lo = std::max(seg.first, reach);
    if (seg.second > lo) {
      total += seg.second - lo;
      reach = seg.second;
    }
  }
  return a.len - total;
}

}  // namespace

double GridOperator::kappa_plus() const {
  double min_sum = 1.0;
  for (int i = 0; i < size(); ++i) min_sum = std::min(min_sum, row_sum(i));
  return 1.0 - min_sum;
}

double GridOperator::kappa_minus() const {
  double max_sum = 0.0;
  for (int i = 0; i < size(); ++i) max_sum = std::max(max_sum, row_sum(i));
  return 1.0 - max_sum;
}

GridOperator build_submarkov(const MapSpec& system, const NoiseModel& noise,
                             int num_atoms, double eval_tol,
                             const std::optional<Arc>& domain) {
  require_uniform(noise, "build_submarkov");
  if (system.dim != 1)
    throw Error(ErrorCode::DimensionMismatch, "grid solver is one-dimensional");
  if (num_atoms < 2)
    throw Error(ErrorCode::ConfigError, "need at least two partition atoms");
  double delta = 1.0 / static_cast<double>(num_atoms);
  if (!is_power_of_two_dyadic(eval_tol) || !(eval_tol <= delta / 8.0))
    throw Error(ErrorCode::ConfigError,
                "eval_tol must be a power of two at most delta/8");

  GridOperator op;
  op.num_atoms = num_atoms;
  op.delta = delta;
  op.eval_tol = eval_tol;
  op.noise_epsilon = noise.epsilon;

  double m = modulus_of_continuity(system, delta);
  double threshold = noise.epsilon - m - delta - 2.0 * eval_tol;
  if (!(threshold > 0.0)) {
    std::ostringstream os;
    os << "decision threshold " << threshold
       << " is not positive (epsilon " << noise.epsilon << ", modulus " << m
       << ", delta " << delta << "): refine the partition or enlarge epsilon";
    throw Error(ErrorCode::DegenerateScale, os.str());
  }
  op.deficiency_bound =
      2.0 * (m + 2.0 * delta + 2.0 * eval_tol) / noise.epsilon;

  double p = delta / (2.0 * noise.epsilon);
  op.p_hat = std::floor(p / eval_tol) * eval_tol;

  for (int i = 0; i < num_atoms; ++i) {
    double c = (i + 0.5) * delta;
    if (!domain || domain->contains(c)) op.rows.push_back(i);
  }
  if (op.rows.empty())
    throw Error(ErrorCode::ConfigError, "restriction domain contains no atom");

  op.targets.resize(op.rows.size());
  for (size_t li = 0; li < op.rows.size(); ++li) {
    double ci = (op.rows[li] + 0.5) * delta;
    Arc image = image_arc(system, Arc{ci, 0.0}, 192);
    double fc = image.midpoint();
    // Candidate centers within the threshold of the computed image point.
    int j_lo = static_cast<int>(std::floor((fc - threshold) / delta - 0.5)) - 1;
    int j_hi = static_cast<int>(std::ceil((fc + threshold) / delta - 0.5)) + 1;
    for (int j = j_lo; j <= j_hi; ++j) {
      int gj = ((j % num_atoms) + num_atoms) % num_atoms;
      double cj = (gj + 0.5) * delta;
      if (torus_dist(fc, cj) < threshold) {
        if (domain) {
          auto it = std::lower_bound(op.rows.begin(), op.rows.end(), gj);
          if (it == op.rows.end() || *it != gj) continue;  // clipped
          op.targets[li].push_back(static_cast<int>(it - op.rows.begin()));
        } else {
          op.targets[li].push_back(gj);
        }
      }
    }
    std::sort(op.targets[li].begin(), op.targets[li].end());
    op.targets[li].erase(
        std::unique(op.targets[li].begin(), op.targets[li].end()),
        op.targets[li].end());
  }
  return op;
}

GridDensity apply_operator(const GridOperator& op, const GridDensity& rho) {
  if (static_cast<int>(rho.weights.size()) != op.size())
    throw Error(ErrorCode::PartitionMismatch,
                "density has " + std::to_string(rho.weights.size()) +
                    " weights, operator expects " + std::to_string(op.size()));
  GridDensity out;
  out.weights.assign(rho.weights.size(), 0.0);
  for (int i = 0; i < op.size(); ++i) {
    double w = rho.weights[static_cast<size_t>(i)] * op.p_hat;
    if (w == 0.0) continue;
    for (int j : op.targets[static_cast<size_t>(i)])
      out.weights[static_cast<size_t>(j)] += w;
  }
  return out;
}

std::pair<GridDensity, double> perron_vector(const GridOperator& op,
                                             double residual_tol,
                                             int max_iters) {
  bool any = false;
  for (const auto& row : op.targets)
    if (!row.empty()) any = true;
  if (!any || op.p_hat <= 0.0)
    throw Error(ErrorCode::ZeroMatrix, "operator has no nonzero entries");
  auto action = [&op](const std::vector<double>& v) {
    std::vector<double> out(v.size(), 0.0);
    for (size_t i = 0; i < v.size(); ++i) {
      double w = v[i] * op.p_hat;
      if (w == 0.0) continue;
      for (int j : op.targets[i]) out[static_cast<size_t>(j)] += w;
    }
    return out;
  };
  auto [v, lambda] =
      perron_core(action, static_cast<size_t>(op.size()), residual_tol,
                  max_iters);
  GridDensity psi;
  psi.weights = std::move(v);
  return {psi, lambda};
}

std::pair<Eigen::VectorXd, double> perron_dense(const Eigen::MatrixXd& P,
                                                double residual_tol,
                                                int max_iters) {
  if (P.rows() != P.cols() || P.rows() < 1)
    throw Error(ErrorCode::ConfigError, "matrix must be square and non-empty");
  if (P.minCoeff() < 0.0)
    throw Error(ErrorCode::ConfigError, "matrix must be nonnegative");
  if (!(P.maxCoeff() > 0.0))
    throw Error(ErrorCode::ZeroMatrix, "matrix has no nonzero entries");
  size_t n = static_cast<size_t>(P.rows());
  auto action = [&P](const std::vector<double>& v) {
    Eigen::Map<const Eigen::RowVectorXd> row(v.data(),
                                             static_cast<Eigen::Index>(v.size()));
    Eigen::RowVectorXd out = row * P;
    return std::vector<double>(out.data(), out.data() + out.size());
  };
  auto [v, lambda] = perron_core(action, n, residual_tol, max_iters);
  Eigen::VectorXd psi(static_cast<Eigen::Index>(n));
  for (size_t k = 0; k < n; ++k) psi[static_cast<Eigen::Index>(k)] = v[k];
  return {psi, lambda};
}

DoeblinCertificate doeblin_certificate(const MapSpec& system,
                                       const NoiseModel& noise,
                                       const Cover& cover,
                                       const std::vector<int>& included) {
  require_uniform(noise, "doeblin_certificate");
  DoeblinCertificate cert;
  cert.cover_xi = cover;
  if (included.empty()) {
    for (int i = 0; i < cover.size(); ++i) cert.included.push_back(i);
  } else {
    cert.included = included;
    std::sort(cert.included.begin(), cert.included.end());
    cert.included.erase(
        std::unique(cert.included.begin(), cert.included.end()),
        cert.included.end());
    if (cert.included.front() < 0 || cert.included.back() >= cover.size())
      throw Error(ErrorCode::ConfigError, "included atom index out of range");
  }
  const size_t m = cert.included.size();

  IterationGraph inner = build_inner_graph(system, noise, cover);
  // Local adjacency restricted to the included atoms.
  std::vector<int> local_of(static_cast<size_t>(cover.size()), -1);
  for (size_t k = 0; k < m; ++k)
    local_of[static_cast<size_t>(cert.included[k])] = static_cast<int>(k);
  std::vector<std::vector<int>> adj(m);
  for (size_t k = 0; k < m; ++k)
    for (int g : inner.adjacency[static_cast<size_t>(cert.included[k])])
      if (local_of[static_cast<size_t>(g)] >= 0)
        adj[k].push_back(local_of[static_cast<size_t>(g)]);

  // Private parts and the minimal mass ratio q.
  std::vector<double> priv(m, 0.0);
  double vol_ball = 2.0 * noise.epsilon;
  double q = 1.0;
  for (size_t k = 0; k < m; ++k) {
    priv[k] =
        private_length(cover.atoms, static_cast<size_t>(cert.included[k]));
    q = std::min(q, priv[k] / vol_ball);
  }
  cert.q = q;
  if (!(q > 0.0))
    throw Error(ErrorCode::CertificateUnobtainable,
                "cover atoms have empty private parts (overlap too large for "
                "a minorization certificate)");

  // Orbits (zero or more steps) and their intersection.
  std::vector<std::vector<char>> reach(m, std::vector<char>(m, 0));
  for (size_t s = 0; s < m; ++s) {
    std::vector<int> stack{static_cast<int>(s)};
    reach[s][s] = 1;
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      for (int w : adj[static_cast<size_t>(v)])
        if (!reach[s][static_cast<size_t>(w)]) {
          reach[s][static_cast<size_t>(w)] = 1;
          stack.push_back(w);
        }
    }
  }
  for (size_t j = 0; j < m; ++j) {
    bool in_all = true;
    for (size_t s = 0; s < m && in_all; ++s) in_all = reach[s][j] != 0;
    if (in_all) cert.xi_irr.push_back(cert.included[j]);
  }
  if (cert.xi_irr.empty())
    throw Error(ErrorCode::NotIrreducible,
                "no atom lies in every inner orbit; decompose the system "
                "instead");

  // Hitting numbers N(i -> j) = first step count (>= 1) reaching j from i.
  std::vector<char> is_irr(m, 0);
  for (int g : cert.xi_irr) is_irr[static_cast<size_t>(local_of[static_cast<size_t>(g)])] = 1;
  int N_xi = 0;
  for (size_t s = 0; s < m; ++s) {
    // dist[j] = least number of steps (>= 1) from s to j.
    std::vector<int> dist(m, -1);
    std::vector<int> queue;
    for (int w : adj[s])
      if (dist[static_cast<size_t>(w)] < 0) {
        dist[static_cast<size_t>(w)] = 1;
        queue.push_back(w);
      }
    for (size_t head = 0; head < queue.size(); ++head) {
      int v = queue[head];
      for (int w : adj[static_cast<size_t>(v)])
        if (dist[static_cast<size_t>(w)] < 0) {
          dist[static_cast<size_t>(w)] = dist[static_cast<size_t>(v)] + 1;
          queue.push_back(w);
        }
    }
    for (size_t j = 0; j < m; ++j)
      if (is_irr[j]) {
        if (dist[j] < 0)
          throw Error(ErrorCode::NotIrreducible,
                      "an irreducible atom cannot be reached again from every "
                      "atom");
        N_xi = std::max(N_xi, dist[j]);
      }
  }
  cert.N_xi = N_xi;

  // Exact beta from the matrix powers of Q.
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m),
                                            static_cast<Eigen::Index>(m));
  for (size_t i = 0; i < m; ++i)
    for (int j : adj[i])
      Q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          priv[static_cast<size_t>(j)] / vol_ball;
  Eigen::MatrixXd power = Q;
  Eigen::MatrixXd sum = Q;
  for (int n = 2; n <= N_xi; ++n) {
    power = power * Q;
    sum += power;
  }
  double beta = 2.0;
  for (size_t i = 0; i < m; ++i) {
    double row = 0.0;
    for (size_t j = 0; j < m; ++j)
      if (is_irr[j])
        row += sum(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    beta = std::min(beta, row / static_cast<double>(N_xi));
  }
  cert.beta = std::min(beta, 1.0);

  double lower = static_cast<double>(cert.xi_irr.size()) /
                 static_cast<double>(N_xi) * std::pow(q, N_xi);
  if (cert.beta + 1e-12 < lower)
    throw Error(ErrorCode::ConfigError,
                "internal inconsistency: beta fell below its proven lower "
                "bound");
  if (!(cert.beta > 0.0))
    throw Error(ErrorCode::CertificateUnobtainable,
                "minorization constant vanished");
  return cert;
}

std::pair<GridDensity, ErrorCertificate> invariant_density_grid(
    const MapSpec& system, const NoiseModel& noise, double target_accuracy,
    const GridPlanOptions& opts) {
  require_uniform(noise, "invariant_density_grid");
  if (!(target_accuracy > 0.0))
    throw Error(ErrorCode::ConfigError, "target accuracy must be positive");
  if (opts.min_atoms < 2 || opts.max_atoms < opts.min_atoms)
    throw Error(ErrorCode::ConfigError, "invalid atom-count range");

  std::optional<Arc> hull;
  if (opts.restrict_to != nullptr) {
    const DecompositionResult& dec = *opts.restrict_to;
    if (dec.status != DecompositionResult::Status::Decomposed)
      throw Error(ErrorCode::ConfigError,
                  "restriction requires a decomposed system");
    if (opts.component < 0 ||
        opts.component >= static_cast<int>(dec.components.size()))
      throw Error(ErrorCode::ConfigError, "component index out of range");
    hull = component_hull(dec, opts.component);
  }

  // The minorization cover starts at the requested mesh and is refined when
  // the inner graph is too coarse to certify (fast-expanding maps need a
  // finer cover before any inner edge appears).
  DoeblinCertificate doeblin;
  bool have_doeblin = false;
  std::string last_reason;
  double factor = opts.doeblin_mesh_factor;
  for (int attempt = 0; attempt < 7 && !have_doeblin; ++attempt, factor *= 0.5) {
    Cover xi = build_cover(factor * noise.epsilon, noise.epsilon,
                           opts.doeblin_overlap);
    std::vector<int> included;
    if (hull) {
      for (int i = 0; i < xi.size(); ++i)
        if (xi.atoms[static_cast<size_t>(i)].intersects(*hull))
          included.push_back(i);
    }
    try {
      doeblin = doeblin_certificate(system, noise, xi, included);
      have_doeblin = true;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NotIrreducible ||
          e.code() == ErrorCode::MeshTooCoarse) {
        last_reason = e.what();
        continue;
      }
      throw;
    }
  }
  if (!have_doeblin)
    throw Error(ErrorCode::CertificateUnobtainable,
                "no minorization constant after refining the cover: " +
                    last_reason);

  double best_tv = -1.0;
  for (int n = opts.min_atoms; n <= opts.max_atoms; n *= 2) {
    GridOperator op;
    try {
      op = build_submarkov(system, noise, n, opts.eval_tol, hull);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::DegenerateScale) continue;  // refine further
      throw;
    }
    double kplus = op.kappa_plus();
    double geo = 0.0, pw = 1.0;
    for (int k = 1; k <= doeblin.N_xi; ++k) {
      pw *= (1.0 - kplus);
      geo += pw;
    }
    double tv = (1.0 / doeblin.beta) *
                (1.0 - geo / static_cast<double>(doeblin.N_xi));
    best_tv = (best_tv < 0.0) ? tv : std::min(best_tv, tv);
    if (tv > target_accuracy) continue;

    auto [psi, lambda] =
        perron_vector(op, opts.residual_tol, opts.max_power_iters);
    ErrorCertificate cert;
    cert.kappa_minus = op.kappa_minus();
    cert.kappa_plus = kplus;
    cert.lambda = lambda;
    cert.spectral_C = 1.0;
    cert.spectral_theta = doeblin.beta;
    cert.tv_bound = tv;
    cert.num_atoms = n;
    cert.delta = op.delta;
    cert.eta = op.eval_tol;
    cert.beta = doeblin.beta;
    cert.N_xi = doeblin.N_xi;

    GridDensity full;
    full.weights.assign(static_cast<size_t>(n), 0.0);
    for (int li = 0; li < op.size(); ++li)
      full.weights[static_cast<size_t>(op.rows[static_cast<size_t>(li)])] =
          psi.weights[static_cast<size_t>(li)];
    return {full, cert};
  }
  std::ostringstream os;
  os << "partition cap " << opts.max_atoms
     << " reached; best certified bound " << best_tv << " exceeds target "
     << target_accuracy;
  throw Error(ErrorCode::ResourceCap, os.str());
}

}  // namespace ergo
