#include "ergomeasure/measures.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ergomeasure/errors.hpp"
#include "json.hpp"

namespace ergo {

namespace {

constexpr int kMaxCommonPartition = 1 << 24;

// Smallest common refinement of two uniform partitions.
int common_partition(int ma, int mb) {
  long long l = std::lcm(static_cast<long long>(ma), static_cast<long long>(mb));
  if (l > kMaxCommonPartition)
    throw Error(ErrorCode::PartitionMismatch,
                "partitions " + std::to_string(ma) + " and " + std::to_string(mb) +
                    " have no common refinement of tractable size");
  return static_cast<int>(l);
}

// Lebesgue measure of {x : D(x) <= c} (or < c when strict) for the piecewise-linear
// function with node values `nodes` on the uniform grid of L segments.
double level_measure(const std::vector<double>& nodes, double c, bool strict) {
  size_t L = nodes.size() - 1;
  double h = 1.0 / static_cast<double>(L);
  double total = 0.0;
  for (size_t i = 0; i < L; ++i) {
    double lo = std::min(nodes[i], nodes[i + 1]);
    double hi = std::max(nodes[i], nodes[i + 1]);
    if (hi == lo) {
      if (strict ? (c > lo) : (c >= lo)) total += h;
    } else if (c >= hi) {
      total += h;
    } else if (c > lo) {
      total += h * (c - lo) / (hi - lo);
    }
  }
  return total;
}

// A Lebesgue median of the piecewise-linear function given by `nodes`.
double level_median(const std::vector<double>& nodes) {
  std::vector<double> vals(nodes);
  std::sort(vals.begin(), vals.end());
  vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
  // First breakpoint with at least half the mass below-or-equal.
  size_t lo = 0, hi = vals.size() - 1;
  if (level_measure(nodes, vals[0], false) >= 0.5) return vals[0];
  while (hi - lo > 1) {
    size_t mid = (lo + hi) / 2;
    if (level_measure(nodes, vals[mid], false) >= 0.5)
      hi = mid;
    else
      lo = mid;
  }
  // Between vals[lo] and vals[hi] the level measure is linear; it may jump at
  // vals[hi] if flat segments sit at that value.
  double m_lo = level_measure(nodes, vals[lo], false);
  double m_hi_strict = level_measure(nodes, vals[hi], true);
  if (m_hi_strict < 0.5) return vals[hi];
  double slope = (m_hi_strict - m_lo) / (vals[hi] - vals[lo]);
  return vals[lo] + (0.5 - m_lo) / slope;
}

// Integral of |linear segment - c| over a segment of width h with endpoint
// values p and q.
double segment_abs_integral(double p, double q, double c, double h) {
  double alpha = p - c, beta = q - c;
  if (alpha * beta >= 0.0) return h * 0.5 * (std::fabs(alpha) + std::fabs(beta));
  return h * 0.5 * (alpha * alpha + beta * beta) / std::fabs(beta - alpha);
}

}  // namespace

double GridDensity::total_mass() const {
  return std::accumulate(weights.begin(), weights.end(), 0.0);
}

double GridDensity::value_at(double x) const {
  int m = num_atoms();
  int i = std::min(m - 1, static_cast<int>(x * m));
  if (i < 0) i = 0;
  return weights[static_cast<size_t>(i)] * m;
}

GridDensity uniform_grid_density(int num_atoms, double mass) {
  if (num_atoms < 1) throw Error(ErrorCode::ConfigError, "partition needs at least one atom");
  GridDensity g;
  g.weights.assign(static_cast<size_t>(num_atoms), mass / num_atoms);
  return g;
}

void check_grid_invariants(const GridDensity& g) {
  if (g.weights.empty()) throw Error(ErrorCode::ConfigError, "empty partition");
  double s = 0.0;
  for (double w : g.weights) {
    if (!(w >= 0.0))
      throw Error(ErrorCode::ConfigError, "negative atom mass " + std::to_string(w));
    s += w;
  }
  if (s > 1.0 + 1e-12)
    throw Error(ErrorCode::ConfigError, "total mass " + std::to_string(s) + " exceeds 1");
}

GridDensity refine_to(const GridDensity& g, int target_atoms) {
  int m = g.num_atoms();
  if (target_atoms % m != 0)
    throw Error(ErrorCode::PartitionMismatch,
                "target partition is not a refinement of the current one");
  int r = target_atoms / m;
  GridDensity out;
  out.weights.reserve(static_cast<size_t>(target_atoms));
  for (double w : g.weights)
    for (int k = 0; k < r; ++k) out.weights.push_back(w / r);
  return out;
}

double tv_distance(const GridDensity& a, const GridDensity& b) {
  int L = common_partition(a.num_atoms(), b.num_atoms());
  GridDensity ra = refine_to(a, L), rb = refine_to(b, L);
  double s = 0.0;
  for (int i = 0; i < L; ++i)
    s += std::fabs(ra.weights[static_cast<size_t>(i)] - rb.weights[static_cast<size_t>(i)]);
  return 0.5 * s;
}

double w1_distance(const GridDensity& a, const GridDensity& b) {
  if (std::fabs(a.total_mass() - b.total_mass()) > 1e-9)
    throw Error(ErrorCode::MassMismatch,
                "W1 requires equal total mass, got " + std::to_string(a.total_mass()) +
                    " vs " + std::to_string(b.total_mass()));
  int L = common_partition(a.num_atoms(), b.num_atoms());
  GridDensity ra = refine_to(a, L), rb = refine_to(b, L);
  // CDF difference at grid nodes; piecewise linear in between.
  std::vector<double> nodes(static_cast<size_t>(L) + 1, 0.0);
  for (int i = 0; i < L; ++i)
    nodes[static_cast<size_t>(i) + 1] =
        nodes[static_cast<size_t>(i)] +
        (ra.weights[static_cast<size_t>(i)] - rb.weights[static_cast<size_t>(i)]);
  double c = level_median(nodes);
  double h = 1.0 / static_cast<double>(L);
  double w1 = 0.0;
  for (int i = 0; i < L; ++i)
    w1 += segment_abs_integral(nodes[static_cast<size_t>(i)],
                               nodes[static_cast<size_t>(i) + 1], c, h);
  return w1;
}

std::string grid_to_csv(const GridDensity& g) {
  std::ostringstream os;
  os.precision(17);
  os << "atom_index,left_endpoint,mass\n";
  for (int i = 0; i < g.num_atoms(); ++i)
    os << i << ',' << g.left_endpoint(i) << ',' << g.weights[static_cast<size_t>(i)] << '\n';
  return os.str();
}

GridDensity grid_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line.find("atom_index") == std::string::npos)
    throw Error(ErrorCode::ConfigError, "missing CSV header 'atom_index,left_endpoint,mass'");
  GridDensity g;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string idx, left, mass;
    if (!std::getline(row, idx, ',') || !std::getline(row, left, ',') ||
        !std::getline(row, mass, ','))
      throw Error(ErrorCode::ConfigError, "malformed CSV row: " + line);
    size_t want = g.weights.size();
    if (static_cast<size_t>(std::stol(idx)) != want)
      throw Error(ErrorCode::ConfigError, "non-contiguous atom indices in CSV");
    g.weights.push_back(std::stod(mass));
  }
  if (g.weights.empty()) throw Error(ErrorCode::ConfigError, "empty CSV density");
  return g;
}

void check_analytic_invariants(const AnalyticDensity& rho) {
  if (rho.centers.empty() || rho.coeffs.size() != rho.centers.size())
    throw Error(ErrorCode::ConfigError, "analytic density atoms/coefficients mismatch");
  double diam = rho.atom_width();
  if (!(std::exp(rho.bound_gamma) * diam < 1.0))
    throw Error(ErrorCode::ConfigError,
                "contraction condition exp(gamma) * atom_width < 1 violated");
  for (const auto& cs : rho.coeffs) {
    if (static_cast<int>(cs.size()) != rho.order + 1)
      throw Error(ErrorCode::ConfigError, "coefficient vector length != order + 1");
    for (size_t k = 0; k < cs.size(); ++k) {
      double bound = rho.bound_C * std::exp(rho.bound_gamma * static_cast<double>(k));
      if (!(std::fabs(cs[k]) <= bound * (1.0 + 1e-12)))
        throw Error(ErrorCode::ConfigError,
                    "coefficient " + std::to_string(cs[k]) + " at order " + std::to_string(k) +
                        " exceeds envelope " + std::to_string(bound));
    }
  }
}

EvalWithTail eval_analytic_density(const AnalyticDensity& rho, double x) {
  int m = rho.num_atoms();
  int i = std::min(m - 1, static_cast<int>(x * m));
  if (i < 0) i = 0;
  const std::vector<double>& cs = rho.coeffs[static_cast<size_t>(i)];
  double u = x - rho.centers[static_cast<size_t>(i)];
  double v = 0.0;
  for (size_t k = cs.size(); k-- > 0;) v = v * u + cs[k];
  double r = std::exp(rho.bound_gamma) * std::fabs(u);
  double tail;
  if (r >= 1.0)
    tail = INFINITY;
  else
    tail = rho.bound_C * std::pow(r, static_cast<double>(cs.size())) / (1.0 - r);
  return {v, tail};
}

std::string analytic_to_json(const AnalyticDensity& rho) {
  nlohmann::json j;
  j["C"] = rho.bound_C;
  j["gamma"] = rho.bound_gamma;
  j["atoms"] = nlohmann::json::array();
  for (size_t i = 0; i < rho.centers.size(); ++i)
    j["atoms"].push_back({{"center", rho.centers[i]}, {"coeffs", rho.coeffs[i]}});
  return j.dump(2);
}

GridDensity project_to_grid(const AnalyticDensity& rho, int num_atoms) {
  int m = rho.num_atoms();
  if (num_atoms < 1 || num_atoms % m != 0)
    throw Error(ErrorCode::PartitionMismatch,
                "target partition " + std::to_string(num_atoms) +
                    " is not a refinement of the density's " + std::to_string(m) +
                    "-atom partition");
  int r = num_atoms / m;
  GridDensity g;
  g.weights.resize(static_cast<size_t>(num_atoms), 0.0);
  for (int i = 0; i < m; ++i) {
    const std::vector<double>& cs = rho.coeffs[static_cast<size_t>(i)];
    double c = rho.centers[static_cast<size_t>(i)];
    for (int s = 0; s < r; ++s) {
      int j = i * r + s;
      // Exact antiderivative of the polynomial piece over the fine cell.
      long double a = static_cast<long double>(j) / num_atoms - c;
      long double b = static_cast<long double>(j + 1) / num_atoms - c;
      long double pa = a, pb = b, mass = 0.0L;
      for (size_t k = 0; k < cs.size(); ++k) {
        mass += static_cast<long double>(cs[k]) * (pb - pa) /
                static_cast<long double>(k + 1);
        pa *= a;
        pb *= b;
      }
      g.weights[static_cast<size_t>(j)] = static_cast<double>(mass);
    }
  }
  return g;
}

AnalyticDensity analytic_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, std::string("bad analytic density JSON: ") + e.what());
  }
  AnalyticDensity rho;
  try {
    rho.bound_C = j.at("C").get<double>();
    rho.bound_gamma = j.at("gamma").get<double>();
    for (const auto& atom : j.at("atoms")) {
      rho.centers.push_back(atom.at("center").get<double>());
      rho.coeffs.push_back(atom.at("coeffs").get<std::vector<double>>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("bad analytic density JSON: ") + e.what());
  }
  if (rho.coeffs.empty() || rho.coeffs[0].empty())
    throw Error(ErrorCode::ConfigError, "analytic density JSON has no coefficients");
  rho.order = static_cast<int>(rho.coeffs[0].size()) - 1;
  return rho;
}

}  // namespace ergo
