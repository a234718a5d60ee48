#include "ergomeasure/cover.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "ergomeasure/errors.hpp"

namespace ergo {

namespace {

// Safety margin dominating both the closed-arc slack in Arc tests and the
// image-enclosure width at 192-bit evaluation.
constexpr double kArcSafety = 1e-13;

std::vector<int> successor_row(const MapSpec& system, const Cover& cover, int i,
                               IterationGraph::Kind kind) {
  const int n = cover.size();
  const double s = cover.spacing();
  Arc J = image_arc(system, cover.atoms[static_cast<size_t>(i)], 192);
  std::vector<int> row;
  if (kind == IterationGraph::Kind::Inner) {
    // Intersection of all delta-balls centered on the image: an arc of length
    // 2*delta - |J| reaching from hi(J) - delta to lo(J) + delta.
    if (J.full()) return row;
    double len = 2.0 * cover.delta - J.len;
    if (len <= 2.0 * kArcSafety) return row;
    Arc target = Arc{wrap01(J.lo + J.len - cover.delta), std::min(len, 1.0)};
    target = target.deflated(kArcSafety);  // certify strict insideness
    if (target.len < cover.mesh) return row;
    int k0 = static_cast<int>(std::floor(target.lo / s));
    int cnt = static_cast<int>(std::floor(target.len / s)) + 2;
    for (int k = k0; k <= k0 + cnt; ++k) {
      int idx = ((k % n) + n) % n;
      if (target.contains_arc(cover.atoms[static_cast<size_t>(idx)])) row.push_back(idx);
    }
  } else {
    // delta-neighborhood of the image, certified outward.
    Arc target = J.inflated(cover.delta + kArcSafety);
    if (target.full()) {
      row.resize(static_cast<size_t>(n));
      for (int k = 0; k < n; ++k) row[static_cast<size_t>(k)] = k;
      return row;
    }
    int k0 = static_cast<int>(std::floor((target.lo - cover.mesh) / s)) - 1;
    int cnt = static_cast<int>(std::floor((target.len + cover.mesh) / s)) + 4;
    for (int k = k0; k <= k0 + cnt; ++k) {
      int idx = ((k % n) + n) % n;
      if (target.intersects(cover.atoms[static_cast<size_t>(idx)])) row.push_back(idx);
    }
  }
  std::sort(row.begin(), row.end());
  row.erase(std::unique(row.begin(), row.end()), row.end());
  return row;
}

void require_delta_leq_epsilon(const Cover& cover, const NoiseModel& noise) {
  if (cover.delta > noise.epsilon * (1.0 + 1e-12))
    throw Error(ErrorCode::ConfigError,
                "cover margin delta = " + std::to_string(cover.delta) +
                    " exceeds noise epsilon = " + std::to_string(noise.epsilon));
}

IterationGraph build_graph(const MapSpec& system, const NoiseModel& noise,
                           const Cover& cover, IterationGraph::Kind kind) {
  require_delta_leq_epsilon(cover, noise);
  if (system.dim != 1)
    throw Error(ErrorCode::DimensionMismatch, "cover iteration implemented for dim 1");
  IterationGraph g;
  g.kind = kind;
  g.adjacency.resize(static_cast<size_t>(cover.size()));
  for (int i = 0; i < cover.size(); ++i) {
    g.adjacency[static_cast<size_t>(i)] = successor_row(system, cover, i, kind);
    if (kind == IterationGraph::Kind::Inner && g.adjacency[static_cast<size_t>(i)].empty())
      throw Error(ErrorCode::MeshTooCoarse,
                  "inner iteration is empty for atom " + std::to_string(i) +
                      " (mesh " + std::to_string(cover.mesh) + ", delta " +
                      std::to_string(cover.delta) +
                      "): refine the mesh or enlarge delta");
  }
  return g;
}

using Bits = std::vector<uint64_t>;

bool bits_intersect(const Bits& a, const Bits& b) {
  for (size_t w = 0; w < a.size(); ++w)
    if (a[w] & b[w]) return true;
  return false;
}

}  // namespace

Cover build_cover(double mesh, double delta, double overlap) {
  if (!(mesh > 0.0) || !(delta > 0.0))
    throw Error(ErrorCode::ConfigError, "cover mesh and delta must be positive");
  if (mesh >= 1.0)
    throw Error(ErrorCode::ConfigError, "cover mesh must be below the circle length");
  if (!(overlap >= 0.0 && overlap <= 0.9))
    throw Error(ErrorCode::ConfigError, "cover overlap must lie in [0, 0.9]");
  int n = std::max(3, static_cast<int>(std::ceil(1.0 / ((1.0 - overlap) * mesh))));
  Cover c;
  c.mesh = mesh;
  c.delta = delta;
  c.atoms.reserve(static_cast<size_t>(n));
  double s = 1.0 / n;
  for (int i = 0; i < n; ++i) c.atoms.push_back(Arc{i * s, mesh});
  return c;
}

IterationGraph build_inner_graph(const MapSpec& system, const NoiseModel& noise,
                                 const Cover& cover) {
  return build_graph(system, noise, cover, IterationGraph::Kind::Inner);
}

IterationGraph build_outer_graph(const MapSpec& system, const NoiseModel& noise,
                                 const Cover& cover) {
  return build_graph(system, noise, cover, IterationGraph::Kind::Outer);
}

static std::vector<int> set_map(const MapSpec& system, const NoiseModel& noise,
                                const Cover& cover, const std::vector<int>& atoms,
                                IterationGraph::Kind kind) {
  require_delta_leq_epsilon(cover, noise);
  std::vector<int> out;
  for (int a : atoms) {
    if (a < 0 || a >= cover.size())
      throw Error(ErrorCode::ConfigError, "atom index out of range: " + std::to_string(a));
    std::vector<int> row = successor_row(system, cover, a, kind);
    out.insert(out.end(), row.begin(), row.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<int> inner_map(const MapSpec& system, const NoiseModel& noise,
                           const Cover& cover, const std::vector<int>& atoms) {
  return set_map(system, noise, cover, atoms, IterationGraph::Kind::Inner);
}

std::vector<int> outer_map(const MapSpec& system, const NoiseModel& noise,
                           const Cover& cover, const std::vector<int>& atoms) {
  return set_map(system, noise, cover, atoms, IterationGraph::Kind::Outer);
}

std::vector<int> inner_periodic_atoms(const IterationGraph& graph) {
  if (graph.kind != IterationGraph::Kind::Inner)
    throw Error(ErrorCode::ConfigError, "periodic atoms are defined on the inner graph");
  const int n = graph.size();
  // Iterative Tarjan SCC; an atom is periodic iff its SCC contains a cycle
  // (size >= 2 or a self-loop).
  std::vector<int> index(static_cast<size_t>(n), -1), low(static_cast<size_t>(n), 0),
      comp(static_cast<size_t>(n), -1);
  std::vector<char> onstack(static_cast<size_t>(n), 0);
  std::vector<int> stack;
  std::vector<int> comp_size;
  int next_index = 0;
  struct Frame {
    int v;
    size_t child;
  };
  for (int root = 0; root < n; ++root) {
    if (index[static_cast<size_t>(root)] != -1) continue;
    std::vector<Frame> call{{root, 0}};
    index[static_cast<size_t>(root)] = low[static_cast<size_t>(root)] = next_index++;
    stack.push_back(root);
    onstack[static_cast<size_t>(root)] = 1;
    while (!call.empty()) {
      Frame& f = call.back();
      const std::vector<int>& adj = graph.adjacency[static_cast<size_t>(f.v)];
      if (f.child < adj.size()) {
        int w = adj[f.child++];
        if (index[static_cast<size_t>(w)] == -1) {
          index[static_cast<size_t>(w)] = low[static_cast<size_t>(w)] = next_index++;
          stack.push_back(w);
          onstack[static_cast<size_t>(w)] = 1;
          call.push_back({w, 0});
        } else if (onstack[static_cast<size_t>(w)]) {
          low[static_cast<size_t>(f.v)] =
              std::min(low[static_cast<size_t>(f.v)], index[static_cast<size_t>(w)]);
        }
      } else {
        int v = f.v;
        call.pop_back();
        if (!call.empty())
          low[static_cast<size_t>(call.back().v)] =
              std::min(low[static_cast<size_t>(call.back().v)], low[static_cast<size_t>(v)]);
        if (low[static_cast<size_t>(v)] == index[static_cast<size_t>(v)]) {
          int cid = static_cast<int>(comp_size.size());
          comp_size.push_back(0);
          while (true) {
            int w = stack.back();
            stack.pop_back();
            onstack[static_cast<size_t>(w)] = 0;
            comp[static_cast<size_t>(w)] = cid;
            comp_size[static_cast<size_t>(cid)]++;
            if (w == v) break;
          }
        }
      }
    }
  }
  std::vector<int> periodic;
  for (int v = 0; v < n; ++v) {
    const std::vector<int>& adj = graph.adjacency[static_cast<size_t>(v)];
    bool self_loop = std::binary_search(adj.begin(), adj.end(), v);
    if (self_loop || comp_size[static_cast<size_t>(comp[static_cast<size_t>(v)])] >= 2)
      periodic.push_back(v);
  }
  return periodic;
}

std::vector<int> orbit(const IterationGraph& graph, int start) {
  const int n = graph.size();
  if (start < 0 || start >= n)
    throw Error(ErrorCode::ConfigError, "orbit start out of range");
  std::vector<char> seen(static_cast<size_t>(n), 0);
  // Zero or more steps: the orbit includes the starting atom.
  std::vector<int> queue{start};
  seen[static_cast<size_t>(start)] = 1;
  while (!queue.empty()) {
    int v = queue.back();
    queue.pop_back();
    for (int w : graph.adjacency[static_cast<size_t>(v)]) {
      if (!seen[static_cast<size_t>(w)]) {
        seen[static_cast<size_t>(w)] = 1;
        queue.push_back(w);
      }
    }
  }
  std::vector<int> out;
  for (int v = 0; v < n; ++v)
    if (seen[static_cast<size_t>(v)]) out.push_back(v);
  return out;
}

std::vector<int> inner_reduction(const IterationGraph& graph,
                                 const std::vector<int>& periodic) {
  if (graph.kind != IterationGraph::Kind::Inner)
    throw Error(ErrorCode::ConfigError, "inner reduction operates on the inner graph");
  const int n = graph.size();
  const size_t words = static_cast<size_t>(n + 63) / 64;
  std::vector<char> is_periodic(static_cast<size_t>(n), 0);
  for (int p : periodic) is_periodic[static_cast<size_t>(p)] = 1;

  std::unordered_map<int, Bits> cache;
  auto orbit_bits = [&](int v) -> const Bits& {
    auto it = cache.find(v);
    if (it != cache.end()) return it->second;
    Bits bits(words, 0);
    for (int w : orbit(graph, v))
      bits[static_cast<size_t>(w) / 64] |= (1ull << (static_cast<size_t>(w) % 64));
    return cache.emplace(v, std::move(bits)).first->second;
  };

  std::vector<int> reps(periodic);
  std::sort(reps.begin(), reps.end());
  reps.erase(std::unique(reps.begin(), reps.end()), reps.end());

  // Elimination loop: while two representatives have intersecting inner orbits,
  // both are replaced by a periodic atom inside the intersection (which is
  // forward-closed, hence contains a cycle).
  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t i = 0; i < reps.size() && !changed; ++i) {
      for (size_t j = i + 1; j < reps.size() && !changed; ++j) {
        const Bits& bi = orbit_bits(reps[i]);
        const Bits& bj = orbit_bits(reps[j]);
        if (!bits_intersect(bi, bj)) continue;
        int pick = -1;
        for (size_t w = 0; w < words && pick < 0; ++w) {
          uint64_t both = bi[w] & bj[w];
          while (both) {
            int bit = __builtin_ctzll(both);
            int idx = static_cast<int>(w) * 64 + bit;
            if (is_periodic[static_cast<size_t>(idx)]) {
              pick = idx;
              break;
            }
            both &= both - 1;
          }
        }
        if (pick < 0)
          throw Error(ErrorCode::ConfigError,
                      "orbit intersection contains no periodic atom; graph has "
                      "atoms without successors");
        reps.erase(reps.begin() + static_cast<std::ptrdiff_t>(j));
        reps.erase(reps.begin() + static_cast<std::ptrdiff_t>(i));
        if (!std::binary_search(reps.begin(), reps.end(), pick))
          reps.insert(std::lower_bound(reps.begin(), reps.end(), pick), pick);
        changed = true;
      }
    }
  }
  return reps;
}

DecompositionResult decompose(const MapSpec& system, const NoiseModel& noise,
                              double initial_mesh, int max_refinements) {
  if (noise.kind != NoiseModel::Kind::UniformBall)
    throw Error(ErrorCode::ConfigError,
                "decomposition requires the uniform-ball kernel");
  if (!(initial_mesh > 0.0))
    throw Error(ErrorCode::ConfigError, "initial mesh must be positive");
  if (max_refinements < 0)
    throw Error(ErrorCode::ConfigError, "max refinements must be >= 0");

  double mesh = initial_mesh;
  // The margin stays pinned to the noise radius across refinements; only the
  // mesh shrinks.  Halving delta alongside the mesh would keep the ratio
  // delta/mesh constant, so an atom sitting exactly on a repelling fixed
  // point would remain a one-atom self-loop at every resolution and the
  // reduction could never merge it into a neighbouring cycle.  With delta
  // fixed, the inner margin delta - O(mesh) grows relative to the spacing and
  // such atoms acquire more successors at finer meshes.
  const double delta = noise.epsilon;
  for (int r = 0;; ++r) {
    Cover cover = build_cover(mesh, delta);
    IterationGraph gin = build_inner_graph(system, noise, cover);
    std::vector<int> periodic = inner_periodic_atoms(gin);
    std::vector<int> reps = inner_reduction(gin, periodic);
    IterationGraph gout = build_outer_graph(system, noise, cover);

    DecompositionResult res;
    res.xi_irr = reps;
    res.refinements_used = r;
    res.cover = cover;
    for (int rep : reps) res.components.push_back(orbit(gout, rep));

    std::vector<char> hit(static_cast<size_t>(cover.size()), 0);
    bool disjoint = true;
    for (const std::vector<int>& comp : res.components)
      for (int a : comp) {
        if (hit[static_cast<size_t>(a)]) disjoint = false;
        hit[static_cast<size_t>(a)] = 1;
      }

    if (disjoint) {
      res.status = DecompositionResult::Status::Decomposed;
      return res;
    }
    if (r == max_refinements) {
      res.status = DecompositionResult::Status::UndecidedAtMaxResolution;
      std::ostringstream d;
      d << "outer orbits of " << reps.size() << " representatives still intersect at mesh "
        << mesh << "; allow more refinements or perturb epsilon";
      res.diagnostic = d.str();
      return res;
    }
    mesh *= 0.5;
  }
}

bool component_contains(const DecompositionResult& result, int component, double x,
                        double fatten) {
  const std::vector<int>& atoms =
      result.components[static_cast<size_t>(component)];
  for (int a : atoms)
    if (result.cover.atoms[static_cast<size_t>(a)].inflated(fatten).contains(x)) return true;
  return false;
}

Arc component_hull(const DecompositionResult& result, int component) {
  const std::vector<int>& atoms =
      result.components[static_cast<size_t>(component)];
  if (atoms.empty())
    throw Error(ErrorCode::ConfigError, "empty component has no hull");
  std::vector<Arc> arcs;
  arcs.reserve(atoms.size());
  for (int a : atoms) arcs.push_back(result.cover.atoms[static_cast<size_t>(a)]);
  std::sort(arcs.begin(), arcs.end(),
            [](const Arc& a, const Arc& b) { return a.lo < b.lo; });
  // The hull is the complement of the largest uncovered gap between
  // consecutive atoms (cyclically).
  double best_gap = 0.0;
  size_t best_next = 0;
  for (size_t k = 0; k < arcs.size(); ++k) {
    size_t nk = (k + 1) % arcs.size();
    double gap = arcs[nk].lo - (arcs[k].lo + arcs[k].len);
    if (nk == 0) gap += 1.0;
    if (gap > best_gap) {
      best_gap = gap;
      best_next = nk;
    }
  }
  if (best_gap <= 0.0) return Arc{0.0, 1.0};
  return Arc{wrap01(arcs[best_next].lo), 1.0 - best_gap};
}

std::string graph_to_dot(const IterationGraph& graph, const std::string& name) {
  std::ostringstream os;
  os << "digraph " << name << " {\n";
  os << "  // "
     << (graph.kind == IterationGraph::Kind::Inner ? "inner" : "outer")
     << " iteration\n";
  for (int v = 0; v < graph.size(); ++v)
    for (int w : graph.adjacency[static_cast<size_t>(v)])
      os << "  a" << v << " -> a" << w << ";\n";
  os << "}\n";
  return os.str();
}

}  // namespace ergo
