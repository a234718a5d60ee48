#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "ergomeasure/cover.hpp"
#include "ergomeasure/errors.hpp"
#include "ergomeasure/mapdsl.hpp"
#include "ergomeasure/noise.hpp"
#include "ergomeasure/torus.hpp"

using namespace ergo;

namespace {

// Sorted index window {base+lo, ..., base+hi} modulo n.
std::vector<int> window(int base, int lo, int hi, int n) {
  std::vector<int> out;
  for (int k = lo; k <= hi; ++k) out.push_back(((base + k) % n + n) % n);
  std::sort(out.begin(), out.end());
  return out;
}

IterationGraph make_graph(IterationGraph::Kind kind,
                          std::vector<std::vector<int>> adj) {
  IterationGraph g;
  g.kind = kind;
  g.adjacency = std::move(adj);
  for (auto& row : g.adjacency) std::sort(row.begin(), row.end());
  return g;
}

double center_lo(const DecompositionResult& r, int comp) {
  double lo = 2.0;
  for (int a : r.components[static_cast<size_t>(comp)])
    lo = std::min(lo, r.cover.atoms[static_cast<size_t>(a)].midpoint());
  return lo;
}

double center_hi(const DecompositionResult& r, int comp) {
  double hi = -1.0;
  for (int a : r.components[static_cast<size_t>(comp)])
    hi = std::max(hi, r.cover.atoms[static_cast<size_t>(a)].midpoint());
  return hi;
}

}  // namespace

TEST_CASE("cover construction: atom count, spacing, 50% overlap") {
  Cover c = build_cover(0.02, 0.05);
  CHECK(c.size() == 100);
  CHECK(c.spacing() == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(c.delta == 0.05);
  CHECK(c.mesh == 0.02);
  for (int i = 0; i < c.size(); ++i) {
    CHECK(c.atoms[static_cast<size_t>(i)].len == 0.02);
    CHECK(c.atoms[static_cast<size_t>(i)].lo ==
          doctest::Approx(i * 0.01).epsilon(1e-14));
  }

  // Non-divisible mesh still gives >= 50% overlap: spacing <= mesh/2, so every
  // point of the circle lies in at least two atoms.
  Cover c2 = build_cover(0.03, 0.05);
  CHECK(c2.size() == 67);
  CHECK(c2.spacing() <= 0.03 / 2.0 + 1e-15);
  for (int k = 0; k < 997; ++k) {
    double x = k / 997.0;
    int covered = 0;
    for (const Arc& a : c2.atoms)
      if (a.contains(x)) ++covered;
    CHECK(covered >= 2);
  }

  CHECK_THROWS_AS(build_cover(0.0, 0.05), Error);
  CHECK_THROWS_AS(build_cover(-0.01, 0.05), Error);
  CHECK_THROWS_AS(build_cover(0.02, 0.0), Error);
  CHECK_THROWS_AS(build_cover(1.5, 0.05), Error);
}

TEST_CASE("identity map: inner/outer successor windows match arc arithmetic") {
  // delta = 0.013, mesh = 0.004, spacing = 0.002. An atom at index offset d
  // has center distance 0.002|d|; it sits inside the common-ball arc of
  // half-width delta - mesh/2 = 0.011 iff 0.002|d| + 0.002 <= 0.011, i.e.
  // |d| <= 4; it meets the delta-fattened image iff 0.002|d| <= delta + mesh
  // = 0.017, i.e. |d| <= 8. Ties (|d| = 4.5, 8.5) do not occur.
  MapSpec id = parse_map("x1 mod 1", 1);
  NoiseModel nm = uniform_kernel(0.013, 1);
  Cover c = build_cover(0.004, 0.013);
  REQUIRE(c.size() == 500);
  IterationGraph gi = build_inner_graph(id, nm, c);
  IterationGraph go = build_outer_graph(id, nm, c);
  for (int i = 0; i < 500; ++i) {
    CHECK(gi.adjacency[static_cast<size_t>(i)] == window(i, -4, 4, 500));
    CHECK(go.adjacency[static_cast<size_t>(i)] == window(i, -8, 8, 500));
  }
}

TEST_CASE("rotation map: successor windows are shifted by the rotation number") {
  // rotation:0.3 on n=100, mesh 0.02, delta 0.05: image center sits 30 index
  // units ahead. Inner: 0.01|d| + 0.01 <= 0.04 with the exact tie |d| = 3
  // excluded by the certification margin -> offsets 28..32. Outer:
  // 0.01|d| <= 0.07 with the touching tie |d| = 7 included -> offsets 23..37.
  MapSpec rot = resolve_map("rotation:0.3");
  NoiseModel nm = uniform_kernel(0.05, 1);
  Cover c = build_cover(0.02, 0.05);
  REQUIRE(c.size() == 100);
  IterationGraph gi = build_inner_graph(rot, nm, c);
  IterationGraph go = build_outer_graph(rot, nm, c);
  for (int i = 0; i < 100; ++i) {
    CHECK(gi.adjacency[static_cast<size_t>(i)] == window(i, 28, 32, 100));
    CHECK(go.adjacency[static_cast<size_t>(i)] == window(i, 23, 37, 100));
  }
}

TEST_CASE("inner successors are always a subset of outer successors") {
  NoiseModel nm = uniform_kernel(0.09, 1);
  Cover c = build_cover(0.02, 0.09);
  for (const char* name : {"sine2:0.1", "doubling", "rotation:0.137"}) {
    MapSpec m = resolve_map(name);
    IterationGraph gi = build_inner_graph(m, nm, c);
    IterationGraph go = build_outer_graph(m, nm, c);
    for (int i = 0; i < c.size(); ++i)
      CHECK(std::includes(go.adjacency[static_cast<size_t>(i)].begin(),
                          go.adjacency[static_cast<size_t>(i)].end(),
                          gi.adjacency[static_cast<size_t>(i)].begin(),
                          gi.adjacency[static_cast<size_t>(i)].end()));
  }
}

TEST_CASE("set maps: empty in, empty out; singleton rows match the graph") {
  MapSpec m = resolve_map("sine2:0.1");
  NoiseModel nm = uniform_kernel(0.05, 1);
  Cover c = build_cover(0.01, 0.05);
  CHECK(inner_map(m, nm, c, {}).empty());
  CHECK(outer_map(m, nm, c, {}).empty());
  IterationGraph gi = build_inner_graph(m, nm, c);
  IterationGraph go = build_outer_graph(m, nm, c);
  for (int i : {0, 41, 99, 150}) {
    CHECK(inner_map(m, nm, c, {i}) == gi.adjacency[static_cast<size_t>(i)]);
    CHECK(outer_map(m, nm, c, {i}) == go.adjacency[static_cast<size_t>(i)]);
  }
  // Union rule: the image of a set is the union of the atom images.
  std::vector<int> un;
  for (int i : {3, 77, 150}) {
    const auto& row = gi.adjacency[static_cast<size_t>(i)];
    un.insert(un.end(), row.begin(), row.end());
  }
  std::sort(un.begin(), un.end());
  un.erase(std::unique(un.begin(), un.end()), un.end());
  CHECK(inner_map(m, nm, c, {3, 77, 150}) == un);
  CHECK_THROWS_AS(inner_map(m, nm, c, {-1}), Error);
  CHECK_THROWS_AS(outer_map(m, nm, c, {c.size()}), Error);
}

TEST_CASE("margin wider than the noise radius is rejected") {
  MapSpec m = resolve_map("doubling");
  NoiseModel nm = uniform_kernel(0.05, 1);
  Cover c = build_cover(0.02, 0.06);  // delta > epsilon
  try {
    build_inner_graph(m, nm, c);
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
  }
  CHECK_THROWS_AS(build_outer_graph(m, nm, c), Error);
  CHECK_THROWS_AS(inner_map(m, nm, c, {0}), Error);
}

TEST_CASE("empty inner rows raise MeshTooCoarse") {
  MapSpec m = resolve_map("doubling");
  NoiseModel nm = uniform_kernel(0.001, 1);
  Cover c = build_cover(0.5, 0.001);  // image width dwarfs 2*delta
  try {
    build_inner_graph(m, nm, c);
    FAIL("expected MeshTooCoarse");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MeshTooCoarse);
  }
}

TEST_CASE("periodic atoms: self-loops and cycles, not danglers") {
  // 3-cycle 0->1->2->0 with dangler 3->0.
  IterationGraph g = make_graph(IterationGraph::Kind::Inner,
                                {{1}, {2}, {0}, {0}});
  CHECK(inner_periodic_atoms(g) == std::vector<int>{0, 1, 2});

  // Pure self-loop.
  IterationGraph g2 = make_graph(IterationGraph::Kind::Inner, {{0}});
  CHECK(inner_periodic_atoms(g2) == std::vector<int>{0});

  // Chain with terminal self-loop: only the terminal atom is periodic.
  IterationGraph g3 =
      make_graph(IterationGraph::Kind::Inner, {{1}, {2}, {2}});
  CHECK(inner_periodic_atoms(g3) == std::vector<int>{2});

  IterationGraph bad = make_graph(IterationGraph::Kind::Outer, {{0}});
  CHECK_THROWS_AS(inner_periodic_atoms(bad), Error);
}

TEST_CASE("orbit is the zero-or-more-step reachable set") {
  IterationGraph g = make_graph(IterationGraph::Kind::Inner,
                                {{1}, {2}, {0}, {0}});
  CHECK(orbit(g, 0) == std::vector<int>{0, 1, 2});
  CHECK(orbit(g, 3) == std::vector<int>{0, 1, 2, 3});  // includes the start
  IterationGraph g2 = make_graph(IterationGraph::Kind::Inner,
                                 {{0, 1}, {1, 2}, {2}});
  CHECK(orbit(g2, 1) == std::vector<int>{1, 2});
  CHECK(orbit(g2, 2) == std::vector<int>{2});
  CHECK_THROWS_AS(orbit(g2, 5), Error);
  CHECK_THROWS_AS(orbit(g2, -1), Error);
}

TEST_CASE("reduction merges representatives with intersecting orbits") {
  // Five self-loops; 0 and 1 both flow into 2; 3 and 4 are isolated.
  IterationGraph g = make_graph(
      IterationGraph::Kind::Inner, {{0, 2}, {1, 2}, {2}, {3}, {4}});
  std::vector<int> per = inner_periodic_atoms(g);
  CHECK(per == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(inner_reduction(g, per) == std::vector<int>{2, 3, 4});

  // One 3-cycle: all three atoms share an orbit, one representative survives.
  IterationGraph cyc = make_graph(IterationGraph::Kind::Inner,
                                  {{1}, {2}, {0}, {0}});
  CHECK(inner_reduction(cyc, inner_periodic_atoms(cyc)) ==
        std::vector<int>{0});

  // Two disjoint 2-cycles: one representative each.
  IterationGraph two = make_graph(IterationGraph::Kind::Inner,
                                  {{1}, {0}, {3}, {2}});
  CHECK(inner_reduction(two, inner_periodic_atoms(two)) ==
        std::vector<int>{0, 2});

  IterationGraph bad = make_graph(IterationGraph::Kind::Outer, {{0}});
  CHECK_THROWS_AS(inner_reduction(bad, {0}), Error);
}

TEST_CASE("contracting circle map: inner iteration collapses onto the fixed point") {
  // f(x) = 0.5 + 0.1 sin(2 pi x) is a continuous degree-0 map with unique
  // globally attracting fixed point 0.5 and range [0.4, 0.6].
  MapSpec con = parse_map("0.5 + 0.1*sin(2*pi*x1) mod 1", 1);
  NoiseModel nm = uniform_kernel(0.05, 1);
  Cover c = build_cover(0.01, 0.05);
  REQUIRE(c.size() == 200);

  std::vector<int> s(static_cast<size_t>(c.size()));
  for (int i = 0; i < c.size(); ++i) s[static_cast<size_t>(i)] = i;
  int iters = 0;
  for (; iters < 40; ++iters) {
    std::vector<int> t = inner_map(con, nm, c, s);
    if (t == s) break;
    s.swap(t);
  }
  CHECK(iters <= 10);        // fast collapse
  CHECK(s.size() == 41);     // atoms inside the invariant margin interval
  for (int a : s) {
    double m = c.atoms[static_cast<size_t>(a)].midpoint();
    CHECK(m >= 0.4 - 1e-12);
    CHECK(m <= 0.6 + 1e-12);
  }
  // The limit set equals the periodic-atom set here (attractor is one class).
  CHECK(inner_periodic_atoms(build_inner_graph(con, nm, c)) == s);

  DecompositionResult r = decompose(con, nm, 0.01, 3);
  REQUIRE(r.status == DecompositionResult::Status::Decomposed);
  CHECK(r.components.size() == 1);
  CHECK(r.refinements_used == 0);
  double rep_center = r.cover.atoms[static_cast<size_t>(r.xi_irr[0])].midpoint();
  CHECK(rep_center >= 0.39);
  CHECK(rep_center <= 0.61);
  CHECK(center_lo(r, 0) >= 0.37);
  CHECK(center_hi(r, 0) <= 0.63);
  CHECK(component_contains(r, 0, 0.5, 0.0));
  CHECK_FALSE(component_contains(r, 0, 0.9, 0.0));
}

TEST_CASE("decomposition: circle rotation with noise is one component") {
  DecompositionResult r =
      decompose(resolve_map("rotation:0.3"), uniform_kernel(0.05, 1), 0.02, 5);
  REQUIRE(r.status == DecompositionResult::Status::Decomposed);
  CHECK(r.components.size() == 1);
  CHECK(r.refinements_used == 0);
  CHECK(r.cover.size() == 100);
  CHECK(r.components[0].size() == 100);  // the whole circle
}

TEST_CASE("decomposition: expanding doubling map is one component") {
  DecompositionResult r =
      decompose(resolve_map("doubling"), uniform_kernel(0.05, 1), 0.02, 5);
  REQUIRE(r.status == DecompositionResult::Status::Decomposed);
  CHECK(r.components.size() == 1);
  CHECK(r.components[0].size() == 100);
}

TEST_CASE("decomposition: two-well sine map at small noise has two components") {
  MapSpec sine = resolve_map("sine2:0.1");
  DecompositionResult r = decompose(sine, uniform_kernel(0.01, 1), 0.005, 5);
  REQUIRE(r.status == DecompositionResult::Status::Decomposed);
  REQUIRE(r.components.size() == 2);
  // One refinement: at mesh 0.005 the atom centered on the repelling fixed
  // point is still a pure self-loop; at 0.0025 it leaks and merges.
  CHECK(r.refinements_used == 1);
  CHECK(r.cover.size() == 800);
  CHECK(r.xi_irr == std::vector<int>{193, 593});
  CHECK(r.components[0].size() == 29);
  CHECK(r.components[1].size() == 29);

  // Components hug the attracting fixed points 0.25 and 0.75.
  CHECK(center_lo(r, 0) >= 0.23);
  CHECK(center_hi(r, 0) <= 0.27);
  CHECK(center_lo(r, 1) >= 0.73);
  CHECK(center_hi(r, 1) <= 0.77);
  CHECK(component_contains(r, 0, 0.25, 0.0));
  CHECK(component_contains(r, 1, 0.75, 0.0));
  CHECK_FALSE(component_contains(r, 0, 0.75, 0.0));
  CHECK_FALSE(component_contains(r, 1, 0.25, 0.0));

  // The map commutes with x -> x + 1/2, so the components are exact
  // half-turn translates of each other, atom for atom.
  int n = r.cover.size();
  REQUIRE(r.components[0].size() == r.components[1].size());
  for (size_t k = 0; k < r.components[0].size(); ++k)
    CHECK(r.components[1][k] == (r.components[0][k] + n / 2) % n);

  // Starting from a finer mesh skips the refinement round, same answer.
  DecompositionResult r2 = decompose(sine, uniform_kernel(0.01, 1), 0.0025, 5);
  REQUIRE(r2.status == DecompositionResult::Status::Decomposed);
  CHECK(r2.refinements_used == 0);
  CHECK(r2.components.size() == 2);
  CHECK(r2.xi_irr == r.xi_irr);
  CHECK(r2.components == r.components);
}

TEST_CASE("decomposition: large noise glues the sine wells into one component") {
  DecompositionResult r =
      decompose(resolve_map("sine2:0.1"), uniform_kernel(0.45, 1), 0.1, 5);
  REQUIRE(r.status == DecompositionResult::Status::Decomposed);
  CHECK(r.components.size() == 1);
  CHECK(r.cover.size() == 20);
  CHECK(r.components[0].size() == 20);

  // Noise just above the well depth already bridges the two basins.
  DecompositionResult r2 =
      decompose(resolve_map("sine2:0.1"), uniform_kernel(0.15, 1), 0.01, 5);
  REQUIRE(r2.status == DecompositionResult::Status::Decomposed);
  CHECK(r2.components.size() == 1);
  CHECK(r2.components[0].size() == 200);
}

TEST_CASE("decomposition: refinement loop engages near the bridging threshold") {
  MapSpec sine = resolve_map("sine2:0.1");
  DecompositionResult r = decompose(sine, uniform_kernel(0.09, 1), 0.02, 6);
  REQUIRE(r.status == DecompositionResult::Status::Decomposed);
  REQUIRE(r.components.size() == 2);
  CHECK(r.refinements_used == 1);  // coarse level is inconclusive
  CHECK(r.cover.size() == 200);
  CHECK(r.xi_irr == std::vector<int>{33, 133});
  CHECK(r.components[0].size() == 45);
  CHECK(r.components[1].size() == 45);
  int n = r.cover.size();
  for (size_t k = 0; k < r.components[0].size(); ++k)
    CHECK(r.components[1][k] == (r.components[0][k] + n / 2) % n);

  // Post-conditions at the final level: representatives are periodic, live in
  // their own component, and components are closed under the outer map.
  NoiseModel nm = uniform_kernel(0.09, 1);
  IterationGraph gi = build_inner_graph(sine, nm, r.cover);
  std::vector<int> per = inner_periodic_atoms(gi);
  for (size_t ci = 0; ci < r.components.size(); ++ci) {
    int rep = r.xi_irr[ci];
    CHECK(std::binary_search(per.begin(), per.end(), rep));
    const std::vector<int>& comp = r.components[ci];
    CHECK(std::binary_search(comp.begin(), comp.end(), rep));
    std::vector<int> image = outer_map(sine, nm, r.cover, comp);
    CHECK(std::includes(comp.begin(), comp.end(), image.begin(), image.end()));
  }
}

TEST_CASE("decomposition: undecidable at the exact bridging noise level") {
  // epsilon equal to the sine amplitude is the borderline case: the true
  // attractor hulls touch the escape threshold, so outer orbits keep leaking
  // at every finite mesh and the routine reports honest indecision.
  DecompositionResult r =
      decompose(resolve_map("sine2:0.1"), uniform_kernel(0.1, 1), 0.01, 3);
  CHECK(r.status == DecompositionResult::Status::UndecidedAtMaxResolution);
  CHECK(r.refinements_used == 3);
  CHECK_FALSE(r.diagnostic.empty());
  REQUIRE(r.components.size() == 2);
  // The overlap that blocks the decomposition is real and visible.
  std::vector<char> hit(static_cast<size_t>(r.cover.size()), 0);
  bool overlap = false;
  for (const std::vector<int>& comp : r.components)
    for (int a : comp) {
      if (hit[static_cast<size_t>(a)]) overlap = true;
      hit[static_cast<size_t>(a)] = 1;
    }
  CHECK(overlap);
}

TEST_CASE("decomposition rejects bad configuration") {
  MapSpec m = resolve_map("doubling");
  CHECK_THROWS_AS(decompose(m, wrapped_gaussian_kernel(0.1), 0.02, 3), Error);
  CHECK_THROWS_AS(decompose(m, uniform_kernel(0.05, 1), 0.0, 3), Error);
  CHECK_THROWS_AS(decompose(m, uniform_kernel(0.05, 1), 0.02, -1), Error);
}

TEST_CASE("graph rendering emits all edges") {
  IterationGraph g = make_graph(IterationGraph::Kind::Inner, {{1}, {0}});
  std::string dot = graph_to_dot(g, "g");
  CHECK(dot.find("digraph g {") != std::string::npos);
  CHECK(dot.find("a0 -> a1;") != std::string::npos);
  CHECK(dot.find("a1 -> a0;") != std::string::npos);
  CHECK(dot.find("inner") != std::string::npos);
}
