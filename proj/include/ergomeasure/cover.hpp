#pragma once

#include <string>
#include <vector>

#include "ergomeasure/mapdsl.hpp"
#include "ergomeasure/noise.hpp"
#include "ergomeasure/torus.hpp"

namespace ergo {

// Finite open cover of the circle by equal-length overlapping intervals, together
// with the inner/outer margin parameter delta.
struct Cover {
  std::vector<Arc> atoms;
  double delta = 0.0;
  double mesh = 0.0;  // atom diameter

  int size() const { return static_cast<int>(atoms.size()); }
  // Spacing between consecutive atom left endpoints.
  double spacing() const { return 1.0 / static_cast<double>(atoms.size()); }
};

// Cover by intervals of diameter `mesh` whose left endpoints are evenly spaced so
// consecutive atoms overlap by at least the requested fraction of the mesh
// (default 50%). Smaller overlaps leave each atom a private part not covered by
// its neighbours, which minorization certificates need.
Cover build_cover(double mesh, double delta, double overlap = 0.5);

// Successor structure of the inner or outer set map restricted to single atoms.
struct IterationGraph {
  enum class Kind { Inner, Outer };
  Kind kind;
  std::vector<std::vector<int>> adjacency;  // sorted successor indices per atom

  int size() const { return static_cast<int>(adjacency.size()); }
};

// Inner iteration graph: atom j is a successor of atom i when j is certified to lie
// inside every delta-ball centered on the image enclosure of atom i. Throws
// MeshTooCoarse if some atom ends up with no successors (the cover cannot support
// inner iteration at this resolution), and ConfigError if delta > noise.epsilon.
IterationGraph build_inner_graph(const MapSpec& system, const NoiseModel& noise,
                                 const Cover& cover);

// Outer iteration graph: atom j is a successor of atom i when j meets the
// delta-neighborhood of the image enclosure of atom i (certified outward).
IterationGraph build_outer_graph(const MapSpec& system, const NoiseModel& noise,
                                 const Cover& cover);

// Set-valued one-step maps (union of per-atom successor sets; empty in -> empty out).
// These never throw on empty rows; `atoms` holds cover indices.
std::vector<int> inner_map(const MapSpec& system, const NoiseModel& noise,
                           const Cover& cover, const std::vector<int>& atoms);
std::vector<int> outer_map(const MapSpec& system, const NoiseModel& noise,
                           const Cover& cover, const std::vector<int>& atoms);

// Atoms lying on a directed cycle of the inner graph (equivalently, atoms that
// return to themselves within |cover| steps). Requires graph.kind == Inner.
std::vector<int> inner_periodic_atoms(const IterationGraph& graph);

// Forward-reachable set (zero or more steps, so including `start`) in the graph.
std::vector<int> orbit(const IterationGraph& graph, int start);

// Reduce the periodic atoms to representatives with pairwise-disjoint inner orbits:
// while two representatives' orbits intersect, both are replaced by a periodic atom
// inside the intersection. Requires periodic = inner_periodic_atoms(graph).
std::vector<int> inner_reduction(const IterationGraph& graph,
                                 const std::vector<int>& periodic);

struct DecompositionResult {
  enum class Status { Decomposed, UndecidedAtMaxResolution };
  Status status;
  std::vector<std::vector<int>> components;  // outer orbits of the representatives
  std::vector<int> xi_irr;                   // representative atoms
  int refinements_used = 0;
  Cover cover;  // cover at the final refinement level (indices refer to it)
  std::string diagnostic;
};

// Full decomposition into ergodic components: build covers of decreasing mesh,
// reduce the inner-periodic atoms, and stop when the representatives' outer orbits
// are pairwise disjoint. Requires UniformBall noise; delta is pinned to epsilon
// and only the mesh halves between refinements. Throws MeshTooCoarse from any
// level.
DecompositionResult decompose(const MapSpec& system, const NoiseModel& noise,
                              double initial_mesh, int max_refinements);

// Whether a point lies in the delta-fattening of the given component's atoms.
bool component_contains(const DecompositionResult& result, int component, double x,
                        double fatten);

// Smallest arc containing every atom of the component (full circle when the
// atoms leave no gap).
Arc component_hull(const DecompositionResult& result, int component);

// Graphviz rendering of an iteration graph.
std::string graph_to_dot(const IterationGraph& graph, const std::string& name);

}  // namespace ergo
