#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ergomeasure/cover.hpp"
#include "ergomeasure/mapdsl.hpp"
#include "ergomeasure/measures.hpp"
#include "ergomeasure/noise.hpp"

namespace ergo {

// One sampled path of the perturbed chain: states[0] is the start point and
// states[t+1] is drawn from the kernel centered at f(states[t]).
struct Trajectory {
  std::vector<double> states;
  uint64_t seed = 0;
  int burn_in = 0;
};

// Simulates `steps` transitions; the draw at step t uses the counter-based RNG
// positioned at t, so trajectories are reproducible and steps are independent
// of evaluation order.
Trajectory simulate(const MapSpec& system, const NoiseModel& noise, double x0,
                    int steps, uint64_t seed);

struct EmpiricalDensity {
  GridDensity density;
  std::vector<double> band95;  // 95% multinomial half-width per atom (mass units)
  long long num_samples = 0;
};

// Histogram of the post-burn-in states of all trajectories, normalized to mass 1.
// Requires at least 10 samples per atom on average (InsufficientSamples).
EmpiricalDensity empirical_density(const std::vector<Trajectory>& trajectories,
                                   int num_atoms, int burn_in);

// Runs a trajectory from x0 and reports the component whose delta-fattened atom
// set contains at least 99% of the final 20% of states; nullopt means escaped.
// Requires a Decomposed result.
std::optional<int> estimate_basin(const MapSpec& system, const NoiseModel& noise,
                                  double x0, const DecompositionResult& components,
                                  int steps, uint64_t seed);

}  // namespace ergo
