#include "ergomeasure/montecarlo.hpp"

#include <cmath>

#include "ergomeasure/errors.hpp"
#include "ergomeasure/rng.hpp"
#include "ergomeasure/torus.hpp"

namespace ergo {

Trajectory simulate(const MapSpec& system, const NoiseModel& noise, double x0,
                    int steps, uint64_t seed) {
  if (steps < 1) throw Error(ErrorCode::ConfigError, "simulate requires steps >= 1");
  if (!(x0 >= 0.0 && x0 < 1.0))
    throw Error(ErrorCode::ConfigError, "start point must lie in [0,1)");
  if (system.dim != 1)
    throw Error(ErrorCode::DimensionMismatch, "simulation implemented for dim 1");
  Trajectory traj;
  traj.seed = seed;
  traj.states.reserve(static_cast<size_t>(steps) + 1);
  traj.states.push_back(x0);
  CounterRng rng(seed);
  double x = x0;
  for (int t = 0; t < steps; ++t) {
    double fx = eval_fast(system, x);
    rng.set_counter(static_cast<uint64_t>(t));
    x = sample(noise, fx, rng);
    traj.states.push_back(x);
  }
  return traj;
}

EmpiricalDensity empirical_density(const std::vector<Trajectory>& trajectories,
                                   int num_atoms, int burn_in) {
  if (num_atoms < 1) throw Error(ErrorCode::ConfigError, "need at least one atom");
  if (burn_in < 0) throw Error(ErrorCode::ConfigError, "burn-in must be >= 0");
  long long total = 0;
  for (const Trajectory& t : trajectories)
    total += std::max<long long>(
        0, static_cast<long long>(t.states.size()) - burn_in);
  if (total < 10ll * num_atoms)
    throw Error(ErrorCode::InsufficientSamples,
                "have " + std::to_string(total) + " post-burn-in samples, need " +
                    std::to_string(10ll * num_atoms));
  std::vector<long long> counts(static_cast<size_t>(num_atoms), 0);
  for (const Trajectory& t : trajectories)
    for (size_t k = static_cast<size_t>(burn_in); k < t.states.size(); ++k) {
      int i = std::min(num_atoms - 1, static_cast<int>(t.states[k] * num_atoms));
      counts[static_cast<size_t>(i)]++;
    }
  EmpiricalDensity out;
  out.num_samples = total;
  out.density.weights.resize(static_cast<size_t>(num_atoms));
  out.band95.resize(static_cast<size_t>(num_atoms));
  for (int i = 0; i < num_atoms; ++i) {
    double p = static_cast<double>(counts[static_cast<size_t>(i)]) /
               static_cast<double>(total);
    out.density.weights[static_cast<size_t>(i)] = p;
    out.band95[static_cast<size_t>(i)] =
        1.96 * std::sqrt(p * (1.0 - p) / static_cast<double>(total));
  }
  return out;
}

std::optional<int> estimate_basin(const MapSpec& system, const NoiseModel& noise,
                                  double x0, const DecompositionResult& components,
                                  int steps, uint64_t seed) {
  if (components.status != DecompositionResult::Status::Decomposed)
    throw Error(ErrorCode::ConfigError,
                "basin estimation needs a decomposed system");
  Trajectory traj = simulate(system, noise, x0, steps, seed);
  size_t tail_len = (traj.states.size() + 4) / 5;  // final 20%
  size_t first = traj.states.size() - tail_len;
  for (size_t c = 0; c < components.components.size(); ++c) {
    size_t inside = 0;
    for (size_t k = first; k < traj.states.size(); ++k)
      if (component_contains(components, static_cast<int>(c), traj.states[k],
                             components.cover.delta))
        inside++;
    if (static_cast<double>(inside) >= 0.99 * static_cast<double>(tail_len))
      return static_cast<int>(c);
  }
  return std::nullopt;
}

}  // namespace ergo
