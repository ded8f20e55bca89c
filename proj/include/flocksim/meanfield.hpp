// Particle-level transport machinery: equal-weight ensembles of trajectories,
// the path-space norm |gamma|_pos,sup(-inf,T] + |gamma_dot|_sup[0,T], the
// exact Monge-Kantorovich-Rubinstein (optimal transport) distance between two
// ensembles, and the convergence / stability experiments built on it.
//
// Distances are finite only when the prescribed tails of the two paths move
// with identical constant velocity: otherwise the positional gap grows
// without bound as t -> -inf and the distance is flagged infinite. Samplers
// therefore offer a shared-velocity-tail mode (a common tail velocity with a
// short linear ramp onto each atom's own velocity) for studies that need
// finite pairwise costs.
#pragma once

#include <cstdint>
#include <vector>

#include "flocksim/dynamics.hpp"
#include "flocksim/history.hpp"

namespace flock {

// Equal-weight (1/N each) collection of trajectories over a common window:
// positions evaluable on (-inf, horizon] (closed form before time zero),
// velocities on [0, horizon]. `init_window` is the prescribed-history span
// [-S, 0] that experiment grids resolve explicitly; the tail before
// min(-S, tail starts) is handled in closed form.
struct TrajectoryEnsemble {
  std::vector<TrajectoryHistory> atoms;
  double horizon = 0.0;
  double init_window = 0.0;
};

// Validates shared dimension / speed cap / coverage and wraps run output as
// an ensemble (atoms must reach `horizon` and must not be pruned inside the
// evaluation window).
TrajectoryEnsemble ensemble_from_paths(std::vector<TrajectoryHistory> atoms,
                                       double horizon, double init_window);

// Path-space distance between two atoms. `value` is the supremum over the
// evaluation grid (union of knots, breakpoints, endpoints, and midpoints);
// `error_bound` is the Lipschitz slack for what could hide between grid
// points. `infinite` marks diverging prescribed tails, in which case `value`
// is +inf and `error_bound` meaningless.
struct NormDistance {
  bool infinite = false;
  double value = 0.0;
  double error_bound = 0.0;
};

NormDistance ensemble_norm_distance(const TrajectoryEnsemble& a, std::size_t i,
                                    const TrajectoryEnsemble& b, std::size_t j);

// Exact optimal transport distance between equal-weight atomic ensembles:
// with N and M atoms, both sides are replicated to L = lcm(N, M) atoms of
// weight 1/L and the L x L assignment problem is solved exactly (O(L^3));
// the result is (1/L) * sum of matched costs. L is capped at 2048 (usage
// error beyond), which covers desk-scale studies. Costs must all be finite:
// an infinite pair raises a domain error naming the offending atoms.
struct MkrDistance {
  double value = 0.0;
  double error_bound = 0.0;  // (1/L) * sum of matched per-cost error bounds
  int replicated_size = 0;   // L
};

MkrDistance mkr_distance(const TrajectoryEnsemble& a, const TrajectoryEnsemble& b);

// Family of initial laws the studies sample from: position uniform in a ball
// around `position_center`, velocity uniform in a ball of radius
// `velocity_radius` <= `speed_bound`. With `share_velocity_tail`, every atom
// moves at `tail_velocity` for t <= -ramp_duration and ramps linearly onto
// its own sampled velocity on [-ramp_duration, 0] (keeping |v| <= s by
// convexity); without it atoms are constant-velocity and pairwise distances
// between distinct atoms are generically infinite.
struct InitialLaw {
  int dim = 2;
  std::uint64_t seed = 0;
  double position_radius = 1.0;
  std::vector<double> position_center;  // empty -> origin
  double velocity_radius = 0.5;
  double speed_bound = 1.0;
  bool share_velocity_tail = false;
  std::vector<double> tail_velocity;  // empty -> zeros
  double ramp_duration = 1.0;
};

// Draws N initial paths. Atom k consumes only its own counter-based stream,
// so sampling is deterministic in (seed, k) and nested: the first N paths of
// sample(2N) coincide with sample(N) under the same seed.
std::vector<InitialPath> sample_initial_paths(const InitialLaw& law, int count);

// Ensemble of freshly wrapped initial paths (horizon 0), for time-zero
// transport distances.
TrajectoryEnsemble sample_initial_ensemble(const InitialLaw& law, int count,
                                           double init_window);

// Consecutive-N convergence experiment: for each adjacent pair in `counts`,
// simulate both ensembles (each ensemble IS the N-particle system), then
// report the transport distance of the initial ensembles (w0), of the
// evolved ensembles at the horizon (wT), and the ratio wT/w0 (0 when both
// vanish). With `rescale_dt`, each N-particle run uses dt * (N-1)/N — the
// documented removable time-rescaling between the per-agent mean convention
// 1/(N-1) and the mean-field convention 1/N; it is never applied silently.
struct ConvergencePair {
  int n_small = 0;
  int n_large = 0;
  double w0 = 0.0;
  double w0_error = 0.0;
  double wT = 0.0;
  double wT_error = 0.0;
  double ratio = 0.0;
};

struct ConvergenceStudy {
  std::vector<ConvergencePair> pairs;
};

ConvergenceStudy particle_convergence_study(const InitialLaw& law,
                                            const std::vector<int>& counts,
                                            const FlockModel& model,
                                            const SimulationOptions& options,
                                            double init_window,
                                            bool rescale_dt = false);

// Stability experiment: the same law with positions shifted by delta along
// the first axis (identical seed, so draws match and the initial transport
// distance is exactly delta). Reports w0, wT and the amplification ratio
// wT/w0 per delta.
struct PerturbationRow {
  double delta = 0.0;
  double w0 = 0.0;
  double w0_error = 0.0;
  double wT = 0.0;
  double wT_error = 0.0;
  double ratio = 0.0;
};

struct PerturbationStudy {
  std::vector<PerturbationRow> rows;
};

PerturbationStudy perturbation_study(const InitialLaw& law, int count,
                                     const std::vector<double>& deltas,
                                     const FlockModel& model,
                                     const SimulationOptions& options,
                                     double init_window);

}  // namespace flock
