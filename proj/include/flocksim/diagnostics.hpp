// Run observables sampled at committed integration times, plus the exponential
// decay checks used to certify flocking behavior in simulations.
#pragma once

#include <string>
#include <vector>

#include "flocksim/history.hpp"
#include "flocksim/influence.hpp"

namespace flock {

// One sampled row. Column names match the diagnostics CSV.
struct DiagnosticsRow {
  double t = 0.0;       // sample time
  double dX = 0.0;      // position spread: max pairwise distance
  double dV = 0.0;      // velocity spread: max pairwise velocity distance
  double Rv = 0.0;      // largest agent speed
  double D = 0.0;       // retardation drift: max_i avg_j psi_ij |v_j(t - tau_ij) - v_j(t)|
  double taubar = 0.0;  // largest pairwise delay
  double psibar = 0.0;  // smallest influence weight over all pairs
};

struct DiagnosticsSeries {
  std::vector<DiagnosticsRow> rows;
};

// Computes one diagnostics row at a committed time t. Positions/velocities are
// read from the trajectory knots (exact at committed times, no interpolation);
// pairwise delays are re-solved from the histories. All trajectories must
// share one dimension and cover [t - lookback, t].
DiagnosticsRow observe(const std::vector<TrajectoryHistory>& paths, double t,
                       const InfluenceFunction& kernel, double c);

// Verifies the strict decay envelopes
//   dV(t) < sigma * exp(-eta t) + slack
//   D(t)  < kappa * exp(-eta t) + slack
//   dX(t) < dX(0) + sigma / eta + slack
// at every sampled row. Equality counts as a violation (the certified bounds
// are strict); `slack` absorbs floating-point noise when desired. Requires
// sigma > dV(0) and kappa > D(0) strictly (usage error otherwise): the decay
// claim is vacuous when the envelopes do not dominate the starting values.
struct DecayCheck {
  bool ok = true;
  double first_violation_time = 0.0;
  std::string violated_field;       // "dV", "D" or "dX" when !ok
  double worst_velocity_margin = 0.0;  // min over rows of bound - dV
  double worst_drift_margin = 0.0;     // min over rows of bound - D
  double worst_spread_margin = 0.0;    // min over rows of bound - dX
};
DecayCheck check_decay(const DiagnosticsSeries& series, double eta, double sigma,
                       double kappa, double slack = 0.0);

// Least-squares fit of log(field) against t over rows where the field exceeds
// `floor`. The returned rate is the slope (negative for decay). With fewer
// than two usable samples, or no time spread among them, the fit is reported
// as undefined rather than raising.
enum class DecayField { PositionSpread, VelocitySpread, MaxSpeed, RetardationDrift };

struct DecayFit {
  bool defined = false;
  double rate = 0.0;
  double r_squared = 0.0;
  int points_used = 0;
};
DecayFit fit_decay_rate(const DiagnosticsSeries& series, DecayField field,
                        double floor = 1e-12);

}  // namespace flock
