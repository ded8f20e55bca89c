// Time integration of the flocking system with finite-speed information
// propagation:
//
//   dx_i/dt = v_i,
//   dv_i/dt = (1/(N-1)) sum_{j != i} psi(|x_j(t - tau_ij) - x_i(t)|)
//                                    (v_j(t - tau_ij) - v_i(t)),
//
// where tau_ij solves c*tau = |x_i(t) - x_j(t - tau)|. Two schemes are
// provided: an RK4 production integrator with predictor/corrector handling of
// retarded times that land inside the current step, and a Picard fixed-point
// iteration on short horizons that serves as an independent cross-check.
#pragma once

#include <limits>
#include <vector>

#include "flocksim/diagnostics.hpp"
#include "flocksim/history.hpp"
#include "flocksim/influence.hpp"

namespace flock {

// Model data shared by every scheme. The speed cap s is not stored here: it
// is always derived from the initial data as max_i sup_t |v_i^0(t)|, which
// the dynamics provably never exceeds.
struct FlockModel {
  double c = 1.0;  // information propagation speed, must exceed the speed cap
  InfluenceFunction kernel = InfluenceFunction::constant(1.0);
};

struct SimulationOptions {
  double dt = 1e-2;          // target step; the actual step divides horizon evenly
  double horizon = 1.0;      // final time T >= 0
  int sample_every = 1;      // diagnostics row every k committed steps
  bool collect_diagnostics = true;
  bool prune = false;        // drop history older than the certified look-back
  double prune_margin = 0.1; // extra seconds of history kept beyond the bound
};

// Aggregate over every retarded-time solve performed during a run.
struct DelayAudit {
  long long solves = 0;
  int max_iterations = 0;
  double max_residual = 0.0;  // worst |c*tau - |z - gamma(t-tau)||
  // Worst value of tau - |z - gamma(t)|/(c - s): positive values would break
  // the a-priori delay bound and indicate a solver or speed-cap defect.
  double max_delay_slack = -std::numeric_limits<double>::infinity();
  double min_lookback = std::numeric_limits<double>::infinity();  // min of t - tau

  void merge(const DelayAudit& other);
};

struct RunSummary {
  int steps = 0;
  double dt_effective = 0.0;
  double horizon = 0.0;
  double speed_cap = 0.0;        // s derived from the initial data
  double max_speed = 0.0;        // max committed |v_i| over the whole run
  long long corrected_steps = 0; // steps whose delays looked inside the step
  DelayAudit delays;
};

struct RunResult {
  std::vector<TrajectoryHistory> paths;  // committed knots, original frame
  DiagnosticsSeries diagnostics;
  RunSummary summary;
};

// Largest initial speed over all agents; the derived speed cap s.
double group_speed_bound(const std::vector<InitialPath>& initial);

// Right-hand side accelerations at a committed time t, with observer states
// (x, v) of all N agents laid out flat. Exposed for direct verification of
// hand-computed cases; the integrator uses the same code on its stage paths.
void accelerations(const std::vector<TrajectoryHistory>& paths, double t,
                   std::span<const double> x, std::span<const double> v,
                   const InfluenceFunction& kernel, double c,
                   std::span<double> out, DelayAudit* audit = nullptr);

// Integrates the delayed system to opt.horizon with fixed-step RK4.
//
// Retarded times falling inside the step being computed are first resolved
// against per-stage quadratic extensions of each trajectory (position Taylor
// expansion using the previous stage's acceleration); if any stage's accepted
// delay actually looked inside the current step, one corrector pass re-solves
// every stage against the cubic Hermite segment joining the step's endpoints
// (start knot to predicted end state). Committed velocities exceeding the
// speed cap by more than 1e-7 abort the run with an invariant error - the
// continuum dynamics cannot leave the cap, so larger overshoot is a bug.
//
// Internally all positions are anchored to agent 1's starting position, so
// translating every initial position by one exactly-representable offset
// reproduces bit-identical velocities; the anchor is restored on output.
RunResult simulate(const FlockModel& model, const std::vector<InitialPath>& initial,
                   const SimulationOptions& opt);

// The classical (instantaneous-information) system integrated with the same
// RK4 machinery: accelerations read x_j(t), v_j(t) directly. Used as the
// reference in the large-c consistency experiments; model.c is not used by
// the dynamics but still validates against the derived speed cap.
RunResult simulate_undelayed(const FlockModel& model,
                             const std::vector<InitialPath>& initial,
                             const SimulationOptions& opt);

// ---------------------------------------------------------------------------
// Picard fixed-point scheme (verification oracle).
// ---------------------------------------------------------------------------

struct PicardOptions {
  double horizon = 0.05;   // contraction interval length T
  int grid_cells = 64;     // uniform velocity grid: grid_cells+1 nodes on [0, T]
  double band_m = 0.0;     // speed band s < m < c; 0 selects m = s/(1 - 2T)
  int max_sweeps = 60;
  double tolerance = 1e-13;  // stop once sweep sup-change falls below this
};

struct PicardResult {
  std::vector<TrajectoryHistory> paths;  // final iterate (speed cap = band m)
  std::vector<double> sweep_deltas;      // sup-norm change per sweep
  double analytic_factor = 0.0;          // proven contraction factor for (T, m)
  double band_m = 0.0;
  double grid_h = 0.0;
  int sweeps = 0;
  bool converged = false;
};

// Iterates the Picard operator
//   U_i[w](t) = v_i(0) + (1/(N-1)) int_0^t sum_{j != i}
//               psi(|xi_j(s - tau_ij) - xi_i(s)|) (w_j(s - tau_ij) - w_i(s)) ds
// on piecewise-linear velocity candidates over a uniform grid, with positions
// xi integrated exactly and the outer integral by trapezoid. Successive
// iterates must contract at least as fast as the analytic factor
//   2T (1 + 2m (L_psi + 1/c) (1 - m/c)^{-1} T),
// which must be < 1 for the configured (T, m) - otherwise a config error asks
// for a shorter horizon. Empirical expansion over three consecutive sweeps is
// likewise reported as a config error.
PicardResult solve_picard(const FlockModel& model,
                          const std::vector<InitialPath>& initial,
                          const PicardOptions& opt);

// ---------------------------------------------------------------------------
// Convergence-order measurement and run comparison helpers.
// ---------------------------------------------------------------------------

struct OrderEstimate {
  double order = 0.0;        // log2(diff_coarse / diff_fine)
  double diff_coarse = 0.0;  // end-state gap between dt and dt/2 runs
  double diff_fine = 0.0;    // end-state gap between dt/2 and dt/4 runs
};

// Richardson triplet at steps dt, dt/2, dt/4; gaps measured at the final time
// as the worst per-agent |dx| + |dv|.
OrderEstimate measure_order(const FlockModel& model,
                            const std::vector<InitialPath>& initial,
                            double horizon, double dt);

// Worst per-agent position/velocity gap over all shared committed knots of
// two runs. Requires matching agent counts and knot grids.
struct StateGap {
  double position_sup = 0.0;
  double velocity_sup = 0.0;
};
StateGap knot_state_gap(const RunResult& a, const RunResult& b);

}  // namespace flock
