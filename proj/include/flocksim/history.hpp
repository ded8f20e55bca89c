// Per-agent path storage. An agent's motion consists of a closed-form
// prescribed part on t <= 0 (constant velocity, or a continuous
// piecewise-linear velocity profile) and a committed sequence of integration
// knots on [0, t_end] with cubic-Hermite dense output for positions and
// linear interpolation for velocities.
#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace flock {

// Prescribed motion for t <= 0. Positions follow from the compatibility
// relation x(t) = x(0) - integral_t^0 v(s) ds, so only x(0) and the velocity
// profile are stored. Outside its breakpoints the velocity extrapolates as a
// constant, which gives every initial path an affine tail.
class InitialPath {
 public:
  enum class Kind { ConstantVelocity, PiecewiseLinearVelocity };

  static InitialPath constant_velocity(std::vector<double> x_at_zero,
                                       std::vector<double> velocity);

  // break_times strictly increasing, all <= 0; one velocity vector per break
  // time. Velocity is linear between breakpoints and constant outside them.
  static InitialPath piecewise_linear_velocity(
      std::vector<double> x_at_zero, std::vector<double> break_times,
      std::vector<std::vector<double>> break_velocities);

  int dim() const { return dim_; }
  Kind kind() const { return kind_; }

  void position(double t, std::span<double> out) const;  // t <= 0
  void velocity(double t, std::span<double> out) const;  // t <= 0

  // sup over t <= 0 of |v(t)| (attained at a breakpoint, by convexity).
  double speed_bound() const;

  // Lipschitz constant of the velocity profile on t <= 0 (0 for constant
  // velocity). This is the L_v0 entering the certificate for non-constant
  // starts.
  double velocity_slope_bound() const;

  // The path is affine for t <= tail_start(), moving at tail_velocity().
  double tail_start() const;
  std::span<const double> tail_velocity() const;

  const std::vector<double>& x_at_zero() const { return x_at_zero_; }
  const std::vector<double>& break_times() const { return break_times_; }
  const std::vector<std::vector<double>>& break_velocities() const {
    return break_velocities_;
  }

  // Copy with all positions shifted by `offset` (velocities untouched).
  InitialPath translated(std::span<const double> offset) const;

 private:
  InitialPath() = default;

  Kind kind_ = Kind::ConstantVelocity;
  int dim_ = 0;
  std::vector<double> x_at_zero_;
  std::vector<double> break_times_;                   // PWL only, <= 0
  std::vector<std::vector<double>> break_velocities_; // PWL only
  std::vector<double> prefix_integral_;  // PWL: integral_{t_k}^{0} v ds, flat (m*d)
};

// Dense trajectory of one agent: prescribed closed form for t <= 0 plus
// committed knots (t_k, x_k, v_k) on [0, t_end]. Between knots, positions
// interpolate with the cubic Hermite matching both endpoint velocities and
// velocities interpolate linearly. `speed_cap` is the hard bound s the whole
// path must respect; appends exceeding it (beyond a 1e-7 slack, the same
// threshold the integrator enforces) are rejected.
class TrajectoryHistory {
 public:
  TrajectoryHistory(InitialPath initial, double speed_cap);

  int dim() const { return dim_; }
  double speed_cap() const { return speed_cap_; }
  // Velocity slopes on t >= 0 are bounded by twice the speed cap: every
  // admissible acceleration is a mean of velocity differences, each <= 2s.
  double accel_bound() const { return 2.0 * speed_cap_; }

  const InitialPath& initial() const { return initial_; }

  double end_time() const { return times_.back(); }
  // Lower end of the evaluable window: -inf until drop_before() prunes knots.
  double start_time() const { return pruned_before_; }

  std::size_t knot_count() const { return times_.size(); }
  double knot_time(std::size_t k) const { return times_[k]; }
  std::span<const double> knot_position(std::size_t k) const;
  std::span<const double> knot_velocity(std::size_t k) const;

  // Appends a committed knot. Time must exceed the current end time; the
  // velocity must respect the speed cap up to a 1e-7 absolute slack.
  void append(double t, std::span<const double> x, std::span<const double> v);

  // Evaluation anywhere in (start_time, end_time]. Raises an underflow error
  // outside that window (including beyond the last committed knot).
  void position(double t, std::span<double> out) const;
  void velocity(double t, std::span<double> out) const;

  // Drops committed knots strictly before t_keep, retaining one knot at or
  // before it so interpolation at t_keep still works. Evaluations earlier
  // than the retained window raise underflow errors afterwards.
  void drop_before(double t_keep);

  // Copy with all positions shifted by `offset` (velocities untouched).
  TrajectoryHistory translated(std::span<const double> offset) const;

 private:
  std::size_t segment_index(double t) const;

  InitialPath initial_;
  int dim_ = 0;
  double speed_cap_ = 0.0;
  double pruned_before_ = -std::numeric_limits<double>::infinity();
  std::vector<double> times_;  // t_0 = 0 <= t_1 < ... (seeded from the initial path)
  std::vector<double> xs_;     // knot positions, flat (count * d)
  std::vector<double> vs_;     // knot velocities, flat (count * d)
};

// Length of the prescribed window the initial data must cover so that a run
// with diameter dx0 at time zero, signal speed c, speed cap s and the given
// horizon never looks back past it:
//   (dx0 + max(3s - c, 0) * horizon) / (c - s).
double required_history_window(double dx0, double c, double s, double horizon);

// Supremum gap between two trajectories over a window. Positions are compared
// on [t_lo, t_hi]; velocities on [max(t_lo, 0), t_hi], matching the norm used
// by the transport distance (velocities only count from time zero onward).
// Suprema are evaluated on the union of both knot/breakpoint grids inside the
// window, plus the endpoints and all midpoints; the reported error bounds are
// Lipschitz-slack estimates for what can hide between evaluation points.
struct PathGap {
  double position_sup = 0.0;
  double velocity_sup = 0.0;
  double position_error_bound = 0.0;
  double velocity_error_bound = 0.0;
};
PathGap sup_norm_gap(const TrajectoryHistory& a, const TrajectoryHistory& b,
                     double t_lo, double t_hi);

}  // namespace flock
