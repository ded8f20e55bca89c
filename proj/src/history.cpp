#include "flocksim/history.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flocksim/error.hpp"
#include "flocksim/util.hpp"

namespace flock {

namespace {

constexpr double kAppendSpeedSlack = 1e-7;

std::string time_str(double t) { return std::to_string(t); }

}  // namespace

// ---------------------------------------------------------------------------
// InitialPath
// ---------------------------------------------------------------------------

InitialPath InitialPath::constant_velocity(std::vector<double> x_at_zero,
                                           std::vector<double> velocity) {
  require(!x_at_zero.empty(), ErrorCode::Usage, "initial path needs dimension >= 1");
  require(x_at_zero.size() == velocity.size(), ErrorCode::Usage,
          "initial path: position/velocity dimension mismatch");
  require(all_finite(x_at_zero) && all_finite(velocity), ErrorCode::Domain,
          "initial path data must be finite");
  InitialPath p;
  p.kind_ = Kind::ConstantVelocity;
  p.dim_ = static_cast<int>(x_at_zero.size());
  p.x_at_zero_ = std::move(x_at_zero);
  p.break_times_ = {0.0};
  p.break_velocities_ = {std::move(velocity)};
  p.prefix_integral_.assign(p.dim_, 0.0);
  return p;
}

InitialPath InitialPath::piecewise_linear_velocity(
    std::vector<double> x_at_zero, std::vector<double> break_times,
    std::vector<std::vector<double>> break_velocities) {
  require(!x_at_zero.empty(), ErrorCode::Usage, "initial path needs dimension >= 1");
  require(!break_times.empty(), ErrorCode::Usage,
          "piecewise-linear initial path needs at least one breakpoint");
  require(break_times.size() == break_velocities.size(), ErrorCode::Usage,
          "initial path: breakpoint/velocity count mismatch");
  require(all_finite(x_at_zero), ErrorCode::Domain, "initial path data must be finite");
  const std::size_t d = x_at_zero.size();
  for (std::size_t k = 0; k < break_times.size(); ++k) {
    require(std::isfinite(break_times[k]) && break_times[k] <= 0.0, ErrorCode::Domain,
            "initial path breakpoints must be finite and <= 0");
    if (k > 0) {
      require(break_times[k] > break_times[k - 1], ErrorCode::Usage,
              "initial path breakpoints must be strictly increasing");
    }
    require(break_velocities[k].size() == d, ErrorCode::Usage,
            "initial path: velocity dimension mismatch at breakpoint");
    require(all_finite(break_velocities[k]), ErrorCode::Domain,
            "initial path data must be finite");
  }

  InitialPath p;
  p.kind_ = Kind::PiecewiseLinearVelocity;
  p.dim_ = static_cast<int>(d);
  p.x_at_zero_ = std::move(x_at_zero);
  p.break_times_ = std::move(break_times);
  p.break_velocities_ = std::move(break_velocities);

  // prefix_integral_[k] = integral from break k to time zero of the velocity,
  // assembled back-to-front so position evaluation is closed form.
  const std::size_t m = p.break_times_.size();
  p.prefix_integral_.assign(m * d, 0.0);
  std::vector<double> acc(d, 0.0);
  // Tail segment [t_{m-1}, 0] has constant velocity w_{m-1}.
  for (std::size_t j = 0; j < d; ++j) {
    acc[j] = -p.break_times_[m - 1] * p.break_velocities_[m - 1][j];
    p.prefix_integral_[(m - 1) * d + j] = acc[j];
  }
  for (std::size_t k = m - 1; k-- > 0;) {
    const double h = p.break_times_[k + 1] - p.break_times_[k];
    for (std::size_t j = 0; j < d; ++j) {
      acc[j] += 0.5 * h * (p.break_velocities_[k][j] + p.break_velocities_[k + 1][j]);
      p.prefix_integral_[k * d + j] = acc[j];
    }
  }
  return p;
}

void InitialPath::velocity(double t, std::span<double> out) const {
  const std::size_t d = x_at_zero_.size();
  if (t <= break_times_.front()) {
    std::copy(break_velocities_.front().begin(), break_velocities_.front().end(),
              out.begin());
    return;
  }
  if (t >= break_times_.back()) {
    std::copy(break_velocities_.back().begin(), break_velocities_.back().end(),
              out.begin());
    return;
  }
  const auto it = std::upper_bound(break_times_.begin(), break_times_.end(), t);
  const std::size_t hi = static_cast<std::size_t>(it - break_times_.begin());
  const std::size_t lo = hi - 1;
  const double w = (t - break_times_[lo]) / (break_times_[hi] - break_times_[lo]);
  for (std::size_t j = 0; j < d; ++j) {
    out[j] = break_velocities_[lo][j] +
             w * (break_velocities_[hi][j] - break_velocities_[lo][j]);
  }
}

void InitialPath::position(double t, std::span<double> out) const {
  const std::size_t d = x_at_zero_.size();
  const double t_first = break_times_.front();
  const double t_last = break_times_.back();

  if (t >= t_last) {
    // Constant tail velocity on [t_last, 0].
    const auto& w = break_velocities_.back();
    for (std::size_t j = 0; j < d; ++j) out[j] = x_at_zero_[j] + t * w[j];
    return;
  }
  if (t <= t_first) {
    const auto& w = break_velocities_.front();
    for (std::size_t j = 0; j < d; ++j) {
      out[j] = x_at_zero_[j] - prefix_integral_[j] - (t_first - t) * w[j];
    }
    return;
  }
  const auto it = std::upper_bound(break_times_.begin(), break_times_.end(), t);
  const std::size_t hi = static_cast<std::size_t>(it - break_times_.begin());
  const std::size_t lo = hi - 1;
  const double h = break_times_[hi] - break_times_[lo];
  const double w = (t - break_times_[lo]) / h;
  // integral from t to break hi is a trapezoid between v(t) and w_hi.
  const double span_len = break_times_[hi] - t;
  for (std::size_t j = 0; j < d; ++j) {
    const double v_lo = break_velocities_[lo][j];
    const double v_hi = break_velocities_[hi][j];
    const double v_t = v_lo + w * (v_hi - v_lo);
    out[j] = x_at_zero_[j] - prefix_integral_[hi * d + j] -
             0.5 * span_len * (v_t + v_hi);
  }
}

double InitialPath::speed_bound() const {
  double worst = 0.0;
  for (const auto& w : break_velocities_) worst = std::max(worst, norm(w));
  return worst;
}

double InitialPath::velocity_slope_bound() const {
  double worst = 0.0;
  for (std::size_t k = 1; k < break_times_.size(); ++k) {
    const double h = break_times_[k] - break_times_[k - 1];
    double acc = 0.0;
    for (std::size_t j = 0; j < x_at_zero_.size(); ++j) {
      const double diff = break_velocities_[k][j] - break_velocities_[k - 1][j];
      acc += diff * diff;
    }
    worst = std::max(worst, std::sqrt(acc) / h);
  }
  return worst;
}

double InitialPath::tail_start() const { return break_times_.front(); }

std::span<const double> InitialPath::tail_velocity() const {
  return break_velocities_.front();
}

InitialPath InitialPath::translated(std::span<const double> offset) const {
  require(static_cast<int>(offset.size()) == dim_, ErrorCode::Usage,
          "translation offset dimension mismatch");
  InitialPath copy = *this;
  for (int j = 0; j < dim_; ++j) copy.x_at_zero_[j] += offset[j];
  return copy;
}

// ---------------------------------------------------------------------------
// TrajectoryHistory
// ---------------------------------------------------------------------------

TrajectoryHistory::TrajectoryHistory(InitialPath initial, double speed_cap)
    : initial_(std::move(initial)),
      dim_(initial_.dim()),
      speed_cap_(speed_cap) {
  require(std::isfinite(speed_cap) && speed_cap >= 0.0, ErrorCode::Domain,
          "speed cap must be finite and >= 0");
  require(initial_.speed_bound() <= speed_cap + kAppendSpeedSlack, ErrorCode::Domain,
          "initial path speed " + std::to_string(initial_.speed_bound()) +
              " exceeds the speed cap " + std::to_string(speed_cap));
  times_.push_back(0.0);
  xs_.resize(dim_);
  vs_.resize(dim_);
  initial_.position(0.0, std::span<double>(xs_.data(), dim_));
  initial_.velocity(0.0, std::span<double>(vs_.data(), dim_));
}

std::span<const double> TrajectoryHistory::knot_position(std::size_t k) const {
  return {xs_.data() + k * dim_, static_cast<std::size_t>(dim_)};
}

std::span<const double> TrajectoryHistory::knot_velocity(std::size_t k) const {
  return {vs_.data() + k * dim_, static_cast<std::size_t>(dim_)};
}

void TrajectoryHistory::append(double t, std::span<const double> x,
                               std::span<const double> v) {
  require(static_cast<int>(x.size()) == dim_ && static_cast<int>(v.size()) == dim_,
          ErrorCode::Usage, "append: state dimension mismatch");
  require(std::isfinite(t) && t > end_time(), ErrorCode::Usage,
          "append: knot times must be strictly increasing (t=" + time_str(t) +
              ", end=" + time_str(end_time()) + ")");
  for (double value : x) {
    require(std::isfinite(value), ErrorCode::Invariant, "append: non-finite position");
  }
  const double speed = norm(v);
  require(std::isfinite(speed), ErrorCode::Invariant, "append: non-finite velocity");
  require(speed <= speed_cap_ + kAppendSpeedSlack, ErrorCode::Invariant,
          "append: speed " + std::to_string(speed) + " exceeds cap " +
              std::to_string(speed_cap_) + " at t=" + time_str(t));
  times_.push_back(t);
  xs_.insert(xs_.end(), x.begin(), x.end());
  vs_.insert(vs_.end(), v.begin(), v.end());
}

std::size_t TrajectoryHistory::segment_index(double t) const {
  // The common case looks up times near the committed end (retarded lookups
  // with fast signals), so walk backward a few knots before binary search.
  const std::size_t n = times_.size();
  std::size_t k = n - 1;
  for (int steps = 0; steps < 8 && k > 0; ++steps, --k) {
    if (times_[k] <= t) return k;
  }
  const auto it = std::upper_bound(times_.begin(), times_.begin() + k + 1, t);
  const std::size_t idx = static_cast<std::size_t>(it - times_.begin());
  return idx == 0 ? 0 : idx - 1;
}

void TrajectoryHistory::position(double t, std::span<double> out) const {
  require(std::isfinite(t), ErrorCode::Domain, "position: non-finite time");
  if (t < pruned_before_) {
    raise(ErrorCode::Underflow,
          "trajectory evaluated at t=" + time_str(t) + " before the retained window " +
              "start " + time_str(pruned_before_) +
              "; keep at least the required history window when pruning");
  }
  if (t <= 0.0) {
    initial_.position(t, out);
    return;
  }
  const double end = end_time();
  const double slack = 1e-12 * std::max(1.0, std::abs(end));
  if (t > end + slack) {
    raise(ErrorCode::Underflow, "trajectory evaluated at t=" + time_str(t) +
                                    " beyond its committed end " + time_str(end));
  }
  if (t >= end) {
    std::copy_n(xs_.end() - dim_, dim_, out.begin());
    return;
  }
  const std::size_t k = segment_index(t);
  const double ta = times_[k];
  const double tb = times_[k + 1];
  const double h = tb - ta;
  const double th = (t - ta) / h;
  const double omt = 1.0 - th;
  const double h00 = (1.0 + 2.0 * th) * omt * omt;
  const double h10 = th * omt * omt;
  const double h01 = th * th * (3.0 - 2.0 * th);
  const double h11 = th * th * (th - 1.0);
  const double* xa = xs_.data() + k * dim_;
  const double* xb = xa + dim_;
  const double* va = vs_.data() + k * dim_;
  const double* vb = va + dim_;
  for (int j = 0; j < dim_; ++j) {
    out[j] = h00 * xa[j] + h01 * xb[j] + h * (h10 * va[j] + h11 * vb[j]);
  }
}

void TrajectoryHistory::velocity(double t, std::span<double> out) const {
  require(std::isfinite(t), ErrorCode::Domain, "velocity: non-finite time");
  if (t < pruned_before_) {
    raise(ErrorCode::Underflow,
          "trajectory evaluated at t=" + time_str(t) + " before the retained window " +
              "start " + time_str(pruned_before_));
  }
  if (t <= 0.0) {
    initial_.velocity(t, out);
    return;
  }
  const double end = end_time();
  const double slack = 1e-12 * std::max(1.0, std::abs(end));
  if (t > end + slack) {
    raise(ErrorCode::Underflow, "trajectory evaluated at t=" + time_str(t) +
                                    " beyond its committed end " + time_str(end));
  }
  if (t >= end) {
    std::copy_n(vs_.end() - dim_, dim_, out.begin());
    return;
  }
  const std::size_t k = segment_index(t);
  const double ta = times_[k];
  const double tb = times_[k + 1];
  const double w = (t - ta) / (tb - ta);
  const double* va = vs_.data() + k * dim_;
  const double* vb = va + dim_;
  for (int j = 0; j < dim_; ++j) out[j] = va[j] + w * (vb[j] - va[j]);
}

void TrajectoryHistory::drop_before(double t_keep) {
  require(std::isfinite(t_keep), ErrorCode::Domain, "drop_before: non-finite time");
  pruned_before_ = std::max(pruned_before_, t_keep);
  if (t_keep <= times_.front()) return;
  // Keep the last knot at or before t_keep so interpolation there still works.
  std::size_t k0 = 0;
  while (k0 + 1 < times_.size() && times_[k0 + 1] <= t_keep) ++k0;
  if (k0 == 0) return;
  times_.erase(times_.begin(), times_.begin() + k0);
  xs_.erase(xs_.begin(), xs_.begin() + k0 * dim_);
  vs_.erase(vs_.begin(), vs_.begin() + k0 * dim_);
}

TrajectoryHistory TrajectoryHistory::translated(std::span<const double> offset) const {
  TrajectoryHistory copy(initial_.translated(offset), speed_cap_);
  copy.pruned_before_ = pruned_before_;
  copy.times_ = times_;
  copy.vs_ = vs_;
  copy.xs_ = xs_;
  const std::size_t n = times_.size();
  for (std::size_t k = 0; k < n; ++k) {
    for (int j = 0; j < dim_; ++j) copy.xs_[k * dim_ + j] += offset[j];
  }
  return copy;
}

// ---------------------------------------------------------------------------
// Free functions
// ---------------------------------------------------------------------------

double required_history_window(double dx0, double c, double s, double horizon) {
  require(std::isfinite(dx0) && dx0 >= 0.0, ErrorCode::Domain,
          "required_history_window: dx0 must be finite and >= 0");
  require(std::isfinite(s) && s >= 0.0, ErrorCode::Domain,
          "required_history_window: s must be finite and >= 0");
  require(std::isfinite(c) && c > s, ErrorCode::Domain,
          "required_history_window: needs c > s (got c=" + std::to_string(c) +
              ", s=" + std::to_string(s) + ")");
  require(std::isfinite(horizon) && horizon >= 0.0, ErrorCode::Domain,
          "required_history_window: horizon must be finite and >= 0");
  return (dx0 + std::max(3.0 * s - c, 0.0) * horizon) / (c - s);
}

PathGap sup_norm_gap(const TrajectoryHistory& a, const TrajectoryHistory& b,
                     double t_lo, double t_hi) {
  require(a.dim() == b.dim(), ErrorCode::Usage, "sup_norm_gap: dimension mismatch");
  require(std::isfinite(t_lo) && std::isfinite(t_hi) && t_lo <= t_hi, ErrorCode::Usage,
          "sup_norm_gap: invalid window");

  // Evaluation grid: window endpoints, both knot grids, both sets of initial
  // breakpoints, time zero, then all midpoints.
  std::vector<double> grid;
  grid.push_back(t_lo);
  grid.push_back(t_hi);
  if (t_lo < 0.0 && t_hi > 0.0) grid.push_back(0.0);
  auto add_times = [&](const TrajectoryHistory& h) {
    for (std::size_t k = 0; k < h.knot_count(); ++k) {
      const double t = h.knot_time(k);
      if (t > t_lo && t < t_hi) grid.push_back(t);
    }
    for (double t : h.initial().break_times()) {
      if (t > t_lo && t < t_hi) grid.push_back(t);
    }
  };
  add_times(a);
  add_times(b);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  std::vector<double> fine;
  fine.reserve(2 * grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    fine.push_back(grid[i]);
    if (i + 1 < grid.size()) fine.push_back(0.5 * (grid[i] + grid[i + 1]));
  }

  const int d = a.dim();
  std::vector<double> pa(d), pb(d), va(d), vb(d);
  PathGap gap;
  double h_pos = 0.0;
  double h_vel = 0.0;
  const double vel_lo = std::max(t_lo, 0.0);
  double prev_t = fine.empty() ? t_lo : fine.front();
  double prev_vel_t = vel_lo;
  bool have_vel_prev = false;

  for (double t : fine) {
    a.position(t, pa);
    b.position(t, pb);
    gap.position_sup = std::max(gap.position_sup, distance(pa, pb));
    h_pos = std::max(h_pos, t - prev_t);
    prev_t = t;
    if (t >= vel_lo) {
      a.velocity(t, va);
      b.velocity(t, vb);
      gap.velocity_sup = std::max(gap.velocity_sup, distance(va, vb));
      if (have_vel_prev) h_vel = std::max(h_vel, t - prev_vel_t);
      prev_vel_t = t;
      have_vel_prev = true;
    }
  }
  if (vel_lo <= t_hi && !have_vel_prev) {
    // Window clipped every grid point away (can only happen when
    // vel_lo == t_hi lies between samples); evaluate the endpoint directly.
    a.velocity(t_hi, va);
    b.velocity(t_hi, vb);
    gap.velocity_sup = std::max(gap.velocity_sup, distance(va, vb));
  }

  // Between consecutive evaluation points the position gap moves at most at
  // the combined speed caps, the velocity gap at the combined slope bounds.
  gap.position_error_bound = 0.5 * h_pos * (a.speed_cap() + b.speed_cap());
  gap.velocity_error_bound = 0.5 * h_vel * (a.accel_bound() + b.accel_bound());
  return gap;
}

}  // namespace flock
