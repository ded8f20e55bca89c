#include "flocksim/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "flocksim/delay.hpp"
#include "flocksim/error.hpp"
#include "flocksim/util.hpp"

namespace flock {

void DelayAudit::merge(const DelayAudit& other) {
  solves += other.solves;
  max_iterations = std::max(max_iterations, other.max_iterations);
  max_residual = std::max(max_residual, other.max_residual);
  max_delay_slack = std::max(max_delay_slack, other.max_delay_slack);
  min_lookback = std::min(min_lookback, other.min_lookback);
}

double group_speed_bound(const std::vector<InitialPath>& initial) {
  require(!initial.empty(), ErrorCode::Usage, "group_speed_bound: no agents");
  double s = 0.0;
  for (const auto& p : initial) s = std::max(s, p.speed_bound());
  return s;
}

namespace {

constexpr double kSpeedOvershootAbort = 1e-7;

// Committed history plus an optional continuation into the step currently
// being computed, so retarded-time solves at stage times can look past the
// last committed knot. The continuation is either a quadratic Taylor arc with
// a frozen acceleration (predictor stages) or the cubic Hermite segment to
// the predicted end state (corrector pass). Velocities on the Hermite segment
// interpolate linearly, matching how the segment evaluates once committed.
class StagePath {
 public:
  explicit StagePath(const TrajectoryHistory* base)
      : base_(base), d_(base->dim()) {}

  int dim() const { return d_; }
  double speed_cap() const { return base_->speed_cap(); }
  double committed_end() const { return base_->end_time(); }

  void clear_extension() { mode_ = Mode::None; }

  void set_taylor(std::span<const double> x0, std::span<const double> v0,
                  std::span<const double> a) {
    mode_ = Mode::Taylor;
    assign(x0_, x0);
    assign(v0_, v0);
    assign(a_, a);
  }

  void set_hermite(double t1, std::span<const double> x0,
                   std::span<const double> v0, std::span<const double> x1,
                   std::span<const double> v1) {
    mode_ = Mode::Hermite;
    t1_ = t1;
    assign(x0_, x0);
    assign(v0_, v0);
    assign(x1_, x1);
    assign(v1_, v1);
  }

  void position(double t, std::span<double> out) const {
    const double end = base_->end_time();
    if (t <= end) {
      base_->position(t, out);
      return;
    }
    const double h = t - end;
    switch (mode_) {
      case Mode::Taylor:
        for (int k = 0; k < d_; ++k)
          out[k] = x0_[k] + h * (v0_[k] + 0.5 * h * a_[k]);
        return;
      case Mode::Hermite: {
        const double span = t1_ - end;
        const double th = h / span;
        const double h00 = (1.0 + 2.0 * th) * (1.0 - th) * (1.0 - th);
        const double h10 = th * (1.0 - th) * (1.0 - th);
        const double h01 = th * th * (3.0 - 2.0 * th);
        const double h11 = th * th * (th - 1.0);
        for (int k = 0; k < d_; ++k)
          out[k] = h00 * x0_[k] + h01 * x1_[k] +
                   span * (h10 * v0_[k] + h11 * v1_[k]);
        return;
      }
      case Mode::None:
        break;
    }
    raise(ErrorCode::Invariant,
          "stage path: query past committed data without an extension");
  }

  void velocity(double t, std::span<double> out) const {
    const double end = base_->end_time();
    if (t <= end) {
      base_->velocity(t, out);
      return;
    }
    const double h = t - end;
    switch (mode_) {
      case Mode::Taylor:
        for (int k = 0; k < d_; ++k) out[k] = v0_[k] + h * a_[k];
        return;
      case Mode::Hermite: {
        const double th = h / (t1_ - end);
        for (int k = 0; k < d_; ++k)
          out[k] = (1.0 - th) * v0_[k] + th * v1_[k];
        return;
      }
      case Mode::None:
        break;
    }
    raise(ErrorCode::Invariant,
          "stage path: query past committed data without an extension");
  }

 private:
  enum class Mode { None, Taylor, Hermite };

  static void assign(std::vector<double>& dst, std::span<const double> src) {
    dst.assign(src.begin(), src.end());
  }

  const TrajectoryHistory* base_;
  int d_;
  Mode mode_ = Mode::None;
  double t1_ = 0.0;
  std::vector<double> x0_, v0_, x1_, v1_, a_;
};

// Pairwise retarded accelerations at time t with observer states (x, v).
// `looked_within`, when given, is set if any accepted delay's look-back time
// t - tau lands strictly after a path's committed end - i.e. inside the step
// being predicted - which is what triggers the corrector pass.
template <class Path>
void accel_core(const std::vector<Path>& paths, double t,
                std::span<const double> x, std::span<const double> v,
                const InfluenceFunction& kernel, double c, std::span<double> out,
                DelayAudit* audit, bool* looked_within,
                std::vector<double>& x_scratch, std::vector<double>& v_scratch) {
  const std::size_t n = paths.size();
  const std::size_t d = static_cast<std::size_t>(paths[0].dim());
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = cblock(x, i, d);
    const auto ai = block(out, i, d);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const RetardedRoot root =
          solve_retarded(paths[j], t, xi, c, x_scratch, v_scratch);
      paths[j].velocity(t - root.tau, v_scratch);
      const double w = kernel(root.distance);
      for (std::size_t k = 0; k < d; ++k)
        ai[k] += w * (v_scratch[k] - v[i * d + k]);
      if (audit != nullptr) {
        const double s = paths[j].speed_cap();
        audit->solves += 1;
        audit->max_iterations = std::max(audit->max_iterations, root.iterations);
        audit->max_residual = std::max(audit->max_residual, root.residual);
        audit->max_delay_slack = std::max(
            audit->max_delay_slack, root.tau - root.distance_now / (c - s));
        audit->min_lookback = std::min(audit->min_lookback, t - root.tau);
      }
      if (looked_within != nullptr && t - root.tau > paths[j].committed_end())
        *looked_within = true;
    }
    if (n > 1) {
      const double inv = 1.0 / static_cast<double>(n - 1);
      for (std::size_t k = 0; k < d; ++k) ai[k] *= inv;
    }
  }
}

// Minimal adapter so accel_core's committed_end() query compiles for plain
// histories (where nothing can look past the end: queries are at t <= end).
struct CommittedPath {
  const TrajectoryHistory* h;
  int dim() const { return h->dim(); }
  double speed_cap() const { return h->speed_cap(); }
  double committed_end() const { return h->end_time(); }
  void position(double t, std::span<double> out) const { h->position(t, out); }
  void velocity(double t, std::span<double> out) const { h->velocity(t, out); }
};

void validate_common(const std::vector<InitialPath>& initial, int& d, double& s) {
  require(!initial.empty(), ErrorCode::Usage, "dynamics: need at least one agent");
  d = initial[0].dim();
  for (const auto& p : initial)
    require(p.dim() == d, ErrorCode::Usage, "dynamics: agents disagree on dimension");
  s = group_speed_bound(initial);
}

int plan_steps(double horizon, double dt, double& h_out) {
  require(std::isfinite(dt) && dt > 0.0, ErrorCode::Domain,
          "dynamics: step size must be positive and finite");
  require(std::isfinite(horizon) && horizon >= 0.0, ErrorCode::Domain,
          "dynamics: horizon must be nonnegative and finite");
  if (horizon == 0.0) {
    h_out = 0.0;
    return 0;
  }
  const double raw = horizon / dt;
  require(raw <= 5e7, ErrorCode::Domain,
          "dynamics: horizon/dt = " + std::to_string(raw) + " steps is too many");
  const int steps = std::max(1, static_cast<int>(std::ceil(raw - 1e-9)));
  h_out = horizon / steps;
  return steps;
}

double max_pairwise_distance(std::span<const double> x, std::size_t n,
                             std::size_t d) {
  double dx = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      dx = std::max(dx, distance(cblock(x, i, d), cblock(x, j, d)));
  return dx;
}

}  // namespace

void accelerations(const std::vector<TrajectoryHistory>& paths, double t,
                   std::span<const double> x, std::span<const double> v,
                   const InfluenceFunction& kernel, double c,
                   std::span<double> out, DelayAudit* audit) {
  require(!paths.empty(), ErrorCode::Usage, "accelerations: empty trajectory set");
  const std::size_t n = paths.size();
  const std::size_t d = static_cast<std::size_t>(paths[0].dim());
  require(x.size() == n * d && v.size() == n * d && out.size() == n * d,
          ErrorCode::Usage, "accelerations: state size mismatch");
  std::vector<CommittedPath> views;
  views.reserve(n);
  for (const auto& p : paths) views.push_back(CommittedPath{&p});
  std::vector<double> xs(d), vs(d);
  accel_core(views, t, x, v, kernel, c, out, audit, nullptr, xs, vs);
}

RunResult simulate(const FlockModel& model, const std::vector<InitialPath>& initial,
                   const SimulationOptions& opt) {
  int d_int = 0;
  double s = 0.0;
  validate_common(initial, d_int, s);
  const std::size_t n = initial.size();
  const std::size_t d = static_cast<std::size_t>(d_int);
  require(std::isfinite(model.c) && model.c > s, ErrorCode::Domain,
          "simulate: propagation speed c=" + std::to_string(model.c) +
              " must exceed the data speed bound s=" + std::to_string(s));
  require(opt.sample_every >= 1, ErrorCode::Usage,
          "simulate: sample_every must be >= 1");
  if (opt.prune)
    require(std::isfinite(opt.prune_margin) && opt.prune_margin >= 0.0,
            ErrorCode::Domain, "simulate: prune_margin must be nonnegative");

  double h = 0.0;
  const int steps = plan_steps(opt.horizon, opt.dt, h);

  // Anchor all positions to agent 1's start so the inner arithmetic sees only
  // relative coordinates; restored on output.
  const std::vector<double> anchor = initial[0].x_at_zero();
  std::vector<double> neg_anchor(anchor);
  for (double& a : neg_anchor) a = -a;

  std::vector<TrajectoryHistory> hist;
  hist.reserve(n);
  for (const auto& p : initial) hist.emplace_back(p.translated(neg_anchor), s);

  std::vector<StagePath> views;
  views.reserve(n);
  for (const auto& th : hist) views.emplace_back(&th);

  RunResult result;
  RunSummary& sum = result.summary;
  sum.steps = steps;
  sum.dt_effective = h;
  sum.horizon = opt.horizon;
  sum.speed_cap = s;

  // Flat state arrays seeded from the t = 0 knots.
  std::vector<double> x(n * d), v(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto xp = hist[i].knot_position(0);
    const auto vp = hist[i].knot_velocity(0);
    std::copy(xp.begin(), xp.end(), block(x, i, d).begin());
    std::copy(vp.begin(), vp.end(), block(v, i, d).begin());
    sum.max_speed = std::max(sum.max_speed, norm(vp));
  }

  if (opt.collect_diagnostics)
    result.diagnostics.rows.push_back(observe(hist, 0.0, model.kernel, model.c));

  std::vector<double> a1(n * d), a2(n * d), a3(n * d), a4(n * d);
  std::vector<double> x2(n * d), v2(n * d), x3(n * d), v3(n * d), x4(n * d),
      v4(n * d), xn(n * d), vn(n * d);
  std::vector<double> xs(d), vs(d);
  double dx_run_max = max_pairwise_distance(x, n, d);

  // One full stage sweep; with `corrector` set the extensions are left as the
  // caller configured them (the Hermite predicted segments), otherwise stage
  // k resolves delays against Taylor arcs frozen at stage k-1's acceleration.
  const auto run_stages = [&](double t0, double t1, bool corrector,
                              bool* looked_within) {
    const double th2 = t0 + 0.5 * h;
    if (!corrector) {
      for (auto& view : views) view.clear_extension();
      accel_core(views, t0, x, v, model.kernel, model.c, a1, &sum.delays,
                 looked_within, xs, vs);
    }
    // Stage 1's look-backs never pass t0, so a1 is identical in both passes.
    for (std::size_t idx = 0; idx < n * d; ++idx) {
      x2[idx] = x[idx] + 0.5 * h * v[idx];
      v2[idx] = v[idx] + 0.5 * h * a1[idx];
    }
    if (!corrector)
      for (std::size_t i = 0; i < n; ++i)
        views[i].set_taylor(cblock(x, i, d), cblock(v, i, d), cblock(a1, i, d));
    accel_core(views, th2, x2, v2, model.kernel, model.c, a2, &sum.delays,
               looked_within, xs, vs);
    for (std::size_t idx = 0; idx < n * d; ++idx) {
      x3[idx] = x[idx] + 0.5 * h * v2[idx];
      v3[idx] = v[idx] + 0.5 * h * a2[idx];
    }
    if (!corrector)
      for (std::size_t i = 0; i < n; ++i)
        views[i].set_taylor(cblock(x, i, d), cblock(v, i, d), cblock(a2, i, d));
    accel_core(views, th2, x3, v3, model.kernel, model.c, a3, &sum.delays,
               looked_within, xs, vs);
    for (std::size_t idx = 0; idx < n * d; ++idx) {
      x4[idx] = x[idx] + h * v3[idx];
      v4[idx] = v[idx] + h * a3[idx];
    }
    if (!corrector)
      for (std::size_t i = 0; i < n; ++i)
        views[i].set_taylor(cblock(x, i, d), cblock(v, i, d), cblock(a3, i, d));
    accel_core(views, t1, x4, v4, model.kernel, model.c, a4, &sum.delays,
               looked_within, xs, vs);
    for (std::size_t idx = 0; idx < n * d; ++idx) {
      xn[idx] = x[idx] + (h / 6.0) * (v[idx] + 2.0 * v2[idx] + 2.0 * v3[idx] +
                                      v4[idx]);
      vn[idx] = v[idx] + (h / 6.0) * (a1[idx] + 2.0 * a2[idx] + 2.0 * a3[idx] +
                                      a4[idx]);
    }
  };

  for (int step = 0; step < steps; ++step) {
    const double t0 = h * step;
    const double t1 = (step + 1 == steps) ? opt.horizon : h * (step + 1);

    bool looked_within = false;
    run_stages(t0, t1, false, &looked_within);
    if (looked_within) {
      for (std::size_t i = 0; i < n; ++i)
        views[i].set_hermite(t1, cblock(x, i, d), cblock(v, i, d),
                             cblock(xn, i, d), cblock(vn, i, d));
      run_stages(t0, t1, true, nullptr);
      sum.corrected_steps += 1;
    }

    double vmax = 0.0;
    for (std::size_t i = 0; i < n; ++i) vmax = std::max(vmax, norm(cblock(vn, i, d)));
    require(vmax <= s + kSpeedOvershootAbort, ErrorCode::Invariant,
            "simulate: velocity cap exceeded at t=" + std::to_string(t1) +
                ": max speed " + std::to_string(vmax) + " vs cap " +
                std::to_string(s) +
                " (step too large or a retarded-solve defect)");
    sum.max_speed = std::max(sum.max_speed, vmax);
    for (std::size_t i = 0; i < n; ++i)
      hist[i].append(t1, cblock(xn, i, d), cblock(vn, i, d));
    std::swap(x, xn);
    std::swap(v, vn);

    if (opt.collect_diagnostics &&
        ((step + 1) % opt.sample_every == 0 || step + 1 == steps))
      result.diagnostics.rows.push_back(observe(hist, t1, model.kernel, model.c));

    if (opt.prune) {
      dx_run_max = std::max(dx_run_max, max_pairwise_distance(x, n, d));
      const double lookback =
          (dx_run_max + std::max(3.0 * s - model.c, 0.0) * (opt.horizon - t1)) /
          (model.c - s);
      const double keep_from = t1 - lookback - opt.prune_margin;
      for (auto& th : hist) th.drop_before(keep_from);
    }
  }

  result.paths.reserve(n);
  for (const auto& th : hist) result.paths.push_back(th.translated(anchor));
  return result;
}

RunResult simulate_undelayed(const FlockModel& model,
                             const std::vector<InitialPath>& initial,
                             const SimulationOptions& opt) {
  int d_int = 0;
  double s = 0.0;
  validate_common(initial, d_int, s);
  const std::size_t n = initial.size();
  const std::size_t d = static_cast<std::size_t>(d_int);
  require(std::isfinite(model.c) && model.c > s, ErrorCode::Domain,
          "simulate_undelayed: propagation speed c must exceed the data speed "
          "bound even though the dynamics ignore it");
  require(opt.sample_every >= 1, ErrorCode::Usage,
          "simulate_undelayed: sample_every must be >= 1");

  double h = 0.0;
  const int steps = plan_steps(opt.horizon, opt.dt, h);

  const std::vector<double> anchor = initial[0].x_at_zero();
  std::vector<double> neg_anchor(anchor);
  for (double& a : neg_anchor) a = -a;

  std::vector<TrajectoryHistory> hist;
  hist.reserve(n);
  for (const auto& p : initial) hist.emplace_back(p.translated(neg_anchor), s);

  RunResult result;
  RunSummary& sum = result.summary;
  sum.steps = steps;
  sum.dt_effective = h;
  sum.horizon = opt.horizon;
  sum.speed_cap = s;

  std::vector<double> x(n * d), v(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto xp = hist[i].knot_position(0);
    const auto vp = hist[i].knot_velocity(0);
    std::copy(xp.begin(), xp.end(), block(x, i, d).begin());
    std::copy(vp.begin(), vp.end(), block(v, i, d).begin());
    sum.max_speed = std::max(sum.max_speed, norm(vp));
  }

  // Instantaneous interactions: no delays, so diagnostics rows carry D = 0
  // and taubar = 0, with psibar the worst same-time pair weight.
  const auto classical_accel = [&](std::span<const double> xq,
                                   std::span<const double> vq,
                                   std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto ai = block(out, i, d);
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double w = model.kernel(distance(cblock(xq, i, d), cblock(xq, j, d)));
        for (std::size_t k = 0; k < d; ++k)
          ai[k] += w * (vq[j * d + k] - vq[i * d + k]);
      }
      if (n > 1)
        for (std::size_t k = 0; k < d; ++k) ai[k] /= static_cast<double>(n - 1);
    }
  };

  const auto observe_row = [&](double t, std::span<const double> xq,
                               std::span<const double> vq) {
    DiagnosticsRow row;
    row.t = t;
    row.psibar = model.kernel(0.0);
    for (std::size_t i = 0; i < n; ++i) {
      row.Rv = std::max(row.Rv, norm(cblock(vq, i, d)));
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dij = distance(cblock(xq, i, d), cblock(xq, j, d));
        row.dX = std::max(row.dX, dij);
        row.dV = std::max(row.dV, distance(cblock(vq, i, d), cblock(vq, j, d)));
        row.psibar = std::min(row.psibar, model.kernel(dij));
      }
    }
    return row;
  };

  if (opt.collect_diagnostics)
    result.diagnostics.rows.push_back(observe_row(0.0, x, v));

  std::vector<double> a1(n * d), a2(n * d), a3(n * d), a4(n * d);
  std::vector<double> x2(n * d), v2(n * d), x3(n * d), v3(n * d), x4(n * d),
      v4(n * d), xn(n * d), vn(n * d);

  for (int step = 0; step < steps; ++step) {
    const double t1 = (step + 1 == steps) ? opt.horizon : h * (step + 1);
    classical_accel(x, v, a1);
    for (std::size_t idx = 0; idx < n * d; ++idx) {
      x2[idx] = x[idx] + 0.5 * h * v[idx];
      v2[idx] = v[idx] + 0.5 * h * a1[idx];
    }
    classical_accel(x2, v2, a2);
    for (std::size_t idx = 0; idx < n * d; ++idx) {
      x3[idx] = x[idx] + 0.5 * h * v2[idx];
      v3[idx] = v[idx] + 0.5 * h * a2[idx];
    }
    classical_accel(x3, v3, a3);
    for (std::size_t idx = 0; idx < n * d; ++idx) {
      x4[idx] = x[idx] + h * v3[idx];
      v4[idx] = v[idx] + h * a3[idx];
    }
    classical_accel(x4, v4, a4);
    for (std::size_t idx = 0; idx < n * d; ++idx) {
      xn[idx] = x[idx] + (h / 6.0) * (v[idx] + 2.0 * v2[idx] + 2.0 * v3[idx] +
                                      v4[idx]);
      vn[idx] = v[idx] + (h / 6.0) * (a1[idx] + 2.0 * a2[idx] + 2.0 * a3[idx] +
                                      a4[idx]);
    }

    double vmax = 0.0;
    for (std::size_t i = 0; i < n; ++i) vmax = std::max(vmax, norm(cblock(vn, i, d)));
    require(vmax <= s + kSpeedOvershootAbort, ErrorCode::Invariant,
            "simulate_undelayed: velocity cap exceeded at t=" +
                std::to_string(t1));
    sum.max_speed = std::max(sum.max_speed, vmax);
    for (std::size_t i = 0; i < n; ++i)
      hist[i].append(t1, cblock(xn, i, d), cblock(vn, i, d));
    std::swap(x, xn);
    std::swap(v, vn);

    if (opt.collect_diagnostics &&
        ((step + 1) % opt.sample_every == 0 || step + 1 == steps))
      result.diagnostics.rows.push_back(observe_row(t1, x, v));
  }

  result.paths.reserve(n);
  for (const auto& th : hist) result.paths.push_back(th.translated(anchor));
  return result;
}

PicardResult solve_picard(const FlockModel& model,
                          const std::vector<InitialPath>& initial,
                          const PicardOptions& opt) {
  int d_int = 0;
  double s = 0.0;
  validate_common(initial, d_int, s);
  const std::size_t n = initial.size();
  const std::size_t d = static_cast<std::size_t>(d_int);
  require(std::isfinite(model.c) && model.c > s, ErrorCode::Domain,
          "picard: propagation speed c must exceed the data speed bound");
  const double T = opt.horizon;
  require(std::isfinite(T) && T > 0.0, ErrorCode::Domain,
          "picard: horizon must be positive");
  require(opt.grid_cells >= 1, ErrorCode::Usage,
          "picard: need at least one grid cell");
  require(opt.max_sweeps >= 1, ErrorCode::Usage, "picard: max_sweeps must be >= 1");
  require(std::isfinite(opt.tolerance) && opt.tolerance >= 0.0, ErrorCode::Domain,
          "picard: tolerance must be nonnegative");

  double m = opt.band_m;
  if (m == 0.0) {
    // Tightest band keeping the iteration a self-map: T = (m - s)/(2m).
    require(T < 0.5, ErrorCode::Config,
            "picard: automatic band selection needs horizon < 1/2; pass band_m");
    m = (s > 0.0) ? s / (1.0 - 2.0 * T) : 0.5 * model.c;
  }
  require(std::isfinite(m) && s < m && m < model.c, ErrorCode::Config,
          "picard: speed band must satisfy s < m < c, got m=" + std::to_string(m));
  require(T <= (m - s) / (2.0 * m) + 1e-15, ErrorCode::Config,
          "picard: horizon exceeds the self-map bound (m-s)/(2m) = " +
              std::to_string((m - s) / (2.0 * m)));
  const double lpsi = model.kernel.lipschitz_bound();
  const double factor =
      2.0 * T *
      (1.0 + 2.0 * m * (lpsi + 1.0 / model.c) * T / (1.0 - m / model.c));
  require(factor < 1.0, ErrorCode::Config,
          "picard: analytic contraction factor " + std::to_string(factor) +
              " is not < 1; shorten the horizon");

  const int cells = opt.grid_cells;
  const std::size_t nodes = static_cast<std::size_t>(cells) + 1;
  std::vector<double> grid(nodes);
  for (std::size_t k = 0; k < nodes; ++k)
    grid[k] = T * (static_cast<double>(k) / cells);

  // Velocity iterate, node-major: w[(k*n + i)*d + comp]. Start from the
  // constant continuation of the t = 0 velocities.
  std::vector<double> w(nodes * n * d), w_next(nodes * n * d);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v0(d);
    initial[i].velocity(0.0, v0);
    for (std::size_t k = 0; k < nodes; ++k)
      std::copy(v0.begin(), v0.end(), block(w, k * n + i, d).begin());
  }

  // Builds the trajectories xi_i = x_i(0) + int_0^t w_i exactly: trapezoid
  // prefix sums are the exact integrals of piecewise-linear velocities, and
  // the knot interpolation reproduces the resulting piecewise-quadratic
  // positions exactly (cubic Hermite is exact on quadratics).
  const auto build_histories = [&](const std::vector<double>& vel) {
    std::vector<TrajectoryHistory> hs;
    hs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      TrajectoryHistory th(initial[i], m);
      std::vector<double> pos = initial[i].x_at_zero();
      for (std::size_t k = 1; k < nodes; ++k) {
        const double hk = grid[k] - grid[k - 1];
        const auto va = cblock(vel, (k - 1) * n + i, d);
        const auto vb = cblock(vel, k * n + i, d);
        for (std::size_t comp = 0; comp < d; ++comp)
          pos[comp] += 0.5 * hk * (va[comp] + vb[comp]);
        th.append(grid[k], pos, vb);
      }
      hs.push_back(std::move(th));
    }
    return hs;
  };

  PicardResult res;
  res.band_m = m;
  res.analytic_factor = factor;
  res.grid_h = T / cells;

  std::vector<double> integrand(nodes * n * d);
  std::vector<double> xk(n * d), vk(n * d);
  int rising = 0;
  double prev_delta = std::numeric_limits<double>::infinity();

  for (int sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
    const auto hs = build_histories(w);
    for (std::size_t k = 0; k < nodes; ++k) {
      for (std::size_t i = 0; i < n; ++i) {
        const auto xp = hs[i].knot_position(k);
        std::copy(xp.begin(), xp.end(), block(xk, i, d).begin());
        std::copy(cblock(w, k * n + i, d).begin(),
                  cblock(w, k * n + i, d).end(), block(vk, i, d).begin());
      }
      accelerations(hs, grid[k], xk, vk, model.kernel, model.c,
                    std::span<double>(integrand).subspan(k * n * d, n * d),
                    nullptr);
    }

    // New iterate: trapezoid accumulation from the pinned t = 0 values.
    std::copy(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(n * d),
              w_next.begin());
    for (std::size_t k = 1; k < nodes; ++k) {
      const double hk = grid[k] - grid[k - 1];
      for (std::size_t idx = 0; idx < n * d; ++idx)
        w_next[k * n * d + idx] =
            w_next[(k - 1) * n * d + idx] +
            0.5 * hk *
                (integrand[(k - 1) * n * d + idx] + integrand[k * n * d + idx]);
    }

    double delta = 0.0;
    for (std::size_t k = 0; k < nodes; ++k)
      for (std::size_t i = 0; i < n; ++i)
        delta = std::max(delta, distance(cblock(w_next, k * n + i, d),
                                         cblock(w, k * n + i, d)));
    res.sweep_deltas.push_back(delta);
    std::swap(w, w_next);
    res.sweeps = sweep;
    if (delta <= opt.tolerance) {
      res.converged = true;
      break;
    }
    if (delta > prev_delta && delta > 1e-14) {
      rising += 1;
      require(rising < 3, ErrorCode::Config,
              "picard: iteration expanded over three consecutive sweeps; "
              "shorten the horizon");
    } else {
      rising = 0;
    }
    prev_delta = delta;
  }

  res.paths = build_histories(w);
  return res;
}

namespace {

double final_state_gap(const RunResult& a, const RunResult& b) {
  double gap = 0.0;
  for (std::size_t i = 0; i < a.paths.size(); ++i) {
    const std::size_t ka = a.paths[i].knot_count() - 1;
    const std::size_t kb = b.paths[i].knot_count() - 1;
    gap = std::max(gap, distance(a.paths[i].knot_position(ka),
                                 b.paths[i].knot_position(kb)) +
                            distance(a.paths[i].knot_velocity(ka),
                                     b.paths[i].knot_velocity(kb)));
  }
  return gap;
}

}  // namespace

OrderEstimate measure_order(const FlockModel& model,
                            const std::vector<InitialPath>& initial,
                            double horizon, double dt) {
  SimulationOptions opt;
  opt.horizon = horizon;
  opt.collect_diagnostics = false;
  opt.dt = dt;
  const RunResult coarse = simulate(model, initial, opt);
  opt.dt = dt / 2.0;
  const RunResult mid = simulate(model, initial, opt);
  opt.dt = dt / 4.0;
  const RunResult fine = simulate(model, initial, opt);

  OrderEstimate est;
  est.diff_coarse = final_state_gap(coarse, mid);
  est.diff_fine = final_state_gap(mid, fine);
  if (est.diff_fine <= 0.0) {
    est.order = est.diff_coarse <= 0.0 ? 0.0 : 99.0;
  } else {
    est.order = std::log2(est.diff_coarse / est.diff_fine);
  }
  return est;
}

StateGap knot_state_gap(const RunResult& a, const RunResult& b) {
  require(a.paths.size() == b.paths.size(), ErrorCode::Usage,
          "knot_state_gap: agent counts differ");
  require(!a.paths.empty(), ErrorCode::Usage, "knot_state_gap: empty runs");
  StateGap gap;
  for (std::size_t i = 0; i < a.paths.size(); ++i) {
    const auto& pa = a.paths[i];
    const auto& pb = b.paths[i];
    require(pa.knot_count() == pb.knot_count(), ErrorCode::Usage,
            "knot_state_gap: knot grids differ in size");
    for (std::size_t k = 0; k < pa.knot_count(); ++k) {
      const double ta = pa.knot_time(k);
      const double tb = pb.knot_time(k);
      require(std::abs(ta - tb) <= 1e-12 * std::max(1.0, std::abs(ta)),
              ErrorCode::Usage, "knot_state_gap: knot grids differ in time");
      gap.position_sup = std::max(
          gap.position_sup, distance(pa.knot_position(k), pb.knot_position(k)));
      gap.velocity_sup = std::max(
          gap.velocity_sup, distance(pa.knot_velocity(k), pb.knot_velocity(k)));
    }
  }
  return gap;
}

}  // namespace flock
