#include "flocksim/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "flocksim/delay.hpp"
#include "flocksim/error.hpp"
#include "flocksim/util.hpp"

namespace flock {

DiagnosticsRow observe(const std::vector<TrajectoryHistory>& paths, double t,
                       const InfluenceFunction& kernel, double c) {
  require(!paths.empty(), ErrorCode::Usage, "observe: empty trajectory set");
  const std::size_t n = paths.size();
  const std::size_t d = static_cast<std::size_t>(paths[0].dim());
  for (const auto& p : paths) {
    require(static_cast<std::size_t>(p.dim()) == d, ErrorCode::Usage,
            "observe: trajectories disagree on dimension");
    require(c > p.speed_cap(), ErrorCode::Domain,
            "observe: propagation speed must exceed every speed cap");
  }

  DiagnosticsRow row;
  row.t = t;

  std::vector<double> x(n * d), v(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    paths[i].position(t, block(x, i, d));
    paths[i].velocity(t, block(v, i, d));
  }

  for (std::size_t i = 0; i < n; ++i) {
    row.Rv = std::max(row.Rv, norm(cblock(v, i, d)));
    for (std::size_t j = i + 1; j < n; ++j) {
      row.dX = std::max(row.dX, distance(cblock(x, i, d), cblock(x, j, d)));
      row.dV = std::max(row.dV, distance(cblock(v, i, d), cblock(v, j, d)));
    }
  }

  // Pairwise retarded quantities. The self pair contributes psi(0) to psibar
  // and nothing to the drift or the delay.
  row.psibar = kernel(0.0);
  std::vector<double> x_ret(d), v_ret(d), diff(d);
  double drift_max = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double drift_i = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const RetardedRoot root =
          solve_retarded(paths[j], t, cblock(x, i, d), c, x_ret, v_ret);
      paths[j].velocity(t - root.tau, v_ret);
      row.taubar = std::max(row.taubar, root.tau);
      const double w = kernel(root.distance);
      row.psibar = std::min(row.psibar, w);
      for (std::size_t k = 0; k < d; ++k) diff[k] = v_ret[k] - v[j * d + k];
      drift_i += w * norm(diff);
    }
    if (n > 1) drift_i /= static_cast<double>(n - 1);
    drift_max = std::max(drift_max, drift_i);
  }
  row.D = drift_max;
  return row;
}

DecayCheck check_decay(const DiagnosticsSeries& series, double eta, double sigma,
                       double kappa, double slack) {
  require(std::isfinite(eta) && eta > 0.0, ErrorCode::Domain,
          "check_decay: eta must be positive and finite");
  require(std::isfinite(sigma) && sigma > 0.0, ErrorCode::Domain,
          "check_decay: sigma must be positive and finite");
  require(std::isfinite(kappa) && kappa > 0.0, ErrorCode::Domain,
          "check_decay: kappa must be positive and finite");
  require(std::isfinite(slack) && slack >= 0.0, ErrorCode::Domain,
          "check_decay: slack must be nonnegative and finite");
  require(!series.rows.empty(), ErrorCode::Usage, "check_decay: empty series");
  require(sigma > series.rows.front().dV, ErrorCode::Usage,
          "check_decay: needs sigma > dV(0) strictly (sigma=" +
              std::to_string(sigma) + ", dV(0)=" +
              std::to_string(series.rows.front().dV) + ")");
  require(kappa > series.rows.front().D, ErrorCode::Usage,
          "check_decay: needs kappa > D(0) strictly (kappa=" +
              std::to_string(kappa) + ", D(0)=" +
              std::to_string(series.rows.front().D) + ")");

  DecayCheck out;
  out.worst_velocity_margin = std::numeric_limits<double>::infinity();
  out.worst_drift_margin = std::numeric_limits<double>::infinity();
  out.worst_spread_margin = std::numeric_limits<double>::infinity();
  const double dx0 = series.rows.front().dX;
  const double spread_bound = dx0 + sigma / eta + slack;

  for (const auto& row : series.rows) {
    const double decay = std::exp(-eta * row.t);
    const double v_bound = sigma * decay + slack;
    const double d_bound = kappa * decay + slack;
    out.worst_velocity_margin = std::min(out.worst_velocity_margin, v_bound - row.dV);
    out.worst_drift_margin = std::min(out.worst_drift_margin, d_bound - row.D);
    out.worst_spread_margin = std::min(out.worst_spread_margin, spread_bound - row.dX);
    if (out.ok && row.dV >= v_bound) {
      out.ok = false;
      out.first_violation_time = row.t;
      out.violated_field = "dV";
    }
    if (out.ok && row.D >= d_bound) {
      out.ok = false;
      out.first_violation_time = row.t;
      out.violated_field = "D";
    }
    if (out.ok && row.dX >= spread_bound) {
      out.ok = false;
      out.first_violation_time = row.t;
      out.violated_field = "dX";
    }
  }
  return out;
}

namespace {

double field_value(const DiagnosticsRow& row, DecayField field) {
  switch (field) {
    case DecayField::PositionSpread: return row.dX;
    case DecayField::VelocitySpread: return row.dV;
    case DecayField::MaxSpeed: return row.Rv;
    case DecayField::RetardationDrift: return row.D;
  }
  raise(ErrorCode::Usage, "fit_decay_rate: unknown field");
}

}  // namespace

DecayFit fit_decay_rate(const DiagnosticsSeries& series, DecayField field,
                        double floor) {
  require(std::isfinite(floor) && floor > 0.0, ErrorCode::Domain,
          "fit_decay_rate: floor must be positive and finite");
  std::vector<double> ts, logs;
  for (const auto& row : series.rows) {
    const double y = field_value(row, field);
    if (y > floor) {
      ts.push_back(row.t);
      logs.push_back(std::log(y));
    }
  }
  DecayFit fit;
  fit.points_used = static_cast<int>(ts.size());
  if (ts.size() < 2) return fit;  // undefined: not enough data above the floor

  const double n = static_cast<double>(ts.size());
  double t_mean = 0.0, y_mean = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    t_mean += ts[i];
    y_mean += logs[i];
  }
  t_mean /= n;
  y_mean /= n;
  double stt = 0.0, sty = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double dt = ts[i] - t_mean;
    const double dy = logs[i] - y_mean;
    stt += dt * dt;
    sty += dt * dy;
    syy += dy * dy;
  }
  if (stt <= 0.0) return fit;  // undefined: all samples share one time

  fit.defined = true;
  fit.rate = sty / stt;
  const double ss_res = syy - sty * sty / stt;
  fit.r_squared = (syy > 0.0) ? std::max(0.0, 1.0 - ss_res / syy) : 1.0;
  return fit;
}

}  // namespace flock
