// Retarded-time solver: given an observation point z at time t and a source
// trajectory gamma moving no faster than s < c, finds the unique tau >= 0 with
//
//     c * tau = | z - gamma(t - tau) |.
//
// The residual g(tau) = c*tau - |z - gamma(t - tau)| is strictly increasing
// with slope in [c - s, c + s], so a Newton iteration whose slope estimate is
// clamped to that band converges globally once safeguarded by the bracket
// [0, |z - gamma(t)| / (c - s)]; candidates leaving the bracket are rejected
// and after three consecutive rejections the solver falls back to bisection.
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "flocksim/error.hpp"
#include "flocksim/history.hpp"
#include "flocksim/util.hpp"

namespace flock {

struct RetardedOptions {
  // Absolute residual target is tolerance_scale * max(1, c).
  double tolerance_scale = 1e-12;
  int max_iterations = 200;
};

// Solver result when scratch storage is supplied by the caller.
struct RetardedRoot {
  double tau = 0.0;           // the delay
  double distance = 0.0;      // |z - gamma(t - tau)| = c * tau up to the residual
  double distance_now = 0.0;  // |z - gamma(t)|, bounds tau via tau <= dist_now/(c-s)
  double residual = 0.0;      // |c*tau - distance| at the accepted root
  int iterations = 0;
};

// Full sample including the retarded position and velocity.
struct RetardedSample {
  double tau = 0.0;
  std::vector<double> x_ret;
  std::vector<double> v_ret;
  double distance_now = 0.0;
  double residual = 0.0;
  int iterations = 0;
};

// Core solver. `Path` must provide dim(), speed_cap(), position(t, out) and
// velocity(t, out). On return, x_scratch holds gamma(t - tau). The path must
// be evaluable on [t - |z - gamma(t)|/(c - s), t]; evaluations outside the
// covered window surface as underflow errors from the path itself.
template <class Path>
RetardedRoot solve_retarded(const Path& gamma, double t, std::span<const double> z,
                            double c, std::span<double> x_scratch,
                            std::span<double> v_scratch,
                            const RetardedOptions& options = {}) {
  const int d = gamma.dim();
  require(static_cast<int>(z.size()) == d, ErrorCode::Usage,
          "retarded solve: dimension mismatch");
  require(std::isfinite(t), ErrorCode::Domain, "retarded solve: non-finite time");
  require(all_finite(z), ErrorCode::Domain, "retarded solve: non-finite point");
  const double s = gamma.speed_cap();
  require(std::isfinite(c) && c > s, ErrorCode::Domain,
          "retarded solve: needs signal speed c > path speed cap (c=" +
              std::to_string(c) + ", cap=" + std::to_string(s) + ")");

  const double tol = options.tolerance_scale * std::max(1.0, c);

  auto eval_distance = [&](double tau) {
    gamma.position(t - tau, x_scratch);
    return distance(z, x_scratch);
  };

  RetardedRoot root;
  const double d0 = eval_distance(0.0);
  root.distance_now = d0;
  if (d0 <= tol / (1.0 + s / c)) {
    // Observation point sits on the current position: tau = d0 / c closes the
    // equation to within tolerance immediately.
    root.tau = d0 / c;
    root.distance = eval_distance(root.tau);
    root.residual = std::abs(c * root.tau - root.distance);
    root.iterations = 1;
    return root;
  }

  // g(0) = -d0 <= 0. g is >= 0 at d0/(c-s); expand defensively in case the
  // path slightly overshoots its nominal speed cap (predicted segments).
  double lo = 0.0;
  double hi = d0 / (c - s) * (1.0 + 1e-12);
  double g_hi = c * hi - eval_distance(hi);
  int evals = 2;
  while (g_hi < 0.0 && evals < options.max_iterations) {
    lo = hi;
    hi *= 2.0;
    g_hi = c * hi - eval_distance(hi);
    ++evals;
  }
  require(g_hi >= 0.0, ErrorCode::Invariant,
          "retarded solve: failed to bracket the delay (path faster than its cap?)");

  double tau = std::clamp(d0 / c, lo, hi);
  int rejected_in_a_row = 0;
  bool bisect_only = false;

  for (; evals < options.max_iterations; ++evals) {
    const double dist = eval_distance(tau);
    const double g = c * tau - dist;
    if (std::abs(g) <= tol) {
      root.tau = tau;
      root.distance = dist;
      root.residual = std::abs(g);
      root.iterations = evals + 1;
      return root;
    }
    if (g < 0.0) {
      lo = tau;
    } else {
      hi = tau;
    }

    double next;
    if (bisect_only) {
      next = 0.5 * (lo + hi);
    } else {
      // Newton step with the slope estimate clamped into [c - s, c + s];
      // g'(tau) = c - (z - gamma) . gamma_dot / |z - gamma|.
      double slope = c;
      if (dist > 0.0) {
        gamma.velocity(t - tau, v_scratch);
        double along = 0.0;
        for (int j = 0; j < d; ++j) along += (z[j] - x_scratch[j]) * v_scratch[j];
        slope = c - along / dist;
      }
      slope = std::clamp(slope, c - s, c + s);
      next = tau - g / slope;
      if (!(next > lo && next < hi)) {
        ++rejected_in_a_row;
        if (rejected_in_a_row >= 3) bisect_only = true;
        next = 0.5 * (lo + hi);
      } else {
        rejected_in_a_row = 0;
      }
    }
    tau = next;
  }
  raise(ErrorCode::Invariant,
        "retarded solve: residual target not reached within iteration budget");
}

// Convenience wrapper returning the retarded state as owned vectors.
template <class Path>
RetardedSample retarded_time(const Path& gamma, double t, std::span<const double> z,
                             double c, const RetardedOptions& options = {}) {
  RetardedSample sample;
  sample.x_ret.resize(gamma.dim());
  sample.v_ret.resize(gamma.dim());
  const RetardedRoot root =
      solve_retarded(gamma, t, z, c, sample.x_ret, sample.v_ret, options);
  sample.tau = root.tau;
  sample.distance_now = root.distance_now;
  sample.residual = root.residual;
  sample.iterations = root.iterations;
  gamma.velocity(t - root.tau, sample.v_ret);
  return sample;
}

}  // namespace flock
