#include <cmath>
#include <vector>

#include "doctest.h"
#include "flocksim/dynamics.hpp"
#include "flocksim/error.hpp"
#include "flocksim/history.hpp"
#include "flocksim/influence.hpp"
#include "flocksim/util.hpp"

using namespace flock;

namespace {

std::vector<InitialPath> two_agents_1d(double x0, double v0, double x1, double v1) {
  std::vector<InitialPath> out;
  out.push_back(InitialPath::constant_velocity({x0}, {v0}));
  out.push_back(InitialPath::constant_velocity({x1}, {v1}));
  return out;
}

}  // namespace

TEST_CASE("hand-computed accelerations for two constant-velocity agents") {
  // Agent 0 at x=0 moving +0.3; agent 1 at x=2 moving +0.1; c=10, psi == 1.
  // Delays: c*tau01 = 2 - 0.1 tau01 -> tau01 = 2/10.1;
  //         c*tau10 = 2 + 0.3 tau10 -> tau10 = 2/9.7.
  // With psi == 1 the accelerations are the retarded velocity differences.
  const auto initial = two_agents_1d(0.0, 0.3, 2.0, 0.1);
  std::vector<TrajectoryHistory> paths;
  for (const auto& p : initial) paths.emplace_back(p, 0.3);

  const std::vector<double> x = {0.0, 2.0};
  const std::vector<double> v = {0.3, 0.1};
  std::vector<double> acc(2);
  DelayAudit audit;
  accelerations(paths, 0.0, x, v, InfluenceFunction::constant(1.0), 10.0,
                std::span<double>(acc), &audit);

  CHECK(acc[0] == doctest::Approx(-0.2).epsilon(1e-12));
  CHECK(acc[1] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(audit.solves == 2);
  CHECK(audit.max_residual <= 1e-10);

  // The delays themselves, re-derived through the audit bound: both below
  // distance/(c-s) with s = 0.3.
  CHECK(audit.max_delay_slack <= 1e-12);
}

TEST_CASE("power-law weights scale the hand-computed accelerations") {
  // Same geometry, beta = 0.5. Delay for agent 0 observing agent 1:
  // tau = 2/10.1, distance r = c*tau = 20/10.1; weight (1+r^2)^(-1/2).
  const auto initial = two_agents_1d(0.0, 0.3, 2.0, 0.1);
  std::vector<TrajectoryHistory> paths;
  for (const auto& p : initial) paths.emplace_back(p, 0.3);

  const std::vector<double> x = {0.0, 2.0};
  const std::vector<double> v = {0.3, 0.1};
  std::vector<double> acc(2);
  accelerations(paths, 0.0, x, v, InfluenceFunction::power_law(0.5), 10.0,
                std::span<double>(acc));
  const double r01 = 10.0 * (2.0 / 10.1);
  const double w01 = 1.0 / std::sqrt(1.0 + r01 * r01);
  CHECK(acc[0] == doctest::Approx(-0.2 * w01).epsilon(1e-11));
}

TEST_CASE("undelayed two-agent system contracts at the exact rate") {
  // For N=2 and psi == 1: d(v0-v1)/dt = -2 (v0-v1), so dV(t) = dV(0) e^{-2t}.
  const auto initial = two_agents_1d(0.0, 0.2, 1.0, -0.2);
  FlockModel model;
  model.c = 100.0;
  model.kernel = InfluenceFunction::constant(1.0);
  SimulationOptions opt;
  opt.dt = 0.01;
  opt.horizon = 1.0;
  const RunResult run = simulate_undelayed(model, initial, opt);
  REQUIRE(!run.diagnostics.rows.empty());
  const DiagnosticsRow& last = run.diagnostics.rows.back();
  CHECK(last.t == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(last.dV == doctest::Approx(0.4 * std::exp(-2.0)).epsilon(1e-9));
}

TEST_CASE("delayed runs respect the velocity cap and delay window") {
  const auto initial = two_agents_1d(0.0, 0.5, 3.0, -0.5);
  FlockModel model;
  model.c = 2.0;
  model.kernel = InfluenceFunction::power_law(0.25);
  SimulationOptions opt;
  opt.dt = 0.02;
  opt.horizon = 4.0;
  const RunResult run = simulate(model, initial, opt);
  CHECK(run.summary.max_speed <= 0.5 + 1e-7);
  CHECK(run.summary.delays.max_delay_slack <= 1e-10);
  CHECK(run.summary.delays.max_residual <= 1e-9);
  CHECK(run.summary.steps == 200);
  // Velocity spread must have decayed (psi > 0 uniformly on bounded sets).
  CHECK(run.diagnostics.rows.back().dV < run.diagnostics.rows.front().dV);
}

TEST_CASE("translation equivariance is bit-exact for velocities") {
  const auto base = two_agents_1d(0.0, 0.4, 2.0, -0.3);
  std::vector<InitialPath> shifted;
  const std::vector<double> offset = {512.0};  // exactly representable
  for (const auto& p : base) shifted.push_back(p.translated(offset));

  FlockModel model;
  model.c = 3.0;
  model.kernel = InfluenceFunction::power_law(0.5);
  SimulationOptions opt;
  opt.dt = 0.05;
  opt.horizon = 2.0;
  const RunResult a = simulate(model, base, opt);
  const RunResult b = simulate(model, shifted, opt);
  REQUIRE(a.paths.size() == b.paths.size());
  bool velocities_identical = true;
  bool positions_shifted = true;
  for (std::size_t i = 0; i < a.paths.size(); ++i) {
    REQUIRE(a.paths[i].knot_count() == b.paths[i].knot_count());
    for (std::size_t k = 0; k < a.paths[i].knot_count(); ++k) {
      if (a.paths[i].knot_velocity(k)[0] != b.paths[i].knot_velocity(k)[0]) {
        velocities_identical = false;
      }
      const double shift = b.paths[i].knot_position(k)[0] - a.paths[i].knot_position(k)[0];
      if (std::abs(shift - 512.0) > 1e-12 * 512.0) positions_shifted = false;
    }
  }
  CHECK(velocities_identical);
  CHECK(positions_shifted);
}

TEST_CASE("aligned agents are an equilibrium") {
  std::vector<InitialPath> initial;
  initial.push_back(InitialPath::constant_velocity({0.0, 0.0}, {0.3, 0.1}));
  initial.push_back(InitialPath::constant_velocity({1.0, 1.0}, {0.3, 0.1}));
  initial.push_back(InitialPath::constant_velocity({-1.0, 2.0}, {0.3, 0.1}));
  FlockModel model;
  model.c = 1.0;
  model.kernel = InfluenceFunction::power_law(0.5);
  SimulationOptions opt;
  opt.dt = 0.1;
  opt.horizon = 2.0;
  const RunResult run = simulate(model, initial, opt);
  for (const DiagnosticsRow& row : run.diagnostics.rows) {
    CHECK(row.dV <= 1e-14);
    CHECK(row.D <= 1e-14);
  }
  // Velocities remain exactly the initial ones (all accelerations vanish).
  for (const auto& path : run.paths) {
    CHECK(path.knot_velocity(path.knot_count() - 1)[0] == 0.3);
    CHECK(path.knot_velocity(path.knot_count() - 1)[1] == 0.1);
  }
}

TEST_CASE("single agent moves in a straight line") {
  std::vector<InitialPath> initial;
  initial.push_back(InitialPath::constant_velocity({1.0}, {0.25}));
  FlockModel model;
  model.c = 1.0;
  SimulationOptions opt;
  opt.dt = 0.1;
  opt.horizon = 1.0;
  const RunResult run = simulate(model, initial, opt);
  const auto& p = run.paths.front();
  CHECK(p.knot_position(p.knot_count() - 1)[0] == doctest::Approx(1.25).epsilon(1e-14));
  CHECK(run.summary.delays.solves == 0);
}

TEST_CASE("horizon zero returns initial diagnostics only") {
  const auto initial = two_agents_1d(0.0, 0.2, 1.0, -0.2);
  FlockModel model;
  model.c = 5.0;
  SimulationOptions opt;
  opt.dt = 0.01;
  opt.horizon = 0.0;
  const RunResult run = simulate(model, initial, opt);
  CHECK(run.summary.steps == 0);
  REQUIRE(run.diagnostics.rows.size() == 1);
  CHECK(run.diagnostics.rows.front().t == 0.0);
  CHECK(run.diagnostics.rows.front().dX == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("picard window agrees with RK4 and contracts as proven") {
  std::vector<InitialPath> initial;
  initial.push_back(InitialPath::constant_velocity({0.0, 0.0}, {0.3, 0.0}));
  initial.push_back(InitialPath::constant_velocity({1.5, 0.5}, {-0.2, 0.1}));
  initial.push_back(InitialPath::constant_velocity({0.5, -1.0}, {0.0, -0.3}));
  FlockModel model;
  model.c = 2.0;
  model.kernel = InfluenceFunction::power_law(0.5);

  PicardOptions popt;
  popt.horizon = 0.05;
  popt.grid_cells = 64;
  const PicardResult fp = solve_picard(model, initial, popt);
  CHECK(fp.converged);
  CHECK(fp.analytic_factor < 1.0);

  // Sweep-to-sweep contraction never exceeds the analytic factor (after the
  // first sweep, which measures the distance from the seed, ratios apply).
  for (std::size_t k = 2; k + 1 < fp.sweep_deltas.size(); ++k) {
    if (fp.sweep_deltas[k] > 1e-13 && fp.sweep_deltas[k + 1] > 1e-15) {
      CHECK(fp.sweep_deltas[k + 1] <=
            fp.analytic_factor * fp.sweep_deltas[k] + 1e-12);
    }
  }

  SimulationOptions opt;
  opt.dt = popt.horizon / popt.grid_cells;
  opt.horizon = popt.horizon;
  const RunResult rk = simulate(model, initial, opt);

  // Evaluate both solutions on the shared grid; they must agree to the
  // combined scheme accuracy (grid^2 + dt^4 scale).
  double sup = 0.0;
  std::vector<double> a(2), b(2);
  for (std::size_t i = 0; i < initial.size(); ++i) {
    for (std::size_t k = 0; k < rk.paths[i].knot_count(); ++k) {
      const double t = rk.paths[i].knot_time(k);
      rk.paths[i].position(t, std::span<double>(a));
      fp.paths[i].position(t, std::span<double>(b));
      sup = std::max(sup, distance(std::span<const double>(a), std::span<const double>(b)));
      rk.paths[i].velocity(t, std::span<double>(a));
      fp.paths[i].velocity(t, std::span<double>(b));
      sup = std::max(sup, distance(std::span<const double>(a), std::span<const double>(b)));
    }
  }
  const double h = popt.horizon / popt.grid_cells;
  CHECK(sup <= 10.0 * (h * h + std::pow(opt.dt, 4)));
}

TEST_CASE("picard refuses horizons outside the contraction regime") {
  const auto initial = two_agents_1d(0.0, 0.5, 1.0, -0.5);
  FlockModel model;
  model.c = 1.2;
  PicardOptions popt;
  popt.horizon = 2.0;  // way past the contraction window for s/c = 0.42
  CHECK_THROWS_AS(solve_picard(model, initial, popt), Error);
}

TEST_CASE("measured convergence order of the integrator is at least three") {
  // Separation 6 with c = 4 keeps tau(t) > 1 on the whole horizon, so the
  // retarded arguments stay inside the prescribed smooth history and the
  // triplet sees the integrator's asymptotic order (the inherited
  // acceleration kink at t = 0 never crosses the retarded argument).
  const auto initial = two_agents_1d(0.0, 0.4, 6.0, -0.4);
  FlockModel model;
  model.c = 4.0;
  model.kernel = InfluenceFunction::power_law(0.5);
  const OrderEstimate est = measure_order(model, initial, 1.0, 0.05);
  CHECK(est.order >= 3.0);
  CHECK(est.diff_coarse > est.diff_fine);
}

TEST_CASE("knot_state_gap is zero between identical runs") {
  const auto initial = two_agents_1d(0.0, 0.3, 1.0, -0.1);
  FlockModel model;
  model.c = 2.0;
  SimulationOptions opt;
  opt.dt = 0.05;
  opt.horizon = 1.0;
  const RunResult a = simulate(model, initial, opt);
  const RunResult b = simulate(model, initial, opt);
  const StateGap gap = knot_state_gap(a, b);
  CHECK(gap.position_sup == 0.0);
  CHECK(gap.velocity_sup == 0.0);
}

TEST_CASE("signal speed at or below the group speed bound is rejected") {
  const auto initial = two_agents_1d(0.0, 0.5, 1.0, -0.5);
  FlockModel model;
  model.c = 0.5;
  SimulationOptions opt;
  CHECK_THROWS_AS(simulate(model, initial, opt), Error);
}
