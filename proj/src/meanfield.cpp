#include "flocksim/meanfield.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "flocksim/assignment.hpp"
#include "flocksim/error.hpp"
#include "flocksim/util.hpp"

namespace flock {
namespace {

constexpr int kMaxReplicatedSize = 2048;

void validate_ensemble(const TrajectoryEnsemble& e, const char* who) {
  require(!e.atoms.empty(), ErrorCode::Usage,
          std::string(who) + ": ensemble needs at least one atom");
  require(std::isfinite(e.horizon) && e.horizon >= 0.0, ErrorCode::Usage,
          std::string(who) + ": horizon must be finite and nonnegative");
  require(std::isfinite(e.init_window) && e.init_window >= 0.0, ErrorCode::Usage,
          std::string(who) + ": init window must be finite and nonnegative");
  const int d = e.atoms.front().dim();
  const double cap = e.atoms.front().speed_cap();
  for (std::size_t k = 0; k < e.atoms.size(); ++k) {
    const TrajectoryHistory& atom = e.atoms[k];
    require(atom.dim() == d, ErrorCode::Usage,
            std::string(who) + ": atom " + std::to_string(k) +
                " has mismatched dimension");
    require(atom.speed_cap() == cap, ErrorCode::Usage,
            std::string(who) + ": atom " + std::to_string(k) +
                " has mismatched speed cap");
    require(atom.end_time() >= e.horizon, ErrorCode::Usage,
            std::string(who) + ": atom " + std::to_string(k) +
                " ends before the ensemble horizon");
    require(atom.start_time() <= -e.init_window, ErrorCode::Usage,
            std::string(who) + ": atom " + std::to_string(k) +
                " is pruned inside the evaluation window");
  }
}

NormDistance atom_norm_distance(const TrajectoryHistory& a,
                                const TrajectoryHistory& b, double init_window,
                                double horizon) {
  NormDistance out;
  const std::span<const double> tail_a = a.initial().tail_velocity();
  const std::span<const double> tail_b = b.initial().tail_velocity();
  for (std::size_t k = 0; k < tail_a.size(); ++k) {
    if (tail_a[k] != tail_b[k]) {
      out.infinite = true;
      out.value = std::numeric_limits<double>::infinity();
      return out;
    }
  }
  // Equal tail velocities: before every breakpoint and the window edge the
  // difference is a constant vector, so the tail supremum is attained at
  // t_low and the grid (which includes t_low) captures it exactly.
  const double t_low = std::min(
      {-init_window, a.initial().tail_start(), b.initial().tail_start()});
  const PathGap gap = sup_norm_gap(a, b, t_low, horizon);
  out.value = gap.position_sup + gap.velocity_sup;
  out.error_bound = gap.position_error_bound + gap.velocity_error_bound;
  return out;
}

}  // namespace

TrajectoryEnsemble ensemble_from_paths(std::vector<TrajectoryHistory> atoms,
                                       double horizon, double init_window) {
  TrajectoryEnsemble e;
  e.atoms = std::move(atoms);
  e.horizon = horizon;
  e.init_window = init_window;
  validate_ensemble(e, "ensemble_from_paths");
  return e;
}

NormDistance ensemble_norm_distance(const TrajectoryEnsemble& a, std::size_t i,
                                    const TrajectoryEnsemble& b, std::size_t j) {
  validate_ensemble(a, "ensemble_norm_distance");
  validate_ensemble(b, "ensemble_norm_distance");
  require(i < a.atoms.size() && j < b.atoms.size(), ErrorCode::Usage,
          "ensemble_norm_distance: atom index out of range");
  require(a.horizon == b.horizon, ErrorCode::Usage,
          "ensemble_norm_distance: ensembles have different horizons");
  require(a.atoms[i].dim() == b.atoms[j].dim(), ErrorCode::Usage,
          "ensemble_norm_distance: mismatched dimensions");
  const double window = std::max(a.init_window, b.init_window);
  return atom_norm_distance(a.atoms[i], b.atoms[j], window, a.horizon);
}

MkrDistance mkr_distance(const TrajectoryEnsemble& a, const TrajectoryEnsemble& b) {
  validate_ensemble(a, "mkr_distance");
  validate_ensemble(b, "mkr_distance");
  require(a.horizon == b.horizon, ErrorCode::Usage,
          "mkr_distance: ensembles have different horizons");
  require(a.atoms.front().dim() == b.atoms.front().dim(), ErrorCode::Usage,
          "mkr_distance: mismatched dimensions");

  const int n = static_cast<int>(a.atoms.size());
  const int m = static_cast<int>(b.atoms.size());
  const double window = std::max(a.init_window, b.init_window);
  const double horizon = a.horizon;

  std::vector<NormDistance> costs(static_cast<std::size_t>(n) * m);
  parallel_for(n * m, [&](int idx) {
    const int i = idx / m;
    const int j = idx % m;
    costs[static_cast<std::size_t>(idx)] =
        atom_norm_distance(a.atoms[static_cast<std::size_t>(i)],
                           b.atoms[static_cast<std::size_t>(j)], window, horizon);
  });
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      require(!costs[static_cast<std::size_t>(i) * m + j].infinite,
              ErrorCode::Domain,
              "mkr_distance: atoms " + std::to_string(i) + " and " +
                  std::to_string(j) +
                  " have diverging prescribed tails; the transport cost is infinite");
    }
  }

  const long long lcm_size = std::lcm(static_cast<long long>(n),
                                      static_cast<long long>(m));
  require(lcm_size <= kMaxReplicatedSize, ErrorCode::Usage,
          "mkr_distance: replicated problem size lcm(" + std::to_string(n) + ", " +
              std::to_string(m) + ") = " + std::to_string(lcm_size) +
              " exceeds the cap of " + std::to_string(kMaxReplicatedSize));
  const int L = static_cast<int>(lcm_size);
  const int rep_a = L / n;
  const int rep_b = L / m;

  std::vector<double> matrix(static_cast<std::size_t>(L) * L);
  for (int r = 0; r < L; ++r) {
    const int i = r / rep_a;
    for (int c = 0; c < L; ++c) {
      const int j = c / rep_b;
      matrix[static_cast<std::size_t>(r) * L + c] =
          costs[static_cast<std::size_t>(i) * m + j].value;
    }
  }
  const AssignmentResult match = solve_assignment(matrix, L);

  MkrDistance out;
  out.replicated_size = L;
  out.value = match.total_cost / static_cast<double>(L);
  double err = 0.0;
  for (int r = 0; r < L; ++r) {
    const int i = r / rep_a;
    const int j = match.column_of_row[r] / rep_b;
    err += costs[static_cast<std::size_t>(i) * m + j].error_bound;
  }
  out.error_bound = err / static_cast<double>(L);
  return out;
}

std::vector<InitialPath> sample_initial_paths(const InitialLaw& law, int count) {
  require(count >= 1, ErrorCode::Usage,
          "sample_initial_paths: need at least one atom, got " +
              std::to_string(count));
  require(law.dim >= 1, ErrorCode::Usage, "initial law: dimension must be >= 1");
  require(std::isfinite(law.position_radius) && law.position_radius >= 0.0,
          ErrorCode::Usage, "initial law: position radius must be >= 0");
  require(std::isfinite(law.velocity_radius) && law.velocity_radius >= 0.0,
          ErrorCode::Usage, "initial law: velocity radius must be >= 0");
  require(std::isfinite(law.speed_bound) && law.speed_bound >= 0.0,
          ErrorCode::Usage, "initial law: speed bound must be >= 0");
  require(law.velocity_radius <= law.speed_bound, ErrorCode::Usage,
          "initial law: velocity radius exceeds the speed bound");
  require(law.position_center.empty() ||
              law.position_center.size() == static_cast<std::size_t>(law.dim),
          ErrorCode::Usage, "initial law: position center has wrong dimension");
  std::vector<double> tail(static_cast<std::size_t>(law.dim), 0.0);
  if (law.share_velocity_tail) {
    require(law.tail_velocity.empty() ||
                law.tail_velocity.size() == static_cast<std::size_t>(law.dim),
            ErrorCode::Usage, "initial law: tail velocity has wrong dimension");
    if (!law.tail_velocity.empty()) tail = law.tail_velocity;
    require(norm(std::span<const double>(tail)) <= law.speed_bound,
            ErrorCode::Usage, "initial law: tail velocity exceeds the speed bound");
    require(std::isfinite(law.ramp_duration) && law.ramp_duration > 0.0,
            ErrorCode::Usage, "initial law: ramp duration must be positive");
  }

  std::vector<InitialPath> paths;
  paths.reserve(static_cast<std::size_t>(count));
  std::vector<double> x(static_cast<std::size_t>(law.dim));
  std::vector<double> v(static_cast<std::size_t>(law.dim));
  for (int k = 0; k < count; ++k) {
    Rng rng(law.seed, static_cast<std::uint64_t>(k));
    rng.uniform_in_ball(law.position_radius, std::span<double>(x));
    if (!law.position_center.empty()) {
      for (int c = 0; c < law.dim; ++c) x[static_cast<std::size_t>(c)] += law.position_center[static_cast<std::size_t>(c)];
    }
    rng.uniform_in_ball(law.velocity_radius, std::span<double>(v));
    if (law.share_velocity_tail) {
      paths.push_back(InitialPath::piecewise_linear_velocity(
          x, {-law.ramp_duration, 0.0}, {tail, v}));
    } else {
      paths.push_back(InitialPath::constant_velocity(x, v));
    }
  }
  return paths;
}

TrajectoryEnsemble sample_initial_ensemble(const InitialLaw& law, int count,
                                           double init_window) {
  std::vector<InitialPath> paths = sample_initial_paths(law, count);
  std::vector<TrajectoryHistory> atoms;
  atoms.reserve(paths.size());
  for (InitialPath& p : paths) {
    atoms.emplace_back(std::move(p), law.speed_bound);
  }
  return ensemble_from_paths(std::move(atoms), 0.0, init_window);
}

ConvergenceStudy particle_convergence_study(const InitialLaw& law,
                                            const std::vector<int>& counts,
                                            const FlockModel& model,
                                            const SimulationOptions& options,
                                            double init_window,
                                            bool rescale_dt) {
  require(counts.size() >= 2, ErrorCode::Usage,
          "convergence study needs at least two ensemble sizes");
  for (std::size_t k = 0; k < counts.size(); ++k) {
    require(counts[k] >= 2, ErrorCode::Usage,
            "convergence study: ensemble sizes must be >= 2");
    if (k > 0) {
      require(counts[k] > counts[k - 1], ErrorCode::Usage,
              "convergence study: ensemble sizes must increase strictly");
    }
  }

  std::vector<TrajectoryEnsemble> initial_ensembles;
  std::vector<TrajectoryEnsemble> evolved_ensembles;
  initial_ensembles.reserve(counts.size());
  evolved_ensembles.reserve(counts.size());
  for (int n : counts) {
    initial_ensembles.push_back(sample_initial_ensemble(law, n, init_window));
    SimulationOptions run_options = options;
    if (rescale_dt) {
      run_options.dt = options.dt * (static_cast<double>(n - 1) / n);
    }
    RunResult run = simulate(model, sample_initial_paths(law, n), run_options);
    evolved_ensembles.push_back(ensemble_from_paths(
        std::move(run.paths), run_options.horizon, init_window));
  }

  ConvergenceStudy study;
  for (std::size_t k = 0; k + 1 < counts.size(); ++k) {
    ConvergencePair row;
    row.n_small = counts[k];
    row.n_large = counts[k + 1];
    const MkrDistance w0 = mkr_distance(initial_ensembles[k], initial_ensembles[k + 1]);
    const MkrDistance wT = mkr_distance(evolved_ensembles[k], evolved_ensembles[k + 1]);
    row.w0 = w0.value;
    row.w0_error = w0.error_bound;
    row.wT = wT.value;
    row.wT_error = wT.error_bound;
    row.ratio = (row.w0 > 0.0) ? row.wT / row.w0 : 0.0;
    study.pairs.push_back(row);
  }
  return study;
}

PerturbationStudy perturbation_study(const InitialLaw& law, int count,
                                     const std::vector<double>& deltas,
                                     const FlockModel& model,
                                     const SimulationOptions& options,
                                     double init_window) {
  require(!deltas.empty(), ErrorCode::Usage,
          "perturbation study needs at least one delta");
  for (double d : deltas) {
    require(std::isfinite(d) && d > 0.0, ErrorCode::Usage,
            "perturbation study: deltas must be positive, got " + std::to_string(d));
  }
  require(count >= 2, ErrorCode::Usage,
          "perturbation study: ensemble size must be >= 2");

  const TrajectoryEnsemble base_initial = sample_initial_ensemble(law, count, init_window);
  RunResult base_run = simulate(model, sample_initial_paths(law, count), options);
  const TrajectoryEnsemble base_evolved = ensemble_from_paths(
      std::move(base_run.paths), options.horizon, init_window);

  PerturbationStudy study;
  for (double delta : deltas) {
    InitialLaw shifted = law;
    if (shifted.position_center.empty()) {
      shifted.position_center.assign(static_cast<std::size_t>(law.dim), 0.0);
    }
    shifted.position_center[0] += delta;

    const TrajectoryEnsemble pert_initial =
        sample_initial_ensemble(shifted, count, init_window);
    RunResult pert_run = simulate(model, sample_initial_paths(shifted, count), options);
    const TrajectoryEnsemble pert_evolved = ensemble_from_paths(
        std::move(pert_run.paths), options.horizon, init_window);

    PerturbationRow row;
    row.delta = delta;
    const MkrDistance w0 = mkr_distance(base_initial, pert_initial);
    const MkrDistance wT = mkr_distance(base_evolved, pert_evolved);
    row.w0 = w0.value;
    row.w0_error = w0.error_bound;
    row.wT = wT.value;
    row.wT_error = wT.error_bound;
    row.ratio = (row.w0 > 0.0) ? row.wT / row.w0 : 0.0;
    study.rows.push_back(row);
  }
  return study;
}

}  // namespace flock
