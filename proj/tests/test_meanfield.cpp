#include <cmath>
#include <vector>

#include "doctest.h"
#include "flocksim/dynamics.hpp"
#include "flocksim/error.hpp"
#include "flocksim/history.hpp"
#include "flocksim/meanfield.hpp"
#include "flocksim/util.hpp"

using namespace flock;

namespace {

TrajectoryEnsemble ensemble_of_constants(
    const std::vector<std::vector<double>>& xs,
    const std::vector<std::vector<double>>& vs, double cap) {
  std::vector<TrajectoryHistory> atoms;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    atoms.emplace_back(InitialPath::constant_velocity(xs[k], vs[k]), cap);
  }
  return ensemble_from_paths(std::move(atoms), 0.0, 1.0);
}

}  // namespace

TEST_CASE("atom-to-atom norm distance for matching tails") {
  // Same velocity everywhere: the gap is the constant position offset.
  const TrajectoryEnsemble a =
      ensemble_of_constants({{0.0}}, {{0.5}}, 0.5);
  const TrajectoryEnsemble b =
      ensemble_of_constants({{2.0}}, {{0.5}}, 0.5);
  const NormDistance d = ensemble_norm_distance(a, 0, b, 0);
  CHECK_FALSE(d.infinite);
  CHECK(d.value == doctest::Approx(2.0).epsilon(1e-13));
}

TEST_CASE("distinct constant tails have infinite distance") {
  const TrajectoryEnsemble a = ensemble_of_constants({{0.0}}, {{0.5}}, 0.5);
  const TrajectoryEnsemble b = ensemble_of_constants({{0.0}}, {{-0.5}}, 0.5);
  const NormDistance d = ensemble_norm_distance(a, 0, b, 0);
  CHECK(d.infinite);

  // And the transport distance refuses to average an infinity, naming the
  // offending pair.
  CHECK_THROWS_AS(mkr_distance(a, b), Error);
}

TEST_CASE("transport distance on a hand-checked 2x2 cost matrix") {
  // Atoms at positions {0, 3} vs {1, 3}; shared velocity. Costs are the
  // position offsets: [[1, 3], [2, 0]]; optimal matching cost 1 + 0, mean 1/2.
  const TrajectoryEnsemble a =
      ensemble_of_constants({{0.0}, {3.0}}, {{0.2}, {0.2}}, 0.2);
  const TrajectoryEnsemble b =
      ensemble_of_constants({{1.0}, {3.0}}, {{0.2}, {0.2}}, 0.2);
  const MkrDistance d = mkr_distance(a, b);
  CHECK(d.value == doctest::Approx(0.5).epsilon(1e-13));
  CHECK(d.replicated_size == 2);
}

TEST_CASE("transport distance replicates to the lcm for unequal sizes") {
  // One atom at 0 vs two atoms at 1 and 3 (shared velocity): replicate the
  // singleton twice; optimal cost (1 + 3)/2 = 2.
  const TrajectoryEnsemble a = ensemble_of_constants({{0.0}}, {{0.1}}, 0.1);
  const TrajectoryEnsemble b =
      ensemble_of_constants({{1.0}, {3.0}}, {{0.1}, {0.1}}, 0.1);
  const MkrDistance d = mkr_distance(a, b);
  CHECK(d.replicated_size == 2);
  CHECK(d.value == doctest::Approx(2.0).epsilon(1e-13));

  // Replicating an ensemble leaves distances unchanged.
  const TrajectoryEnsemble a2 =
      ensemble_of_constants({{0.0}, {0.0}}, {{0.1}, {0.1}}, 0.1);
  const MkrDistance d2 = mkr_distance(a2, b);
  CHECK(d2.value == doctest::Approx(d.value).epsilon(1e-13));
}

TEST_CASE("transport distance is a metric on shared-grid ensembles") {
  Rng rng(2718, 0);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 2 + trial % 3;
    // One constant velocity for every atom of every ensemble in the trial:
    // diverging prescribed tails would make the transport cost infinite.
    const std::vector<double> shared_v = {rng.uniform(-0.1, 0.1),
                                          rng.uniform(-0.1, 0.1)};
    auto make = [&](int count) {
      std::vector<std::vector<double>> xs, vs;
      for (int k = 0; k < count; ++k) {
        xs.push_back({rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)});
        vs.push_back(shared_v);  // shared velocity keeps all costs finite
      }
      return ensemble_of_constants(xs, vs, 0.2);
    };
    const TrajectoryEnsemble A = make(n);
    const TrajectoryEnsemble B = make(n);
    const TrajectoryEnsemble C = make(n);
    const double ab = mkr_distance(A, B).value;
    const double ba = mkr_distance(B, A).value;
    const double ac = mkr_distance(A, C).value;
    const double cb = mkr_distance(C, B).value;
    const double aa = mkr_distance(A, A).value;
    CHECK(aa <= 1e-12);
    CHECK(std::abs(ab - ba) <= 1e-10 * std::max(1.0, ab));
    CHECK(ab <= ac + cb + 1e-8 * std::max(1.0, ab));
  }
}

TEST_CASE("sampled initial laws are deterministic and respect bounds") {
  InitialLaw law;
  law.dim = 2;
  law.seed = 17;
  law.position_radius = 2.0;
  law.velocity_radius = 0.3;
  law.speed_bound = 0.5;
  const auto paths = sample_initial_paths(law, 16);
  REQUIRE(paths.size() == 16);
  for (const auto& p : paths) {
    CHECK(p.speed_bound() <= 0.5 + 1e-12);
    CHECK(norm(std::span<const double>(p.x_at_zero())) <= 2.0 + 1e-12);
  }
  // Identical seeds reproduce identical draws; the stream is per-atom.
  const auto again = sample_initial_paths(law, 16);
  bool identical = true;
  for (std::size_t k = 0; k < paths.size(); ++k) {
    identical = identical && paths[k].x_at_zero() == again[k].x_at_zero();
  }
  CHECK(identical);

  // Prefix property: the first 8 atoms of a 16-atom draw equal an 8-atom draw.
  const auto prefix = sample_initial_paths(law, 8);
  bool nested = true;
  for (std::size_t k = 0; k < prefix.size(); ++k) {
    nested = nested && prefix[k].x_at_zero() == paths[k].x_at_zero();
  }
  CHECK(nested);
}

TEST_CASE("shared-tail laws produce finite pairwise distances") {
  InitialLaw law;
  law.dim = 2;
  law.seed = 5;
  law.position_radius = 1.0;
  law.velocity_radius = 0.4;
  law.speed_bound = 0.5;
  law.share_velocity_tail = true;
  law.tail_velocity = {0.1, 0.0};
  law.ramp_duration = 1.0;
  const TrajectoryEnsemble e = sample_initial_ensemble(law, 6, 2.0);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      const NormDistance d = ensemble_norm_distance(e, i, e, j);
      CHECK_FALSE(d.infinite);
    }
  }
}

TEST_CASE("perturbation study reports exact initial transport distances") {
  InitialLaw law;
  law.dim = 2;
  law.seed = 23;
  law.position_radius = 1.0;
  law.velocity_radius = 0.2;
  law.speed_bound = 0.5;
  law.share_velocity_tail = true;
  law.tail_velocity = {0.0, 0.0};
  law.ramp_duration = 1.0;

  FlockModel model;
  model.c = 5.0;
  model.kernel = InfluenceFunction::power_law(0.5);
  SimulationOptions opt;
  opt.dt = 0.05;
  opt.horizon = 1.0;

  const PerturbationStudy study =
      perturbation_study(law, 4, {0.25, 0.5}, model, opt, 1.0);
  REQUIRE(study.rows.size() == 2);
  // Shifting every atom by delta moves the ensemble by exactly delta.
  CHECK(study.rows[0].delta == 0.25);
  CHECK(study.rows[0].w0 == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(study.rows[1].w0 == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(study.rows[0].wT > 0.0);
  CHECK(std::isfinite(study.rows[0].ratio));
}

TEST_CASE("particle convergence study runs and reports consecutive pairs") {
  InitialLaw law;
  law.dim = 2;
  law.seed = 40;
  law.position_radius = 1.0;
  law.velocity_radius = 0.2;
  law.speed_bound = 0.5;
  law.share_velocity_tail = true;
  law.tail_velocity = {0.0, 0.0};
  law.ramp_duration = 1.0;

  FlockModel model;
  model.c = 5.0;
  model.kernel = InfluenceFunction::power_law(0.5);
  SimulationOptions opt;
  opt.dt = 0.05;
  opt.horizon = 1.0;

  const ConvergenceStudy study =
      particle_convergence_study(law, {2, 4, 8}, model, opt, 1.0, false);
  REQUIRE(study.pairs.size() == 2);
  CHECK(study.pairs[0].n_small == 2);
  CHECK(study.pairs[0].n_large == 4);
  CHECK(study.pairs[1].n_small == 4);
  CHECK(study.pairs[1].n_large == 8);
  for (const ConvergencePair& p : study.pairs) {
    CHECK(std::isfinite(p.wT));
    CHECK(p.wT >= 0.0);
    CHECK(p.w0 > 0.0);  // distinct samples: strictly positive distance
  }
}

TEST_CASE("ensemble construction validates its inputs") {
  std::vector<TrajectoryHistory> atoms;
  CHECK_THROWS_AS(ensemble_from_paths(std::move(atoms), 0.0, 1.0), Error);

  std::vector<TrajectoryHistory> mixed;
  mixed.emplace_back(InitialPath::constant_velocity({0.0}, {0.1}), 0.1);
  mixed.emplace_back(InitialPath::constant_velocity({0.0, 0.0}, {0.1, 0.0}), 0.1);
  CHECK_THROWS_AS(ensemble_from_paths(std::move(mixed), 0.0, 1.0), Error);
}
