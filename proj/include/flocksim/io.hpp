// Configuration loading, experiment orchestration, and bit-stable output.
//
// One JSON config file drives every experiment type. Validation is
// aggregated: loading reports every violation at once, not just the first.
// All floating-point CSV output uses 17 significant digits ("%.17g"), which
// round-trips doubles exactly; JSON output goes through a shortest-exact
// serializer. Outputs are byte-identical across runs for identical
// config + seed, except for the wall-clock figure, which is isolated in the
// summary's "timing" object so that determinism checks can strip it.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "flocksim/certificate.hpp"
#include "flocksim/dynamics.hpp"
#include "flocksim/history.hpp"
#include "flocksim/influence.hpp"
#include "flocksim/meanfield.hpp"

namespace flock {

enum class Experiment {
  Simulate,
  Certify,
  CertifiedFlockingRun,
  MeanfieldStudy,
  ConsistencySweep,
};

const char* experiment_name(Experiment e);

// Integration scheme for the `simulate` pipeline. PicardWindow runs the
// fixed-point solver over a single contraction window (the horizon must fit
// inside it); RK4Predicted is the production path.
enum class Scheme { RK4Predicted, PicardWindow };

struct ModelConfig {
  double c = 0.0;
  double s = 0.0;
  double dt = 1e-2;
  double horizon = 0.0;  // 0 lets flock-run choose 20/eta; simulate requires > 0
  int sample_every = 1;
  Scheme scheme = Scheme::RK4Predicted;
  InfluenceFunction kernel = InfluenceFunction::constant(1.0);
};

// Either an explicit agent list or a sampled law. Explicit agents hold a
// position at time zero plus either a constant velocity or a piecewise-linear
// velocity profile (break_times increasing, all <= 0).
struct ExplicitAgent {
  std::vector<double> x;
  std::vector<double> v;  // constant-velocity agents
  std::vector<double> break_times;
  std::vector<std::vector<double>> break_velocities;
  bool piecewise = false;
};

struct InitialConfig {
  bool use_law = false;
  std::vector<ExplicitAgent> agents;
  InitialLaw law;
  int count = 0;  // law mode: number of atoms
};

struct CertifyConfig {
  bool has_eta = false;
  double eta = 0.0;  // when not set, find_eta chooses
  RecipeOptions menus;
  bool force_nonconstant = false;
  bool has_D0 = false;
  double D0 = 0.0;  // explicit initial drift override for nonconstant data
  std::vector<double> sweep_betas;
};

struct MeanfieldConfig {
  std::vector<int> n_list = {4, 8, 16, 32};
  double init_window = 1.0;
  std::string study = "convergence";  // or "perturbation"
  std::vector<double> deltas = {0.1, 0.01, 0.001};
  int count = 8;  // perturbation-study ensemble size
  bool rescale_dt = false;
};

struct SweepConfig {
  std::vector<double> speeds = {10.0, 20.0, 40.0, 80.0};
};

struct RunConfig {
  bool experiment_set = false;
  Experiment experiment = Experiment::Simulate;
  ModelConfig model;
  InitialConfig initial;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  CertifyConfig certify;
  MeanfieldConfig meanfield;
  SweepConfig sweep;
};

// Parses and validates a config document. Throws a config error whose
// message enumerates every violation found (one per line). `origin` names
// the source in messages (file path or "<inline>").
RunConfig parse_config(const nlohmann::json& doc, const std::string& origin);
RunConfig load_config(const std::string& path);

// Canonical JSON echo of a parsed config (used in summaries; re-parseable).
nlohmann::json config_to_json(const RunConfig& config);

// Builds the initial paths a config describes (explicit list or sampled law,
// seeded from config.seed).
std::vector<InitialPath> build_initial_paths(const RunConfig& config);

// Runs one experiment pipeline, writing its artifacts (CSV + summary.json)
// under `out_dir`. Returns the process exit status: 0 success, 1 invariant
// check failed, 2 certificate infeasible. Usage/config problems and internal
// failures surface as exceptions (mapped to 3 / 4 by the CLI).
int run_experiment(const RunConfig& config, Experiment experiment,
                   const std::string& out_dir);

// Formats a double with 17 significant digits (exact round-trip).
std::string format_g17(double v);

// Writes rows of pre-formatted cells as CSV ('\n' line endings, no quoting;
// cells must not contain commas or newlines).
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// Serializes a summary document to disk with a stable layout (2-space
// indent, sorted keys — nlohmann::json orders keys lexicographically).
void write_json(const std::string& path, const nlohmann::json& doc);

}  // namespace flock
