// Command-line front end: five experiment pipelines driven by a JSON config.
//
// Exit codes: 0 success, 1 an invariant check failed, 2 certificate
// infeasible, 3 config/usage problem, 4 internal failure.
#include <clocale>
#include <chrono>
#include <cstdio>
#include <exception>
#include <locale>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "flocksim/error.hpp"
#include "flocksim/io.hpp"

namespace {

// Parses "name=v1,v2,..." (e.g. "beta=0.1,0.25,0.4") into values, checking
// the name prefix.
std::vector<double> parse_named_list(const std::string& text, const std::string& name) {
  const std::string prefix = name + "=";
  flock::require(text.rfind(prefix, 0) == 0, flock::ErrorCode::Config,
                 "expected \"" + prefix + "v1,v2,...\", got \"" + text + "\"");
  std::vector<double> values;
  std::size_t pos = prefix.size();
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const std::string item = text.substr(pos, comma - pos);
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      flock::require(used == item.size(), flock::ErrorCode::Config,
                     "trailing characters in number \"" + item + "\"");
    } catch (const flock::Error&) {
      throw;
    } catch (const std::exception&) {
      flock::raise(flock::ErrorCode::Config,
                   "cannot parse \"" + item + "\" in \"" + text + "\" as a number");
    }
    pos = comma + 1;
  }
  flock::require(!values.empty(), flock::ErrorCode::Config,
                 "empty list in \"" + text + "\"");
  return values;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> values;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    const std::string item = text.substr(pos, comma - pos);
    try {
      std::size_t used = 0;
      values.push_back(std::stoi(item, &used));
      flock::require(used == item.size(), flock::ErrorCode::Config,
                     "trailing characters in integer \"" + item + "\"");
    } catch (const flock::Error&) {
      throw;
    } catch (const std::exception&) {
      flock::raise(flock::ErrorCode::Config,
                   "cannot parse \"" + item + "\" as an integer");
    }
    pos = comma + 1;
  }
  flock::require(!values.empty(), flock::ErrorCode::Config, "empty integer list");
  return values;
}

struct SubcommandArgs {
  std::string config_path;
  std::string out_dir;      // overrides the config's output.directory when set
  std::string sweep_spec;   // certify: "beta=v1,v2,..."
  std::string n_list_spec;  // meanfield: "4,8,16,32"
};

int run(flock::Experiment experiment, const SubcommandArgs& args) {
  flock::RunConfig config = flock::load_config(args.config_path);
  if (experiment == flock::Experiment::Certify && !args.sweep_spec.empty()) {
    config.certify.sweep_betas = parse_named_list(args.sweep_spec, "beta");
    for (double beta : config.certify.sweep_betas) {
      flock::require(beta >= 0.0, flock::ErrorCode::Config,
                     "sweep beta values must be nonnegative");
    }
  }
  if (experiment == flock::Experiment::MeanfieldStudy && !args.n_list_spec.empty()) {
    config.meanfield.n_list = parse_int_list(args.n_list_spec);
    for (std::size_t k = 0; k < config.meanfield.n_list.size(); ++k) {
      flock::require(config.meanfield.n_list[k] >= 2, flock::ErrorCode::Config,
                     "n-list entries must be >= 2");
      flock::require(k == 0 || config.meanfield.n_list[k] > config.meanfield.n_list[k - 1],
                     flock::ErrorCode::Config, "n-list must increase strictly");
    }
  }
  const std::string out_dir = args.out_dir.empty() ? config.out_dir : args.out_dir;
  // Wall time goes to stderr, never into the output files: identical config
  // and seed must yield byte-identical artifacts.
  const auto t0 = std::chrono::steady_clock::now();
  const int status = flock::run_experiment(config, experiment, out_dir);
  const double elapsed =
      std::chrono::duration_cast<std::chrono::duration<double>>(
          std::chrono::steady_clock::now() - t0)
          .count();
  std::fprintf(stderr, "flocksim: wrote %s (%.3f s, exit %d)\n", out_dir.c_str(),
               elapsed, status);
  return status;
}

void add_subcommand(CLI::App& app, const std::string& name, const std::string& help,
                    flock::Experiment experiment, SubcommandArgs& args, int& status) {
  CLI::App* sub = app.add_subcommand(name, help);
  sub->add_option("--config", args.config_path, "JSON config file")->required();
  sub->add_option("--out-dir", args.out_dir, "output directory (overrides config)");
  if (experiment == flock::Experiment::Certify) {
    sub->add_option("--sweep", args.sweep_spec,
                    "sweep a kernel parameter, e.g. beta=0.1,0.25,0.4 (writes CSV)");
  }
  if (experiment == flock::Experiment::MeanfieldStudy) {
    sub->add_option("--n-list", args.n_list_spec,
                    "comma-separated ensemble sizes, e.g. 4,8,16,32");
  }
  sub->callback([experiment, &args, &status]() { status = run(experiment, args); });
}

}  // namespace

int main(int argc, char** argv) {
  std::setlocale(LC_ALL, "C");
  std::locale::global(std::locale::classic());

  CLI::App app{"flocksim: delayed-interaction flocking simulator and certifier"};
  app.require_subcommand(1);

  SubcommandArgs args;
  int status = 0;
  add_subcommand(app, "simulate", "integrate the delayed system and record diagnostics",
                 flock::Experiment::Simulate, args, status);
  add_subcommand(app, "certify", "compute a flocking certificate (critical speed c*)",
                 flock::Experiment::Certify, args, status);
  add_subcommand(app, "flock-run",
                 "certify, then run at c* and check the decay envelopes",
                 flock::Experiment::CertifiedFlockingRun, args, status);
  add_subcommand(app, "meanfield",
                 "particle-convergence or perturbation study in transport distance",
                 flock::Experiment::MeanfieldStudy, args, status);
  add_subcommand(app, "sweep",
                 "distance to the undelayed classical solution along increasing c",
                 flock::Experiment::ConsistencySweep, args, status);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 3;  // help/version exit 0; bad usage exits 3
  } catch (const flock::Error& err) {
    switch (err.code()) {
      case flock::ErrorCode::Invariant:
        std::fprintf(stderr, "invariant violation: %s\n", err.what());
        return 1;
      case flock::ErrorCode::Domain:
      case flock::ErrorCode::Usage:
      case flock::ErrorCode::Config:
        std::fprintf(stderr, "error: %s\n", err.what());
        return 3;
      case flock::ErrorCode::Underflow:
        std::fprintf(stderr, "internal error: %s\n", err.what());
        return 4;
    }
    std::fprintf(stderr, "internal error: %s\n", err.what());
    return 4;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "internal error: %s\n", err.what());
    return 4;
  }
  return status;
}
