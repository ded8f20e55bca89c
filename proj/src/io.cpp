#include "flocksim/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flocksim/diagnostics.hpp"
#include "flocksim/error.hpp"
#include "flocksim/util.hpp"

namespace flock {
namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Formatting and file helpers
// ---------------------------------------------------------------------------

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::Usage, "cannot open output file: " + path);
  out << text;
  require(out.good(), ErrorCode::Usage, "failed writing output file: " + path);
}

// ---------------------------------------------------------------------------
// Kernel <-> JSON
// ---------------------------------------------------------------------------

json kernel_to_json(const InfluenceFunction& kernel) {
  json j;
  switch (kernel.kind()) {
    case InfluenceFunction::Kind::PowerLaw:
      j["type"] = "powerlaw";
      j["beta"] = kernel.beta();
      break;
    case InfluenceFunction::Kind::Constant:
      j["type"] = "constant";
      j["level"] = kernel.level();
      break;
    case InfluenceFunction::Kind::Tabulated: {
      j["type"] = "tabulated";
      json knots = json::array();
      for (std::size_t k = 0; k < kernel.abscissae().size(); ++k) {
        knots.push_back(json::array({kernel.abscissae()[k], kernel.values()[k]}));
      }
      j["knots"] = std::move(knots);
      break;
    }
  }
  return j;
}

// Collects human-readable violations instead of throwing on first problem.
struct Violations {
  std::string origin;
  std::vector<std::string> items;
  void add(const std::string& where, const std::string& what) {
    items.push_back(where + ": " + what);
  }
  void raise_if_any() const {
    if (items.empty()) return;
    std::string msg = "invalid config (" + origin + "), " +
                      std::to_string(items.size()) + " problem(s):";
    for (const std::string& item : items) msg += "\n  - " + item;
    raise(ErrorCode::Config, msg);
  }
};

void check_keys(const json& obj, const std::vector<std::string>& allowed,
                const std::string& where, Violations& out) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      out.add(where, "unknown key \"" + it.key() + "\"");
    }
  }
}

bool get_number(const json& obj, const char* key, const std::string& where,
                Violations& out, double* into) {
  if (!obj.contains(key)) return false;
  if (!obj[key].is_number()) {
    out.add(where, std::string("\"") + key + "\" must be a number");
    return false;
  }
  *into = obj[key].get<double>();
  return true;
}

bool get_integer(const json& obj, const char* key, const std::string& where,
                 Violations& out, long long* into) {
  if (!obj.contains(key)) return false;
  if (!obj[key].is_number_integer()) {
    out.add(where, std::string("\"") + key + "\" must be an integer");
    return false;
  }
  *into = obj[key].get<long long>();
  return true;
}

bool get_boolean(const json& obj, const char* key, const std::string& where,
                 Violations& out, bool* into) {
  if (!obj.contains(key)) return false;
  if (!obj[key].is_boolean()) {
    out.add(where, std::string("\"") + key + "\" must be a boolean");
    return false;
  }
  *into = obj[key].get<bool>();
  return true;
}

bool get_string(const json& obj, const char* key, const std::string& where,
                Violations& out, std::string* into) {
  if (!obj.contains(key)) return false;
  if (!obj[key].is_string()) {
    out.add(where, std::string("\"") + key + "\" must be a string");
    return false;
  }
  *into = obj[key].get<std::string>();
  return true;
}

bool get_number_list(const json& obj, const char* key, const std::string& where,
                     Violations& out, std::vector<double>* into) {
  if (!obj.contains(key)) return false;
  if (!obj[key].is_array()) {
    out.add(where, std::string("\"") + key + "\" must be an array of numbers");
    return false;
  }
  std::vector<double> values;
  for (const json& item : obj[key]) {
    if (!item.is_number()) {
      out.add(where, std::string("\"") + key + "\" must contain only numbers");
      return false;
    }
    values.push_back(item.get<double>());
  }
  *into = std::move(values);
  return true;
}

InfluenceFunction parse_kernel(const json& obj, const std::string& where,
                               Violations& out) {
  InfluenceFunction fallback = InfluenceFunction::constant(1.0);
  if (!obj.is_object()) {
    out.add(where, "kernel must be an object {type, ...}");
    return fallback;
  }
  std::string type;
  if (!get_string(obj, "type", where, out, &type)) {
    out.add(where, "kernel needs a \"type\" of powerlaw|constant|tabulated");
    return fallback;
  }
  try {
    if (type == "powerlaw") {
      check_keys(obj, {"type", "beta"}, where, out);
      double beta = 0.0;
      if (!get_number(obj, "beta", where, out, &beta)) {
        out.add(where, "powerlaw kernel needs \"beta\"");
        return fallback;
      }
      return InfluenceFunction::power_law(beta);
    }
    if (type == "constant") {
      check_keys(obj, {"type", "level"}, where, out);
      double level = 1.0;
      get_number(obj, "level", where, out, &level);
      return InfluenceFunction::constant(level);
    }
    if (type == "tabulated") {
      check_keys(obj, {"type", "knots"}, where, out);
      if (!obj.contains("knots") || !obj["knots"].is_array()) {
        out.add(where, "tabulated kernel needs \"knots\": [[s, psi], ...]");
        return fallback;
      }
      std::vector<double> abscissae, values;
      for (const json& knot : obj["knots"]) {
        if (!knot.is_array() || knot.size() != 2 || !knot[0].is_number() ||
            !knot[1].is_number()) {
          out.add(where, "each knot must be a [s, psi] number pair");
          return fallback;
        }
        abscissae.push_back(knot[0].get<double>());
        values.push_back(knot[1].get<double>());
      }
      return InfluenceFunction::tabulated(std::move(abscissae), std::move(values));
    }
    out.add(where, "unknown kernel type \"" + type + "\"");
  } catch (const Error& err) {
    out.add(where, err.what());
  }
  return fallback;
}

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

Experiment experiment_from_name(const std::string& name, const std::string& where,
                                Violations& out, bool* ok) {
  *ok = true;
  if (name == "simulate") return Experiment::Simulate;
  if (name == "certify") return Experiment::Certify;
  if (name == "flock-run") return Experiment::CertifiedFlockingRun;
  if (name == "meanfield") return Experiment::MeanfieldStudy;
  if (name == "sweep") return Experiment::ConsistencySweep;
  out.add(where, "unknown experiment \"" + name +
                     "\" (expected simulate|certify|flock-run|meanfield|sweep)");
  *ok = false;
  return Experiment::Simulate;
}

void parse_model(const json& obj, ModelConfig* model, Violations& out) {
  const std::string where = "model";
  if (!obj.is_object()) {
    out.add(where, "must be an object");
    return;
  }
  check_keys(obj,
             {"c", "s", "dt", "horizon", "sample_every", "scheme", "kernel"},
             where, out);
  get_number(obj, "c", where, out, &model->c);
  get_number(obj, "s", where, out, &model->s);
  get_number(obj, "dt", where, out, &model->dt);
  get_number(obj, "horizon", where, out, &model->horizon);
  long long sample_every = model->sample_every;
  if (get_integer(obj, "sample_every", where, out, &sample_every)) {
    model->sample_every = static_cast<int>(sample_every);
  }
  std::string scheme;
  if (get_string(obj, "scheme", where, out, &scheme)) {
    if (scheme == "rk4") {
      model->scheme = Scheme::RK4Predicted;
    } else if (scheme == "picard") {
      model->scheme = Scheme::PicardWindow;
    } else {
      out.add(where, "scheme must be \"rk4\" or \"picard\", got \"" + scheme + "\"");
    }
  }
  if (obj.contains("kernel")) {
    model->kernel = parse_kernel(obj["kernel"], "model.kernel", out);
  }

  if (!(std::isfinite(model->s) && model->s > 0.0)) {
    out.add(where, "speed bound s must be positive and finite");
  }
  // c is optional (certify-only configs omit it), but when given it must
  // beat the speed bound: agents travel slower than c.
  if (obj.contains("c") && !(std::isfinite(model->c) && model->c > model->s)) {
    out.add(where, "c must exceed the speed bound s "
                   "(agents travel slower than c)");
  }
  if (!(std::isfinite(model->dt) && model->dt > 0.0)) {
    out.add(where, "dt must be positive and finite");
  }
  if (!(std::isfinite(model->horizon) && model->horizon >= 0.0)) {
    out.add(where, "horizon must be finite and nonnegative");
  } else if (model->horizon > 0.0 && model->horizon < model->dt) {
    out.add(where, "horizon must be 0 (auto/initial-only) or at least dt");
  }
  if (model->sample_every < 1) {
    out.add(where, "sample_every must be >= 1");
  }
}

void parse_agent(const json& obj, std::size_t index, InitialConfig* initial,
                 Violations& out) {
  const std::string where = "initial.agents[" + std::to_string(index) + "]";
  ExplicitAgent agent;
  if (!obj.is_object()) {
    out.add(where, "must be an object");
    return;
  }
  check_keys(obj, {"x", "v", "break_times", "break_velocities"}, where, out);
  get_number_list(obj, "x", where, out, &agent.x);
  if (agent.x.empty()) out.add(where, "needs a nonempty position \"x\"");
  const bool has_v = obj.contains("v");
  const bool has_breaks = obj.contains("break_times") || obj.contains("break_velocities");
  if (has_v == has_breaks) {
    out.add(where,
            "needs exactly one of \"v\" (constant velocity) or "
            "\"break_times\"+\"break_velocities\" (piecewise-linear velocity)");
    return;
  }
  if (has_v) {
    get_number_list(obj, "v", where, out, &agent.v);
    if (agent.v.size() != agent.x.size()) {
      out.add(where, "\"v\" must match the dimension of \"x\"");
    }
  } else {
    agent.piecewise = true;
    get_number_list(obj, "break_times", where, out, &agent.break_times);
    if (!obj.contains("break_velocities") || !obj["break_velocities"].is_array()) {
      out.add(where, "needs \"break_velocities\": [[...], ...]");
    } else {
      for (const json& vel : obj["break_velocities"]) {
        if (!vel.is_array()) {
          out.add(where, "each break velocity must be an array of numbers");
          break;
        }
        std::vector<double> v;
        for (const json& comp : vel) {
          if (!comp.is_number()) {
            out.add(where, "break velocities must contain only numbers");
            break;
          }
          v.push_back(comp.get<double>());
        }
        agent.break_velocities.push_back(std::move(v));
      }
    }
    if (agent.break_times.size() != agent.break_velocities.size() ||
        agent.break_times.empty()) {
      out.add(where, "break_times and break_velocities must be nonempty and equal length");
    }
    for (const std::vector<double>& v : agent.break_velocities) {
      if (v.size() != agent.x.size()) {
        out.add(where, "break velocities must match the dimension of \"x\"");
        break;
      }
    }
  }
  initial->agents.push_back(std::move(agent));
}

void parse_law(const json& obj, InitialLaw* law, Violations& out) {
  const std::string where = "initial.law";
  if (!obj.is_object()) {
    out.add(where, "must be an object");
    return;
  }
  check_keys(obj,
             {"dim", "position_radius", "position_center", "velocity_radius",
              "share_velocity_tail", "tail_velocity", "ramp_duration"},
             where, out);
  long long dim = law->dim;
  if (get_integer(obj, "dim", where, out, &dim)) law->dim = static_cast<int>(dim);
  get_number(obj, "position_radius", where, out, &law->position_radius);
  get_number_list(obj, "position_center", where, out, &law->position_center);
  get_number(obj, "velocity_radius", where, out, &law->velocity_radius);
  get_boolean(obj, "share_velocity_tail", where, out, &law->share_velocity_tail);
  get_number_list(obj, "tail_velocity", where, out, &law->tail_velocity);
  get_number(obj, "ramp_duration", where, out, &law->ramp_duration);
}

void parse_initial(const json& obj, InitialConfig* initial, const ModelConfig& model,
                   Violations& out) {
  const std::string where = "initial";
  if (!obj.is_object()) {
    out.add(where, "must be an object");
    return;
  }
  check_keys(obj, {"agents", "law", "count"}, where, out);
  const bool has_agents = obj.contains("agents");
  const bool has_law = obj.contains("law");
  if (has_agents == has_law) {
    out.add(where, "needs exactly one of \"agents\" (explicit list) or \"law\" (sampler)");
    return;
  }
  if (has_agents) {
    if (!obj["agents"].is_array() || obj["agents"].empty()) {
      out.add(where, "\"agents\" must be a nonempty array");
      return;
    }
    for (std::size_t k = 0; k < obj["agents"].size(); ++k) {
      parse_agent(obj["agents"][k], k, initial, out);
    }
    // Cross-agent checks: shared dimension and the speed bound.
    if (!initial->agents.empty()) {
      const std::size_t d = initial->agents.front().x.size();
      for (std::size_t k = 0; k < initial->agents.size(); ++k) {
        const ExplicitAgent& agent = initial->agents[k];
        if (agent.x.size() != d) {
          out.add(where, "agents disagree on dimension");
          break;
        }
      }
    }
  } else {
    initial->use_law = true;
    parse_law(obj["law"], &initial->law, out);
    long long count = 0;
    if (!get_integer(obj, "count", where, out, &count)) {
      out.add(where, "law mode needs \"count\" (number of sampled agents)");
    } else if (count < 1) {
      out.add(where, "\"count\" must be >= 1");
    } else {
      initial->count = static_cast<int>(count);
    }
    initial->law.speed_bound = model.s;
    if (initial->law.velocity_radius > model.s) {
      out.add(where, "law velocity_radius exceeds the speed bound s");
    }
  }
}

void parse_certify(const json& obj, CertifyConfig* certify, Violations& out) {
  const std::string where = "certify";
  if (!obj.is_object()) {
    out.add(where, "must be an object");
    return;
  }
  check_keys(obj,
             {"eta", "epsilon_menu", "sigma_menu", "nonconstant", "D0", "sweep_betas"},
             where, out);
  if (get_number(obj, "eta", where, out, &certify->eta)) {
    certify->has_eta = true;
    if (!(certify->eta > 0.0 && certify->eta < 1.0)) {
      out.add(where, "eta must lie strictly inside (0, 1)");
    }
  }
  get_number_list(obj, "epsilon_menu", where, out, &certify->menus.epsilon_menu);
  get_number_list(obj, "sigma_menu", where, out, &certify->menus.sigma_menu);
  get_boolean(obj, "nonconstant", where, out, &certify->force_nonconstant);
  if (get_number(obj, "D0", where, out, &certify->D0)) {
    certify->has_D0 = true;
    if (!(std::isfinite(certify->D0) && certify->D0 >= 0.0)) {
      out.add(where, "D0 must be finite and nonnegative");
    }
  }
  get_number_list(obj, "sweep_betas", where, out, &certify->sweep_betas);
  for (double beta : certify->sweep_betas) {
    if (!(std::isfinite(beta) && beta >= 0.0)) {
      out.add(where, "sweep_betas entries must be finite and nonnegative");
      break;
    }
  }
}

void parse_meanfield(const json& obj, MeanfieldConfig* mf, Violations& out) {
  const std::string where = "meanfield";
  if (!obj.is_object()) {
    out.add(where, "must be an object");
    return;
  }
  check_keys(obj, {"n_list", "init_window", "study", "deltas", "count", "rescale_dt"},
             where, out);
  if (obj.contains("n_list")) {
    if (!obj["n_list"].is_array()) {
      out.add(where, "\"n_list\" must be an array of integers");
    } else {
      std::vector<int> ns;
      for (const json& item : obj["n_list"]) {
        if (!item.is_number_integer()) {
          out.add(where, "\"n_list\" must contain only integers");
          ns.clear();
          break;
        }
        ns.push_back(item.get<int>());
      }
      if (!ns.empty()) mf->n_list = std::move(ns);
    }
  }
  get_number(obj, "init_window", where, out, &mf->init_window);
  get_string(obj, "study", where, out, &mf->study);
  get_number_list(obj, "deltas", where, out, &mf->deltas);
  long long count = mf->count;
  if (get_integer(obj, "count", where, out, &count)) mf->count = static_cast<int>(count);
  get_boolean(obj, "rescale_dt", where, out, &mf->rescale_dt);

  if (mf->study != "convergence" && mf->study != "perturbation") {
    out.add(where, "study must be \"convergence\" or \"perturbation\"");
  }
  if (!(std::isfinite(mf->init_window) && mf->init_window >= 0.0)) {
    out.add(where, "init_window must be finite and nonnegative");
  }
  for (std::size_t k = 0; k < mf->n_list.size(); ++k) {
    if (mf->n_list[k] < 2) {
      out.add(where, "n_list entries must be >= 2");
      break;
    }
    if (k > 0 && mf->n_list[k] <= mf->n_list[k - 1]) {
      out.add(where, "n_list must increase strictly");
      break;
    }
  }
  for (double d : mf->deltas) {
    if (!(std::isfinite(d) && d > 0.0)) {
      out.add(where, "deltas must be positive and finite");
      break;
    }
  }
  if (mf->count < 2) out.add(where, "count must be >= 2");
}

void parse_sweep(const json& obj, SweepConfig* sweep, const ModelConfig& model,
                 Violations& out) {
  const std::string where = "sweep";
  if (!obj.is_object()) {
    out.add(where, "must be an object");
    return;
  }
  check_keys(obj, {"speeds"}, where, out);
  get_number_list(obj, "speeds", where, out, &sweep->speeds);
  if (sweep->speeds.size() < 2) {
    out.add(where, "needs at least two speeds");
  }
  for (std::size_t k = 0; k < sweep->speeds.size(); ++k) {
    if (!(std::isfinite(sweep->speeds[k]) && sweep->speeds[k] > model.s)) {
      out.add(where, "every sweep speed must exceed the speed bound s "
                     "(agents travel slower than c)");
      break;
    }
    if (k > 0 && sweep->speeds[k] <= sweep->speeds[k - 1]) {
      out.add(where, "speeds must increase strictly");
      break;
    }
  }
}

}  // namespace

const char* experiment_name(Experiment e) {
  switch (e) {
    case Experiment::Simulate: return "simulate";
    case Experiment::Certify: return "certify";
    case Experiment::CertifiedFlockingRun: return "flock-run";
    case Experiment::MeanfieldStudy: return "meanfield";
    case Experiment::ConsistencySweep: return "sweep";
  }
  return "unknown";
}

RunConfig parse_config(const json& doc, const std::string& origin) {
  Violations out;
  out.origin = origin;
  RunConfig config;
  if (!doc.is_object()) {
    out.add("top level", "config must be a JSON object");
    out.raise_if_any();
  }
  check_keys(doc,
             {"experiment", "model", "initial", "seed", "output", "certify",
              "meanfield", "sweep"},
             "top level", out);

  std::string experiment;
  if (get_string(doc, "experiment", "top level", out, &experiment)) {
    bool ok = false;
    config.experiment = experiment_from_name(experiment, "top level", out, &ok);
    config.experiment_set = ok;
  }
  if (doc.contains("model")) {
    parse_model(doc["model"], &config.model, out);
  } else {
    out.add("top level", "missing \"model\" section");
  }
  if (doc.contains("initial")) {
    parse_initial(doc["initial"], &config.initial, config.model, out);
  } else {
    out.add("top level", "missing \"initial\" section");
  }
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned() && !doc["seed"].is_number_integer()) {
      out.add("top level", "\"seed\" must be a nonnegative integer");
    } else {
      const long long seed = doc["seed"].get<long long>();
      if (seed < 0) {
        out.add("top level", "\"seed\" must be nonnegative");
      } else {
        config.seed = static_cast<std::uint64_t>(seed);
      }
    }
  }
  if (doc.contains("output")) {
    if (!doc["output"].is_object()) {
      out.add("output", "must be an object");
    } else {
      check_keys(doc["output"], {"directory"}, "output", out);
      get_string(doc["output"], "directory", "output", out, &config.out_dir);
    }
  }
  if (doc.contains("certify")) parse_certify(doc["certify"], &config.certify, out);
  if (doc.contains("meanfield")) parse_meanfield(doc["meanfield"], &config.meanfield, out);
  if (doc.contains("sweep")) parse_sweep(doc["sweep"], &config.sweep, config.model, out);

  // Cross-section checks that need the assembled config.
  if (!config.initial.use_law) {
    for (std::size_t k = 0; k < config.initial.agents.size(); ++k) {
      const ExplicitAgent& agent = config.initial.agents[k];
      const std::string where = "initial.agents[" + std::to_string(k) + "]";
      if (!agent.piecewise) {
        if (!agent.v.empty() &&
            norm(std::span<const double>(agent.v)) > config.model.s) {
          out.add(where, "initial speed exceeds the bound s "
                         "(the model requires |v0| <= s)");
        }
      } else {
        for (const std::vector<double>& v : agent.break_velocities) {
          if (!v.empty() && norm(std::span<const double>(v)) > config.model.s) {
            out.add(where, "a break velocity exceeds the bound s");
            break;
          }
        }
      }
    }
  }
  out.raise_if_any();
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::Config, "cannot open config file: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& err) {
    raise(ErrorCode::Config, "cannot parse " + path + ": " + err.what());
  }
  return parse_config(doc, path);
}

nlohmann::json config_to_json(const RunConfig& config) {
  json j;
  if (config.experiment_set) j["experiment"] = experiment_name(config.experiment);
  json model;
  model["c"] = config.model.c;
  model["s"] = config.model.s;
  model["dt"] = config.model.dt;
  model["horizon"] = config.model.horizon;
  model["sample_every"] = config.model.sample_every;
  model["scheme"] = config.model.scheme == Scheme::RK4Predicted ? "rk4" : "picard";
  model["kernel"] = kernel_to_json(config.model.kernel);
  j["model"] = std::move(model);

  json initial;
  if (config.initial.use_law) {
    json law;
    law["dim"] = config.initial.law.dim;
    law["position_radius"] = config.initial.law.position_radius;
    if (!config.initial.law.position_center.empty()) {
      law["position_center"] = config.initial.law.position_center;
    }
    law["velocity_radius"] = config.initial.law.velocity_radius;
    law["share_velocity_tail"] = config.initial.law.share_velocity_tail;
    if (!config.initial.law.tail_velocity.empty()) {
      law["tail_velocity"] = config.initial.law.tail_velocity;
    }
    law["ramp_duration"] = config.initial.law.ramp_duration;
    initial["law"] = std::move(law);
    initial["count"] = config.initial.count;
  } else {
    json agents = json::array();
    for (const ExplicitAgent& agent : config.initial.agents) {
      json a;
      a["x"] = agent.x;
      if (agent.piecewise) {
        a["break_times"] = agent.break_times;
        a["break_velocities"] = agent.break_velocities;
      } else {
        a["v"] = agent.v;
      }
      agents.push_back(std::move(a));
    }
    initial["agents"] = std::move(agents);
  }
  j["initial"] = std::move(initial);
  j["seed"] = config.seed;
  j["output"] = json{{"directory", config.out_dir}};

  json certify;
  if (config.certify.has_eta) certify["eta"] = config.certify.eta;
  if (!config.certify.menus.epsilon_menu.empty()) {
    certify["epsilon_menu"] = config.certify.menus.epsilon_menu;
  }
  if (!config.certify.menus.sigma_menu.empty()) {
    certify["sigma_menu"] = config.certify.menus.sigma_menu;
  }
  if (config.certify.force_nonconstant) certify["nonconstant"] = true;
  if (config.certify.has_D0) certify["D0"] = config.certify.D0;
  if (!config.certify.sweep_betas.empty()) {
    certify["sweep_betas"] = config.certify.sweep_betas;
  }
  if (!certify.empty()) j["certify"] = std::move(certify);

  json meanfield;
  meanfield["n_list"] = config.meanfield.n_list;
  meanfield["init_window"] = config.meanfield.init_window;
  meanfield["study"] = config.meanfield.study;
  meanfield["deltas"] = config.meanfield.deltas;
  meanfield["count"] = config.meanfield.count;
  meanfield["rescale_dt"] = config.meanfield.rescale_dt;
  j["meanfield"] = std::move(meanfield);

  j["sweep"] = json{{"speeds", config.sweep.speeds}};
  return j;
}

std::vector<InitialPath> build_initial_paths(const RunConfig& config) {
  if (config.initial.use_law) {
    InitialLaw law = config.initial.law;
    law.seed = config.seed;
    law.speed_bound = config.model.s;
    return sample_initial_paths(law, config.initial.count);
  }
  std::vector<InitialPath> paths;
  paths.reserve(config.initial.agents.size());
  for (const ExplicitAgent& agent : config.initial.agents) {
    if (agent.piecewise) {
      paths.push_back(InitialPath::piecewise_linear_velocity(
          agent.x, agent.break_times, agent.break_velocities));
    } else {
      paths.push_back(InitialPath::constant_velocity(agent.x, agent.v));
    }
  }
  return paths;
}

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::string text;
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (k > 0) text += ',';
    text += header[k];
  }
  text += '\n';
  for (const std::vector<std::string>& row : rows) {
    require(row.size() == header.size(), ErrorCode::Usage,
            "CSV row width mismatch in " + path);
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k > 0) text += ',';
      text += row[k];
    }
    text += '\n';
  }
  write_text_file(path, text);
}

void write_json(const std::string& path, const nlohmann::json& doc) {
  write_text_file(path, doc.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Experiment pipelines
// ---------------------------------------------------------------------------

namespace {

struct InvariantCheck {
  std::string name;
  bool pass = false;
  std::string details;
};

json checks_to_json(const std::vector<InvariantCheck>& checks) {
  json arr = json::array();
  for (const InvariantCheck& check : checks) {
    arr.push_back(json{{"name", check.name},
                       {"pass", check.pass},
                       {"details", check.details}});
  }
  return arr;
}

void write_diagnostics_csv(const std::string& path, const DiagnosticsSeries& series) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(series.rows.size());
  for (const DiagnosticsRow& r : series.rows) {
    rows.push_back({format_g17(r.t), format_g17(r.dX), format_g17(r.dV),
                    format_g17(r.Rv), format_g17(r.D), format_g17(r.taubar),
                    format_g17(r.psibar)});
  }
  write_csv(path, {"t", "dX", "dV", "Rv", "D", "taubar", "psibar"}, rows);
}

void write_trajectory_csv(const std::string& path,
                          const std::vector<TrajectoryHistory>& paths) {
  const int d = paths.empty() ? 0 : paths.front().dim();
  std::vector<std::string> header = {"agent_id", "t"};
  for (int k = 1; k <= d; ++k) header.push_back("x_" + std::to_string(k));
  for (int k = 1; k <= d; ++k) header.push_back("v_" + std::to_string(k));
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    for (std::size_t k = 0; k < paths[i].knot_count(); ++k) {
      std::vector<std::string> row;
      row.reserve(header.size());
      row.push_back(std::to_string(i));
      row.push_back(format_g17(paths[i].knot_time(k)));
      const std::span<const double> x = paths[i].knot_position(k);
      const std::span<const double> v = paths[i].knot_velocity(k);
      for (int c = 0; c < d; ++c) row.push_back(format_g17(x[static_cast<std::size_t>(c)]));
      for (int c = 0; c < d; ++c) row.push_back(format_g17(v[static_cast<std::size_t>(c)]));
      rows.push_back(std::move(row));
    }
  }
  write_csv(path, header, rows);
}

json delay_audit_to_json(const DelayAudit& audit) {
  json j;
  j["solves"] = audit.solves;
  j["max_iterations"] = audit.max_iterations;
  j["max_residual"] = audit.max_residual;
  j["max_delay_slack"] = audit.solves > 0 ? audit.max_delay_slack : 0.0;
  j["min_lookback"] = audit.solves > 0 ? audit.min_lookback : 0.0;
  return j;
}

// Measures the diameters the certificate machinery needs from initial data.
struct InitialSummary {
  double dX0 = 0.0;
  double dV0 = 0.0;
  double L_v0 = 0.0;
  bool constant = true;
};

InitialSummary summarize_initial(const std::vector<InitialPath>& paths) {
  InitialSummary out;
  const std::size_t n = paths.size();
  const int d = paths.front().dim();
  std::vector<double> v_i(static_cast<std::size_t>(d));
  std::vector<double> v_j(static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < n; ++i) {
    out.L_v0 = std::max(out.L_v0, paths[i].velocity_slope_bound());
    if (paths[i].kind() != InitialPath::Kind::ConstantVelocity) out.constant = false;
    for (std::size_t j = i + 1; j < n; ++j) {
      out.dX0 = std::max(out.dX0, distance(std::span<const double>(paths[i].x_at_zero()),
                                           std::span<const double>(paths[j].x_at_zero())));
      paths[i].velocity(0.0, std::span<double>(v_i));
      paths[j].velocity(0.0, std::span<double>(v_j));
      out.dV0 = std::max(out.dV0, distance(std::span<const double>(v_i),
                                           std::span<const double>(v_j)));
    }
  }
  if (out.L_v0 > 0.0) out.constant = false;
  return out;
}

json certificate_to_json(const FlockingCertificate& cert) {
  json j;
  j["eta"] = cert.eta;
  j["epsilon"] = cert.epsilon;
  j["sigma"] = cert.sigma;
  j["kappa"] = cert.kappa;
  j["tau_star"] = cert.tau_star;
  j["psi_star"] = cert.psi_star;
  j["c1"] = cert.c1;
  j["c_star"] = cert.c_star;
  j["inputs"] = json{{"dX0", cert.inputs.dX0},  {"dV0", cert.inputs.dV0},
                     {"s", cert.inputs.s},      {"L_v0", cert.inputs.L_v0},
                     {"D0", cert.inputs.D0},    {"kernel", cert.inputs.kernel_id}};
  return j;
}

json certificate_result_to_json(const CertificateResult& result) {
  json j;
  j["feasible"] = result.feasible;
  if (result.feasible) {
    j["certificate"] = certificate_to_json(result.certificate);
  } else {
    j["reason"] = result.reason;
  }
  json search;
  search["eta_grid"] = result.eta_grid;
  if (!result.epsilon_grid.empty()) search["epsilon_grid"] = result.epsilon_grid;
  search["sigma_grid"] = result.sigma_grid;
  j["search"] = std::move(search);
  return j;
}

// Shared certify step: picks the recipe matching the data (or the forced
// search), computing eta via find_eta when the config does not pin it.
CertificateResult run_certify(const RunConfig& config,
                              const std::vector<InitialPath>& paths,
                              const InfluenceFunction& kernel, json* extra) {
  const InitialSummary init = summarize_initial(paths);
  double eta = config.certify.eta;
  EtaSearch eta_search;
  if (!config.certify.has_eta) {
    eta_search = find_eta(kernel, init.dX0, init.dV0);
    eta = eta_search.eta;
    if (extra != nullptr) {
      (*extra)["eta_search"] = json{{"feasible", eta_search.feasible},
                                    {"eta", eta_search.eta},
                                    {"margin", eta_search.margin}};
    }
    if (!eta_search.feasible) {
      CertificateResult result;
      result.reason = "no eta in (0,1) keeps the kernel envelope above eta at the "
                      "worst-case spread; margin " + format_g17(eta_search.margin);
      return result;
    }
  }
  const bool constant_data = init.constant && !config.certify.force_nonconstant;
  if (constant_data) {
    return critical_speed_constant_data(kernel, init.dX0, init.dV0, config.model.s,
                                        eta, config.certify.menus);
  }
  double D0 = 0.0;
  if (config.certify.has_D0) {
    D0 = config.certify.D0;
  } else if (init.constant) {
    D0 = 0.0;  // constant histories: retarded velocities equal current ones
  } else {
    // The initial drift depends on the propagation speed through the delays;
    // evaluate it at the configured speed. Drift bounds shrink as c grows, so
    // a certificate at c_star >= c stays on the safe side.
    require(config.model.c > config.model.s, ErrorCode::Config,
            "nonconstant initial data: set model.c > s (to measure the initial "
            "drift) or provide certify.D0 explicitly");
    std::vector<TrajectoryHistory> tracks;
    tracks.reserve(paths.size());
    for (const InitialPath& p : paths) tracks.emplace_back(p, config.model.s);
    D0 = observe(tracks, 0.0, kernel, config.model.c).D;
    if (extra != nullptr) {
      (*extra)["D0_measured_at_c"] = config.model.c;
    }
  }
  return feasibility_nonconstant(kernel, init.dX0, init.dV0, config.model.s,
                                 init.L_v0, D0, config.certify.menus);
}

int pipeline_simulate(const RunConfig& config, const std::string& out_dir,
                      std::vector<InvariantCheck>& checks, json& results) {
  require(config.model.c > config.model.s, ErrorCode::Config,
          "simulate requires c > s (agents travel slower than c)");
  const std::vector<InitialPath> paths = build_initial_paths(config);

  FlockModel model;
  model.c = config.model.c;
  model.kernel = config.model.kernel;

  std::vector<TrajectoryHistory> tracks;
  DiagnosticsSeries series;
  double max_speed = 0.0;
  if (config.model.scheme == Scheme::RK4Predicted) {
    SimulationOptions options;
    options.dt = config.model.dt;
    options.horizon = config.model.horizon;
    options.sample_every = config.model.sample_every;
    RunResult run = simulate(model, paths, options);
    max_speed = run.summary.max_speed;
    results["steps"] = run.summary.steps;
    results["dt_effective"] = run.summary.dt_effective;
    results["corrected_steps"] = run.summary.corrected_steps;
    results["delays"] = delay_audit_to_json(run.summary.delays);
    checks.push_back(
        {"delay_within_window",
         run.summary.delays.solves == 0 ||
             run.summary.delays.max_delay_slack <= 1e-10,
         "max over solves of tau - |x_i - x_j|/(c - s): " +
             format_g17(run.summary.delays.solves > 0
                            ? run.summary.delays.max_delay_slack
                            : 0.0)});
    series = std::move(run.diagnostics);
    tracks = std::move(run.paths);
  } else {
    PicardOptions options;
    options.horizon = config.model.horizon;
    PicardResult fixed_point = solve_picard(model, paths, options);
    results["picard"] = json{{"sweeps", fixed_point.sweeps},
                             {"converged", fixed_point.converged},
                             {"analytic_factor", fixed_point.analytic_factor},
                             {"band_m", fixed_point.band_m},
                             {"grid_h", fixed_point.grid_h}};
    checks.push_back({"picard_converged", fixed_point.converged,
                      "sweeps: " + std::to_string(fixed_point.sweeps)});
    tracks = std::move(fixed_point.paths);
    for (std::size_t k = 0; k < tracks.front().knot_count(); ++k) {
      if (k % static_cast<std::size_t>(config.model.sample_every) == 0 ||
          k + 1 == tracks.front().knot_count()) {
        series.rows.push_back(
            observe(tracks, tracks.front().knot_time(k), model.kernel, model.c));
      }
    }
    for (const TrajectoryHistory& track : tracks) {
      for (std::size_t k = 0; k < track.knot_count(); ++k) {
        max_speed = std::max(max_speed, norm(track.knot_velocity(k)));
      }
    }
  }

  results["max_speed"] = max_speed;
  checks.push_back({"velocity_bound", max_speed <= config.model.s + 1e-7,
                    "max |v| = " + format_g17(max_speed) + " vs s = " +
                        format_g17(config.model.s)});
  bool finite = true;
  for (const DiagnosticsRow& row : series.rows) {
    if (!std::isfinite(row.dX) || !std::isfinite(row.dV) || !std::isfinite(row.Rv) ||
        !std::isfinite(row.D) || !std::isfinite(row.taubar) ||
        !std::isfinite(row.psibar)) {
      finite = false;
      break;
    }
  }
  checks.push_back({"diagnostics_finite", finite,
                    std::to_string(series.rows.size()) + " rows"});
  if (!series.rows.empty()) {
    const DiagnosticsRow& last = series.rows.back();
    results["final"] = json{{"t", last.t},         {"dX", last.dX},
                            {"dV", last.dV},       {"Rv", last.Rv},
                            {"D", last.D},         {"taubar", last.taubar},
                            {"psibar", last.psibar}};
  }

  write_diagnostics_csv(out_dir + "/diagnostics.csv", series);
  write_trajectory_csv(out_dir + "/trajectory.csv", tracks);
  return 0;
}

int pipeline_certify(const RunConfig& config, const std::string& out_dir,
                     std::vector<InvariantCheck>& checks, json& results) {
  const std::vector<InitialPath> paths = build_initial_paths(config);

  if (!config.certify.sweep_betas.empty()) {
    std::vector<std::vector<std::string>> rows;
    json sweep_results = json::array();
    for (double beta : config.certify.sweep_betas) {
      RunConfig beta_config = config;
      beta_config.certify.sweep_betas.clear();
      const InfluenceFunction kernel = InfluenceFunction::power_law(beta);
      json extra;
      const CertificateResult result = run_certify(beta_config, paths, kernel, &extra);
      rows.push_back({format_g17(beta), result.feasible ? "1" : "0",
                      format_g17(result.feasible ? result.certificate.c_star
                                                 : std::numeric_limits<double>::quiet_NaN())});
      json entry = certificate_result_to_json(result);
      entry["beta"] = beta;
      if (!extra.empty()) entry["detail"] = extra;
      sweep_results.push_back(std::move(entry));
      if (result.feasible) {
        std::string why;
        const bool ok =
            certificate_conditions_hold(result.certificate, result.certificate.c_star, &why);
        checks.push_back({"certificate_conditions(beta=" + format_g17(beta) + ")",
                          ok, ok ? "re-validated" : why});
      }
    }
    write_csv(out_dir + "/certify_sweep.csv", {"beta", "feasible", "c_star"}, rows);
    results["sweep"] = std::move(sweep_results);
    return 0;
  }

  json extra;
  const CertificateResult result =
      run_certify(config, paths, config.model.kernel, &extra);
  json doc = certificate_result_to_json(result);
  if (!extra.empty()) doc["detail"] = extra;
  write_json(out_dir + "/certificate.json", doc);
  results["certify"] = doc;
  if (!result.feasible) return 2;
  std::string why;
  const bool ok =
      certificate_conditions_hold(result.certificate, result.certificate.c_star, &why);
  checks.push_back({"certificate_conditions", ok, ok ? "re-validated" : why});
  return 0;
}

int pipeline_flock_run(const RunConfig& config, const std::string& out_dir,
                       std::vector<InvariantCheck>& checks, json& results) {
  const std::vector<InitialPath> paths = build_initial_paths(config);
  json extra;
  const CertificateResult cert_result =
      run_certify(config, paths, config.model.kernel, &extra);
  json cert_doc = certificate_result_to_json(cert_result);
  if (!extra.empty()) cert_doc["detail"] = extra;
  write_json(out_dir + "/certificate.json", cert_doc);
  results["certify"] = cert_doc;
  if (!cert_result.feasible) return 2;
  const FlockingCertificate& cert = cert_result.certificate;

  FlockModel model;
  model.c = cert.c_star;
  model.kernel = config.model.kernel;
  SimulationOptions options;
  options.dt = config.model.dt;
  options.horizon =
      config.model.horizon > 0.0 ? config.model.horizon : 20.0 / cert.eta;
  options.sample_every = config.model.sample_every;

  RunResult run = simulate(model, paths, options);
  results["run"] = json{{"c", model.c},
                        {"horizon", options.horizon},
                        {"steps", run.summary.steps},
                        {"max_speed", run.summary.max_speed},
                        {"corrected_steps", run.summary.corrected_steps},
                        {"delays", delay_audit_to_json(run.summary.delays)}};

  checks.push_back({"velocity_bound",
                    run.summary.max_speed <= config.model.s + 1e-7,
                    "max |v| = " + format_g17(run.summary.max_speed)});
  checks.push_back(
      {"delay_within_window",
       run.summary.delays.solves == 0 ||
           run.summary.delays.max_delay_slack <= 1e-10,
       "max slack " + format_g17(run.summary.delays.solves > 0
                                     ? run.summary.delays.max_delay_slack
                                     : 0.0)});

  // Strict decay envelopes with a 1e-9 numerical slack.
  const DecayCheck decay =
      check_decay(run.diagnostics, cert.eta, cert.sigma, cert.kappa, 1e-9);
  json decay_json;
  decay_json["holds"] = decay.ok;
  decay_json["worst_velocity_margin"] = decay.worst_velocity_margin;
  decay_json["worst_drift_margin"] = decay.worst_drift_margin;
  decay_json["worst_spread_margin"] = decay.worst_spread_margin;
  if (!decay.ok) {
    decay_json["first_violation_time"] = decay.first_violation_time;
    decay_json["violated_field"] = decay.violated_field;
  }
  results["decay"] = std::move(decay_json);
  checks.push_back({"decay_envelopes", decay.ok,
                    decay.ok ? "dV, D, dX inside certified envelopes"
                             : "violated " + decay.violated_field + " at t=" +
                                   format_g17(decay.first_violation_time)});

  write_diagnostics_csv(out_dir + "/diagnostics.csv", run.diagnostics);
  write_trajectory_csv(out_dir + "/trajectory.csv", run.paths);
  return 0;
}

int pipeline_meanfield(const RunConfig& config, const std::string& out_dir,
                       std::vector<InvariantCheck>& checks, json& results) {
  require(config.initial.use_law, ErrorCode::Config,
          "meanfield experiments need a sampled initial law (initial.law)");
  require(config.model.c > config.model.s, ErrorCode::Config,
          "meanfield requires c > s");
  require(config.model.horizon > 0.0, ErrorCode::Config,
          "meanfield requires a positive horizon");
  InitialLaw law = config.initial.law;
  law.seed = config.seed;
  law.speed_bound = config.model.s;

  FlockModel model;
  model.c = config.model.c;
  model.kernel = config.model.kernel;
  SimulationOptions options;
  options.dt = config.model.dt;
  options.horizon = config.model.horizon;
  options.sample_every = config.model.sample_every;

  if (config.meanfield.study == "convergence") {
    const ConvergenceStudy study = particle_convergence_study(
        law, config.meanfield.n_list, model, options, config.meanfield.init_window,
        config.meanfield.rescale_dt);
    std::vector<std::vector<std::string>> rows;
    json pairs = json::array();
    bool nonincreasing = true;
    for (std::size_t k = 0; k < study.pairs.size(); ++k) {
      const ConvergencePair& p = study.pairs[k];
      rows.push_back({std::to_string(p.n_small), std::to_string(p.n_large),
                      format_g17(p.w0), format_g17(p.w0_error), format_g17(p.wT),
                      format_g17(p.wT_error), format_g17(p.ratio)});
      pairs.push_back(json{{"n_small", p.n_small},
                           {"n_large", p.n_large},
                           {"w0", p.w0},
                           {"w0_error", p.w0_error},
                           {"wT", p.wT},
                           {"wT_error", p.wT_error},
                           {"ratio", p.ratio}});
      if (k > 0 && study.pairs[k].wT > study.pairs[k - 1].wT) nonincreasing = false;
    }
    write_csv(out_dir + "/meanfield.csv",
              {"n_small", "n_large", "w0", "w0_error", "wT", "wT_error", "ratio"},
              rows);
    results["pairs"] = std::move(pairs);
    checks.push_back({"wT_nonincreasing", nonincreasing,
                      "transport distance between consecutive ensembles"});
  } else {
    const PerturbationStudy study =
        perturbation_study(law, config.meanfield.count, config.meanfield.deltas,
                           model, options, config.meanfield.init_window);
    std::vector<std::vector<std::string>> rows;
    json entries = json::array();
    double ratio_min = std::numeric_limits<double>::infinity();
    double ratio_max = 0.0;
    for (const PerturbationRow& r : study.rows) {
      rows.push_back({format_g17(r.delta), format_g17(r.w0), format_g17(r.w0_error),
                      format_g17(r.wT), format_g17(r.wT_error), format_g17(r.ratio)});
      entries.push_back(json{{"delta", r.delta},
                             {"w0", r.w0},
                             {"w0_error", r.w0_error},
                             {"wT", r.wT},
                             {"wT_error", r.wT_error},
                             {"ratio", r.ratio}});
      if (r.w0 > 0.0) {
        ratio_min = std::min(ratio_min, r.ratio);
        ratio_max = std::max(ratio_max, r.ratio);
      }
    }
    write_csv(out_dir + "/meanfield.csv",
              {"delta", "w0", "w0_error", "wT", "wT_error", "ratio"}, rows);
    results["rows"] = std::move(entries);
    const bool banded = ratio_max <= 3.0 * std::max(ratio_min, 1e-300);
    checks.push_back({"stability_ratio_band", banded,
                      "wT/w0 range [" + format_g17(ratio_min) + ", " +
                          format_g17(ratio_max) + "], factor-3 band"});
  }
  return 0;
}

int pipeline_sweep(const RunConfig& config, const std::string& out_dir,
                   std::vector<InvariantCheck>& checks, json& results) {
  const std::vector<InitialPath> paths = build_initial_paths(config);
  require(config.model.horizon > 0.0, ErrorCode::Config,
          "sweep requires a positive horizon");

  SimulationOptions options;
  options.dt = config.model.dt;
  options.horizon = config.model.horizon;
  options.sample_every = config.model.sample_every;
  options.collect_diagnostics = false;

  FlockModel model;
  model.kernel = config.model.kernel;
  model.c = config.sweep.speeds.front();
  const RunResult classical = simulate_undelayed(model, paths, options);

  std::vector<std::vector<std::string>> rows;
  json entries = json::array();
  std::vector<double> totals;
  for (double c : config.sweep.speeds) {
    model.c = c;
    const RunResult delayed = simulate(model, paths, options);
    const StateGap gap = knot_state_gap(delayed, classical);
    const double total = gap.position_sup + gap.velocity_sup;
    totals.push_back(total);
    rows.push_back({format_g17(c), format_g17(gap.position_sup),
                    format_g17(gap.velocity_sup), format_g17(total)});
    entries.push_back(json{{"c", c},
                           {"position_gap", gap.position_sup},
                           {"velocity_gap", gap.velocity_sup},
                           {"total_gap", total}});
  }
  write_csv(out_dir + "/sweep.csv",
            {"c", "position_gap", "velocity_gap", "total_gap"}, rows);
  results["speeds"] = std::move(entries);

  bool decreasing = true;
  for (std::size_t k = 1; k < totals.size(); ++k) {
    if (!(totals[k] < totals[k - 1])) decreasing = false;
  }
  checks.push_back({"distance_to_classical_decreasing", decreasing,
                    "sup-norm gap to the undelayed solution along increasing c"});
  return 0;
}

}  // namespace

int run_experiment(const RunConfig& config, Experiment experiment,
                   const std::string& out_dir) {
  std::error_code fs_error;
  std::filesystem::create_directories(out_dir, fs_error);
  require(!fs_error, ErrorCode::Usage,
          "cannot create output directory: " + out_dir + " (" + fs_error.message() + ")");

  std::vector<InvariantCheck> checks;
  json results;
  int status = 0;
  switch (experiment) {
    case Experiment::Simulate:
      status = pipeline_simulate(config, out_dir, checks, results);
      break;
    case Experiment::Certify:
      status = pipeline_certify(config, out_dir, checks, results);
      break;
    case Experiment::CertifiedFlockingRun:
      status = pipeline_flock_run(config, out_dir, checks, results);
      break;
    case Experiment::MeanfieldStudy:
      status = pipeline_meanfield(config, out_dir, checks, results);
      break;
    case Experiment::ConsistencySweep:
      status = pipeline_sweep(config, out_dir, checks, results);
      break;
  }
  int failures = 0;
  for (const InvariantCheck& check : checks) {
    if (!check.pass) ++failures;
  }
  // No wall-clock or other machine state in the summary: identical config and
  // seed must produce byte-identical outputs across runs.
  json summary;
  summary["experiment"] = experiment_name(experiment);
  summary["config"] = config_to_json(config);
  summary["results"] = std::move(results);
  summary["invariant_checks"] = checks_to_json(checks);
  summary["invariant_failures"] = failures;
  write_json(out_dir + "/summary.json", summary);

  if (status != 0) return status;
  return failures > 0 ? 1 : 0;
}

}  // namespace flock
