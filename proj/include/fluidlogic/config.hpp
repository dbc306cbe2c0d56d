#pragma once

#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "common.hpp"
#include "modal.hpp"
#include "training.hpp"

namespace fluidlogic {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// ExperimentConfig: one JSON file drives a whole run.  Every field has a
// sensible desk-scale default; the file only lists overrides.
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  std::string experiment;          // "swarm" | "lorenz" | "deontic"
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out_dir = "out";
  std::string checkpoint;          // optional: load nets instead of training

  // operator semantics
  double tau_s = 0.1, tau_omega = 0.1;
  double bound = 2.0;
  int n_mc_train = 64, n_mc_eval = 256;
  int max_depth = 2;

  // training budgets
  int steps_phase1 = 300, steps_phase2 = 200;
  double lr = 1e-3;
  int batch = 16;

  // experiment-specific knobs
  double belief_offset = 2.2;      // swarm: rover3 position-belief error
  std::string variants = "default";  // lorenz: "default" (node+sde_linn) | "all"

  OperatorConfig op_config(bool eval_mode) const {
    OperatorConfig cfg;
    cfg.tau_s = tau_s;
    cfg.tau_omega = tau_omega;
    cfg.bound = bound;
    cfg.n_mc = eval_mode ? n_mc_eval : n_mc_train;
    cfg.max_depth = max_depth;
    cfg.threads = threads;
    return cfg;
  }
};

inline ExperimentConfig parse_experiment_config(const Json& j) {
  ExperimentConfig c;
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  if (!j.contains("experiment") || !j["experiment"].is_string())
    throw ConfigError("config: missing required string field 'experiment'");
  c.experiment = j["experiment"].get<std::string>();
  if (c.experiment != "swarm" && c.experiment != "lorenz" &&
      c.experiment != "deontic")
    throw ConfigError("config: unknown experiment '" + c.experiment + "'");

  auto num = [&](const char* key, double dflt, double lo, double hi) {
    if (!j.contains(key)) return dflt;
    if (!j[key].is_number())
      throw ConfigError(std::string("config: '") + key + "' must be a number");
    const double v = j[key].get<double>();
    if (v < lo || v > hi)
      throw ConfigError(std::string("config: '") + key + "' out of range");
    return v;
  };
  c.seed = static_cast<std::uint64_t>(num("seed", 1, 0, 1e18));
  c.threads = static_cast<int>(num("threads", 1, 1, 256));
  c.tau_s = num("tau_s", 0.1, 1e-6, 100);
  c.tau_omega = num("tau_omega", 0.1, 1e-6, 100);
  c.bound = num("bound", 2.0, 1e-6, 1e6);
  c.n_mc_train = static_cast<int>(num("n_mc_train", 64, 1, 1 << 20));
  c.n_mc_eval = static_cast<int>(num("n_mc_eval", 256, 1, 1 << 20));
  c.max_depth = static_cast<int>(num("max_depth", 2, 1, 8));
  c.steps_phase1 = static_cast<int>(num("steps_phase1", 300, 0, 5000));
  c.steps_phase2 = static_cast<int>(num("steps_phase2", 200, 0, 5000));
  c.lr = num("lr", 1e-3, 0, 1);
  c.batch = static_cast<int>(num("batch", 16, 1, 4096));
  c.belief_offset = num("belief_offset", 2.2, -10, 10);
  if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
  if (j.contains("checkpoint")) c.checkpoint = j["checkpoint"].get<std::string>();
  if (j.contains("variants")) {
    c.variants = j["variants"].get<std::string>();
    if (c.variants != "default" && c.variants != "all")
      throw ConfigError("config: 'variants' must be 'default' or 'all'");
  }
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config: " + path);
  Json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw ConfigError("config JSON parse error in " + path + ": " + e.what());
  }
  return parse_experiment_config(j);
}

// ---------------------------------------------------------------------------
// MetricsRecord.  `wall_seconds` deliberately stays out of the serialized
// form so records are byte-identical across machines and thread counts.
// ---------------------------------------------------------------------------

inline constexpr const char* kMetricsSchema = "fluidlogic-metrics-1";

struct MetricsRecord {
  std::string experiment;
  std::uint64_t seed = 0;
  std::map<std::string, double> values;  // sorted -> stable serialization
  double wall_seconds = 0.0;             // stdout only, never serialized

  void validate() const {
    for (const auto& [k, v] : values) {
      if (!std::isfinite(v))
        throw NumericError("metric '" + k + "' is not finite");
      if ((k.find("frac") != std::string::npos ||
           k.find("rate") != std::string::npos ||
           k.find("flag") != std::string::npos) &&
          (v < 0.0 || v > 1.0))
        throw NumericError("metric '" + k + "' outside [0,1]");
    }
  }

  Json to_json() const {
    Json j;
    j["schema"] = kMetricsSchema;
    j["experiment"] = experiment;
    j["seed"] = seed;
    Json vals = Json::object();
    for (const auto& [k, v] : values) vals[k] = v;
    j["values"] = vals;
    return j;
  }
};

inline Json loss_report_json(const LossReport& r) {
  Json j;
  j["step"] = r.step;
  j["task"] = r.task;
  j["contra"] = r.contra;
  j["physics"] = r.physics;
  j["axiom"] = r.axiom;
  j["linn"] = r.linn;
  j["lambda_linn"] = r.lambda_linn;
  j["total"] = r.total;
  Json lo = Json::object(), up = Json::object();
  for (const auto& [k, v] : r.formula_lower) lo[k] = v;
  for (const auto& [k, v] : r.formula_upper) up[k] = v;
  j["formula_lower"] = lo;
  j["formula_upper"] = up;
  return j;
}

}  // namespace fluidlogic
