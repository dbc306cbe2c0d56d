#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>

#include "fluidlogic/config.hpp"
#include "fluidlogic/mlp.hpp"

using namespace fluidlogic;

TEST_CASE("minimal config yields documented defaults") {
  const auto c = parse_experiment_config(Json::parse(R"({"experiment":"swarm"})"));
  CHECK(c.experiment == "swarm");
  CHECK(c.seed == 1);
  CHECK(c.threads == 1);
  CHECK(c.tau_s == 0.1);
  CHECK(c.tau_omega == 0.1);
  CHECK(c.bound == 2.0);
  CHECK(c.n_mc_train == 64);
  CHECK(c.n_mc_eval == 256);
  CHECK(c.steps_phase1 == 300);
  CHECK(c.steps_phase2 == 200);
  CHECK(c.belief_offset == 2.2);
  CHECK(c.variants == "default");
  CHECK(c.out_dir == "out");
  CHECK(c.checkpoint.empty());
}

TEST_CASE("config rejects malformed input with a config error") {
  auto bad = [](const char* text) {
    CHECK_THROWS_AS(parse_experiment_config(Json::parse(text)), ConfigError);
  };
  bad(R"([])");                                   // not an object
  bad(R"({})");                                   // missing experiment
  bad(R"({"experiment":7})");                     // wrong type
  bad(R"({"experiment":"maze"})");                // unknown experiment
  bad(R"({"experiment":"swarm","tau_s":0})");     // out of range
  bad(R"({"experiment":"swarm","tau_s":"hot"})"); // wrong type
  bad(R"({"experiment":"swarm","threads":0})");
  bad(R"({"experiment":"swarm","n_mc_eval":0})");
  bad(R"({"experiment":"swarm","steps_phase1":-1})");
  bad(R"({"experiment":"swarm","lr":2})");
  bad(R"({"experiment":"swarm","belief_offset":50})");
  bad(R"({"experiment":"lorenz","variants":"some"})");
}

TEST_CASE("overrides land, and op_config picks the right sample count") {
  const auto c = parse_experiment_config(Json::parse(R"({
    "experiment": "lorenz", "seed": 42, "threads": 4,
    "tau_s": 0.5, "tau_omega": 0.25, "bound": 1.5,
    "n_mc_train": 8, "n_mc_eval": 32, "variants": "all",
    "out_dir": "/tmp/x", "checkpoint": "a.ckpt"
  })"));
  CHECK(c.seed == 42);
  CHECK(c.variants == "all");
  CHECK(c.checkpoint == "a.ckpt");
  const OperatorConfig train_cfg = c.op_config(false);
  const OperatorConfig eval_cfg = c.op_config(true);
  CHECK(train_cfg.n_mc == 8);
  CHECK(eval_cfg.n_mc == 32);
  CHECK(eval_cfg.tau_s == 0.5);
  CHECK(eval_cfg.tau_omega == 0.25);
  CHECK(eval_cfg.bound == 1.5);
  CHECK(eval_cfg.threads == 4);
}

TEST_CASE("config loader reports missing files and bad JSON") {
  CHECK_THROWS_AS(load_experiment_config("/nonexistent/zz.json"), ConfigError);
  const std::string path = "/tmp/fluidlogic_bad_config.json";
  std::ofstream(path) << "{ not json";
  CHECK_THROWS_WITH(load_experiment_config(path),
                    Catch::Matchers::ContainsSubstring("parse error"));
  std::remove(path.c_str());
}

TEST_CASE("metrics validation enforces finiteness and unit ranges") {
  MetricsRecord r;
  r.experiment = "deontic";
  r.values["exit_frac"] = 0.03;
  r.values["inward_frac"] = 1.0;
  r.values["escape_rate"] = 0.0;
  r.values["alarm_flag"] = 1.0;
  r.values["l_box"] = -1.7;  // plain values may leave [0,1]
  CHECK_NOTHROW(r.validate());

  MetricsRecord nan_rec = r;
  nan_rec.values["l_box"] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(nan_rec.validate(), NumericError);

  MetricsRecord range_rec = r;
  range_rec.values["exit_frac"] = 1.5;
  CHECK_THROWS_AS(range_rec.validate(), NumericError);

  MetricsRecord neg_rec = r;
  neg_rec.values["escape_rate"] = -0.1;
  CHECK_THROWS_AS(neg_rec.validate(), NumericError);
}

TEST_CASE("metrics serialization is stable and omits wall time") {
  MetricsRecord a;
  a.experiment = "swarm";
  a.seed = 7;
  a.values["wasserstein_gap"] = 0.42;
  a.values["alarm_flag"] = 1.0;
  a.wall_seconds = 12.5;

  MetricsRecord b;
  b.experiment = "swarm";
  b.seed = 7;
  // same values inserted in the opposite order
  b.values["alarm_flag"] = 1.0;
  b.values["wasserstein_gap"] = 0.42;
  b.wall_seconds = 9999.0;

  const std::string sa = a.to_json().dump(2);
  const std::string sb = b.to_json().dump(2);
  CHECK(sa == sb);
  CHECK(sa.find("wall") == std::string::npos);

  const Json j = a.to_json();
  CHECK(j["schema"] == kMetricsSchema);
  CHECK(std::string(kMetricsSchema) == "fluidlogic-metrics-1");
  CHECK(j["experiment"] == "swarm");
  CHECK(j["seed"] == 7);
  CHECK(j["values"]["alarm_flag"] == 1.0);
  // map ordering puts alarm_flag before wasserstein_gap
  CHECK(sa.find("alarm_flag") < sa.find("wasserstein_gap"));
}

TEST_CASE("loss reports serialize every term") {
  LossReport r;
  r.step = 3;
  r.task = 0.5;
  r.contra = 0.25;
  r.physics = 0.125;
  r.axiom = 0.0625;
  r.linn = 2.0;
  r.lambda_linn = 0.75;
  r.total = 0.5 + 0.0625 + 0.75 * 2.0;
  r.formula_lower["goal"] = -0.5;
  r.formula_upper["goal"] = 0.5;
  const Json j = loss_report_json(r);
  CHECK(j["step"] == 3);
  CHECK(j["task"] == 0.5);
  CHECK(j["contra"] == 0.25);
  CHECK(j["physics"] == 0.125);
  CHECK(j["axiom"] == 0.0625);
  CHECK(j["linn"] == 2.0);
  CHECK(j["lambda_linn"] == 0.75);
  CHECK(j["formula_lower"]["goal"] == -0.5);
  CHECK(j["formula_upper"]["goal"] == 0.5);
}

TEST_CASE("checkpoint files start with the versioned magic header") {
  CHECK(std::string(kCheckpointHeader) == "FLUIDLOGIC-CKPT-1");
  const std::string path = "/tmp/fluidlogic_hdr_probe.ckpt";
  Mlp net = Mlp::make("probe.drift", {2, 3, 1}, 5, false);
  const std::vector<const Mlp*> nets = {&net};
  save_checkpoint(path, nets);
  std::ifstream is(path, std::ios::binary);
  std::string head(std::string(kCheckpointHeader).size(), '\0');
  is.read(head.data(), static_cast<std::streamsize>(head.size()));
  CHECK(head == kCheckpointHeader);
  std::remove(path.c_str());
}
