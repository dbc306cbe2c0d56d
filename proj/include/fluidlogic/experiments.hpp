#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "config.hpp"
#include "modal.hpp"
#include "parser.hpp"
#include "sde.hpp"
#include "training.hpp"

namespace fluidlogic {

// ---------------------------------------------------------------------------
// Case-study harness.  Each experiment builds its SDE library, atoms and
// objectives from an ExperimentConfig, trains, evaluates, and writes
// artifacts (metrics.json, loss series, profile CSVs, checkpoint) under
// out_dir.  All randomness is derived from cfg.seed.
// ---------------------------------------------------------------------------

struct ExperimentSetup {
  SdeLibrary lib;
  SdeLibrary baseline_lib;  // deontic only: analytic stay-inside baseline
  AtomRegistry atoms;
  WorldState world;
  std::vector<WorldState> eval_worlds;
  std::vector<Sample> data;
  std::vector<FormulaObjective> objectives;
};

struct ExperimentResult {
  std::vector<MetricsRecord> records;
  std::vector<std::vector<LossReport>> loss_series;  // aligned with records
};

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write: " + path);
  os << text;
}

inline void write_metrics(const std::string& path,
                          std::span<const MetricsRecord> records) {
  Json arr = Json::array();
  for (const auto& r : records) {
    r.validate();
    arr.push_back(r.to_json());
  }
  write_text(path, arr.dump(2) + "\n");
}

inline void write_loss_jsonl(const std::string& path,
                             std::span<const LossReport> series) {
  std::string out;
  for (const auto& r : series) out += loss_report_json(r).dump() + "\n";
  write_text(path, out);
}

inline void write_profile_csv(const std::string& path, const TimeProfile& p) {
  std::string out = "time,L_box,U_diamond,gap\n";
  char buf[160];
  for (std::size_t i = 0; i < p.time.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g,%.12g\n", p.time[i],
                  p.l_box[i], p.u_diamond[i], p.gap[i]);
    out += buf;
  }
  write_text(path, out);
}

inline Mlp make_net(const std::string& name, std::vector<int> widths,
                    std::uint64_t seed) {
  return Mlp::make(name, std::move(widths), seed, /*zero_head=*/true);
}

// Effective constant diffusion target: softplus(0) = ln 2 at the zero-headed
// init, so sigma_scale = target / ln 2 makes the initial sigma == target.
inline double sigma_scale_for(double target) {
  return target / std::log(2.0);
}

// Fraction of paths whose windowed trajectory ever violates `pred`.
template <class Pred>
double path_fraction(const ValueBundle& b, Pred&& pred) {
  int hits = 0;
  for (int n = 0; n < b.n_paths; ++n) {
    bool hit = false;
    for (int k = 0; k <= b.k_steps && !hit; ++k) hit = pred(b.state(n, k));
    hits += hit ? 1 : 0;
  }
  return static_cast<double>(hits) / b.n_paths;
}

}  // namespace detail

// ===========================================================================
// Swarm: hallucinated-chasm study.  Three rovers drive a shared
// goal-seeking dynamics (double integrator + PD controller) across an arena
// with a chasm on the true route.  rover3's believed position is offset past
// the chasm, so its doxastic Box(safe) is confidently positive while the
// swarm's conditioned knowledge sees Diamond(collision).
// ===========================================================================

struct SwarmParams {
  double chasm_x = 1.8, chasm_y = 2.0, chasm_r = 0.35;
  double start_x = 0.6, start_y = 2.0;
  double goal_x = 3.4, goal_y = 2.0;
  double kp = 2.0, kd = 2.4;       // PD gains of the cloned controller
  double atom_scale = 4.0;
  double sigma_body = 0.05, sigma_sense = 0.12;
  double horizon = 1.0;
  int k_steps = 16;
};

inline ExperimentSetup make_swarm_setup(const ExperimentConfig& cfg) {
  const SwarmParams P;
  ExperimentSetup s;

  // double-integrator base: pos' = vel, vel' = learned controller
  const std::vector<double> integrator = {
      0, 0, 1, 0,
      0, 0, 0, 1,
      0, 0, 0, 0,
      0, 0, 0, 0};

  auto spec_common = [&](SdeSpec& sp) {
    sp.dim = 4;
    sp.horizon = P.horizon;
    sp.k_steps = P.k_steps;
    sp.base_drift = "linear";
    sp.base_params = integrator;
    sp.diffusion = detail::make_net(sp.key + ".diffusion", {4, 8, 4},
                                    mix(cfg.seed, 0xD1Full));
  };

  SdeSpec temporal;
  temporal.key = "temporal";
  spec_common(temporal);
  temporal.init = InitPolicy::TrueState;
  temporal.sigma_scale = detail::sigma_scale_for(P.sigma_body);
  temporal.drift = detail::make_net("temporal.drift", {4, 24, 4},
                                    mix(cfg.seed, 0x11ull));
  s.lib.add(temporal);

  SdeSpec dox;
  dox.key = "doxastic:rover3";
  spec_common(dox);
  dox.init = InitPolicy::BelievedState;
  dox.agent = "rover3";
  dox.sigma_scale = detail::sigma_scale_for(P.sigma_body);
  dox.drift = detail::make_net("doxastic:rover3.drift", {4, 24, 4},
                               mix(cfg.seed, 0x22ull));
  s.lib.add(dox);

  SdeSpec epi;
  epi.key = "epistemic:swarm";
  spec_common(epi);
  epi.init = InitPolicy::Conditioned;
  epi.obs_indices = {0, 1};  // observed position
  epi.sigma_scale = detail::sigma_scale_for(P.sigma_sense);
  epi.drift = detail::make_net("epistemic:swarm.drift", {6, 24, 4},
                               mix(cfg.seed, 0x33ull));
  s.lib.add(epi);

  // atoms on the position block
  AtomSpec safe;
  safe.name = "safe";
  safe.lower.kind = MarginSpec::Kind::SphereOutside;
  safe.lower.center = {P.chasm_x, P.chasm_y};
  safe.lower.slice_lo = 0;
  safe.lower.slice_len = 2;
  safe.lower.radius = P.chasm_r;
  safe.lower.scale = P.atom_scale;
  s.atoms.add(safe);

  AtomSpec collision;
  collision.name = "collision";
  collision.lower.kind = MarginSpec::Kind::SphereInside;
  collision.lower.center = {P.chasm_x, P.chasm_y};
  collision.lower.slice_lo = 0;
  collision.lower.slice_len = 2;
  collision.lower.radius = P.chasm_r;
  collision.lower.scale = P.atom_scale;
  s.atoms.add(collision);

  // world: true pose at the start, rover3's belief offset along the track
  s.world.time = 0.0;
  s.world.state = {P.start_x, P.start_y, 0.0, 0.0};
  s.world.beliefs["rover3"] = {P.start_x + cfg.belief_offset, P.start_y, 0.0,
                               0.0};

  // behavior-cloning data: PD rollouts from starts covering the track
  {
    const CounterRng rng{mix(cfg.seed, 0xDA7Aull), 3};
    const double dt = P.horizon / P.k_steps;
    const std::vector<std::array<double, 2>> starts = {
        {0.6, 2.0}, {1.4, 2.0}, {2.2, 2.0}, {2.8, 2.0}, {3.2, 2.0}};
    int rollout = 0;
    for (const auto& st : starts) {
      for (int r = 0; r < 10; ++r, ++rollout) {
        std::array<double, 4> z = {st[0], st[1], 0.0, 0.0};
        // jitter the start pose
        const auto j0 = rng.gauss2(rollout, 1000, 0);
        z[0] += 0.15 * j0[0];
        z[1] += 0.15 * j0[1];
        for (int k = 0; k < P.k_steps; ++k) {
          const double ax = P.kp * (P.goal_x - z[0]) - P.kd * z[2];
          const double ay = P.kp * (P.goal_y - z[1]) - P.kd * z[3];
          std::array<double, 4> z1 = {
              z[0] + z[2] * dt, z[1] + z[3] * dt,
              z[2] + ax * dt, z[3] + ay * dt};
          const auto g = rng.gauss2(rollout, k, 1);
          z1[2] += 0.08 * std::sqrt(dt) * g[0];
          z1[3] += 0.08 * std::sqrt(dt) * g[1];
          for (const char* key :
               {"temporal", "doxastic:rover3", "epistemic:swarm"}) {
            Sample smp;
            smp.key = key;
            smp.z0.assign(z.begin(), z.end());
            smp.z1.assign(z1.begin(), z1.end());
            s.data.push_back(std::move(smp));
          }
          z = z1;
        }
      }
    }
  }

  s.eval_worlds = {s.world};
  return s;
}

struct SwarmThresholds {
  double belief = 0.8;   // normalized L of B_rover3(G safe)
  double know = 0.3;     // normalized U of K_swarm(F collision)
};

// Evaluate the Eq.-8 monitors and the hallucination flag on a trained setup.
inline std::map<std::string, double> swarm_monitors(const ExperimentSetup& s,
                                                    const OperatorConfig& cfg,
                                                    std::uint64_t seed) {
  const FormulaPtr belief = parse("B_rover3(G(safe))");
  const FormulaPtr know = parse("K_swarm(F(collision))");
  const TruthInterval tb = eval(belief, s.world, s.lib, s.atoms, cfg, seed);
  const TruthInterval tk =
      eval(know, s.world, s.lib, s.atoms, cfg, mix(seed, 2));
  const SwarmThresholds th;
  std::map<std::string, double> m;
  m["l_belief_box_safe"] = tb.lower;
  m["u_know_diamond_collision"] = tk.upper;
  m["norm_belief"] = normalize(tb.lower);
  m["norm_knowledge"] = normalize(tk.upper);
  m["hallucination_flag"] =
      (normalize(tb.lower) > th.belief && normalize(tk.upper) > th.know) ? 1.0
                                                                         : 0.0;
  return m;
}

inline ExperimentResult run_swarm(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  ExperimentSetup s = make_swarm_setup(cfg);

  TrainConfig tc;
  tc.steps = cfg.steps_phase1;
  tc.lr = cfg.lr;
  tc.batch = cfg.batch;
  tc.seed = mix(cfg.seed, 0x57EBull);
  LossWeights w;  // task only: behavior cloning of the shared dynamics

  // W-gap series between the doxastic and temporal terminal clouds,
  // sampled once per epoch.
  std::vector<double> wgap_series;
  const int epoch = std::max(1, cfg.steps_phase1 / 12);
  auto hook = [&](int) {
    wgap_series.push_back(wasserstein_gap(
        s.lib.resolve("doxastic:rover3"), s.lib.resolve("temporal"), s.lib,
        s.world, s.lib.resolve("temporal").horizon, 256,
        mix(cfg.seed, 0x36A9ull), cfg.threads));
  };
  const auto series = train(s.lib, s.atoms, cfg.op_config(false), tc, w,
                            s.data, {}, {}, hook, epoch);
  if (wgap_series.empty()) hook(0);

  const auto mon = swarm_monitors(s, cfg.op_config(true), mix(cfg.seed, 0xE7A1ull));

  MetricsRecord rec;
  rec.experiment = "swarm";
  rec.seed = cfg.seed;
  rec.values = mon;
  rec.values["belief_offset"] = cfg.belief_offset;
  rec.values["wasserstein_gap"] = wgap_series.back();
  // stability of the W-gap over the last 20% of epochs
  {
    const std::size_t tail = std::max<std::size_t>(1, wgap_series.size() / 5);
    double lo = wgap_series.back(), hi = wgap_series.back();
    for (std::size_t i = wgap_series.size() - tail; i < wgap_series.size(); ++i) {
      lo = std::min(lo, wgap_series[i]);
      hi = std::max(hi, wgap_series[i]);
    }
    rec.values["wgap_tail_spread"] =
        (hi - lo) / std::max(1e-12, std::abs(wgap_series.back()));
  }
  if (!series.empty()) rec.values["task_loss_final"] = series.back().task;

  // artifacts
  {
    std::string csv = "epoch,wgap\n";
    char buf[64];
    for (std::size_t i = 0; i < wgap_series.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%zu,%.12g\n", i, wgap_series[i]);
      csv += buf;
    }
    detail::write_text(cfg.out_dir + "/wgap_series.csv", csv);
  }
  detail::write_loss_jsonl(cfg.out_dir + "/loss_series.jsonl", series);
  save_checkpoint(cfg.out_dir + "/swarm.ckpt",
                  std::vector<const Mlp*>{&s.lib.resolve("temporal").drift,
                                          &s.lib.resolve("temporal").diffusion,
                                          &s.lib.resolve("doxastic:rover3").drift,
                                          &s.lib.resolve("doxastic:rover3").diffusion,
                                          &s.lib.resolve("epistemic:swarm").drift,
                                          &s.lib.resolve("epistemic:swarm").diffusion});

  ExperimentResult res;
  detail::write_metrics(cfg.out_dir + "/metrics.json", {&rec, 1});
  res.records.push_back(std::move(rec));
  res.loss_series.push_back(series);
  return res;
}

// ===========================================================================
// Lorenz-63 forecasting (coordinates scaled by 1/10).  Variants: neural ODE
// vs neural SDE, each with or without the LINN phase.  Ground truth is the
// known vector field with constant diffusion under the same discretization.
// ===========================================================================

struct LorenzParams {
  double sigma = 10.0, rho = 28.0, beta = 8.0 / 3.0;
  double coord_scale = 10.0;
  double sigma_true = 0.06;   // scaled units
  double horizon = 1.6;
  int k_steps = 64;
  double center_z = 2.7;      // scaled attractor centroid height
  double lobe_threshold = 0.4;
};

inline SdeSpec lorenz_spec(const LorenzParams& P, const std::string& key,
                           bool stochastic, bool learned,
                           std::uint64_t seed) {
  SdeSpec sp;
  sp.key = key;
  sp.dim = 3;
  sp.horizon = P.horizon;
  sp.k_steps = P.k_steps;
  sp.base_drift = "lorenz63";
  sp.base_params = {P.sigma, P.rho, P.beta, P.coord_scale};
  sp.init = InitPolicy::TrueState;
  sp.drift = detail::make_net(key + ".drift", {3, 24, 3}, mix(seed, 0x10ull));
  sp.diffusion =
      detail::make_net(key + ".diffusion", {3, 8, 3}, mix(seed, 0x20ull));
  sp.sigma_scale = stochastic ? detail::sigma_scale_for(P.sigma_true) : 0.0;
  if (!learned) {
    // ground truth: exact base field, no learned correction
    for (auto& row : sp.drift.W) std::fill(row.begin(), row.end(), 0.0);
    for (auto& row : sp.drift.b) std::fill(row.begin(), row.end(), 0.0);
  }
  return sp;
}

struct LorenzGroundTruth {
  SdeLibrary lib;                       // "temporal" = true field + noise
  std::vector<WorldState> eval_worlds;  // on-attractor starts
  double r_max = 0.0;                   // bounded-ball radius (scaled)
};

inline LorenzGroundTruth make_lorenz_ground_truth(const LorenzParams& P,
                                                  std::uint64_t seed,
                                                  int threads) {
  LorenzGroundTruth gt;
  SdeSpec det = lorenz_spec(P, "temporal", false, false, seed);
  // burn onto the attractor with the deterministic field
  ValueCtx ctx;
  SdeLibrary burn_lib;
  burn_lib.add(det);
  WorldState w0;
  w0.state = {0.5, 0.5, 2.5};
  const BoundSde<ValueBackend> bd =
      bind_sde<ValueBackend>(ctx, burn_lib.resolve("temporal"));
  const ValueBundle burn =
      simulate<ValueBackend>(ctx, bd, VecD::of(w0.state), {}, 1, mix(seed, 1),
                             threads, 12.0, 3000);
  double r_data = 0.0;
  for (int k = 500; k <= burn.k_steps; ++k) {
    const VecD& z = burn.state(0, k);
    const double d = std::sqrt(z[0] * z[0] + z[1] * z[1] +
                               (z[2] - P.center_z) * (z[2] - P.center_z));
    r_data = std::max(r_data, d);
  }
  gt.r_max = 1.25 * r_data;
  for (int i = 0; i < 8; ++i) {
    WorldState w;
    const VecD& z = burn.state(0, 600 + i * 300);
    w.state = {z[0], z[1], z[2]};
    gt.eval_worlds.push_back(std::move(w));
  }
  gt.lib.add(lorenz_spec(P, "temporal", true, false, seed));
  return gt;
}

inline AtomRegistry lorenz_atoms(const LorenzParams& P, double r_max) {
  AtomRegistry atoms;
  AtomSpec bounded;
  bounded.name = "bounded";
  bounded.lower.kind = MarginSpec::Kind::SphereInside;
  bounded.lower.center = {0.0, 0.0, P.center_z};
  bounded.lower.radius = r_max;
  bounded.lower.scale = 1.0;
  atoms.add(bounded);

  AtomSpec left;
  left.name = "visits_left";
  left.lower.kind = MarginSpec::Kind::Halfspace;
  left.lower.normal = {-1.0, 0.0, 0.0};
  left.lower.offset = -P.lobe_threshold;
  left.lower.scale = 2.0;
  atoms.add(left);

  AtomSpec right;
  right.name = "visits_right";
  right.lower.kind = MarginSpec::Kind::Halfspace;
  right.lower.normal = {1.0, 0.0, 0.0};
  right.lower.offset = -P.lobe_threshold;
  right.lower.scale = 2.0;
  atoms.add(right);
  return atoms;
}

inline ExperimentResult run_lorenz(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  const LorenzParams P;
  LorenzGroundTruth gt =
      make_lorenz_ground_truth(P, mix(cfg.seed, 0x60D0ull), cfg.threads);
  const AtomRegistry atoms = lorenz_atoms(P, gt.r_max);

  // training pairs from the true stochastic system on the model grid
  std::vector<Sample> data;
  for (std::size_t i = 0; i < gt.eval_worlds.size(); ++i) {
    const ValueBundle b =
        simulate_world(gt.lib.resolve("temporal"), gt.eval_worlds[i], 1,
                       mix(cfg.seed, 0xDA7A1ull, i), cfg.threads);
    for (int k = 0; k < b.k_steps; ++k) {
      Sample s;
      s.key = "temporal";
      s.z0.assign(b.state(0, k).v.begin(), b.state(0, k).v.begin() + 3);
      s.z1.assign(b.state(0, k + 1).v.begin(), b.state(0, k + 1).v.begin() + 3);
      data.push_back(std::move(s));
    }
  }

  const FormulaPtr eq7 = parse("G(bounded) & F(visits_left | visits_right)");
  const FormulaPtr box_bounded = parse("G(bounded)");
  const FormulaPtr dia_lobe = parse("F(visits_left | visits_right)");

  struct Variant {
    std::string name;
    bool stochastic, linn;
  };
  std::vector<Variant> variants;
  if (cfg.variants == "all")
    variants = {{"node", false, false},
                {"sde", true, false},
                {"node_linn", false, true},
                {"sde_linn", true, true}};
  else
    variants = {{"node", false, false}, {"sde_linn", true, true}};

  // ground-truth reference values for the MAEs
  const OperatorConfig eval_cfg = cfg.op_config(true);
  std::vector<TruthInterval> gt_box(gt.eval_worlds.size()),
      gt_dia(gt.eval_worlds.size());
  for (std::size_t i = 0; i < gt.eval_worlds.size(); ++i) {
    gt_box[i] = eval(box_bounded, gt.eval_worlds[i], gt.lib, atoms, eval_cfg,
                     mix(cfg.seed, 0x67Bull, i));
    gt_dia[i] = eval(dia_lobe, gt.eval_worlds[i], gt.lib, atoms, eval_cfg,
                     mix(cfg.seed, 0x67Dull, i));
  }

  ExperimentResult res;
  std::vector<MetricsRecord> records;
  for (const Variant& v : variants) {
    SdeLibrary lib;
    lib.add(lorenz_spec(P, "temporal", v.stochastic, true,
                        mix(cfg.seed, 0x1013ull)));

    std::vector<FormulaObjective> objectives;
    if (v.linn) {
      FormulaObjective g;
      g.name = "box_bounded";
      g.formula = box_bounded;
      g.world = gt.eval_worlds[0];
      g.mode = FormulaObjective::Mode::HingeLower;
      g.margin = 0.5;
      objectives.push_back(g);
      FormulaObjective fl;
      fl.name = "dia_left";
      fl.formula = parse("F(visits_left)");
      fl.world = gt.eval_worlds[0];
      fl.margin = 0.3;
      objectives.push_back(fl);
      FormulaObjective fr;
      fr.name = "dia_right";
      fr.formula = parse("F(visits_right)");
      fr.world = gt.eval_worlds[0];
      fr.margin = 0.3;
      objectives.push_back(fr);
    }

    // phase 1: dynamics fit
    TrainConfig tc1;
    tc1.steps = cfg.steps_phase1;
    tc1.lr = cfg.lr;
    tc1.batch = cfg.batch;
    tc1.seed = mix(cfg.seed, 0xF1ull);
    LossWeights w1;
    auto series = train(lib, atoms, cfg.op_config(false), tc1, w1, data, {}, {});

    // phase 2: logic pressure with the lambda ramp
    if (v.linn) {
      // mined pool for the contradiction penalty (D.5)
      MiningConfig mc;
      mc.pool = 4;
      mc.ascent_steps = 8;
      mc.box_lo = {-2.5, -3.0, 0.0};
      mc.box_hi = {2.5, 3.0, 5.0};
      OperatorConfig mine_cfg = cfg.op_config(false);
      mine_cfg.n_mc = 8;
      const auto mined = mine_contradictions(eq7, lib, atoms, mine_cfg, mc,
                                             gt.eval_worlds[0],
                                             mix(cfg.seed, 0x31417ull));
      std::vector<WorldState> pool;
      for (const auto& m : mined) pool.push_back(m.world);

      TrainConfig tc2;
      tc2.steps = cfg.steps_phase2;
      tc2.lr = cfg.lr;
      tc2.batch = cfg.batch;
      tc2.seed = mix(cfg.seed, 0xF2ull);
      LossWeights w2;
      w2.beta_contra = 0.1;
      w2.gamma_physics = 0.01;
      w2.lambda_axiom["temporal"] = 0.1;
      w2.lambda_linn = {0.0, 1.0, 0, cfg.steps_phase2 / 2};
      OperatorConfig train_cfg = cfg.op_config(false);
      train_cfg.n_mc = std::min(cfg.n_mc_train, 24);
      auto series2 =
          train(lib, atoms, train_cfg, tc2, w2, data, objectives, pool);
      series.insert(series.end(), series2.begin(), series2.end());
    }

    // ---- evaluation
    MetricsRecord rec;
    rec.experiment = "lorenz";
    rec.seed = cfg.seed;
    rec.values["variant_stochastic"] = v.stochastic ? 1.0 : 0.0;
    rec.values["variant_linn"] = v.linn ? 1.0 : 0.0;

    const SdeSpec& spec = lib.resolve("temporal");
    const ValueBundle bundle = simulate_world(
        spec, gt.eval_worlds[0], cfg.n_mc_eval, mix(cfg.seed, 0xE7A2ull),
        cfg.threads);
    const double r_escape = 2.5 * gt.r_max;
    rec.values["escape_rate"] =
        detail::path_fraction(bundle, [&](const VecD& z) {
          const double dx = z[0], dy = z[1], dz = z[2] - P.center_z;
          return std::sqrt(dx * dx + dy * dy + dz * dz) > r_escape;
        });
    rec.values["lobe_left_frac"] =
        detail::path_fraction(bundle, [&](const VecD& z) {
          return z[0] < -P.lobe_threshold;
        });
    rec.values["lobe_right_frac"] =
        detail::path_fraction(bundle, [&](const VecD& z) {
          return z[0] > P.lobe_threshold;
        });

    double box_mae = 0.0, dia_mae = 0.0;
    for (std::size_t i = 0; i < gt.eval_worlds.size(); ++i) {
      const TruthInterval mb = eval(box_bounded, gt.eval_worlds[i], lib, atoms,
                                    eval_cfg, mix(cfg.seed, 0x67Bull, i));
      const TruthInterval md = eval(dia_lobe, gt.eval_worlds[i], lib, atoms,
                                    eval_cfg, mix(cfg.seed, 0x67Dull, i));
      box_mae += std::abs(mb.lower - gt_box[i].lower);
      dia_mae += std::abs(md.upper - gt_dia[i].upper);
    }
    rec.values["box_mae"] = box_mae / gt.eval_worlds.size();
    rec.values["diamond_mae"] = dia_mae / gt.eval_worlds.size();

    const TimeProfile prof =
        quantifier_profile(temporal_mod(), atom("bounded"), gt.eval_worlds[0],
                           lib, atoms, eval_cfg, mix(cfg.seed, 0x9f0ull));
    rec.values["delta_q"] = prof.mean_gap;
    const TruthInterval full = eval(eq7, gt.eval_worlds[0], lib, atoms,
                                    eval_cfg, mix(cfg.seed, 0xE0ull));
    rec.values["l_eq7"] = full.lower;
    rec.values["u_eq7"] = full.upper;
    rec.values["gt_l_box_bounded"] = gt_box[0].lower;
    rec.values["gt_u_diamond_lobe"] = gt_dia[0].upper;

    detail::write_profile_csv(
        cfg.out_dir + "/quantifier_profile_" + v.name + ".csv", prof);
    detail::write_loss_jsonl(cfg.out_dir + "/loss_series_" + v.name + ".jsonl",
                             series);
    save_checkpoint(
        cfg.out_dir + "/lorenz_" + v.name + ".ckpt",
        std::vector<const Mlp*>{&spec.drift, &spec.diffusion});

    records.push_back(rec);
    res.loss_series.push_back(std::move(series));
  }
  detail::write_metrics(cfg.out_dir + "/metrics.json", records);
  res.records = std::move(records);
  return res;
}

// ===========================================================================
// Deontic containment: a swirling, outward-pressed particle must stay inside
// the unit vessel.  O(safe) is trained (MaximizeLower); references are the
// untrained temporal dynamics and an analytic radial-cap baseline.
// ===========================================================================

struct DeonticParams {
  double a = 0.6, omega = 1.5;   // outward growth + swirl
  double sigma = 0.15;
  double r_vessel = 1.0;
  double atom_scale = 2.0;
  double horizon = 2.0;
  int k_steps = 32;
  double cap_k = 3.0, cap_r0 = 0.6;  // analytic baseline parameters
};

inline ExperimentSetup make_deontic_setup(const ExperimentConfig& cfg) {
  const DeonticParams P;
  ExperimentSetup s;
  const std::vector<double> swirl = {P.a, -P.omega, P.omega, P.a};

  auto common = [&](SdeSpec& sp, std::uint64_t salt) {
    sp.dim = 2;
    sp.horizon = P.horizon;
    sp.k_steps = P.k_steps;
    sp.init = InitPolicy::TrueState;
    sp.sigma_scale = detail::sigma_scale_for(P.sigma);
    sp.drift = detail::make_net(sp.key + ".drift", {2, 16, 2},
                                mix(cfg.seed, salt));
    sp.diffusion = detail::make_net(sp.key + ".diffusion", {2, 8, 2},
                                    mix(cfg.seed, salt + 1));
  };

  SdeSpec temporal;
  temporal.key = "temporal";
  temporal.base_drift = "linear";
  temporal.base_params = swirl;
  common(temporal, 0x41ull);
  s.lib.add(temporal);

  SdeSpec deontic;
  deontic.key = "deontic";
  deontic.base_drift = "linear";
  deontic.base_params = swirl;
  common(deontic, 0x43ull);
  s.lib.add(deontic);

  // analytic projection baseline lives in its own library under "temporal"
  SdeSpec baseline;
  baseline.key = "temporal";
  baseline.base_drift = "swirl_cap";
  baseline.base_params = {P.a, P.omega, P.cap_k, P.cap_r0};
  common(baseline, 0x45ull);
  s.baseline_lib.add(baseline);

  AtomSpec safe;
  safe.name = "safe";
  safe.lower.kind = MarginSpec::Kind::SphereInside;
  safe.lower.center = {0.0, 0.0};
  safe.lower.radius = P.r_vessel;
  safe.lower.scale = P.atom_scale;
  s.atoms.add(safe);

  s.world.state = {0.3, 0.0};
  s.eval_worlds = {s.world};

  FormulaObjective obligation;
  obligation.name = "obligation_safe";
  obligation.formula = parse("O(safe)");
  obligation.world = s.world;
  obligation.mode = FormulaObjective::Mode::MaximizeLower;
  obligation.weight = 1.0;
  s.objectives.push_back(obligation);
  return s;
}

inline ExperimentResult run_deontic(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  const DeonticParams P;
  ExperimentSetup s = make_deontic_setup(cfg);

  TrainConfig tc;
  tc.steps = cfg.steps_phase2;
  tc.lr = cfg.lr;
  tc.batch = cfg.batch;
  tc.seed = mix(cfg.seed, 0xDE0Full);
  LossWeights w;
  w.lambda_axiom["deontic"] = 0.1;
  w.lambda_linn = {1.0, 1.0, 0, 0};  // constant: satisfiability mode
  OperatorConfig train_cfg = cfg.op_config(false);
  train_cfg.n_mc = std::min(cfg.n_mc_train, 32);
  const auto series =
      train(s.lib, s.atoms, train_cfg, tc, w, {}, s.objectives, {});

  const OperatorConfig eval_cfg = cfg.op_config(true);
  MetricsRecord rec;
  rec.experiment = "deontic";
  rec.seed = cfg.seed;

  struct Row {
    std::string name;
    const SdeLibrary* lib;
    std::string formula;
  };
  const std::vector<Row> rows = {
      {"temporal", &s.lib, "G(safe)"},
      {"deontic", &s.lib, "O(safe)"},
      {"baseline", &s.baseline_lib, "G(safe)"},
  };
  for (const Row& row : rows) {
    const FormulaPtr fbox = parse(row.formula);
    const FormulaPtr fdia =
        row.name == "deontic" ? lnot(parse("O(!safe)")) : parse("F(safe)");
    const TruthInterval tb = eval(fbox, s.world, *row.lib, s.atoms, eval_cfg,
                                  mix(cfg.seed, 0xB07ull));
    const TruthInterval td = eval(fdia, s.world, *row.lib, s.atoms, eval_cfg,
                                  mix(cfg.seed, 0xB07ull));
    rec.values["l_box_safe_" + row.name] = tb.lower;
    rec.values["u_diamond_safe_" + row.name] = td.upper;
    rec.values["quantifier_gap_" + row.name] = td.upper - tb.lower;

    const std::string key = row.name == "deontic" ? "deontic" : "temporal";
    const ValueBundle b =
        simulate_world(row.lib->resolve(key), s.world, cfg.n_mc_eval,
                       mix(cfg.seed, 0xE7A3ull), cfg.threads);
    rec.values["exit_frac_" + row.name] =
        detail::path_fraction(b, [&](const VecD& z) {
          return std::sqrt(z[0] * z[0] + z[1] * z[1]) > P.r_vessel;
        });
  }

  // drift-field probes of the trained deontic dynamics
  {
    ValueCtx ctx;
    const SdeSpec& spec = s.lib.resolve("deontic");
    const BoundSde<ValueBackend> bd = bind_sde<ValueBackend>(ctx, spec);
    int inward = 0, total = 0;
    std::vector<double> mags, radii;
    for (int ring = 0; ring < 5; ++ring) {
      const double r = 0.2 + 0.2 * ring;
      for (int i = 0; i < 32; ++i) {
        const double th = 2.0 * std::numbers::pi * i / 32;
        const std::vector<double> z = {r * std::cos(th), r * std::sin(th)};
        const VecD f = drift_field<ValueBackend>(ctx, bd, VecD::of(z), {}, 0.0);
        if (r >= 0.85) {
          // boundary layer: radial component of the full field
          const double rad = (f[0] * z[0] + f[1] * z[1]) / r;
          inward += rad < 0.0 ? 1 : 0;
          ++total;
        }
        // learned correction magnitude vs radius
        ValueCtx c2;
        const VecD base = base_drift_field<ValueBackend>(c2, spec, VecD::of(z));
        const double cx = f[0] - base[0], cy = f[1] - base[1];
        mags.push_back(std::sqrt(cx * cx + cy * cy));
        radii.push_back(r);
      }
    }
    // rings 0.85+: only ring r=1.0 qualifies with the grid above; add r=0.9
    for (int i = 0; i < 32; ++i) {
      const double th = 2.0 * std::numbers::pi * i / 32;
      const double r = 0.9;
      const std::vector<double> z = {r * std::cos(th), r * std::sin(th)};
      const VecD f = drift_field<ValueBackend>(ctx, bd, VecD::of(z), {}, 0.0);
      const double rad = (f[0] * z[0] + f[1] * z[1]) / r;
      inward += rad < 0.0 ? 1 : 0;
      ++total;
    }
    rec.values["inward_frac"] = static_cast<double>(inward) / total;
    rec.values["drift_radius_corr"] = pearson_corr(mags, radii);

    std::string csv = "radius,correction_mag\n";
    for (std::size_t i = 0; i < mags.size(); ++i) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.3f,%.6f\n", radii[i], mags[i]);
      csv += buf;
    }
    detail::write_text(cfg.out_dir + "/drift_probe.csv", csv);
  }

  detail::write_loss_jsonl(cfg.out_dir + "/loss_series.jsonl", series);
  save_checkpoint(cfg.out_dir + "/deontic.ckpt",
                  std::vector<const Mlp*>{&s.lib.resolve("deontic").drift,
                                          &s.lib.resolve("deontic").diffusion});
  detail::write_metrics(cfg.out_dir + "/metrics.json", {&rec, 1});

  ExperimentResult res;
  res.records.push_back(std::move(rec));
  res.loss_series.push_back(series);
  return res;
}

// ===========================================================================
// Dispatch + eval-mode setup (untrained or checkpoint-restored library).
// ===========================================================================

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  if (cfg.experiment == "swarm") return run_swarm(cfg);
  if (cfg.experiment == "lorenz") return run_lorenz(cfg);
  if (cfg.experiment == "deontic") return run_deontic(cfg);
  throw ConfigError("unknown experiment: " + cfg.experiment);
}

inline ExperimentSetup make_eval_setup(const ExperimentConfig& cfg) {
  ExperimentSetup s;
  if (cfg.experiment == "swarm") {
    s = make_swarm_setup(cfg);
  } else if (cfg.experiment == "lorenz") {
    const LorenzParams P;
    LorenzGroundTruth gt =
        make_lorenz_ground_truth(P, mix(cfg.seed, 0x60D0ull), cfg.threads);
    s.lib.add(lorenz_spec(P, "temporal", true, true, mix(cfg.seed, 0x1013ull)));
    s.atoms = lorenz_atoms(P, gt.r_max);
    s.world = gt.eval_worlds[0];
    s.eval_worlds = gt.eval_worlds;
  } else if (cfg.experiment == "deontic") {
    s = make_deontic_setup(cfg);
  } else {
    throw ConfigError("unknown experiment: " + cfg.experiment);
  }
  if (!cfg.checkpoint.empty()) {
    const std::vector<Mlp> nets = load_checkpoint(cfg.checkpoint);
    for (const Mlp& net : nets) {
      const auto dot = net.name.rfind('.');
      if (dot == std::string::npos)
        throw ConfigError("checkpoint net '" + net.name +
                          "' is not of the form <sde>.<field>");
      const std::string key = net.name.substr(0, dot);
      const std::string field = net.name.substr(dot + 1);
      auto it = s.lib.specs.find(key);
      if (it == s.lib.specs.end())
        throw ConfigError("checkpoint net '" + net.name +
                          "' has no matching SDE in this experiment");
      Mlp& dst = field == "drift" ? it->second.drift : it->second.diffusion;
      if (field != "drift" && field != "diffusion")
        throw ConfigError("checkpoint net '" + net.name +
                          "' field must be drift or diffusion");
      if (dst.widths != net.widths)
        throw ConfigError("checkpoint net '" + net.name + "' width mismatch");
      dst.W = net.W;
      dst.b = net.b;
    }
  }
  return s;
}

}  // namespace fluidlogic
