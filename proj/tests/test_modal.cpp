#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "fluidlogic/modal.hpp"
#include "fluidlogic/parser.hpp"
#include "fluidlogic/selfcheck.hpp"

using namespace fluidlogic;

namespace {

SdeLibrary one_sde(const std::string& key, int dim, double sigma_scale,
                   std::uint64_t seed, int k_steps = 8, double horizon = 1.0,
                   bool random_drift = false) {
  SdeSpec sp;
  sp.key = key;
  sp.dim = dim;
  sp.horizon = horizon;
  sp.k_steps = k_steps;
  sp.init = InitPolicy::TrueState;
  sp.drift = Mlp::make(key + ".drift", {dim, 4, dim}, mix(seed, 1), !random_drift);
  sp.diffusion = Mlp::make(key + ".diffusion", {dim, 4, dim}, mix(seed, 2));
  sp.sigma_scale = sigma_scale;
  SdeLibrary lib;
  lib.add(sp);
  return lib;
}

AtomRegistry const_atom(const std::string& name, double value) {
  AtomSpec a;
  a.name = name;
  a.lower.kind = MarginSpec::Kind::Constant;
  a.lower.value = value;
  AtomRegistry r;
  r.add(a);
  return r;
}

AtomRegistry tanh_atom(const std::string& name, double scale = 1.0) {
  AtomSpec a;
  a.name = name;
  a.lower.kind = MarginSpec::Kind::TanhCoord;
  a.lower.coord = 0;
  a.lower.scale = scale;
  AtomRegistry r;
  r.add(a);
  return r;
}

}  // namespace

TEST_CASE("constant atom evaluates to its constant, exactly") {
  const SdeLibrary lib = one_sde("temporal", 2, 0.9, 5);
  const AtomRegistry atoms = const_atom("p", -0.37);
  WorldState w;
  w.state = {0.1, 0.2};
  OperatorConfig cfg;
  cfg.n_mc = 32;
  for (const char* text : {"G(p)", "F(p)", "G[0.25,0.75](p)"}) {
    const TruthInterval r = eval(parse(text), w, lib, atoms, cfg, 99);
    INFO(text);
    CHECK(r.lower == -0.37);  // taring makes lse of equal scores exact
    CHECK(r.upper == -0.37);
  }
}

TEST_CASE("Box matches a from-scratch Eq.1/Eq.2 reimplementation") {
  // pure Brownian motion so the paths are replayable outside the library
  const double scale = 0.8, sigma = std::log(2.0) * scale;
  const int K = 6, N = 12;
  const SdeLibrary lib = one_sde("temporal", 1, scale, 17, K, 1.0);
  const AtomRegistry atoms = tanh_atom("level");
  WorldState w;
  w.state = {0.15};
  OperatorConfig cfg;
  cfg.tau_s = 0.23;
  cfg.tau_omega = 0.41;
  cfg.n_mc = N;
  cfg.bound = 2.0;
  const std::uint64_t seed = 0xFACEull;

  const TruthInterval got = eval(parse("G(level)"), w, lib, atoms, cfg, seed);
  const TruthInterval got_dia =
      eval(parse("F(level)"), w, lib, atoms, cfg, seed);

  // replay the bundle: the root modal node draws stream mix(seed, 0)
  const CounterRng rng{mix(seed, 0), 0};
  const double sqrt_dt = std::sqrt(1.0 / K);
  std::vector<std::vector<double>> scores(N);
  for (int n = 0; n < N; ++n) {
    double z = 0.15;
    scores[n].push_back(std::tanh(z));
    for (int k = 0; k < K; ++k) {
      double xi[1];
      rng.fill_gauss(static_cast<std::uint32_t>(n),
                     static_cast<std::uint32_t>(k), xi);
      z += sigma * sqrt_dt * xi[0];
      scores[n].push_back(std::tanh(z));
    }
  }
  // naive Eq. 1 / Eq. 2 with the 1/n-normalized entropic aggregates
  auto softmin = [](const std::vector<double>& v, double tau) {
    double acc = 0.0;
    for (double x : v) acc += std::exp(-x / tau);
    return -tau * std::log(acc / static_cast<double>(v.size()));
  };
  auto softmax = [](const std::vector<double>& v, double tau) {
    double acc = 0.0;
    for (double x : v) acc += std::exp(x / tau);
    return tau * std::log(acc / static_cast<double>(v.size()));
  };
  std::vector<double> g_box(N), g_dia(N);
  for (int n = 0; n < N; ++n) {
    g_box[n] = softmin(scores[n], cfg.tau_s);
    g_dia[n] = softmax(scores[n], cfg.tau_s);
  }
  const double l_box = softmin(g_box, cfg.tau_omega);
  const double u_dia = softmax(g_dia, cfg.tau_omega);

  CHECK(got.lower == Catch::Approx(l_box).epsilon(1e-12));
  CHECK(got.upper == Catch::Approx(l_box).epsilon(1e-12));  // atom: U == L
  CHECK(got_dia.upper == Catch::Approx(u_dia).epsilon(1e-12));
}

TEST_CASE("windowed evaluation restricts the grid slice") {
  // frozen linear ramp via drift 1: state(k) = k/K; window picks a sub-range
  SdeSpec sp;
  sp.key = "temporal";
  sp.dim = 1;
  sp.horizon = 1.0;
  sp.k_steps = 10;
  sp.init = InitPolicy::TrueState;
  sp.drift = Mlp::make("temporal.drift", {1, 4, 1}, 3);
  sp.diffusion = Mlp::make("temporal.diffusion", {1, 4, 1}, 4);
  sp.base_drift = "linear";
  sp.base_params = {0.0};
  SdeLibrary lib;
  lib.add(sp);
  // drift = A z with A = 0 gives a frozen path; shift the atom instead and
  // use windows on a constant path to pin exact grid-slicing semantics
  const AtomRegistry atoms = const_atom("p", 0.55);
  WorldState w;
  w.state = {0.0};
  OperatorConfig cfg;
  cfg.n_mc = 4;
  CHECK(eval(parse("G[0.35,0.65](p)"), w, lib, atoms, cfg, 1).lower == 0.55);
  // degenerate but valid: single grid point
  CHECK(eval(parse("G[0.5,0.5](p)"), w, lib, atoms, cfg, 1).lower == 0.55);
  // window outside the horizon is a configuration error
  CHECK_THROWS_AS(eval(parse("G[0.5,1.5](p)"), w, lib, atoms, cfg, 1),
                  ConfigError);
  // window between grid points contains no sample
  CHECK_THROWS_AS(eval(parse("G[0.51,0.58](p)"), w, lib, atoms, cfg, 1),
                  ConfigError);
}

TEST_CASE("duality: Diamond(f) equals Not Box(Not f), bit for bit") {
  SdeLibrary lib;
  for (const char* key : {"temporal", "epistemic:a", "doxastic:a", "deontic"}) {
    SdeSpec sp;
    sp.key = key;
    sp.agent = std::string(key).find(':') != std::string::npos ? "a" : "";
    sp.dim = 2;
    sp.horizon = 0.8;
    sp.k_steps = 6;
    sp.init = std::string(key).rfind("doxastic", 0) == 0
                  ? InitPolicy::BelievedState
                  : InitPolicy::TrueState;
    sp.drift = Mlp::make(std::string(key) + ".drift", {2, 4, 2},
                         mix(7, std::hash<std::string>{}(key)), false);
    sp.diffusion = Mlp::make(std::string(key) + ".diffusion", {2, 4, 2},
                             mix(8, std::hash<std::string>{}(key)));
    sp.sigma_scale = 0.5;
    lib.add(sp);
  }
  AtomRegistry atoms = tanh_atom("a");
  AtomSpec b;
  b.name = "b";
  b.lower.kind = MarginSpec::Kind::Halfspace;
  b.lower.normal = {0.7, -0.7};
  b.lower.offset = -0.1;
  b.lower.scale = 1.5;
  atoms.add(b);

  WorldState w;
  w.state = {0.3, -0.2};
  w.beliefs["a"] = {-0.4, 0.1};
  OperatorConfig cfg;
  cfg.n_mc = 24;
  cfg.max_depth = 3;

  const std::vector<std::pair<Modality, std::optional<Window>>> heads = {
      {temporal_mod(), std::nullopt},
      {temporal_mod(), Window{0.2, 0.6}},
      {epistemic_mod("a"), std::nullopt},
      {doxastic_mod("a"), std::nullopt},
      {deontic_mod(), std::nullopt},
  };
  const std::vector<std::string> bodies = {"a", "a & b", "!a | b", "G(a)"};
  for (const auto& [m, win] : heads) {
    for (const auto& body_text : bodies) {
      const FormulaPtr body = parse(body_text);
      const FormulaPtr dia = diamond(m, win, body);
      const FormulaPtr dual = lnot(box(m, win, lnot(body)));
      const std::uint64_t seed = mix(0xD0ull, std::hash<std::string>{}(
                                                  m.key() + body_text));
      const TruthInterval r1 = eval(dia, w, lib, atoms, cfg, seed);
      const TruthInterval r2 = eval(dual, w, lib, atoms, cfg, seed);
      INFO(m.key() << " body " << body_text);
      CHECK(r1.lower == r2.lower);
      CHECK(r1.upper == r2.upper);
    }
  }
}

TEST_CASE("connectives combine child intervals with hard min/max") {
  const SdeLibrary lib = one_sde("temporal", 1, 0.0, 30);
  AtomRegistry atoms = const_atom("p", 0.6);
  AtomSpec q;
  q.name = "q";
  q.lower.kind = MarginSpec::Kind::Constant;
  q.lower.value = -0.2;
  atoms.add(q);
  WorldState w;
  w.state = {0.0};
  OperatorConfig cfg;
  cfg.n_mc = 4;

  CHECK(eval(parse("p & q"), w, lib, atoms, cfg, 1).lower == -0.2);
  CHECK(eval(parse("p | q"), w, lib, atoms, cfg, 1).lower == 0.6);
  CHECK(eval(parse("!p"), w, lib, atoms, cfg, 1).lower == -0.6);
  CHECK(eval(parse("!(p & q)"), w, lib, atoms, cfg, 1).lower == 0.2);
  // negation swaps and negates the interval ends
  const TruthInterval r = eval(parse("!q"), w, lib, atoms, cfg, 1);
  CHECK(r.lower == 0.2);
  CHECK(r.upper == 0.2);
}

TEST_CASE("state-dependent split bounds can certify contradictions") {
  // lower bound from one geometry, upper from a conflicting one: L > U is
  // reachable, which the contradiction loss later exploits
  AtomSpec a;
  a.name = "odd";
  a.lower.kind = MarginSpec::Kind::Constant;
  a.lower.value = 0.5;
  a.upper = MarginSpec{};
  a.upper->kind = MarginSpec::Kind::Constant;
  a.upper->value = -0.5;
  AtomRegistry atoms;
  atoms.add(a);
  const SdeLibrary lib = one_sde("temporal", 1, 0.0, 31);
  WorldState w;
  w.state = {0.0};
  OperatorConfig cfg;
  cfg.n_mc = 4;
  const TruthInterval r = eval(parse("odd"), w, lib, atoms, cfg, 1);
  CHECK(r.lower == 0.5);
  CHECK(r.upper == -0.5);
}

TEST_CASE("bounds are clipped into [-B, B]") {
  const SdeLibrary lib = one_sde("temporal", 1, 0.0, 32);
  const AtomRegistry atoms = const_atom("big", 50.0);
  WorldState w;
  w.state = {0.0};
  OperatorConfig cfg;
  cfg.n_mc = 4;
  cfg.bound = 1.5;
  const TruthInterval r = eval(parse("G(big)"), w, lib, atoms, cfg, 1);
  CHECK(r.lower == 1.5);
  CHECK(r.upper == 1.5);
}

TEST_CASE("monotonicity: pointwise-dominating atoms dominate in every mode") {
  SdeLibrary lib = one_sde("temporal", 1, 0.7, 35, 8, 1.0, true);
  AtomRegistry atoms;
  AtomSpec hi;
  hi.name = "hi";
  hi.lower.kind = MarginSpec::Kind::Halfspace;
  hi.lower.normal = {1.0};
  hi.lower.offset = 0.3;  // margin = z + 0.3
  atoms.add(hi);
  AtomSpec lo;
  lo.name = "lo";
  lo.lower.kind = MarginSpec::Kind::Halfspace;
  lo.lower.normal = {1.0};
  lo.lower.offset = 0.0;  // margin = z  <= z + 0.3
  atoms.add(lo);
  WorldState w;
  w.state = {0.2};
  OperatorConfig cfg;
  cfg.n_mc = 16;
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    for (const char* mode : {"G", "F"}) {
      const TruthInterval rh = eval(parse(std::string(mode) + "(hi)"), w, lib,
                                    atoms, cfg, seed);
      const TruthInterval rl = eval(parse(std::string(mode) + "(lo)"), w, lib,
                                    atoms, cfg, seed);
      CHECK(rh.lower >= rl.lower);
      CHECK(rh.upper >= rl.upper);
    }
  }
}

TEST_CASE("sequence of frozen segments keeps a constant score") {
  SdeLibrary lib;
  for (const char* key : {"temporal", "deontic"}) {
    SdeSpec sp;
    sp.key = key;
    sp.dim = 1;
    sp.horizon = 0.5;
    sp.k_steps = 4;
    sp.init = InitPolicy::TrueState;
    sp.drift = Mlp::make(std::string(key) + ".drift", {1, 4, 1}, 1);
    sp.diffusion = Mlp::make(std::string(key) + ".diffusion", {1, 4, 1}, 2);
    sp.sigma_scale = 0.0;
    lib.add(sp);
  }
  const AtomRegistry atoms = const_atom("p", 0.25);
  WorldState w;
  w.state = {0.0};
  OperatorConfig cfg;
  cfg.n_mc = 8;
  const TruthInterval r =
      eval(parse("[temporal;deontic](p)"), w, lib, atoms, cfg, 9);
  CHECK(r.lower == Catch::Approx(0.25).margin(1e-12));
  CHECK(r.upper == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("nesting beyond max_depth is rejected") {
  const SdeLibrary lib = one_sde("temporal", 1, 0.1, 40);
  const AtomRegistry atoms = const_atom("p", 0.1);
  WorldState w;
  w.state = {0.0};
  OperatorConfig cfg;
  cfg.n_mc = 4;
  cfg.max_depth = 2;
  CHECK_NOTHROW(eval(parse("G(F(p))"), w, lib, atoms, cfg, 1));
  CHECK_THROWS_AS(eval(parse("G(F(G(p)))"), w, lib, atoms, cfg, 1),
                  ConfigError);
}

TEST_CASE("gap bound holds across 300 random instances") {
  const auto st = selfcheck::gap_bound_check(300, 0xBEEFull);
  INFO("worst excess " << st.worst_excess);
  CHECK(st.violations == 0);
}

TEST_CASE("brownian/tanh instance separates Box from Diamond") {
  const auto st = selfcheck::collapse_check(0xC0FFEEull);
  CHECK(st.stochastic_gap >= 0.2);
  CHECK(st.frozen_gap <= 1e-9);
}

TEST_CASE("population oracle pins the non-collapse margin") {
  const SdeLibrary lib = selfcheck::brownian_lib(1.0, mix(0xC0FFEEull, 3));
  const AtomRegistry atoms = selfcheck::tanh_atom();
  WorldState w;
  w.state = {0.0};
  OperatorConfig cfg;
  cfg.tau_s = 0.3;
  cfg.tau_omega = 0.3;
  cfg.bound = 2.0;
  const TruthInterval box_pop = population_oracle(
      parse("G(level)"), w, lib, atoms, cfg, 16384, 0x9e11ull);
  const TruthInterval dia_pop = population_oracle(
      parse("F(level)"), w, lib, atoms, cfg, 16384, 0x9e11ull);
  // the 0.2 threshold used by the acceptance criterion has head-room at the
  // population scale
  CHECK(dia_pop.upper - box_pop.lower > 0.5);
}

TEST_CASE("tau limits approach the hard extremes monotonically") {
  const auto st = selfcheck::tau_limit_stats(0x7A11ull);
  CHECK(st.monotone);
  CHECK(st.hard_gap_small_tau < 0.01 * st.bound);
  CHECK(st.gap_small < 0.25 * st.gap_large);
}

TEST_CASE("concentration: sampled failure rate within the theoretical bound") {
  const auto rep = selfcheck::concentration_stats(60, 0x5EEDull, 16384);
  INFO("n_mc " << rep.n_mc << " empirical " << rep.empirical_failure_rate
               << " bound " << rep.theoretical_bound);
  CHECK(rep.n_mc == 1883);  // from the Theorem 1(b) constant at eps=.1 tau=.5
  CHECK_FALSE(rep.violated);
}

TEST_CASE("axiom report: T holds under true-state init, fails under belief") {
  SdeLibrary lib;
  SdeSpec t;
  t.key = "temporal";
  t.dim = 1;
  t.horizon = 0.5;
  t.k_steps = 5;
  t.init = InitPolicy::TrueState;
  t.drift = Mlp::make("temporal.drift", {1, 4, 1}, 1, false);
  t.diffusion = Mlp::make("temporal.diffusion", {1, 4, 1}, 2);
  t.sigma_scale = 0.4;
  lib.add(t);
  SdeSpec d = t;
  d.key = "doxastic:r";
  d.agent = "r";
  d.init = InitPolicy::BelievedState;
  d.drift = Mlp::make("doxastic:r.drift", {1, 4, 1}, 3);
  d.diffusion = Mlp::make("doxastic:r.diffusion", {1, 4, 1}, 4);
  d.sigma_scale = 0.0;  // frozen at the believed state
  lib.add(d);

  const AtomRegistry atoms = tanh_atom("level", 2.0);
  std::vector<WorldState> worlds(3);
  for (int i = 0; i < 3; ++i) {
    worlds[i].state = {-0.3 * (i + 1)};   // truly unsafe...
    worlds[i].beliefs["r"] = {1.5};       // ...but believed safe
  }
  OperatorConfig cfg;
  cfg.n_mc = 32;
  const AxiomReport rep = axiom_report(lib, atoms, worlds, cfg, 0xAA, 2048);
  REQUIRE(rep.rows.size() == 2);
  for (const auto& row : rep.rows) {
    INFO("modality " << row.modality);
    CHECK(row.d_gap_min >= -1e-9);        // D: Box never exceeds Diamond
    CHECK(row.semigroup_ks < 0.06);       // 4 composition consistency
    if (row.true_state_init) {
      CHECK(row.t_gap_max <= 1e-9);       // T with the Eq. 4 slack
      CHECK(row.not_t_witnesses == 0);
    } else {
      // frozen optimistic belief vs negative true margins: the belief Box
      // asserts safety at worlds whose immediate truth is violated
      CHECK(row.not_t_witnesses > 0);
    }
  }
}

TEST_CASE("accessibility degree: exact at the world itself, soft nearby") {
  const SdeLibrary lib = one_sde("temporal", 2, 0.0, 50);  // frozen
  WorldState w;
  w.state = {0.4, -0.6};
  const SdeSpec& spec = lib.resolve("temporal");
  const double self_acc =
      accessibility(spec, lib, w, w.state, 0.5, 64, 7);
  CHECK(self_acc == 1.0);  // some path point coincides with w' exactly

  const std::vector<double> shifted = {0.4 + 0.5, -0.6};
  const double near_acc = accessibility(spec, lib, w, shifted, 0.5, 64, 7);
  CHECK(near_acc == Catch::Approx(std::exp(-0.5)).epsilon(1e-12));
  const std::vector<double> wrong_dim = {0.0, 0.0, 0.0};
  CHECK_THROWS_AS(accessibility(spec, lib, w, wrong_dim, 0.5, 8, 7),
                  ConfigError);
}

TEST_CASE("sliced W1: exact on translated point masses, zero on itself") {
  auto cloud = [](int n, std::vector<double> at) {
    return std::vector<std::vector<double>>(n, std::move(at));
  };
  {
    // d = 1: exact sorted coupling
    const auto a = cloud(32, {0.3}), b = cloud(32, {1.55});
    CHECK(sliced_w1(a, b) == Catch::Approx(1.25).epsilon(1e-12));
  }
  {
    // d = 2: equiangular quadrature, normalized by c_2 = 2/pi
    const auto a = cloud(32, {0.0, 0.0}), b = cloud(32, {3.0, 4.0});
    CHECK(sliced_w1(a, b) == Catch::Approx(5.0).epsilon(2e-3));
  }
  {
    // d = 3: fixed-seed Gaussian directions, normalized by c_3
    const auto a = cloud(16, {0.0, 0.0, 0.0}), b = cloud(16, {1.0, 2.0, 2.0});
    CHECK(sliced_w1(a, b) == Catch::Approx(3.0).epsilon(0.05));
  }
  {
    const auto a = cloud(16, {0.7, -0.2});
    CHECK(sliced_w1(a, a) == 0.0);
  }
}

TEST_CASE("wasserstein gap separates drift-shifted dynamics") {
  SdeLibrary lib;
  SdeSpec still;
  still.key = "temporal";
  still.dim = 1;
  still.horizon = 1.0;
  still.k_steps = 8;
  still.init = InitPolicy::TrueState;
  still.drift = Mlp::make("temporal.drift", {1, 4, 1}, 1);
  still.diffusion = Mlp::make("temporal.diffusion", {1, 4, 1}, 2);
  still.sigma_scale = 0.0;
  lib.add(still);
  SdeSpec pushed = still;
  pushed.key = "deontic";
  pushed.base_drift = "linear";
  pushed.base_params = {0.0};
  pushed.drift = Mlp::make("deontic.drift", {1, 4, 1}, 3);
  pushed.diffusion = Mlp::make("deontic.diffusion", {1, 4, 1}, 4);
  // constant unit push via a bias-only head: emulate with linear base on a
  // lifted state is overkill; a simple nonzero head bias does it
  pushed.drift.b[1][0] = 1.0;
  lib.add(pushed);
  WorldState w;
  w.state = {0.0};
  const double gap = wasserstein_gap(lib.resolve("deontic"),
                                     lib.resolve("temporal"), lib, w, 1.0, 64,
                                     77, 1);
  // deterministic clouds at 1.0 vs 0.0
  CHECK(gap == Catch::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("quantifier profile: zero gap iff dynamics are deterministic") {
  const AtomRegistry atoms = tanh_atom("level");
  WorldState w;
  w.state = {0.2};
  OperatorConfig cfg;
  cfg.n_mc = 32;
  {
    const SdeLibrary lib = one_sde("temporal", 1, 0.0, 60, 8, 1.0, true);
    const TimeProfile p = quantifier_profile(temporal_mod(), atom("level"), w,
                                             lib, atoms, cfg, 5);
    CHECK(p.mean_gap == 0.0);  // exact: all paths identical
    for (double g : p.gap) CHECK(g == 0.0);
  }
  {
    const SdeLibrary lib = one_sde("temporal", 1, 0.8, 60, 8, 1.0, true);
    const TimeProfile p = quantifier_profile(temporal_mod(), atom("level"), w,
                                             lib, atoms, cfg, 5);
    CHECK(p.mean_gap > 0.05);
    CHECK(p.time.size() == 9);
  }
}

TEST_CASE("normalize maps robustness onto (0,1) symmetrically") {
  CHECK(normalize(0.0) == 0.5);
  CHECK(normalize(1.0) == Catch::Approx(1.0 / (1.0 + std::exp(-1.0))));
  CHECK(normalize(-3.0) + normalize(3.0) == Catch::Approx(1.0));
}

TEST_CASE("gradient evaluation reproduces value evaluation bit-exactly") {
  const SdeLibrary lib = one_sde("temporal", 2, 0.6, 70, 6, 1.0, true);
  const AtomRegistry atoms = tanh_atom("level");
  WorldState w;
  w.state = {0.3, -0.1};
  OperatorConfig cfg;
  cfg.n_mc = 12;
  const FormulaPtr f = parse("G(level) & !F(!level)");
  const std::uint64_t seed = 0xE1ull;

  const TruthInterval vr = eval(f, w, lib, atoms, cfg, seed);

  Tape tape;
  SdeBindings<GradBackend> bindings;
  bindings.bind_all(tape, lib);
  const GradEval ge = eval_grad(tape, bindings, f, w, lib, atoms, cfg, seed);
  CHECK(tape.value(ge.lower) == vr.lower);
  CHECK(tape.value(ge.upper) == vr.upper);

  // dL/dworld via the tape vs central differences through value evaluation
  tape.backward(ge.lower);
  const auto gw = tape.grad(ge.world);
  const double h = 1e-5;
  for (int i = 0; i < 2; ++i) {
    WorldState wp = w, wm = w;
    wp.state[i] += h;
    wm.state[i] -= h;
    const double fd = (eval(f, wp, lib, atoms, cfg, seed).lower -
                       eval(f, wm, lib, atoms, cfg, seed).lower) /
                      (2.0 * h);
    CHECK(gw[i] == Catch::Approx(fd).margin(2e-4));
  }
}

TEST_CASE("per-path scores are exposed for the root modal node") {
  const SdeLibrary lib = one_sde("temporal", 1, 0.5, 80, 6, 1.0, true);
  const AtomRegistry atoms = tanh_atom("level");
  WorldState w;
  w.state = {0.1};
  OperatorConfig cfg;
  cfg.n_mc = 10;
  PathScores scores;
  const TruthInterval r =
      eval(parse("G(level)"), w, lib, atoms, cfg, 11, &scores);
  REQUIRE(scores.lower_scores.size() == 10);
  // the reported interval is the entropic aggregate of the exposed scores
  ValueCtx ctx;
  CHECK(r.lower ==
        ValueBackend::lse_min(ctx, scores.lower_scores, cfg.tau_omega));
}
