#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "backend.hpp"
#include "common.hpp"
#include "formula.hpp"
#include "sde.hpp"

namespace fluidlogic {

// ---------------------------------------------------------------------------
// Operator configuration.  `bound` is the truth-interval clip B: every atom
// margin is clamped to [-B, B] before aggregation, which keeps all modal
// values in [-B, B] and is what the concentration bound leans on.
// ---------------------------------------------------------------------------

struct OperatorConfig {
  double tau_s = 0.1;      // per-path (time) temperature
  double tau_omega = 0.1;  // cross-path temperature
  double bound = 2.0;      // B
  int n_mc = 64;           // paths per modal operator
  int max_depth = 2;       // modal nesting cap at evaluation
  int threads = 1;         // value-mode simulation/evaluation workers
};

struct TruthInterval {
  double lower = 0.0;
  double upper = 0.0;
};

// Logistic squash onto (0,1) for dashboards; 0 -> 0.5.
inline double normalize(double v) { return 1.0 / (1.0 + std::exp(-v)); }
inline TruthInterval normalize(TruthInterval t) {
  return {normalize(t.lower), normalize(t.upper)};
}

// Per-path diagnostics of the root modal operator (Eq. 1 scores).
struct PathScores {
  std::vector<double> lower_scores;  // g_n
  std::vector<double> upper_scores;
  std::vector<char> escaped;
};

template <class B>
struct IntervalT {
  typename B::Scalar lower, upper;
};

// Lazily-built SDE parameter bindings, shared across the modal operators of
// one evaluation (and, in training, across every loss term of a step so all
// gradients land on one set of leaves).
template <class B>
struct SdeBindings {
  std::map<const SdeSpec*, BoundSde<B>> map;

  void bind_all(typename B::Ctx& ctx, const SdeLibrary& lib) {
    for (const auto& [key, spec] : lib.specs)
      if (!map.count(&spec)) map.emplace(&spec, bind_sde<B>(ctx, spec));
  }
  const BoundSde<B>& get(const SdeSpec& spec) const {
    auto it = map.find(&spec);
    if (it == map.end())
      throw ConfigError("SDE '" + spec.key + "' was not bound before eval");
    return it->second;
  }
};

inline Modality key_to_modality(const std::string& key) {
  if (key == "temporal") return temporal_mod();
  if (key == "deontic") return deontic_mod();
  if (key.rfind("epistemic:", 0) == 0) return epistemic_mod(key.substr(10));
  if (key.rfind("doxastic:", 0) == 0) return doxastic_mod(key.substr(9));
  throw ConfigError("unrecognized modality key: " + key);
}

namespace detail {

// Static per-formula info resolved once per evaluation: atoms bound to their
// registry entries, modal nodes numbered in preorder.  The preorder index
// keys each modal operator's noise stream, so rewrites that preserve modal
// order (e.g. NNF) see identical noise — that is what makes the duality
// identities exact rather than statistical.
struct FormulaIndex {
  std::unordered_map<const Formula*, const AtomSpec*> atom_of;
  std::unordered_map<const Formula*, int> modal_index;

  static FormulaIndex build(const FormulaPtr& f, const SdeLibrary& lib,
                            const AtomRegistry& atoms) {
    FormulaIndex ix;
    int counter = 0;
    walk(f, lib, atoms, ix, counter);
    return ix;
  }

 private:
  static void walk(const FormulaPtr& f, const SdeLibrary& lib,
                   const AtomRegistry& atoms, FormulaIndex& ix, int& counter) {
    if (!f) throw ConfigError("eval: null formula node");
    switch (f->kind) {
      case Formula::Kind::Atom:
        ix.atom_of[f.get()] = &atoms.resolve(f->atom);
        return;
      case Formula::Kind::Not:
        walk(f->lhs, lib, atoms, ix, counter);
        return;
      case Formula::Kind::And:
      case Formula::Kind::Or:
        walk(f->lhs, lib, atoms, ix, counter);
        walk(f->rhs, lib, atoms, ix, counter);
        return;
      case Formula::Kind::Box:
      case Formula::Kind::Diamond:
        lib.resolve(f->modality);  // fail fast on unknown modalities
        ix.modal_index[f.get()] = counter++;
        walk(f->lhs, lib, atoms, ix, counter);
        return;
      case Formula::Kind::Seq:
        for (const auto& k : f->actions) lib.resolve(k);
        ix.modal_index[f.get()] = counter++;
        walk(f->lhs, lib, atoms, ix, counter);
        return;
    }
    throw ConfigError("eval: unknown node kind");
  }
};

template <class B>
struct EvalEnv {
  typename B::Ctx* ctx = nullptr;
  const SdeLibrary* lib = nullptr;
  const OperatorConfig* cfg = nullptr;
  const SdeBindings<B>* bindings = nullptr;
  const FormulaIndex* index = nullptr;
  const WorldState* root_world = nullptr;
  std::uint64_t seed = 0;
  PathScores* scores = nullptr;        // filled at the root modal, value mode
  const Formula* score_node = nullptr;
};

// Grid index range covered by a window (defaults to the full horizon).
inline std::pair<int, int> window_range(const SdeSpec& spec,
                                        const std::optional<Window>& w) {
  const double dt = spec.dt();
  double a = 0.0, b = spec.horizon;
  if (w) {
    a = w->a;
    b = w->b;
    if (b > spec.horizon * (1.0 + 1e-12) + 1e-12)
      throw ConfigError("window [" + std::to_string(a) + "," +
                        std::to_string(b) + "] exceeds horizon of SDE '" +
                        spec.key + "'");
  }
  int ka = static_cast<int>(std::ceil(a / dt - 1e-9));
  int kb = static_cast<int>(std::floor(b / dt + 1e-9));
  ka = std::max(0, ka);
  kb = std::min(spec.k_steps, kb);
  if (ka > kb)
    throw ConfigError("window contains no grid point for SDE '" + spec.key + "'");
  return {ka, kb};
}

// Initial condition of a modal operator relative to the current state.
// TrueState reuses the live state vector (so nested gradients flow through);
// beliefs come from the root world; Conditioned observations are read off
// as exogenous constants.
template <class B>
void modal_init(EvalEnv<B>& env, const SdeSpec& spec, const typename B::Vec& z,
                typename B::Vec& z0, std::vector<double>& observation) {
  switch (spec.init) {
    case InitPolicy::TrueState:
      z0 = z;
      return;
    case InitPolicy::BelievedState: {
      auto it = env.root_world->beliefs.find(spec.agent);
      if (it == env.root_world->beliefs.end())
        throw ConfigError("world has no belief for agent '" + spec.agent + "'");
      if (static_cast<int>(it->second.size()) != spec.dim)
        throw ConfigError("belief dim mismatch for agent '" + spec.agent + "'");
      z0 = B::make_vec(*env.ctx, it->second);
      return;
    }
    case InitPolicy::Conditioned: {
      z0 = z;
      std::array<double, kMaxDim> buf;
      B::vec_values(*env.ctx, z, std::span(buf.data(), spec.dim));
      for (int i : spec.obs_indices) {
        if (i < 0 || i >= spec.dim)
          throw ConfigError("observation index out of range in SDE '" +
                            spec.key + "'");
        observation.push_back(buf[i]);
      }
      return;
    }
  }
}

template <class B>
IntervalT<B> eval_node(EvalEnv<B>& env, const Formula* f,
                       const typename B::Vec& z, std::uint64_t seed,
                       int depth);

// Shared Box/Diamond body: simulate the modality's bundle, aggregate the
// child interval over the windowed grid per path (Eq. 1), then across paths
// (Eq. 2/3).  Box uses the entropic soft min on both bounds, Diamond the
// soft max; the two are exact mirror images, which gives the duality
// Diamond(f) == !Box(!f) bit-for-bit.
template <class B>
IntervalT<B> eval_modal(EvalEnv<B>& env, const Formula* f,
                        const typename B::Vec& z, std::uint64_t seed,
                        int depth) {
  using S = typename B::Scalar;
  typename B::Ctx& ctx = *env.ctx;
  const OperatorConfig& cfg = *env.cfg;
  const bool is_box = f->kind == Formula::Kind::Box;
  const SdeSpec& spec = env.lib->resolve(f->modality);
  const std::uint64_t node_seed = mix(seed, env.index->modal_index.at(f));

  typename B::Vec z0 = z;
  std::vector<double> observation;
  modal_init<B>(env, spec, z, z0, observation);

  const int sim_threads = depth == 0 ? cfg.threads : 1;
  PathBundle<B> bundle =
      simulate<B>(ctx, env.bindings->get(spec), z0, observation, cfg.n_mc,
                  node_seed, sim_threads);
  const auto [ka, kb] = window_range(spec, f->window);
  const int kw = kb - ka + 1;

  std::vector<S> g(cfg.n_mc), h(cfg.n_mc);
  auto per_path = [&](int n) {
    // Thread-local scratch: one row of child bounds along the window.
    std::vector<S> l(kw), u(kw);
    for (int k = ka; k <= kb; ++k) {
      const IntervalT<B> c =
          eval_node<B>(env, f->lhs.get(), bundle.state(n, k),
                       mix(node_seed, static_cast<std::uint64_t>(n),
                           static_cast<std::uint64_t>(k)),
                       depth + 1);
      l[k - ka] = c.lower;
      u[k - ka] = c.upper;
    }
    if (is_box) {
      g[n] = B::lse_min(ctx, l, cfg.tau_s);
      h[n] = B::lse_min(ctx, u, cfg.tau_s);
    } else {
      g[n] = B::lse_max(ctx, l, cfg.tau_s);
      h[n] = B::lse_max(ctx, u, cfg.tau_s);
    }
  };
  if constexpr (std::is_same_v<B, ValueBackend>) {
    parallel_for(static_cast<std::size_t>(cfg.n_mc),
                 depth == 0 ? cfg.threads : 1,
                 [&](std::size_t n) { per_path(static_cast<int>(n)); });
  } else {
    for (int n = 0; n < cfg.n_mc; ++n) per_path(n);
  }

  if constexpr (std::is_same_v<B, ValueBackend>) {
    if (env.scores && env.score_node == f) {
      env.scores->lower_scores.assign(g.begin(), g.end());
      env.scores->upper_scores.assign(h.begin(), h.end());
      env.scores->escaped.assign(bundle.escaped.begin(), bundle.escaped.end());
    }
  }

  IntervalT<B> out;
  if (is_box) {
    out.lower = B::lse_min(ctx, g, cfg.tau_omega);
    out.upper = B::lse_min(ctx, h, cfg.tau_omega);
  } else {
    out.lower = B::lse_max(ctx, g, cfg.tau_omega);
    out.upper = B::lse_max(ctx, h, cfg.tau_omega);
  }
  return out;
}

// Seq [a;b;...](f): run each segment's SDE from the previous terminal state
// (the first from the usual init policy), then evaluate f on the composed
// terminal cloud with the Box-style entropic aggregation.
template <class B>
IntervalT<B> eval_seq(EvalEnv<B>& env, const Formula* f,
                      const typename B::Vec& z, std::uint64_t seed,
                      int depth) {
  using S = typename B::Scalar;
  typename B::Ctx& ctx = *env.ctx;
  const OperatorConfig& cfg = *env.cfg;
  const std::uint64_t node_seed = mix(seed, env.index->modal_index.at(f));

  std::vector<S> l(cfg.n_mc), u(cfg.n_mc);
  auto per_path = [&](int n) {
    typename B::Vec cur = z;
    for (std::size_t j = 0; j < f->actions.size(); ++j) {
      const SdeSpec& spec = env.lib->resolve(f->actions[j]);
      typename B::Vec z0 = cur;
      std::vector<double> observation;
      if (j == 0) {
        modal_init<B>(env, spec, cur, z0, observation);
      } else if (spec.init == InitPolicy::Conditioned) {
        std::array<double, kMaxDim> buf;
        B::vec_values(ctx, cur, std::span(buf.data(), spec.dim));
        for (int i : spec.obs_indices) observation.push_back(buf[i]);
      }
      PathBundle<B> seg = simulate<B>(
          ctx, env.bindings->get(spec), z0, observation, 1,
          mix(node_seed, static_cast<std::uint64_t>(n), j), 1);
      cur = seg.state(0, seg.k_steps);
    }
    const IntervalT<B> c =
        eval_node<B>(env, f->lhs.get(), cur,
                     mix(node_seed, static_cast<std::uint64_t>(n), 0x5eu),
                     depth + 1);
    l[n] = c.lower;
    u[n] = c.upper;
  };
  if constexpr (std::is_same_v<B, ValueBackend>) {
    parallel_for(static_cast<std::size_t>(cfg.n_mc),
                 depth == 0 ? cfg.threads : 1,
                 [&](std::size_t n) { per_path(static_cast<int>(n)); });
  } else {
    for (int n = 0; n < cfg.n_mc; ++n) per_path(n);
  }
  return {B::lse_min(ctx, l, cfg.tau_omega), B::lse_min(ctx, u, cfg.tau_omega)};
}

template <class B>
IntervalT<B> eval_node(EvalEnv<B>& env, const Formula* f,
                       const typename B::Vec& z, std::uint64_t seed,
                       int depth) {
  using S = typename B::Scalar;
  typename B::Ctx& ctx = *env.ctx;
  switch (f->kind) {
    case Formula::Kind::Atom: {
      const AtomSpec& a = *env.index->atom_of.at(f);
      S lm = eval_margin<B>(ctx, a.lower, z);
      S um = a.upper ? eval_margin<B>(ctx, *a.upper, z) : lm;
      return {B::clip(ctx, lm, env.cfg->bound), B::clip(ctx, um, env.cfg->bound)};
    }
    case Formula::Kind::Not: {
      const IntervalT<B> c = eval_node<B>(env, f->lhs.get(), z, seed, depth);
      return {B::neg(ctx, c.upper), B::neg(ctx, c.lower)};
    }
    case Formula::Kind::And: {
      const IntervalT<B> a = eval_node<B>(env, f->lhs.get(), z, seed, depth);
      const IntervalT<B> b = eval_node<B>(env, f->rhs.get(), z, seed, depth);
      return {B::hmin(ctx, a.lower, b.lower), B::hmin(ctx, a.upper, b.upper)};
    }
    case Formula::Kind::Or: {
      const IntervalT<B> a = eval_node<B>(env, f->lhs.get(), z, seed, depth);
      const IntervalT<B> b = eval_node<B>(env, f->rhs.get(), z, seed, depth);
      return {B::hmax(ctx, a.lower, b.lower), B::hmax(ctx, a.upper, b.upper)};
    }
    case Formula::Kind::Box:
    case Formula::Kind::Diamond:
      if (depth >= env.cfg->max_depth)
        throw ConfigError("formula exceeds max modal nesting depth " +
                          std::to_string(env.cfg->max_depth));
      return eval_modal<B>(env, f, z, seed, depth);
    case Formula::Kind::Seq:
      if (depth >= env.cfg->max_depth)
        throw ConfigError("formula exceeds max modal nesting depth " +
                          std::to_string(env.cfg->max_depth));
      return eval_seq<B>(env, f, z, seed, depth);
  }
  throw ConfigError("eval: unknown node kind");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Public evaluation entry points.
// ---------------------------------------------------------------------------

inline TruthInterval eval(const FormulaPtr& f, const WorldState& w,
                          const SdeLibrary& lib, const AtomRegistry& atoms,
                          const OperatorConfig& cfg, std::uint64_t seed,
                          PathScores* scores = nullptr) {
  if (nesting_depth(f) > cfg.max_depth)
    throw ConfigError("formula exceeds max modal nesting depth " +
                      std::to_string(cfg.max_depth));
  const detail::FormulaIndex ix = detail::FormulaIndex::build(f, lib, atoms);
  ValueCtx ctx;
  SdeBindings<ValueBackend> bindings;
  bindings.bind_all(ctx, lib);
  detail::EvalEnv<ValueBackend> env;
  env.ctx = &ctx;
  env.lib = &lib;
  env.cfg = &cfg;
  env.bindings = &bindings;
  env.index = &ix;
  env.root_world = &w;
  env.seed = seed;
  if (scores) {
    // Capture per-path scores at the root modal operator, if there is one.
    const Formula* root = f.get();
    while (root->kind == Formula::Kind::Not) root = root->lhs.get();
    if (root->kind == Formula::Kind::Box ||
        root->kind == Formula::Kind::Diamond ||
        root->kind == Formula::Kind::Seq) {
      env.scores = scores;
      env.score_node = root;
    }
  }
  const auto r =
      detail::eval_node<ValueBackend>(env, f.get(), VecD::of(w.state), seed, 0);
  if (!std::isfinite(r.lower) || !std::isfinite(r.upper))
    throw NumericError("eval produced a non-finite truth bound");
  return {r.lower, r.upper};
}

// Gradient-mode evaluation onto a caller-owned tape.  `bindings` must hold
// the parameter leaves the caller wants gradients on (see SdeBindings).
// The returned `world` leaf carries d(bounds)/d(world state).
struct GradEval {
  Tensor lower, upper;
  Tensor world;
};

inline GradEval eval_grad(Tape& tape, const SdeBindings<GradBackend>& bindings,
                          const FormulaPtr& f, const WorldState& w,
                          const SdeLibrary& lib, const AtomRegistry& atoms,
                          const OperatorConfig& cfg, std::uint64_t seed) {
  if (nesting_depth(f) > cfg.max_depth)
    throw ConfigError("formula exceeds max modal nesting depth " +
                      std::to_string(cfg.max_depth));
  const detail::FormulaIndex ix = detail::FormulaIndex::build(f, lib, atoms);
  detail::EvalEnv<GradBackend> env;
  env.ctx = &tape;
  env.lib = &lib;
  env.cfg = &cfg;
  env.bindings = &bindings;
  env.index = &ix;
  env.root_world = &w;
  env.seed = seed;
  const Tensor z0 = tape.leaf(w.state, static_cast<int>(w.state.size()), 1);
  const auto r = detail::eval_node<GradBackend>(env, f.get(), z0, seed, 0);
  return {r.lower, r.upper, z0};
}

// High-N reference evaluation (population surrogate).  Identical pipeline,
// just a larger path budget; memory is O(n * K * dim) doubles.
inline TruthInterval population_oracle(const FormulaPtr& f, const WorldState& w,
                                       const SdeLibrary& lib,
                                       const AtomRegistry& atoms,
                                       OperatorConfig cfg,
                                       int n_population = 65536,
                                       std::uint64_t seed = 0x9e11ull) {
  cfg.n_mc = n_population;
  return eval(f, w, lib, atoms, cfg, seed);
}

// ---------------------------------------------------------------------------
// Theorem-1b concentration machinery.
// ---------------------------------------------------------------------------

struct ConcentrationBound {
  double C = 1.0;          // clip scale: requires B <= C * tau_omega
  double epsilon = 0.1;
  double delta = 0.05;
  double tau_omega = 0.5;

  // c(C) = 2 / ((e^C - e^-C)^2 * e^{2C})
  double c_of_C() const {
    const double d = std::exp(C) - std::exp(-C);
    return 2.0 / (d * d * std::exp(2.0 * C));
  }
  // Smallest N with 2*exp(-c N eps^2 / tau^2) <= delta.
  int required_n_mc() const {
    const double n =
        tau_omega * tau_omega * std::log(2.0 / delta) / (c_of_C() * epsilon * epsilon);
    return static_cast<int>(std::ceil(n));
  }
  double failure_bound(int n_mc) const {
    return 2.0 * std::exp(-c_of_C() * n_mc * epsilon * epsilon /
                          (tau_omega * tau_omega));
  }
};

struct ConcentrationReport {
  int n_mc = 0;
  int trials = 0;
  double population_lower = 0.0;
  double empirical_failure_rate = 0.0;
  double theoretical_bound = 0.0;
  bool violated = false;  // empirical rate above bound + 3 binomial SE
};

inline ConcentrationReport check_concentration(
    const FormulaPtr& f, const WorldState& w, const SdeLibrary& lib,
    const AtomRegistry& atoms, OperatorConfig cfg,
    const ConcentrationBound& bound, int trials, std::uint64_t seed,
    int population_n = 65536) {
  if (cfg.bound > bound.C * bound.tau_omega * (1.0 + 1e-12))
    throw ConfigError("concentration check requires B <= C * tau_omega");
  cfg.tau_omega = bound.tau_omega;
  ConcentrationReport rep;
  rep.n_mc = bound.required_n_mc();
  rep.trials = trials;
  rep.theoretical_bound = bound.failure_bound(rep.n_mc);
  rep.population_lower =
      population_oracle(f, w, lib, atoms, cfg, population_n, mix(seed, 0xB0Bull))
          .lower;
  cfg.n_mc = rep.n_mc;
  int failures = 0;
  for (int t = 0; t < trials; ++t) {
    const TruthInterval r = eval(f, w, lib, atoms, cfg, mix(seed, t + 1));
    if (std::abs(r.lower - rep.population_lower) >= bound.epsilon) ++failures;
  }
  rep.empirical_failure_rate = static_cast<double>(failures) / trials;
  const double se = std::sqrt(rep.theoretical_bound *
                              (1.0 - rep.theoretical_bound) / trials);
  rep.violated =
      rep.empirical_failure_rate > rep.theoretical_bound + 3.0 * se;
  return rep;
}

// ---------------------------------------------------------------------------
// tau -> 0 limit check: with both temperatures set to tau, the Box lower
// bound must fall monotonically onto the hard min over (paths x windowed
// grid) of the body's lower margin (ess-inf in the sampled world).  Body
// must be propositional so the hard reference is temperature-free.
// ---------------------------------------------------------------------------

struct TauLimitReport {
  std::vector<double> taus;
  std::vector<double> values;
  double hard_value = 0.0;  // min for Box, max (of upper) for Diamond
  bool monotone = true;     // values non-increasing as tau decreases (Box)
  double terminal_gap = 0.0;
};

inline TauLimitReport tau_limit_check(const FormulaPtr& f, const WorldState& w,
                                      const SdeLibrary& lib,
                                      const AtomRegistry& atoms,
                                      OperatorConfig cfg,
                                      std::span<const double> taus,
                                      std::uint64_t seed) {
  if (!f || (f->kind != Formula::Kind::Box && f->kind != Formula::Kind::Diamond))
    throw ConfigError("tau_limit_check: root must be Box or Diamond");
  if (nesting_depth(f->lhs) != 0)
    throw ConfigError("tau_limit_check: body must be propositional");
  const bool is_box = f->kind == Formula::Kind::Box;

  TauLimitReport rep;
  for (double tau : taus) {
    if (tau <= 0.0) throw ConfigError("tau_limit_check: tau must be positive");
    OperatorConfig c = cfg;
    c.tau_s = tau;
    c.tau_omega = tau;
    const TruthInterval r = eval(f, w, lib, atoms, c, seed);
    rep.taus.push_back(tau);
    rep.values.push_back(is_box ? r.lower : r.upper);
  }

  // Hard reference on the same bundle the evaluator saw (same seed stream).
  const detail::FormulaIndex ix = detail::FormulaIndex::build(f, lib, atoms);
  const SdeSpec& spec = lib.resolve(f->modality);
  const ResolvedInit init = resolve_init(spec, w);
  ValueCtx ctx;
  SdeBindings<ValueBackend> bindings;
  bindings.bind_all(ctx, lib);
  const std::uint64_t node_seed = mix(seed, ix.modal_index.at(f.get()));
  const ValueBundle bundle = simulate<ValueBackend>(
      ctx, bindings.get(spec), VecD::of(init.z0), init.observation, cfg.n_mc,
      node_seed, cfg.threads);
  const auto [ka, kb] = detail::window_range(spec, f->window);
  detail::EvalEnv<ValueBackend> env;
  env.ctx = &ctx;
  env.lib = &lib;
  env.cfg = &cfg;
  env.bindings = &bindings;
  env.index = &ix;
  env.root_world = &w;
  env.seed = seed;
  double hard = 0.0;
  bool first = true;
  for (int n = 0; n < cfg.n_mc; ++n) {
    for (int k = ka; k <= kb; ++k) {
      const auto c = detail::eval_node<ValueBackend>(
          env, f->lhs.get(), bundle.state(n, k), 0, 1);
      const double v = is_box ? c.lower : c.upper;
      hard = first ? v : (is_box ? std::min(hard, v) : std::max(hard, v));
      first = false;
    }
  }
  rep.hard_value = hard;
  for (std::size_t i = 1; i < rep.values.size(); ++i) {
    const bool ok = is_box ? rep.values[i] <= rep.values[i - 1] + 1e-12
                           : rep.values[i] >= rep.values[i - 1] - 1e-12;
    if (!ok) rep.monotone = false;
  }
  rep.terminal_gap = std::abs(rep.values.back() - rep.hard_value);
  return rep;
}

// ---------------------------------------------------------------------------
// Axiom diagnostics (one row per library entry).
//
//   T  : L of Box(atom) may exceed L of the atom at the start state by at
//        most the entropic slack tau_s*log(K_w) + tau_omega*log(N) whenever
//        z(0) = x_true is on the grid (soundness gap, Eq. 4).
//   D  : U of Diamond(atom) - L of Box(atom), reported (>= 0 expected).
//   4  : Markov semigroup check, KS distance between simulate(2S) and
//        compose(S, S) terminal marginals (fresh seeds, max across dims).
//   !T : for belief-initialized modalities, worlds where Box(atom) is
//        positive while the atom fails at the true state (hallucination
//        witnesses; their existence is the point of doxastic init).
// ---------------------------------------------------------------------------

struct AxiomRow {
  std::string modality;
  bool true_state_init = false;
  double t_gap_max = 0.0;      // max over (world, atom) of L_box - L_atom - slack
  double d_gap_min = 0.0;      // min over (world, atom) of U_dia - L_box
  double semigroup_ks = 0.0;
  int not_t_witnesses = 0;
};

struct AxiomReport {
  std::vector<AxiomRow> rows;
};

inline AxiomReport axiom_report(const SdeLibrary& lib, const AtomRegistry& atoms,
                                std::span<const WorldState> worlds,
                                const OperatorConfig& cfg, std::uint64_t seed,
                                int ks_paths = 4096) {
  if (worlds.empty()) throw ConfigError("axiom_report: need sample worlds");
  AxiomReport rep;
  for (const auto& [key, spec] : lib.specs) {
    AxiomRow row;
    row.modality = key;
    row.true_state_init = spec.init == InitPolicy::TrueState;
    const Modality m = key_to_modality(key);
    bool first = true;
    for (const WorldState& w : worlds) {
      for (const auto& [aname, aspec] : atoms.all()) {
        const FormulaPtr body = atom(aname);
        const TruthInterval bx =
            eval(box(m, std::nullopt, body), w, lib, atoms, cfg, seed);
        const TruthInterval di =
            eval(diamond(m, std::nullopt, body), w, lib, atoms, cfg, seed);
        const TruthInterval at = eval(body, w, lib, atoms, cfg, seed);
        const auto [ka, kb] = detail::window_range(spec, std::nullopt);
        const double slack = cfg.tau_s * std::log(static_cast<double>(kb - ka + 1)) +
                             cfg.tau_omega * std::log(static_cast<double>(cfg.n_mc));
        const double t_gap = bx.lower - at.lower - slack;
        const double d_gap = di.upper - bx.lower;
        if (first) {
          row.t_gap_max = t_gap;
          row.d_gap_min = d_gap;
          first = false;
        } else {
          row.t_gap_max = std::max(row.t_gap_max, t_gap);
          row.d_gap_min = std::min(row.d_gap_min, d_gap);
        }
        if (!row.true_state_init && bx.lower > 0.0 && at.lower < 0.0)
          ++row.not_t_witnesses;
      }
    }
    // Axiom 4 proxy: one-step vs composed two-step distributions.
    {
      const WorldState& w = worlds.front();
      ValueCtx ctx;
      SdeBindings<ValueBackend> bindings;
      bindings.bind_all(ctx, lib);
      const ResolvedInit init = resolve_init(spec, w);
      const ValueBundle whole = simulate<ValueBackend>(
          ctx, bindings.get(spec), VecD::of(init.z0), init.observation,
          ks_paths, mix(seed, 0xA4u), cfg.threads, 2.0 * spec.horizon,
          2 * spec.k_steps);
      const std::string keys[2] = {key, key};
      const ValueBundle two =
          compose(lib, keys, w, ks_paths, mix(seed, 0xB4u), cfg.threads);
      double ks = 0.0;
      for (int d = 0; d < spec.dim; ++d) {
        std::vector<double> a(ks_paths), b(ks_paths);
        for (int n = 0; n < ks_paths; ++n) {
          a[n] = whole.state(n, whole.k_steps)[d];
          b[n] = two.state(n, two.k_steps)[d];
        }
        ks = std::max(ks, ks_statistic(std::move(a), std::move(b)));
      }
      row.semigroup_ks = ks;
    }
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Soft accessibility (D.2): A(w, w') = E over paths of the best Gaussian
// kernel match between w' and the path.  Equals 1 exactly when w' == w
// (matched at s = 0).
// ---------------------------------------------------------------------------

inline double accessibility(const SdeSpec& spec, const SdeLibrary& lib,
                            const WorldState& w,
                            std::span<const double> w_prime, double sigma_b,
                            int n_paths, std::uint64_t seed, int threads = 1) {
  if (static_cast<int>(w_prime.size()) != spec.dim)
    throw ConfigError("accessibility: w' dimension mismatch");
  if (sigma_b <= 0.0) throw ConfigError("accessibility: sigma_b must be positive");
  ValueCtx ctx;
  SdeBindings<ValueBackend> bindings;
  bindings.bind_all(ctx, lib);
  const ResolvedInit init = resolve_init(spec, w);
  const ValueBundle bundle =
      simulate<ValueBackend>(ctx, bindings.get(spec), VecD::of(init.z0),
                             init.observation, n_paths, seed, threads);
  double acc = 0.0;
  for (int n = 0; n < n_paths; ++n) {
    double best = 0.0;
    for (int k = 0; k <= bundle.k_steps; ++k) {
      double d2 = 0.0;
      for (int i = 0; i < spec.dim; ++i) {
        const double d = w_prime[i] - bundle.state(n, k)[i];
        d2 += d * d;
      }
      best = std::max(best, std::exp(-d2 / (2.0 * sigma_b * sigma_b)));
    }
    acc += best;
  }
  return acc / n_paths;
}

// ---------------------------------------------------------------------------
// Modal Wasserstein gap (D.4): W1 between the terminal clouds of two
// modalities' SDEs at time s.  d == 1 uses the exact sorted form; d > 1 the
// sliced estimator with 64 fixed directions, normalized by the mean absolute
// projection c_d = E|u_1| so translated point masses measure their true
// Euclidean distance.
// ---------------------------------------------------------------------------

inline double sliced_w1(std::span<const std::vector<double>> a,
                        std::span<const std::vector<double>> b,
                        int n_projections = 64, std::uint64_t seed = 0x517ull) {
  if (a.empty() || a.size() != b.size())
    throw ConfigError("sliced_w1: need equal nonempty clouds");
  const int d = static_cast<int>(a.front().size());
  if (d == 1) {
    std::vector<double> xa(a.size()), xb(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      xa[i] = a[i][0];
      xb[i] = b[i][0];
    }
    return wasserstein1_1d(std::move(xa), std::move(xb));
  }
  // c_d = E|u_1| for u uniform on S^{d-1} = Gamma(d/2)/(sqrt(pi)*Gamma((d+1)/2))
  const double c_d = std::exp(std::lgamma(d / 2.0) - std::lgamma((d + 1) / 2.0)) /
                     std::sqrt(std::numbers::pi);
  const CounterRng rng{seed, 7};
  double total = 0.0;
  for (int p = 0; p < n_projections; ++p) {
    std::vector<double> dir(d);
    if (d == 2) {
      // deterministic equiangular quadrature (exact up to O(1/P^2))
      const double th = std::numbers::pi * (p + 0.5) / n_projections;
      dir = {std::cos(th), std::sin(th)};
    } else {
      double norm2 = 0.0;
      for (int i = 0; i < d; ++i) {
        dir[i] = rng.gauss2(static_cast<std::uint32_t>(p),
                            static_cast<std::uint32_t>(i), 0)[0];
        norm2 += dir[i] * dir[i];
      }
      const double inv = 1.0 / std::sqrt(norm2);
      for (auto& x : dir) x *= inv;
    }
    std::vector<double> pa(a.size()), pb(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      double sa = 0.0, sb = 0.0;
      for (int j = 0; j < d; ++j) {
        sa += dir[j] * a[i][j];
        sb += dir[j] * b[i][j];
      }
      pa[i] = sa;
      pb[i] = sb;
    }
    total += wasserstein1_1d(std::move(pa), std::move(pb));
  }
  return total / (n_projections * c_d);
}

inline double wasserstein_gap(const SdeSpec& sa, const SdeSpec& sb,
                              const SdeLibrary& lib, const WorldState& w,
                              double s, int n_paths, std::uint64_t seed,
                              int threads = 1) {
  if (sa.dim != sb.dim) throw ConfigError("wasserstein_gap: dim mismatch");
  ValueCtx ctx;
  SdeBindings<ValueBackend> bindings;
  bindings.bind_all(ctx, lib);
  auto terminal = [&](const SdeSpec& spec,
                      std::uint64_t sd) -> std::vector<std::vector<double>> {
    const ResolvedInit init = resolve_init(spec, w);
    const ValueBundle bundle = simulate<ValueBackend>(
        ctx, bindings.get(spec), VecD::of(init.z0), init.observation, n_paths,
        sd, threads, s, spec.k_steps);
    std::vector<std::vector<double>> cloud(n_paths);
    for (int n = 0; n < n_paths; ++n) {
      const VecD& zT = bundle.state(n, bundle.k_steps);
      cloud[n].assign(zT.v.begin(), zT.v.begin() + zT.n);
    }
    return cloud;
  };
  const auto ca = terminal(sa, mix(seed, 0xAAu));
  const auto cb = terminal(sb, mix(seed, 0xBBu));
  return sliced_w1(ca, cb);
}

// ---------------------------------------------------------------------------
// Instantaneous quantifier profile: per grid time t, the cross-path entropic
// envelope [softmin_omega L(t), softmax_omega U(t)] of a propositional body
// under one modality.  For a deterministic flow the two coincide (single
// trajectory), so mean_gap == 0 identifies quantifier collapse.
// ---------------------------------------------------------------------------

struct TimeProfile {
  std::vector<double> time, l_box, u_diamond, gap;
  double mean_gap = 0.0;
};

inline TimeProfile quantifier_profile(const Modality& m, const FormulaPtr& body,
                                      const WorldState& w, const SdeLibrary& lib,
                                      const AtomRegistry& atoms,
                                      const OperatorConfig& cfg,
                                      std::uint64_t seed) {
  const SdeSpec& spec = lib.resolve(m);
  const detail::FormulaIndex ix = detail::FormulaIndex::build(body, lib, atoms);
  ValueCtx ctx;
  SdeBindings<ValueBackend> bindings;
  bindings.bind_all(ctx, lib);
  const ResolvedInit init = resolve_init(spec, w);
  const ValueBundle bundle = simulate<ValueBackend>(
      ctx, bindings.get(spec), VecD::of(init.z0), init.observation, cfg.n_mc,
      mix(seed, 0x7f0f11e5ull), cfg.threads);
  detail::EvalEnv<ValueBackend> env;
  env.ctx = &ctx;
  env.lib = &lib;
  env.cfg = &cfg;
  env.bindings = &bindings;
  env.index = &ix;
  env.root_world = &w;
  env.seed = seed;
  TimeProfile out;
  std::vector<double> l(cfg.n_mc), u(cfg.n_mc);
  for (int k = 0; k <= bundle.k_steps; ++k) {
    for (int n = 0; n < cfg.n_mc; ++n) {
      const auto c = detail::eval_node<ValueBackend>(
          env, body.get(), bundle.state(n, k),
          mix(seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(k)),
          1);
      l[n] = c.lower;
      u[n] = c.upper;
    }
    const double lo = kernels::lse(true, l.data(), cfg.n_mc, cfg.tau_omega);
    const double hi = kernels::lse(false, u.data(), cfg.n_mc, cfg.tau_omega);
    out.time.push_back(bundle.times[k]);
    out.l_box.push_back(lo);
    out.u_diamond.push_back(hi);
    out.gap.push_back(hi - lo);
    out.mean_gap += hi - lo;
  }
  out.mean_gap /= static_cast<double>(bundle.k_steps + 1);
  return out;
}

}  // namespace fluidlogic
