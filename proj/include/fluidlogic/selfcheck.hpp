#pragma once

#include <string>
#include <vector>

#include "modal.hpp"
#include "parser.hpp"
#include "training.hpp"

namespace fluidlogic {

// ---------------------------------------------------------------------------
// Property suite behind `fluidlogic check` and the acceptance tests.  Each
// check builds its own fixed instance, so results depend only on the seed
// and the knob values passed in.
// ---------------------------------------------------------------------------

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace selfcheck {

// Brownian/tanh fixture (Theorem 2): pure diffusion in 1-D, atom tanh(z).
// sigma == 0 freezes the paths entirely, which is the collapse counterpart.
inline SdeLibrary brownian_lib(double sigma, std::uint64_t seed, int k_steps = 16) {
  SdeSpec sp;
  sp.key = "temporal";
  sp.dim = 1;
  sp.horizon = 1.0;
  sp.k_steps = k_steps;
  sp.init = InitPolicy::TrueState;
  sp.drift = Mlp::make("temporal.drift", {1, 4, 1}, mix(seed, 1));
  sp.diffusion = Mlp::make("temporal.diffusion", {1, 4, 1}, mix(seed, 2));
  sp.sigma_scale = sigma / std::log(2.0);  // softplus(0) == ln 2 at init
  SdeLibrary lib;
  lib.add(sp);
  return lib;
}

inline AtomRegistry tanh_atom() {
  AtomSpec a;
  a.name = "level";
  a.lower.kind = MarginSpec::Kind::TanhCoord;
  a.lower.coord = 0;
  a.lower.scale = 1.0;
  AtomRegistry r;
  r.add(a);
  return r;
}

// --- Eq. 4 gap bound over random (atom, SDE, w) instances -------------------

struct GapBoundStats {
  int instances = 0;
  int violations = 0;
  double worst_excess = -1e300;  // max of L_Box - (L_phi + slack); pass < tol
};

inline GapBoundStats gap_bound_check(int n_instances, std::uint64_t seed) {
  GapBoundStats st;
  st.instances = n_instances;
  const CounterRng rng{mix(seed, 0x1274ull), 9};
  for (int i = 0; i < n_instances; ++i) {
    auto u = [&](int slot) {
      return rng.uniform(static_cast<std::uint32_t>(i), 0,
                         static_cast<std::uint32_t>(slot));
    };
    const int dim = 1 + static_cast<int>(u(0) * 3.0 * (1.0 - 1e-12));
    const int k_steps = 3 + static_cast<int>(u(1) * 10.0);
    const int n_mc = 4 + static_cast<int>(u(2) * 28.0);

    SdeSpec sp;
    sp.key = "temporal";
    sp.dim = dim;
    sp.horizon = 0.5 + u(3);
    sp.k_steps = k_steps;
    sp.init = InitPolicy::TrueState;
    sp.drift =
        Mlp::make("temporal.drift", {dim, 6, dim}, mix(seed, i, 11), false);
    sp.diffusion =
        Mlp::make("temporal.diffusion", {dim, 6, dim}, mix(seed, i, 13), false);
    sp.sigma_scale = 1.5 * u(4);
    SdeLibrary lib;
    lib.add(sp);

    AtomSpec a;
    a.name = "p";
    const double kind_pick = u(5);
    auto& m = a.lower;
    m.scale = 0.5 + 3.5 * u(6);
    if (kind_pick < 0.25) {
      m.kind = MarginSpec::Kind::Halfspace;
      m.normal.assign(dim, 0.0);
      for (int d = 0; d < dim; ++d) m.normal[d] = 2.0 * u(10 + d) - 1.0;
      m.offset = 2.0 * u(7) - 1.0;
    } else if (kind_pick < 0.5) {
      m.kind = MarginSpec::Kind::SphereOutside;
      m.center.assign(dim, 0.0);
      for (int d = 0; d < dim; ++d) m.center[d] = 2.0 * u(10 + d) - 1.0;
      m.radius = 0.2 + u(7);
    } else if (kind_pick < 0.75) {
      m.kind = MarginSpec::Kind::SphereInside;
      m.center.assign(dim, 0.0);
      for (int d = 0; d < dim; ++d) m.center[d] = 2.0 * u(10 + d) - 1.0;
      m.radius = 0.2 + u(7);
    } else {
      m.kind = MarginSpec::Kind::TanhCoord;
      m.coord = static_cast<int>(u(7) * dim * (1.0 - 1e-12));
    }
    AtomRegistry atoms;
    atoms.add(a);

    WorldState w;
    w.state.assign(dim, 0.0);
    for (int d = 0; d < dim; ++d) w.state[d] = 2.0 * u(20 + d) - 1.0;

    OperatorConfig cfg;
    cfg.tau_s = 0.02 + u(8);
    cfg.tau_omega = 0.02 + u(9);
    cfg.n_mc = n_mc;
    const double bounds[] = {0.5, 1.0, 2.0, 4.0};
    cfg.bound = bounds[static_cast<int>(u(30) * 4.0 * (1.0 - 1e-12))];

    const TruthInterval iv =
        eval(box(temporal_mod(), {}, atom("p")), w, lib, atoms, cfg,
             mix(seed, i));
    ValueCtx ctx;
    const double phi = kernels::clip(
        eval_margin<ValueBackend>(ctx, m, VecD::of(w.state)), cfg.bound);
    const double slack =
        cfg.tau_s * std::log(static_cast<double>(k_steps + 1)) +
        cfg.tau_omega * std::log(static_cast<double>(n_mc));
    const double excess = iv.lower - (phi + slack);
    st.worst_excess = std::max(st.worst_excess, excess);
    if (excess > 1e-9) ++st.violations;
  }
  return st;
}

// --- Theorem 2: non-collapse vs collapse -------------------------------------

struct CollapseStats {
  double stochastic_gap = 0.0;   // U_Diamond - L_Box, sigma = 1
  double frozen_gap = 0.0;       // |U_Diamond - L_Box|, sigma = 0
};

inline CollapseStats collapse_check(std::uint64_t seed, int n_mc = 256,
                                    double tau = 0.3) {
  CollapseStats st;
  const AtomRegistry atoms = tanh_atom();
  WorldState w;
  w.state = {0.0};
  OperatorConfig cfg;
  cfg.tau_s = tau;
  cfg.tau_omega = tau;
  cfg.n_mc = n_mc;
  cfg.bound = 2.0;

  const FormulaPtr fbox = box(temporal_mod(), {}, atom("level"));
  const FormulaPtr fdia = diamond(temporal_mod(), {}, atom("level"));
  {
    const SdeLibrary lib = brownian_lib(1.0, mix(seed, 3));
    const double l = eval(fbox, w, lib, atoms, cfg, seed).lower;
    const double u = eval(fdia, w, lib, atoms, cfg, seed).upper;
    st.stochastic_gap = u - l;
  }
  {
    const SdeLibrary lib = brownian_lib(0.0, mix(seed, 3));
    const double l = eval(fbox, w, lib, atoms, cfg, seed).lower;
    const double u = eval(fdia, w, lib, atoms, cfg, seed).upper;
    st.frozen_gap = std::abs(u - l);
  }
  return st;
}

// --- Theorem 1(c): tau -> 0 limits on one fixed bundle -----------------------

struct TauLimitStats {
  double hard_gap_small_tau = 0.0;  // |L_Box(0.01) - hard min|
  double gap_small = 0.0;           // L_Box(0.03) - hard min
  double gap_large = 0.0;           // L_Box(1.0)  - hard min
  double bound = 0.0;               // clip bound B of the instance
  bool monotone = true;
};

inline TauLimitStats tau_limit_stats(std::uint64_t seed) {
  // The normalized softmin overshoots the hard min by tau*log(n / k_eff),
  // maximal when the minimum is isolated (k_eff = 1) and shrinking as values
  // tie at the bottom.  A steep margin clipped at +-B manufactures exact
  // ties: every grid point with |z| past the clip knee contributes the same
  // -B, so k_eff stays large and the tau=0.01 bias lands well inside 0.01*B.
  const SdeLibrary lib = brownian_lib(0.5, mix(seed, 3));
  AtomSpec a;
  a.name = "level";
  a.lower.kind = MarginSpec::Kind::Halfspace;
  a.lower.normal = {1.0};
  a.lower.scale = 20.0;
  AtomRegistry atoms;
  atoms.add(a);
  WorldState w;
  w.state = {0.0};
  OperatorConfig cfg;
  cfg.n_mc = 64;
  cfg.bound = 4.0;
  const double taus[] = {1.0, 0.3, 0.1, 0.03, 0.01};
  const TauLimitReport rep = tau_limit_check(box(temporal_mod(), {}, atom("level")), w, lib,
                                        atoms, cfg, taus, seed);
  TauLimitStats st;
  st.hard_gap_small_tau = std::abs(rep.values[4] - rep.hard_value);
  st.gap_small = rep.values[3] - rep.hard_value;
  st.gap_large = rep.values[0] - rep.hard_value;
  st.bound = cfg.bound;
  st.monotone = rep.monotone;
  return st;
}

// --- Theorem 1(b): MC concentration ------------------------------------------

inline ConcentrationReport concentration_stats(int trials, std::uint64_t seed,
                                               int population_n = 65536) {
  const ConcentrationBound bound{};  // C=1, eps=0.1, delta=0.05, tau_omega=0.5
  const SdeLibrary lib = brownian_lib(0.4, mix(seed, 3), /*k_steps=*/8);
  const AtomRegistry atoms = tanh_atom();
  WorldState w;
  w.state = {0.0};
  OperatorConfig cfg;
  cfg.tau_s = 0.5;
  cfg.tau_omega = bound.tau_omega;
  cfg.n_mc = 64;              // overridden per-trial by the bound's n
  cfg.bound = 0.5;            // B <= C * tau_omega
  return check_concentration(box(temporal_mod(), {}, atom("level")), w, lib,
                             atoms, cfg, bound, trials, seed, population_n);
}

// --- Criterion 5: end-to-end gradients vs central finite differences --------

struct GradCheckStats {
  double max_rel_err = 0.0;
  std::size_t n_params = 0;
};

inline GradCheckStats gradient_check(std::uint64_t seed) {
  // 1-D toy: N_mc = 8, K = 5, fixed noise via the counter streams.
  SdeSpec sp;
  sp.key = "temporal";
  sp.dim = 1;
  sp.horizon = 1.0;
  sp.k_steps = 5;
  sp.init = InitPolicy::TrueState;
  sp.drift = Mlp::make("temporal.drift", {1, 4, 1}, mix(seed, 1), false);
  sp.diffusion = Mlp::make("temporal.diffusion", {1, 4, 1}, mix(seed, 2), false);
  sp.sigma_scale = 0.5;
  SdeLibrary lib;
  lib.add(sp);
  const AtomRegistry atoms = tanh_atom();

  OperatorConfig cfg;
  cfg.tau_s = 0.3;
  cfg.tau_omega = 0.3;
  cfg.n_mc = 8;
  cfg.bound = 2.0;

  LossWeights weights;
  weights.beta_contra = 0.5;
  weights.lambda_axiom["temporal"] = 0.3;
  weights.lambda_linn = {1.0, 1.0, 0, 0};

  WorldState w;
  w.state = {0.2};
  std::vector<FormulaObjective> objectives(1);
  objectives[0].name = "g_level";
  objectives[0].formula = box(temporal_mod(), {}, atom("level"));
  objectives[0].world = w;
  objectives[0].mode = FormulaObjective::Mode::HingeLower;
  objectives[0].margin = 0.5;

  std::vector<Sample> batch(2);
  batch[0] = {"temporal", {0.1}, {0.15}};
  batch[1] = {"temporal", {-0.3}, {-0.2}};
  const std::vector<WorldState> pool = {w};

  const std::uint64_t loss_seed = mix(seed, 0xFD17ull);
  auto loss_value = [&](LossReport& rep) {
    Tape tape;
    SdeBindings<GradBackend> bindings;
    bindings.bind_all(tape, lib);
    const Tensor loss =
        total_loss(tape, bindings, lib, atoms, cfg, weights, 1.0, batch,
                   objectives, pool, "level", loss_seed, rep);
    return tape.value(loss);
  };

  // analytic gradient
  std::vector<double> grad;
  {
    Tape tape;
    SdeBindings<GradBackend> bindings;
    bindings.bind_all(tape, lib);
    detail::ParamRegistry params =
        detail::ParamRegistry::collect(lib, bindings);
    LossReport rep;
    const Tensor loss =
        total_loss(tape, bindings, lib, atoms, cfg, weights, 1.0, batch,
                   objectives, pool, "level", loss_seed, rep);
    tape.backward(loss);
    for (const auto& slot : params.slots) {
      const auto g = tape.grad(slot.leaf);
      grad.insert(grad.end(), g.begin(), g.end());
    }
  }

  // central differences over every parameter
  GradCheckStats st;
  st.n_params = grad.size();
  const double h = 1e-5;
  std::size_t flat = 0;
  double ref_scale = 1e-6;
  for (double g : grad) ref_scale = std::max(ref_scale, std::abs(g));
  for (auto& [key, spec] : lib.specs) {
    for (Mlp* net : {&spec.drift, &spec.diffusion}) {
      for (int l = 0; l < net->n_layers(); ++l) {
        for (std::vector<double>* vec : {&net->W[l], &net->b[l]}) {
          for (double& p : *vec) {
            const double saved = p;
            LossReport r0, r1;
            p = saved + h;
            const double lp = loss_value(r0);
            p = saved - h;
            const double lm = loss_value(r1);
            p = saved;
            const double fd = (lp - lm) / (2.0 * h);
            const double denom =
                std::max({std::abs(fd), std::abs(grad[flat]), 0.05 * ref_scale});
            st.max_rel_err =
                std::max(st.max_rel_err, std::abs(fd - grad[flat]) / denom);
            ++flat;
          }
        }
      }
    }
  }
  return st;
}

}  // namespace selfcheck

// Quick property sweep for the `check` subcommand.  The acceptance suite runs
// the same checks at criterion-grade sample counts.
inline std::vector<CheckResult> run_all_checks(std::uint64_t seed) {
  std::vector<CheckResult> out;
  char buf[256];

  {
    const auto st = selfcheck::gap_bound_check(200, seed);
    std::snprintf(buf, sizeof(buf), "violations=%d/%d worst_excess=%.3g",
                  st.violations, st.instances, st.worst_excess);
    out.push_back({"gap_bound", st.violations == 0, buf});
  }
  {
    const auto st = selfcheck::collapse_check(seed);
    std::snprintf(buf, sizeof(buf), "stochastic_gap=%.4f frozen_gap=%.3g",
                  st.stochastic_gap, st.frozen_gap);
    out.push_back({"non_collapse", st.stochastic_gap >= 0.2, buf});
    out.push_back({"collapse", st.frozen_gap <= 1e-9, buf});
  }
  {
    const auto st = selfcheck::tau_limit_stats(seed);
    std::snprintf(buf, sizeof(buf),
                  "|L(0.01)-min|=%.3g gap(0.03)=%.3g gap(1)=%.3g monotone=%d",
                  st.hard_gap_small_tau, st.gap_small, st.gap_large,
                  st.monotone ? 1 : 0);
    out.push_back({"tau_limit",
                   st.hard_gap_small_tau < 0.01 * st.bound &&
                       st.gap_small < 0.25 * st.gap_large && st.monotone,
                   buf});
  }
  {
    const auto rep = selfcheck::concentration_stats(60, seed, 16384);
    std::snprintf(buf, sizeof(buf),
                  "n_mc=%d empirical=%.4f bound=%.4f population_L=%.4f",
                  rep.n_mc, rep.empirical_failure_rate, rep.theoretical_bound,
                  rep.population_lower);
    out.push_back({"concentration", !rep.violated, buf});
  }
  {
    const auto st = selfcheck::gradient_check(seed);
    std::snprintf(buf, sizeof(buf), "max_rel_err=%.3g over %zu params",
                  st.max_rel_err, st.n_params);
    out.push_back({"gradients", st.max_rel_err < 1e-3, buf});
  }
  return out;
}

}  // namespace fluidlogic
