#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "backend.hpp"
#include "modal.hpp"
#include "sde.hpp"

namespace fluidlogic {

// ---------------------------------------------------------------------------
// Loss configuration (Eq.-6 shape):
//   total = task + beta*contra + gamma*physics
//         + sum_i lambda_i * axiom_i + lambda_linn(step) * linn
// lambda_linn ramps linearly between ramp_start and ramp_end so the logic
// pressure arrives after the dynamics are roughly right.
// ---------------------------------------------------------------------------

struct LinnSchedule {
  double initial = 0.0, final_value = 1.0;
  int ramp_start = 0, ramp_end = 0;

  double at(int step) const {
    if (step <= ramp_start) return initial;
    if (step >= ramp_end || ramp_end <= ramp_start) return final_value;
    const double t = static_cast<double>(step - ramp_start) /
                     static_cast<double>(ramp_end - ramp_start);
    return initial + t * (final_value - initial);
  }
};

struct LossWeights {
  double task = 1.0;
  double beta_contra = 0.0;
  double gamma_physics = 0.0;
  std::map<std::string, double> lambda_axiom;  // modality key -> weight
  LinnSchedule lambda_linn;
};

// A logic objective: push the formula's lower bound up, either as far as it
// goes (MaximizeLower) or until it clears a margin (HingeLower).
struct FormulaObjective {
  std::string name;
  FormulaPtr formula;
  WorldState world;
  enum class Mode { MaximizeLower, HingeLower } mode = Mode::HingeLower;
  double margin = 0.1;
  double weight = 1.0;
};

// One-step transition sample (z0 -> z1 under the SDE named by `key`).
struct Sample {
  std::string key;
  std::vector<double> z0, z1;
};

struct LossReport {
  int step = 0;
  double task = 0.0, contra = 0.0, physics = 0.0, axiom = 0.0, linn = 0.0;
  double lambda_linn = 0.0;
  double total = 0.0;
  std::map<std::string, double> formula_lower, formula_upper;
};

struct TrainConfig {
  int steps = 200;
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  int batch = 16;
  double grad_clip = 10.0;       // global-norm clip; <= 0 disables
  std::uint64_t seed = 0;
  std::string axiom_atom;        // body used by the D-axiom hinge (default:
                                 // first registry atom)
  int report_every = 1;
};

// ---------------------------------------------------------------------------
// Parameter registry: flat view over every net in the library, in a fixed
// (map-ordered) layout, used by Adam and by the tape bindings.
// ---------------------------------------------------------------------------

namespace detail {

struct ParamSlot {
  std::vector<double>* storage = nullptr;  // Mlp weight or bias array
  Tensor leaf;                             // this step's tape leaf
};

struct ParamRegistry {
  std::vector<ParamSlot> slots;
  std::size_t total = 0;

  static ParamRegistry collect(SdeLibrary& lib,
                               const SdeBindings<GradBackend>& bindings) {
    ParamRegistry r;
    for (auto& [key, spec] : lib.specs) {
      auto add_net = [&](Mlp& net, const BoundMlp<GradBackend>& bound) {
        for (int l = 0; l < net.n_layers(); ++l) {
          r.slots.push_back({&net.W[l], bound.W[l]});
          r.slots.push_back({&net.b[l], bound.b[l]});
        }
      };
      const BoundSde<GradBackend>& b = bindings.get(spec);
      add_net(spec.drift, b.drift);
      add_net(spec.diffusion, b.diffusion);
    }
    for (const auto& s : r.slots) r.total += s.storage->size();
    return r;
  }
};

struct AdamState {
  std::vector<double> m, v;
  int t = 0;

  void ensure(std::size_t n) {
    if (m.size() != n) {
      m.assign(n, 0.0);
      v.assign(n, 0.0);
      t = 0;
    }
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// total_loss: records the Eq.-6 loss onto `tape` and reports the detached
// term values.  `bindings` must already hold every net's leaves (shared
// across all terms so gradients accumulate onto one parameter set).
// ---------------------------------------------------------------------------

inline Tensor total_loss(Tape& tape, const SdeBindings<GradBackend>& bindings,
                         const SdeLibrary& lib, const AtomRegistry& atoms,
                         const OperatorConfig& cfg, const LossWeights& weights,
                         double lambda_linn_now, std::span<const Sample> batch,
                         std::span<const FormulaObjective> objectives,
                         std::span<const WorldState> contra_pool,
                         const std::string& axiom_atom, std::uint64_t seed,
                         LossReport& report) {
  using B = GradBackend;
  Tape& ctx = tape;
  std::vector<Tensor> terms;

  // -- task: mean squared one-step prediction error (drift mean map)
  Tensor task = tape.constant(0.0);
  if (!batch.empty()) {
    std::vector<Tensor> errs;
    errs.reserve(batch.size());
    for (const Sample& s : batch) {
      const SdeSpec& spec = lib.resolve(s.key);
      if (static_cast<int>(s.z0.size()) != spec.dim ||
          static_cast<int>(s.z1.size()) != spec.dim)
        throw ConfigError("training sample dim mismatch for '" + s.key + "'");
      std::vector<double> obs;
      for (int i : spec.obs_indices) obs.push_back(s.z0[i]);
      Tensor z0 = tape.leaf(s.z0, spec.dim, 1);
      Tensor f = drift_field<B>(ctx, bindings.get(spec), z0, obs, 0.0);
      Tensor pred = tape.add(z0, tape.scale(f, spec.dt()));
      std::vector<double> neg_z1(s.z1.size());
      for (std::size_t i = 0; i < s.z1.size(); ++i) neg_z1[i] = -s.z1[i];
      Tensor err = tape.add_vec_const(pred, neg_z1);
      errs.push_back(tape.sum(tape.square(err)));
    }
    task = B::mean(ctx, errs);
  }
  report.task = tape.value(task);
  terms.push_back(tape.scale(task, weights.task));

  // -- contradiction penalty on the mined pool: mean relu(L - U)^2
  Tensor contra = tape.constant(0.0);
  if (weights.beta_contra != 0.0 && !contra_pool.empty() && !objectives.empty()) {
    std::vector<Tensor> cs;
    for (std::size_t i = 0; i < contra_pool.size(); ++i) {
      for (const FormulaObjective& obj : objectives) {
        const GradEval ge =
            eval_grad(tape, bindings, obj.formula, contra_pool[i], lib, atoms,
                      cfg, mix(seed, 0xC0ull, i));
        cs.push_back(tape.square(tape.relu(tape.sub(ge.lower, ge.upper))));
      }
    }
    contra = B::mean(ctx, cs);
  }
  report.contra = tape.value(contra);
  terms.push_back(tape.scale(contra, weights.beta_contra));

  // -- physics: keep the learned correction small where a base field exists
  Tensor physics = tape.constant(0.0);
  if (weights.gamma_physics != 0.0 && !batch.empty()) {
    std::vector<Tensor> ps;
    for (const Sample& s : batch) {
      const SdeSpec& spec = lib.resolve(s.key);
      if (spec.base_drift.empty() || spec.base_drift == "none") continue;
      std::vector<double> extra;
      for (int i : spec.obs_indices) extra.push_back(s.z0[i]);
      if (spec.drift_has_time) extra.push_back(0.0);
      Tensor z0 = tape.leaf(s.z0, spec.dim, 1);
      Tensor inp = extra.empty() ? z0 : tape.concat_const(z0, extra);
      Tensor corr = mlp_forward<B>(ctx, bindings.get(spec).drift, inp);
      ps.push_back(tape.sum(tape.square(corr)));
    }
    if (!ps.empty()) physics = B::mean(ctx, ps);
  }
  report.physics = tape.value(physics);
  terms.push_back(tape.scale(physics, weights.gamma_physics));

  // -- axiom hinges (seriality D: Box(a) must not exceed Diamond(a))
  Tensor axiom = tape.constant(0.0);
  if (!weights.lambda_axiom.empty()) {
    const std::string body_name =
        !axiom_atom.empty() ? axiom_atom : atoms.all().begin()->first;
    const FormulaPtr body = atom(body_name);
    std::vector<Tensor> as;
    std::size_t wi = 0;
    for (const auto& [key, lam] : weights.lambda_axiom) {
      if (lam == 0.0) continue;
      if (contra_pool.empty() && objectives.empty())
        throw ConfigError(
            "axiom loss needs a world: provide objectives or a mined pool");
      const Modality m = key_to_modality(key);
      const WorldState& w =
          contra_pool.empty() ? objectives.front().world
                              : contra_pool[wi++ % contra_pool.size()];
      const GradEval bx = eval_grad(tape, bindings, box(m, std::nullopt, body),
                                    w, lib, atoms, cfg, mix(seed, 0xA1ull));
      const GradEval di =
          eval_grad(tape, bindings, diamond(m, std::nullopt, body), w, lib,
                    atoms, cfg, mix(seed, 0xA1ull));
      Tensor h = tape.square(tape.relu(tape.sub(bx.lower, di.upper)));
      as.push_back(tape.scale(h, lam));
    }
    if (!as.empty()) axiom = B::sum(ctx, as);
  }
  report.axiom = tape.value(axiom);
  terms.push_back(axiom);

  // -- LINN objectives
  Tensor linn = tape.constant(0.0);
  if (!objectives.empty()) {
    std::vector<Tensor> ls;
    for (std::size_t i = 0; i < objectives.size(); ++i) {
      const FormulaObjective& obj = objectives[i];
      const GradEval ge = eval_grad(tape, bindings, obj.formula, obj.world, lib,
                                    atoms, cfg, mix(seed, 0x11ull, i));
      report.formula_lower[obj.name] = tape.value(ge.lower);
      report.formula_upper[obj.name] = tape.value(ge.upper);
      Tensor contrib;
      if (obj.mode == FormulaObjective::Mode::MaximizeLower) {
        contrib = tape.neg(ge.lower);
      } else {
        contrib = tape.square(
            tape.relu(tape.affine(ge.lower, -1.0, obj.margin)));
      }
      ls.push_back(tape.scale(contrib, obj.weight));
    }
    linn = B::sum(ctx, ls);
  }
  report.linn = tape.value(linn);
  report.lambda_linn = lambda_linn_now;
  terms.push_back(tape.scale(linn, lambda_linn_now));

  const Tensor total = B::sum(ctx, terms);
  report.total = tape.value(total);
  return total;
}

// ---------------------------------------------------------------------------
// train: Adam on the Eq.-6 loss with common random numbers per step (one
// fresh noise stream per step, shared by every term).  Returns the loss
// series; parameters are updated in place.
// ---------------------------------------------------------------------------

inline std::vector<LossReport> train(
    SdeLibrary& lib, const AtomRegistry& atoms, const OperatorConfig& cfg,
    const TrainConfig& tc, const LossWeights& weights,
    std::span<const Sample> data,
    std::span<const FormulaObjective> objectives,
    std::span<const WorldState> contra_pool,
    const std::function<void(int)>& epoch_hook = {}, int epoch_every = 0) {
  std::vector<LossReport> series;
  if (tc.steps <= 0) return series;
  detail::AdamState adam;
  Tape tape;
  const CounterRng batch_rng{mix(tc.seed, 0xBA7C4ull), 1};

  for (int step = 0; step < tc.steps; ++step) {
    tape.clear();
    SdeBindings<GradBackend> bindings;
    bindings.bind_all(tape, lib);
    detail::ParamRegistry params = detail::ParamRegistry::collect(lib, bindings);
    adam.ensure(params.total);

    // deterministic batch selection
    std::vector<Sample> batch;
    if (!data.empty()) {
      const int bsz = std::min<int>(tc.batch, static_cast<int>(data.size()));
      batch.reserve(bsz);
      for (int i = 0; i < bsz; ++i) {
        const double u = batch_rng.uniform(static_cast<std::uint32_t>(step),
                                           static_cast<std::uint32_t>(i), 0);
        batch.push_back(data[static_cast<std::size_t>(u * data.size()) %
                             data.size()]);
      }
    }

    LossReport rep;
    rep.step = step;
    const Tensor total = total_loss(
        tape, bindings, lib, atoms, cfg, weights, weights.lambda_linn.at(step),
        batch, objectives, contra_pool, tc.axiom_atom, mix(tc.seed, step), rep);
    if (!std::isfinite(rep.total))
      throw NumericError("training diverged: non-finite loss at step " +
                         std::to_string(step));
    tape.backward(total);

    // gather flat gradient, clip by global norm
    std::vector<double> g;
    g.reserve(params.total);
    for (const auto& slot : params.slots) {
      const auto gs = tape.grad(slot.leaf);
      g.insert(g.end(), gs.begin(), gs.end());
    }
    if (!all_finite(g))
      throw NumericError("training diverged: non-finite gradient at step " +
                         std::to_string(step));
    if (tc.grad_clip > 0.0) {
      double n2 = 0.0;
      for (double x : g) n2 += x * x;
      const double n = std::sqrt(n2);
      if (n > tc.grad_clip)
        for (double& x : g) x *= tc.grad_clip / n;
    }

    // Adam
    adam.t += 1;
    const double bc1 = 1.0 - std::pow(tc.beta1, adam.t);
    const double bc2 = 1.0 - std::pow(tc.beta2, adam.t);
    std::size_t off = 0;
    for (const auto& slot : params.slots) {
      std::vector<double>& w = *slot.storage;
      for (std::size_t i = 0; i < w.size(); ++i, ++off) {
        adam.m[off] = tc.beta1 * adam.m[off] + (1.0 - tc.beta1) * g[off];
        adam.v[off] = tc.beta2 * adam.v[off] + (1.0 - tc.beta2) * g[off] * g[off];
        const double mhat = adam.m[off] / bc1;
        const double vhat = adam.v[off] / bc2;
        w[i] -= tc.lr * mhat / (std::sqrt(vhat) + tc.adam_eps);
      }
    }

    if (step % tc.report_every == 0 || step + 1 == tc.steps)
      series.push_back(std::move(rep));
    if (epoch_hook && epoch_every > 0 &&
        ((step + 1) % epoch_every == 0 || step + 1 == tc.steps))
      epoch_hook(step + 1);
  }
  return series;
}

// ---------------------------------------------------------------------------
// Contradiction mining (D.5): gradient ascent on c(w) = relu(L - U)^2 from
// uniform starts in a box, with backtracking and projection.  Final scores
// are re-checked with the tape-free evaluator.
// ---------------------------------------------------------------------------

struct MiningConfig {
  int pool = 8;
  int ascent_steps = 15;
  double step_size = 0.25;
  std::vector<double> box_lo, box_hi;
};

struct MinedWorld {
  WorldState world;
  double c = 0.0;
};

inline std::vector<MinedWorld> mine_contradictions(
    const FormulaPtr& f, const SdeLibrary& lib, const AtomRegistry& atoms,
    const OperatorConfig& cfg, const MiningConfig& mc, const WorldState& proto,
    std::uint64_t seed) {
  if (mc.box_lo.empty() || mc.box_lo.size() != mc.box_hi.size())
    throw ConfigError("mine_contradictions: need matching box bounds");
  const int d = static_cast<int>(mc.box_lo.size());
  const CounterRng rng{mix(seed, 0x3417eull), 2};

  auto value_c = [&](const WorldState& w, std::uint64_t s) {
    const TruthInterval r = eval(f, w, lib, atoms, cfg, s);
    const double v = std::max(0.0, r.lower - r.upper);
    return v * v;
  };

  std::vector<MinedWorld> out;
  for (int p = 0; p < mc.pool; ++p) {
    WorldState w = proto;
    w.state.resize(d);
    for (int i = 0; i < d; ++i) {
      const double u = rng.uniform(static_cast<std::uint32_t>(p),
                                   static_cast<std::uint32_t>(i), 0);
      w.state[i] = mc.box_lo[i] + u * (mc.box_hi[i] - mc.box_lo[i]);
    }
    const std::uint64_t eval_seed = mix(seed, 0xE7ull, p);
    double best = value_c(w, eval_seed);
    double eta = mc.step_size;
    Tape tape;
    for (int it = 0; it < mc.ascent_steps; ++it) {
      tape.clear();
      SdeBindings<GradBackend> bindings;
      bindings.bind_all(tape, lib);
      const GradEval ge =
          eval_grad(tape, bindings, f, w, lib, atoms, cfg, eval_seed);
      const Tensor c = tape.square(tape.relu(tape.sub(ge.lower, ge.upper)));
      tape.backward(c);
      const auto gw = tape.grad(ge.world);
      double gn2 = 0.0;
      for (double x : gw) gn2 += x * x;
      if (gn2 == 0.0) break;  // flat (no contradiction in reach)
      WorldState cand = w;
      bool improved = false;
      for (int half = 0; half < 4 && !improved; ++half) {
        for (int i = 0; i < d; ++i) {
          const double x = w.state[i] + eta * gw[i];
          cand.state[i] = std::clamp(x, mc.box_lo[i], mc.box_hi[i]);
        }
        const double cv = value_c(cand, eval_seed);
        if (cv > best) {
          best = cv;
          w = cand;
          improved = true;
        } else {
          eta *= 0.5;
        }
      }
      if (!improved) break;
    }
    out.push_back({std::move(w), best});
  }
  std::sort(out.begin(), out.end(),
            [](const MinedWorld& a, const MinedWorld& b) { return a.c > b.c; });
  return out;
}

}  // namespace fluidlogic
