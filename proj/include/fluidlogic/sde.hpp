#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "backend.hpp"
#include "common.hpp"
#include "formula.hpp"
#include "mlp.hpp"
#include "rng.hpp"

namespace fluidlogic {

// Divergence guard: a path whose state norm passes this is marked escaped
// and padded with its last finite state for the rest of the grid.
inline constexpr double kEscapeNorm = 1e6;

// ---------------------------------------------------------------------------
// WorldState: where evaluation starts.  `beliefs` holds per-agent believed
// states for doxastic modalities; they may disagree with `state`.
// ---------------------------------------------------------------------------

struct WorldState {
  double time = 0.0;
  std::vector<double> state;
  std::map<std::string, std::vector<double>> beliefs;

  int dim() const { return static_cast<int>(state.size()); }
};

// ---------------------------------------------------------------------------
// SdeSpec: one entry of the SDE library (Eq.-style tuple of drift field,
// diffusion field, and initialization policy, plus the integration grid).
//
//   dz = [ base(z) + drift_mlp(inp) ] ds + sigma_scale*softplus(diff_mlp(z)) dW
//
// where inp = [z ; observation? ; s?].  The named base drift keeps known
// physics outside the learned correction (and gives L_physics a target).
// ---------------------------------------------------------------------------

enum class InitPolicy { TrueState, BelievedState, Conditioned };

struct SdeSpec {
  std::string key;            // library key, e.g. "temporal", "doxastic:rover3"
  int dim = 0;
  double horizon = 1.0;       // S: grid spans [0, S]
  int k_steps = 32;           // K grid points *after* s=0

  InitPolicy init = InitPolicy::TrueState;
  std::string agent;          // BelievedState: whose belief seeds z(0)
  std::vector<int> obs_indices;  // Conditioned: observed coords of the world

  std::string base_drift;     // "", "linear", "lorenz63"
  std::vector<double> base_params;

  Mlp drift;                  // in: dim (+obs +time) -> out: dim
  Mlp diffusion;              // in: dim -> out: dim (diagonal)
  double sigma_scale = 1.0;   // 0 => deterministic (Neural ODE)
  bool drift_has_time = false;

  double dt() const { return horizon / static_cast<double>(k_steps); }

  void validate() const {
    if (dim <= 0 || dim > kMaxDim)
      throw ConfigError("SdeSpec " + key + ": dim out of range");
    if (horizon <= 0.0 || k_steps <= 0)
      throw ConfigError("SdeSpec " + key + ": horizon and k_steps must be positive");
    if (init == InitPolicy::BelievedState && agent.empty())
      throw ConfigError("SdeSpec " + key + ": BelievedState needs an agent");
    const int in_expected = dim + static_cast<int>(obs_indices.size()) +
                            (drift_has_time ? 1 : 0);
    if (drift.in_dim() != in_expected || drift.out_dim() != dim)
      throw ConfigError("SdeSpec " + key + ": drift net shape mismatch");
    if (diffusion.in_dim() != dim || diffusion.out_dim() != dim)
      throw ConfigError("SdeSpec " + key + ": diffusion net shape mismatch");
    if (base_drift == "linear") {
      if (base_params.size() != static_cast<std::size_t>(dim) * dim)
        throw ConfigError("SdeSpec " + key +
                          ": base drift 'linear' needs a dim x dim matrix");
    } else if (base_drift == "swirl_cap") {
      if (dim != 2 || base_params.size() != 4)
        throw ConfigError("SdeSpec " + key +
                          ": base drift 'swirl_cap' needs dim 2 and 4 params");
    } else if (base_drift == "lorenz63") {
      if (dim != 3 || base_params.size() != 4)
        throw ConfigError("SdeSpec " + key +
                          ": base drift 'lorenz63' needs dim 3 and 4 params");
    } else if (!base_drift.empty() && base_drift != "none") {
      throw ConfigError("SdeSpec " + key + ": unknown base drift '" +
                        base_drift + "'");
    }
  }
};

// The SDE library indexed by modality key (Eq. 5).
struct SdeLibrary {
  std::map<std::string, SdeSpec> specs;

  SdeSpec& add(SdeSpec spec) {
    spec.validate();
    if (specs.count(spec.key))
      throw ConfigError("SDE already registered for modality '" + spec.key + "'");
    return specs[spec.key] = std::move(spec);
  }
  const SdeSpec& resolve(const Modality& m) const { return resolve(m.key()); }
  const SdeSpec& resolve(const std::string& key) const {
    auto it = specs.find(key);
    if (it == specs.end())
      throw ConfigError("no SDE registered for modality '" + key + "'");
    return it->second;
  }
  std::vector<Mlp*> all_nets() {
    std::vector<Mlp*> out;
    for (auto& [k, s] : specs) {
      out.push_back(&s.drift);
      out.push_back(&s.diffusion);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Initialization policy resolution: (world, spec) -> (z0, extra drift input).
// ---------------------------------------------------------------------------

struct ResolvedInit {
  std::vector<double> z0;
  std::vector<double> observation;  // appended to drift input (Conditioned)
};

inline ResolvedInit resolve_init(const SdeSpec& spec, const WorldState& w) {
  if (w.dim() != spec.dim)
    throw ConfigError("resolve_init: world dim " + std::to_string(w.dim()) +
                      " != SDE dim " + std::to_string(spec.dim));
  ResolvedInit r;
  switch (spec.init) {
    case InitPolicy::TrueState:
      r.z0 = w.state;
      break;
    case InitPolicy::BelievedState: {
      auto it = w.beliefs.find(spec.agent);
      if (it == w.beliefs.end())
        throw ConfigError("resolve_init: world has no belief for agent '" +
                          spec.agent + "'");
      if (static_cast<int>(it->second.size()) != spec.dim)
        throw ConfigError("resolve_init: belief dim mismatch for agent '" +
                          spec.agent + "'");
      r.z0 = it->second;
      break;
    }
    case InitPolicy::Conditioned:
      r.z0 = w.state;
      for (int i : spec.obs_indices) {
        if (i < 0 || i >= spec.dim)
          throw ConfigError("resolve_init: observation index out of range");
        r.observation.push_back(w.state[i]);
      }
      break;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Drift/diffusion fields (templated kernels shared by both backends).
// ---------------------------------------------------------------------------

template <class B>
struct BoundSde {
  const SdeSpec* spec = nullptr;
  BoundMlp<B> drift, diffusion;
};

template <class B>
BoundSde<B> bind_sde(typename B::Ctx& ctx, const SdeSpec& spec) {
  return BoundSde<B>{&spec, bind_mlp(ctx, spec.drift), bind_mlp(ctx, spec.diffusion)};
}

template <class B>
typename B::Vec base_drift_field(typename B::Ctx& ctx, const SdeSpec& spec,
                                 const typename B::Vec& z) {
  using S = typename B::Scalar;
  if (spec.base_drift.empty() || spec.base_drift == "none") {
    std::vector<double> zero(spec.dim, 0.0);
    return B::make_vec(ctx, zero);
  }
  if (spec.base_drift == "linear") {
    // params: row-major dim x dim matrix A, f = A z.
    if (spec.base_params.size() !=
        static_cast<std::size_t>(spec.dim) * spec.dim)
      throw ConfigError("base drift 'linear': params must be a dim x dim matrix");
    std::vector<S> rows;
    rows.reserve(spec.dim);
    for (int i = 0; i < spec.dim; ++i)
      rows.push_back(B::dot_const(
          ctx, z, std::span(spec.base_params).subspan(i * spec.dim, spec.dim)));
    return B::stack(ctx, rows);
  }
  if (spec.base_drift == "swirl_cap") {
    // params: a, omega, k, r0.  Linear swirl-plus-growth A z with a smooth
    // radial cap -k*relu(r^2 - r0^2)*z (an analytic stay-inside baseline).
    if (spec.dim != 2 || spec.base_params.size() != 4)
      throw ConfigError("base drift 'swirl_cap': needs dim 2 and 4 params");
    const double a = spec.base_params[0], om = spec.base_params[1],
                 k = spec.base_params[2], r0 = spec.base_params[3];
    S x = B::get(ctx, z, 0), y = B::get(ctx, z, 1);
    S r = B::norm(ctx, z);
    S cap = B::affine(ctx,
                      B::relu(ctx, B::affine(ctx, B::square(ctx, r), 1.0, -r0 * r0)),
                      -k, 0.0);
    S f1 = B::add(ctx, B::add(ctx, B::affine(ctx, x, a, 0.0),
                              B::affine(ctx, y, -om, 0.0)),
                  B::mul(ctx, cap, x));
    S f2 = B::add(ctx, B::add(ctx, B::affine(ctx, x, om, 0.0),
                              B::affine(ctx, y, a, 0.0)),
                  B::mul(ctx, cap, y));
    std::vector<S> rows{f1, f2};
    return B::stack(ctx, rows);
  }
  if (spec.base_drift == "lorenz63") {
    // params: sigma, rho, beta, coord_scale c.  Dynamics of y = x/c where x
    // follows Lorenz-63:
    //   y1' = sigma*(y2 - y1)
    //   y2' = y1*(rho - c*y3) - y2
    //   y3' = c*y1*y2 - beta*y3
    if (spec.dim != 3 || spec.base_params.size() != 4)
      throw ConfigError("base drift 'lorenz63': needs dim 3 and 4 params");
    const double sg = spec.base_params[0], rho = spec.base_params[1],
                 beta = spec.base_params[2], c = spec.base_params[3];
    S y1 = B::get(ctx, z, 0), y2 = B::get(ctx, z, 1), y3 = B::get(ctx, z, 2);
    S f1 = B::affine(ctx, B::sub(ctx, y2, y1), sg, 0.0);
    S f2 = B::sub(ctx, B::mul(ctx, y1, B::affine(ctx, y3, -c, rho)), y2);
    S f3 = B::sub(ctx, B::affine(ctx, B::mul(ctx, y1, y2), c, 0.0),
                  B::affine(ctx, y3, beta, 0.0));
    std::vector<S> rows{f1, f2, f3};
    return B::stack(ctx, rows);
  }
  throw ConfigError("unknown base drift: " + spec.base_drift);
}

template <class B>
typename B::Vec drift_field(typename B::Ctx& ctx, const BoundSde<B>& sde,
                            const typename B::Vec& z,
                            std::span<const double> observation, double s) {
  const SdeSpec& spec = *sde.spec;
  std::vector<double> extra(observation.begin(), observation.end());
  if (spec.drift_has_time) extra.push_back(s);
  typename B::Vec inp =
      extra.empty() ? z : B::concat_const(ctx, z, extra);
  typename B::Vec f = mlp_forward<B>(ctx, sde.drift, inp);
  if (!spec.base_drift.empty() && spec.base_drift != "none")
    f = B::add(ctx, f, base_drift_field<B>(ctx, spec, z));
  return f;
}

template <class B>
typename B::Vec diffusion_field(typename B::Ctx& ctx, const BoundSde<B>& sde,
                                const typename B::Vec& z) {
  typename B::Vec g = mlp_forward<B>(ctx, sde.diffusion, z);
  return B::scale(ctx, B::softplus_v(ctx, g), sde.spec->sigma_scale);
}

// ---------------------------------------------------------------------------
// PathBundle: K+1 grid states (s=0 included) for each of N paths, plus
// escape flags.  state(n, k) is the state at time times[k].
// ---------------------------------------------------------------------------

template <class B>
struct PathBundle {
  int n_paths = 0, k_steps = 0, dim = 0;
  double dt = 0.0;
  std::vector<double> times;              // k_steps + 1 entries
  std::vector<typename B::Vec> states;    // (k_steps+1) per path, path-major
  std::vector<char> escaped;

  const typename B::Vec& state(int n, int k) const {
    return states[static_cast<std::size_t>(n) * (k_steps + 1) + k];
  }
  typename B::Vec& state(int n, int k) {
    return states[static_cast<std::size_t>(n) * (k_steps + 1) + k];
  }
  int grid_size() const { return k_steps + 1; }
};

using ValueBundle = PathBundle<ValueBackend>;

namespace detail {

// One Euler-Maruyama path written into its preallocated slab.  Noise cells
// are a pure function of (seed, path, step), so results do not depend on
// which thread runs which path.
template <class B>
void simulate_path(typename B::Ctx& ctx, const BoundSde<B>& sde,
                   PathBundle<B>& out, int n, const typename B::Vec& z0,
                   std::span<const double> observation, std::uint64_t seed,
                   double horizon, int k_steps) {
  const SdeSpec& spec = *sde.spec;
  const double dt = horizon / static_cast<double>(k_steps);
  const double sqrt_dt = std::sqrt(dt);
  const CounterRng rng{seed, 0};
  std::array<double, kMaxDim> xi;
  std::array<double, kMaxDim> cur;
  typename B::Vec z = z0;
  out.state(n, 0) = z;
  bool escaped = false;
  for (int k = 0; k < k_steps; ++k) {
    if (escaped) {
      out.state(n, k + 1) = z;  // pad with last finite state
      continue;
    }
    const double s = dt * static_cast<double>(k);
    typename B::Vec f = drift_field<B>(ctx, sde, z, observation, s);
    typename B::Vec step = B::scale(ctx, f, dt);
    if (spec.sigma_scale != 0.0) {
      typename B::Vec g = diffusion_field<B>(ctx, sde, z);
      rng.fill_gauss(static_cast<std::uint32_t>(n),
                     static_cast<std::uint32_t>(k),
                     std::span(xi.data(), spec.dim));
      for (int i = 0; i < spec.dim; ++i) xi[i] *= sqrt_dt;
      step = B::add(ctx, step,
                    B::mul(ctx, g, B::make_vec(ctx, std::span(xi.data(), spec.dim))));
    }
    typename B::Vec next = B::add(ctx, z, step);
    B::vec_values(ctx, next, std::span(cur.data(), spec.dim));
    double norm2 = 0.0;
    bool finite = true;
    for (int i = 0; i < spec.dim; ++i) {
      if (!std::isfinite(cur[i])) finite = false;
      norm2 += cur[i] * cur[i];
    }
    if (!finite)
      throw NumericError("simulate: non-finite state in SDE '" + spec.key +
                         "' at step " + std::to_string(k + 1));
    if (norm2 > kEscapeNorm * kEscapeNorm) {
      escaped = true;
      out.escaped[n] = 1;
      out.state(n, k + 1) = z;  // keep last finite state
      continue;
    }
    z = next;
    out.state(n, k + 1) = z;
  }
}

}  // namespace detail

// Simulate N paths of `sde` from z0 on the uniform grid over [0, horizon]
// (spec's own horizon/k_steps unless overridden).  Value-backend runs may
// split paths across `threads` workers; every backend/thread combination
// produces identical states.
template <class B>
PathBundle<B> simulate(typename B::Ctx& ctx, const BoundSde<B>& sde,
                       const typename B::Vec& z0,
                       std::span<const double> observation, int n_paths,
                       std::uint64_t seed, int threads = 1,
                       double horizon_override = -1.0,
                       int k_steps_override = -1) {
  const SdeSpec& spec = *sde.spec;
  const double horizon =
      horizon_override > 0.0 ? horizon_override : spec.horizon;
  const int k_steps = k_steps_override > 0 ? k_steps_override : spec.k_steps;
  if (n_paths <= 0) throw ConfigError("simulate: n_paths must be positive");
  PathBundle<B> out;
  out.n_paths = n_paths;
  out.k_steps = k_steps;
  out.dim = spec.dim;
  out.dt = horizon / static_cast<double>(k_steps);
  out.times.resize(k_steps + 1);
  for (int k = 0; k <= k_steps; ++k)
    out.times[k] = out.dt * static_cast<double>(k);
  out.states.resize(static_cast<std::size_t>(n_paths) * (k_steps + 1));
  out.escaped.assign(n_paths, 0);

  if constexpr (std::is_same_v<B, ValueBackend>) {
    parallel_for(static_cast<std::size_t>(n_paths), threads, [&](std::size_t n) {
      detail::simulate_path<B>(ctx, sde, out, static_cast<int>(n), z0,
                               observation, seed, horizon, k_steps);
    });
  } else {
    // Gradient mode records onto one shared tape: strictly sequential.
    for (int n = 0; n < n_paths; ++n)
      detail::simulate_path<B>(ctx, sde, out, n, z0, observation, seed,
                               horizon, k_steps);
  }
  return out;
}

// Convenience for value-mode callers starting from a WorldState.
inline ValueBundle simulate_world(const SdeSpec& spec, const WorldState& w,
                                  int n_paths, std::uint64_t seed,
                                  int threads = 1) {
  ValueCtx ctx;
  const ResolvedInit init = resolve_init(spec, w);
  const BoundSde<ValueBackend> sde = bind_sde<ValueBackend>(ctx, spec);
  return simulate<ValueBackend>(ctx, sde, VecD::of(init.z0), init.observation,
                                n_paths, seed, threads);
}

// Sequential composition [a;b;...]: each segment integrates its own SDE from
// the previous segment's terminal states.  Segment j draws from the derived
// stream mix(seed, j) so no noise cell is reused across segments.  The
// returned bundle concatenates the grids (shared boundary states appear
// once); `dt` is the first segment's step.
inline ValueBundle compose(const SdeLibrary& lib,
                           std::span<const std::string> keys,
                           const WorldState& w, int n_paths,
                           std::uint64_t seed, int threads = 1) {
  if (keys.empty()) throw ConfigError("compose: empty action list");
  ValueCtx ctx;
  ValueBundle total;
  for (std::size_t j = 0; j < keys.size(); ++j) {
    const SdeSpec& spec = lib.resolve(keys[j]);
    const BoundSde<ValueBackend> sde = bind_sde<ValueBackend>(ctx, spec);
    if (j == 0) {
      const ResolvedInit init = resolve_init(spec, w);
      total = simulate<ValueBackend>(ctx, sde, VecD::of(init.z0),
                                     init.observation, n_paths, mix(seed, 0),
                                     threads);
      continue;
    }
    // continue each path from its own terminal state
    ValueBundle seg;
    seg.n_paths = n_paths;
    seg.k_steps = spec.k_steps;
    seg.dim = spec.dim;
    seg.dt = spec.dt();
    seg.times.resize(spec.k_steps + 1);
    for (int k = 0; k <= spec.k_steps; ++k) seg.times[k] = spec.dt() * k;
    seg.states.resize(static_cast<std::size_t>(n_paths) * (spec.k_steps + 1));
    seg.escaped = total.escaped;
    const std::uint64_t seg_seed = mix(seed, j);
    if (spec.dim != total.dim)
      throw ConfigError("compose: segment '" + keys[j] + "' dim mismatch");
    parallel_for(static_cast<std::size_t>(n_paths), threads, [&](std::size_t n) {
      WorldState wn;
      wn.time = 0.0;
      const VecD& zT = total.state(static_cast<int>(n), total.k_steps);
      wn.state.assign(zT.v.begin(), zT.v.begin() + zT.n);
      wn.beliefs = w.beliefs;
      const ResolvedInit init = resolve_init(spec, wn);
      detail::simulate_path<ValueBackend>(ctx, sde, seg, static_cast<int>(n),
                                          VecD::of(init.z0), init.observation,
                                          seg_seed, spec.horizon, spec.k_steps);
    });
    // concatenate: drop the duplicated boundary state
    const double t0 = total.times.back();
    for (int k = 1; k <= seg.k_steps; ++k)
      total.times.push_back(t0 + seg.times[k]);
    std::vector<VecD> merged;
    merged.resize(static_cast<std::size_t>(n_paths) *
                  (total.k_steps + seg.k_steps + 1));
    for (int n = 0; n < n_paths; ++n) {
      for (int k = 0; k <= total.k_steps; ++k)
        merged[static_cast<std::size_t>(n) * (total.k_steps + seg.k_steps + 1) + k] =
            total.state(n, k);
      for (int k = 1; k <= seg.k_steps; ++k)
        merged[static_cast<std::size_t>(n) * (total.k_steps + seg.k_steps + 1) +
               total.k_steps + k] = seg.state(n, k);
    }
    total.k_steps += seg.k_steps;
    total.states = std::move(merged);
    for (int n = 0; n < n_paths; ++n)
      total.escaped[n] = total.escaped[n] || seg.escaped[n];
  }
  return total;
}

}  // namespace fluidlogic
