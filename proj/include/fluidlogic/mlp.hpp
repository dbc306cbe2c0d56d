#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "backend.hpp"
#include "common.hpp"
#include "rng.hpp"

namespace fluidlogic {

// ---------------------------------------------------------------------------
// Dense MLP with tanh hidden activations and a linear head.  Parameters are
// plain double storage owned here; bind<B>() lifts them into a backend
// (views for value mode, tape leaves for training).
// ---------------------------------------------------------------------------

struct Mlp {
  std::string name;
  std::vector<int> widths;                 // [in, hidden..., out]
  std::vector<std::vector<double>> W;      // layer l: widths[l+1] x widths[l]
  std::vector<std::vector<double>> b;      // layer l: widths[l+1]

  int in_dim() const { return widths.front(); }
  int out_dim() const { return widths.back(); }
  int n_layers() const { return static_cast<int>(widths.size()) - 1; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (int l = 0; l < n_layers(); ++l) n += W[l].size() + b[l].size();
    return n;
  }

  // Glorot-uniform init from the counter RNG; zero_head zeroes the last
  // layer so the net starts as the identity perturbation around its base.
  static Mlp make(std::string name, std::vector<int> widths, std::uint64_t seed,
                  bool zero_head = true) {
    if (widths.size() < 2) throw ConfigError("Mlp: need at least two widths");
    for (int w : widths)
      if (w < 1 || w > kMaxDim)
        throw ConfigError("Mlp: layer width outside [1, kMaxDim]");
    Mlp m;
    m.name = std::move(name);
    m.widths = std::move(widths);
    const int L = m.n_layers();
    m.W.resize(L);
    m.b.resize(L);
    const CounterRng rng{mix(seed, 0x6d6c70u), 0};
    for (int l = 0; l < L; ++l) {
      const int rows = m.widths[l + 1], cols = m.widths[l];
      m.W[l].assign(static_cast<std::size_t>(rows) * cols, 0.0);
      m.b[l].assign(rows, 0.0);
      if (zero_head && l == L - 1) continue;
      const double lim = std::sqrt(6.0 / (rows + cols));
      for (std::size_t i = 0; i < m.W[l].size(); ++i) {
        const double u = rng.uniform(static_cast<std::uint32_t>(l),
                                     static_cast<std::uint32_t>(i), 0);
        m.W[l][i] = lim * (2.0 * u - 1.0);
      }
    }
    return m;
  }
};

template <class B>
struct BoundMlp {
  std::vector<typename B::Mat> W;
  std::vector<typename B::Vec> b;
  const Mlp* src = nullptr;
};

inline BoundMlp<ValueBackend> bind_mlp(ValueCtx&, const Mlp& m) {
  BoundMlp<ValueBackend> r;
  r.src = &m;
  for (int l = 0; l < m.n_layers(); ++l) {
    r.W.push_back(MatView{m.W[l].data(), m.widths[l + 1], m.widths[l]});
    r.b.push_back(VecD::of(m.b[l]));
  }
  return r;
}

inline BoundMlp<GradBackend> bind_mlp(Tape& tape, const Mlp& m) {
  BoundMlp<GradBackend> r;
  r.src = &m;
  for (int l = 0; l < m.n_layers(); ++l) {
    r.W.push_back(tape.leaf(m.W[l], m.widths[l + 1], m.widths[l]));
    r.b.push_back(tape.leaf(m.b[l], m.widths[l + 1], 1));
  }
  return r;
}

template <class B>
typename B::Vec mlp_forward(typename B::Ctx& ctx, const BoundMlp<B>& m,
                            typename B::Vec x) {
  const int L = static_cast<int>(m.W.size());
  for (int l = 0; l < L; ++l) {
    x = B::add(ctx, B::matvec(ctx, m.W[l], x), m.b[l]);
    if (l + 1 < L) x = B::tanh_v(ctx, x);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Checkpoints.  Plain text, one file for a whole set of nets; doubles are
// written with %.17g so a save/load cycle is lossless.
// ---------------------------------------------------------------------------

inline constexpr const char* kCheckpointHeader = "FLUIDLOGIC-CKPT-1";

namespace detail {

inline std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace detail

inline void save_checkpoint(std::ostream& os, std::span<const Mlp* const> nets) {
  os << kCheckpointHeader << "\n";
  os << "nets " << nets.size() << "\n";
  for (const Mlp* m : nets) {
    os << "net " << m->name << "\n";
    os << "widths " << m->widths.size();
    for (int w : m->widths) os << ' ' << w;
    os << "\n";
    for (int l = 0; l < m->n_layers(); ++l) {
      os << "W";
      for (double x : m->W[l]) os << ' ' << detail::fmt_double(x);
      os << "\nb";
      for (double x : m->b[l]) os << ' ' << detail::fmt_double(x);
      os << "\n";
    }
  }
  os << "end\n";
}

inline void save_checkpoint(const std::string& path,
                            std::span<const Mlp* const> nets) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open checkpoint for writing: " + path);
  save_checkpoint(os, nets);
}

inline std::vector<Mlp> load_checkpoint(std::istream& is) {
  std::string header;
  if (!std::getline(is, header) || header != kCheckpointHeader)
    throw ConfigError("checkpoint: bad or missing header (expected " +
                      std::string(kCheckpointHeader) + ")");
  std::string tok;
  std::size_t n = 0;
  if (!(is >> tok >> n) || tok != "nets")
    throw ConfigError("checkpoint: expected 'nets <count>'");
  std::vector<Mlp> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Mlp m;
    if (!(is >> tok >> m.name) || tok != "net")
      throw ConfigError("checkpoint: expected 'net <name>'");
    std::size_t nw = 0;
    if (!(is >> tok >> nw) || tok != "widths" || nw < 2)
      throw ConfigError("checkpoint: expected 'widths <count> ...'");
    m.widths.resize(nw);
    for (auto& w : m.widths)
      if (!(is >> w) || w <= 0)
        throw ConfigError("checkpoint: bad width in net " + m.name);
    m.W.resize(nw - 1);
    m.b.resize(nw - 1);
    for (std::size_t l = 0; l + 1 < nw; ++l) {
      const std::size_t wn =
          static_cast<std::size_t>(m.widths[l + 1]) * m.widths[l];
      if (!(is >> tok) || tok != "W")
        throw ConfigError("checkpoint: expected 'W' in net " + m.name);
      m.W[l].resize(wn);
      for (auto& x : m.W[l])
        if (!(is >> x)) throw ConfigError("checkpoint: truncated weights");
      if (!(is >> tok) || tok != "b")
        throw ConfigError("checkpoint: expected 'b' in net " + m.name);
      m.b[l].resize(m.widths[l + 1]);
      for (auto& x : m.b[l])
        if (!(is >> x)) throw ConfigError("checkpoint: truncated biases");
    }
    out.push_back(std::move(m));
  }
  if (!(is >> tok) || tok != "end")
    throw ConfigError("checkpoint: missing 'end' marker");
  return out;
}

inline std::vector<Mlp> load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open checkpoint: " + path);
  return load_checkpoint(is);
}

}  // namespace fluidlogic
