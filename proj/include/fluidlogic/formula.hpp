#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "backend.hpp"
#include "common.hpp"

namespace fluidlogic {

// ---------------------------------------------------------------------------
// Modalities.  A modality picks the Neural SDE (and init policy) used to
// realize its accessibility relation; temporal/deontic are agent-free,
// epistemic (K_a) and doxastic (B_a) carry an agent id.
// ---------------------------------------------------------------------------

enum class ModalFamily { Temporal, Epistemic, Doxastic, Deontic };

struct Modality {
  ModalFamily family = ModalFamily::Temporal;
  std::string agent;  // nonempty iff Epistemic/Doxastic

  // Lookup key into the SDE library, e.g. "temporal", "epistemic:swarm".
  std::string key() const {
    switch (family) {
      case ModalFamily::Temporal: return "temporal";
      case ModalFamily::Epistemic: return "epistemic:" + agent;
      case ModalFamily::Doxastic: return "doxastic:" + agent;
      case ModalFamily::Deontic: return "deontic";
    }
    return {};
  }
  bool operator==(const Modality&) const = default;
};

inline Modality temporal_mod() { return {ModalFamily::Temporal, {}}; }
inline Modality epistemic_mod(std::string a) {
  return {ModalFamily::Epistemic, std::move(a)};
}
inline Modality doxastic_mod(std::string a) {
  return {ModalFamily::Doxastic, std::move(a)};
}
inline Modality deontic_mod() { return {ModalFamily::Deontic, {}}; }

// Time window [a, b] in model time units, a <= b.  Modal operators without an
// explicit window range over the full horizon of their SDE.
struct Window {
  double a = 0.0, b = 0.0;
  bool operator==(const Window&) const = default;
};

// ---------------------------------------------------------------------------
// Formula AST.  Immutable nodes behind shared_ptr<const>, freely shareable
// across threads.
// ---------------------------------------------------------------------------

struct Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

struct Formula {
  enum class Kind { Atom, Not, And, Or, Box, Diamond, Seq };

  Kind kind = Kind::Atom;
  std::string atom;                 // Atom: registry name
  FormulaPtr lhs, rhs;              // Not/Box/Diamond/Seq use lhs only
  Modality modality;                // Box/Diamond
  std::optional<Window> window;     // Box/Diamond
  std::vector<std::string> actions; // Seq: SDE keys applied in order
};

inline FormulaPtr atom(std::string name) {
  auto f = std::make_shared<Formula>();
  f->kind = Formula::Kind::Atom;
  f->atom = std::move(name);
  return f;
}
inline FormulaPtr lnot(FormulaPtr a) {
  auto f = std::make_shared<Formula>();
  f->kind = Formula::Kind::Not;
  f->lhs = std::move(a);
  return f;
}
inline FormulaPtr land(FormulaPtr a, FormulaPtr b) {
  auto f = std::make_shared<Formula>();
  f->kind = Formula::Kind::And;
  f->lhs = std::move(a);
  f->rhs = std::move(b);
  return f;
}
inline FormulaPtr lor(FormulaPtr a, FormulaPtr b) {
  auto f = std::make_shared<Formula>();
  f->kind = Formula::Kind::Or;
  f->lhs = std::move(a);
  f->rhs = std::move(b);
  return f;
}
inline FormulaPtr box(Modality m, std::optional<Window> w, FormulaPtr a) {
  auto f = std::make_shared<Formula>();
  f->kind = Formula::Kind::Box;
  f->modality = std::move(m);
  f->window = w;
  f->lhs = std::move(a);
  return f;
}
inline FormulaPtr diamond(Modality m, std::optional<Window> w, FormulaPtr a) {
  auto f = std::make_shared<Formula>();
  f->kind = Formula::Kind::Diamond;
  f->modality = std::move(m);
  f->window = w;
  f->lhs = std::move(a);
  return f;
}
inline FormulaPtr seq(std::vector<std::string> actions, FormulaPtr a) {
  if (actions.empty()) throw ConfigError("seq: needs at least one action");
  auto f = std::make_shared<Formula>();
  f->kind = Formula::Kind::Seq;
  f->actions = std::move(actions);
  f->lhs = std::move(a);
  return f;
}

inline bool equal(const FormulaPtr& a, const FormulaPtr& b) {
  if (a == b) return true;
  if (!a || !b || a->kind != b->kind) return false;
  switch (a->kind) {
    case Formula::Kind::Atom: return a->atom == b->atom;
    case Formula::Kind::Not: return equal(a->lhs, b->lhs);
    case Formula::Kind::And:
    case Formula::Kind::Or:
      return equal(a->lhs, b->lhs) && equal(a->rhs, b->rhs);
    case Formula::Kind::Box:
    case Formula::Kind::Diamond:
      return a->modality == b->modality && a->window == b->window &&
             equal(a->lhs, b->lhs);
    case Formula::Kind::Seq:
      return a->actions == b->actions && equal(a->lhs, b->lhs);
  }
  return false;
}

// Maximum number of modal operators (Box/Diamond/Seq) on any root-to-leaf
// path.  Evaluation cost is exponential in this, so eval caps it.
inline int nesting_depth(const FormulaPtr& f) {
  if (!f) return 0;
  switch (f->kind) {
    case Formula::Kind::Atom: return 0;
    case Formula::Kind::Not: return nesting_depth(f->lhs);
    case Formula::Kind::And:
    case Formula::Kind::Or:
      return std::max(nesting_depth(f->lhs), nesting_depth(f->rhs));
    case Formula::Kind::Box:
    case Formula::Kind::Diamond:
    case Formula::Kind::Seq:
      return 1 + nesting_depth(f->lhs);
  }
  return 0;
}

// Negation normal form: negations pushed to atoms through de Morgan and the
// Box/Diamond duality.  Not(Seq) has no dual and stays as-is (over the
// normalized body).  Interval semantics make nnf(f) evaluate identically.
inline FormulaPtr nnf(const FormulaPtr& f, bool negate = false) {
  if (!f) throw ConfigError("nnf: null formula");
  switch (f->kind) {
    case Formula::Kind::Atom:
      return negate ? lnot(atom(f->atom)) : atom(f->atom);
    case Formula::Kind::Not:
      return nnf(f->lhs, !negate);
    case Formula::Kind::And: {
      auto a = nnf(f->lhs, negate), b = nnf(f->rhs, negate);
      return negate ? lor(a, b) : land(a, b);
    }
    case Formula::Kind::Or: {
      auto a = nnf(f->lhs, negate), b = nnf(f->rhs, negate);
      return negate ? land(a, b) : lor(a, b);
    }
    case Formula::Kind::Box: {
      auto a = nnf(f->lhs, negate);
      return negate ? diamond(f->modality, f->window, a)
                    : box(f->modality, f->window, a);
    }
    case Formula::Kind::Diamond: {
      auto a = nnf(f->lhs, negate);
      return negate ? box(f->modality, f->window, a)
                    : diamond(f->modality, f->window, a);
    }
    case Formula::Kind::Seq: {
      auto s = seq(f->actions, nnf(f->lhs, false));
      return negate ? lnot(s) : s;
    }
  }
  throw ConfigError("nnf: unknown node kind");
}

// ---------------------------------------------------------------------------
// Atoms.  An atom maps a world state to a real margin (positive = satisfied);
// its truth interval is [L, U] = [lower(z), upper(z)], both later clipped to
// +-B.  `upper` defaults to the lower margin (consistent atom, L == U);
// giving the two bounds different geometry models evidence from conflicting
// sources and makes state-dependent contradictions (L > U) constructible.
// ---------------------------------------------------------------------------

struct MarginSpec {
  enum class Kind { Constant, Halfspace, SphereOutside, SphereInside, TanhCoord };
  Kind kind = Kind::Constant;
  double value = 0.0;                // Constant
  std::vector<double> normal;        // Halfspace: scale*(offset + n.z)
  double offset = 0.0;
  std::vector<double> center;        // Sphere*: distance taken on
  int slice_lo = 0, slice_len = -1;  //   z[slice_lo : slice_lo+slice_len]
  double radius = 0.0;
  int coord = 0;                     // TanhCoord: tanh(scale*z[coord]+offset)
  double scale = 1.0;
};

struct AtomSpec {
  std::string name;
  MarginSpec lower;
  std::optional<MarginSpec> upper;  // absent -> U = L
};

template <class B>
typename B::Scalar eval_margin(typename B::Ctx& ctx, const MarginSpec& m,
                               const typename B::Vec& z) {
  using S = typename B::Scalar;
  switch (m.kind) {
    case MarginSpec::Kind::Constant:
      return B::constant(ctx, m.value);
    case MarginSpec::Kind::Halfspace: {
      if (static_cast<int>(m.normal.size()) != B::dim(ctx, z))
        throw ConfigError("atom halfspace: normal dimension mismatch");
      S d = B::dot_const(ctx, z, m.normal);
      return B::affine(ctx, d, m.scale, m.scale * m.offset);
    }
    case MarginSpec::Kind::SphereOutside:
    case MarginSpec::Kind::SphereInside: {
      const int len =
          m.slice_len > 0 ? m.slice_len : static_cast<int>(m.center.size());
      if (static_cast<int>(m.center.size()) != len)
        throw ConfigError("atom sphere: center dimension mismatch");
      typename B::Vec p = (m.slice_lo == 0 && len == B::dim(ctx, z))
                              ? z
                              : B::slice(ctx, z, m.slice_lo, len);
      std::vector<double> neg_c(m.center.size());
      for (std::size_t i = 0; i < m.center.size(); ++i) neg_c[i] = -m.center[i];
      S d = B::norm(ctx, B::add_vec_const(ctx, p, neg_c));
      return m.kind == MarginSpec::Kind::SphereOutside
                 ? B::affine(ctx, d, m.scale, -m.scale * m.radius)
                 : B::affine(ctx, d, -m.scale, m.scale * m.radius);
    }
    case MarginSpec::Kind::TanhCoord: {
      S x = B::get(ctx, z, m.coord);
      return B::tanh_s(ctx, B::affine(ctx, x, m.scale, m.offset));
    }
  }
  throw ConfigError("atom: unknown margin kind");
}

class AtomRegistry {
 public:
  void add(AtomSpec spec) {
    if (spec.name.empty()) throw ConfigError("atom: empty name");
    if (atoms_.count(spec.name))
      throw ConfigError("atom already registered: " + spec.name);
    atoms_[spec.name] = std::move(spec);
  }
  const AtomSpec& resolve(const std::string& name) const {
    auto it = atoms_.find(name);
    if (it == atoms_.end()) throw ConfigError("unknown atom: " + name);
    return it->second;
  }
  bool contains(const std::string& name) const { return atoms_.count(name) > 0; }
  const std::map<std::string, AtomSpec>& all() const { return atoms_; }

 private:
  std::map<std::string, AtomSpec> atoms_;
};

}  // namespace fluidlogic
