#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"

namespace fluidlogic {

// Shared scalar forward kernels.  The tape and the tape-free value backend
// both call these, so the two evaluation paths are bit-identical.
namespace kernels {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}
inline double clip(double x, double b) {
  return x < -b ? -b : (x > b ? b : x);
}

// Entropic aggregate with the 1/n normalizer, tared at the exact extremum:
//   is_min:  min x - tau*log((1/n) sum exp(-(x_i - min)/tau))
//   !is_min: max x + tau*log((1/n) sum exp( (x_i - max)/tau))
// Always lands inside [min x, max x].
inline double lse(bool is_min, const double* x, int n, double tau) {
  const double sgn = is_min ? -1.0 : 1.0;
  double m = x[0];
  for (int i = 1; i < n; ++i) m = sgn * x[i] > sgn * m ? x[i] : m;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(sgn * (x[i] - m) / tau);
  return m + sgn * tau * std::log(s / n);
}

inline double matvec_row(const double* w_row, const double* x, int cols) {
  double s = 0.0;
  for (int j = 0; j < cols; ++j) s += w_row[j] * x[j];
  return s;
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// Reverse-mode tape.
//
// A Tape is a Wengert list over flat double buffers: every node owns a
// contiguous slice of `vals_` (its forward value) and, after backward(), the
// matching slice of `grads_`.  Tensors are cheap (tape*, id) handles.  The
// forward value is computed eagerly when the node is recorded, so a Tensor is
// always inspectable.  backward() walks the list once in reverse over the
// subgraph reachable from the root.
//
// Tensors are "vectors with an optional matrix shape": rows*cols doubles,
// cols == 1 for everything except parameter matrices used by MatVec.
// ---------------------------------------------------------------------------

class Tape;

struct Tensor {
  Tape* tape = nullptr;
  std::int32_t id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

class Tape {
 public:
  enum class Op : std::uint8_t {
    kLeaf, kAdd, kSub, kMul, kScale, kMatVec, kTanh, kSigmoid, kExp,
    kLog, kSoftplus, kSqrt, kSquare, kClip, kRelu, kHMin, kHMax, kSum, kMean,
    kNorm, kGet, kSlice, kStack, kConcatConst, kAddVecConst, kDotConst,
    kAffineScalar, kLseMin, kLseMax,
  };

  Tape() { reserve_default(); }

  void clear() {
    nodes_.clear();
    vals_.clear();
    grads_.clear();
    parents_.clear();
    aux_.clear();
  }

  std::size_t size() const { return nodes_.size(); }

  // --- node creation -------------------------------------------------------

  Tensor leaf(std::span<const double> v, int rows, int cols = 1) {
    if (static_cast<std::size_t>(rows) * cols != v.size())
      throw ConfigError("tape leaf: shape does not match data size");
    const std::int32_t id = push(Op::kLeaf, rows, cols, {});
    std::copy(v.begin(), v.end(), val_ptr(id));
    return {this, id};
  }

  Tensor constant(double x) { return leaf({&x, 1}, 1, 1); }

  // --- accessors -----------------------------------------------------------

  int rows(Tensor t) const { return node(t).rows; }
  int cols(Tensor t) const { return node(t).cols; }
  int elems(Tensor t) const { return node(t).rows * node(t).cols; }

  std::span<const double> values(Tensor t) const {
    const Node& n = node(t);
    return {vals_.data() + n.val, static_cast<std::size_t>(n.rows) * n.cols};
  }
  double value(Tensor t) const {
    if (elems(t) != 1) throw ConfigError("tape value: tensor is not scalar");
    return vals_[node(t).val];
  }
  std::span<const double> grad(Tensor t) const {
    const Node& n = node(t);
    if (grads_.size() != vals_.size())
      throw ConfigError("tape grad: backward() has not run");
    return {grads_.data() + n.val, static_cast<std::size_t>(n.rows) * n.cols};
  }

  // Overwrite a leaf's payload in place (parameter updates between steps).
  void poke(Tensor t, std::span<const double> v) {
    Node& n = node_mut(t);
    if (n.op != Op::kLeaf || v.size() != static_cast<std::size_t>(n.rows) * n.cols)
      throw ConfigError("tape poke: target must be a leaf of matching size");
    std::copy(v.begin(), v.end(), vals_.begin() + n.val);
  }

  void assert_finite(const std::string& where) const {
    if (!all_finite(vals_))
      throw NumericError("non-finite value on tape during " + where);
  }

  // --- elementwise binary --------------------------------------------------

  Tensor add(Tensor a, Tensor b) { return binary(Op::kAdd, a, b); }
  Tensor sub(Tensor a, Tensor b) { return binary(Op::kSub, a, b); }
  Tensor mul(Tensor a, Tensor b) { return binary(Op::kMul, a, b); }

  Tensor scale(Tensor a, double c) {
    const std::int32_t id = unary(Op::kScale, a, c);
    apply_unary(id, [c](double x) { return c * x; });
    return {this, id};
  }
  Tensor neg(Tensor a) { return scale(a, -1.0); }

  // y = a*x + b, scalar x.
  Tensor affine(Tensor x, double a, double b) {
    require_scalar(x, "affine");
    const std::int32_t id = push(Op::kAffineScalar, 1, 1, {x.id}, a);
    node_mut_id(id).aux2 = b;
    vals_[node_id(id).val] = a * vals_[node_id(x.id).val] + b;
    return {this, id};
  }

  // --- elementwise unary ---------------------------------------------------

  Tensor tanh(Tensor a) {
    const std::int32_t id = unary(Op::kTanh, a);
    apply_unary(id, [](double x) { return std::tanh(x); });
    return {this, id};
  }
  Tensor sigmoid(Tensor a) {
    const std::int32_t id = unary(Op::kSigmoid, a);
    apply_unary(id, [](double x) { return kernels::sigmoid(x); });
    return {this, id};
  }
  Tensor exp(Tensor a) {
    const std::int32_t id = unary(Op::kExp, a);
    apply_unary(id, [](double x) { return std::exp(x); });
    return {this, id};
  }
  Tensor log(Tensor a) {
    const std::int32_t id = unary(Op::kLog, a);
    apply_unary(id, [](double x) { return std::log(x); });
    return {this, id};
  }
  Tensor softplus(Tensor a) {
    const std::int32_t id = unary(Op::kSoftplus, a);
    apply_unary(id, [](double x) { return kernels::softplus(x); });
    return {this, id};
  }
  Tensor sqrt(Tensor a) {
    const std::int32_t id = unary(Op::kSqrt, a);
    apply_unary(id, [](double x) { return std::sqrt(x); });
    return {this, id};
  }
  Tensor square(Tensor a) {
    const std::int32_t id = unary(Op::kSquare, a);
    apply_unary(id, [](double x) { return x * x; });
    return {this, id};
  }
  Tensor relu(Tensor a) {
    const std::int32_t id = unary(Op::kRelu, a);
    apply_unary(id, [](double x) { return x > 0.0 ? x : 0.0; });
    return {this, id};
  }

  // clamp to [-bound, bound]; gradient is 1 strictly inside, 0 outside.
  Tensor clip(Tensor a, double bound) {
    if (bound <= 0.0) throw ConfigError("clip: bound must be positive");
    const std::int32_t id = unary(Op::kClip, a, bound);
    apply_unary(id, [bound](double x) { return kernels::clip(x, bound); });
    return {this, id};
  }

  // --- shape ops -----------------------------------------------------------

  Tensor get(Tensor v, int i) {
    if (i < 0 || i >= elems(v)) throw ConfigError("get: index out of range");
    const std::int32_t id = push(Op::kGet, 1, 1, {v.id}, 0.0, i);
    vals_[node_id(id).val] = vals_[node_id(v.id).val + i];
    return {this, id};
  }

  Tensor slice(Tensor v, int lo, int len) {
    if (lo < 0 || len <= 0 || lo + len > elems(v))
      throw ConfigError("slice: range out of bounds");
    const std::int32_t id = push(Op::kSlice, len, 1, {v.id}, 0.0, lo);
    for (int i = 0; i < len; ++i)
      vals_[node_id(id).val + i] = vals_[node_id(v.id).val + lo + i];
    return {this, id};
  }

  Tensor stack(std::span<const Tensor> xs) {
    if (xs.empty()) throw ConfigError("stack: empty argument list");
    std::vector<std::int32_t> ids;
    ids.reserve(xs.size());
    for (Tensor t : xs) {
      require_scalar(t, "stack");
      ids.push_back(t.id);
    }
    const std::int32_t id =
        push(Op::kStack, static_cast<int>(xs.size()), 1, ids);
    for (std::size_t i = 0; i < xs.size(); ++i)
      vals_[node_id(id).val + i] = vals_[node_id(ids[i]).val];
    return {this, id};
  }

  // y = [x; c] with c a plain constant payload (gradient flows to x only).
  Tensor concat_const(Tensor x, std::span<const double> c) {
    const int nx = elems(x);
    const std::int32_t id =
        push(Op::kConcatConst, nx + static_cast<int>(c.size()), 1, {x.id});
    for (int i = 0; i < nx; ++i)
      vals_[node_id(id).val + i] = vals_[node_id(x.id).val + i];
    for (std::size_t i = 0; i < c.size(); ++i)
      vals_[node_id(id).val + nx + i] = c[i];
    return {this, id};
  }

  Tensor add_vec_const(Tensor x, std::span<const double> c) {
    if (static_cast<std::size_t>(elems(x)) != c.size())
      throw ConfigError("add_vec_const: size mismatch");
    const std::int32_t id = push(Op::kAddVecConst, node_id(x.id).rows,
                                 node_id(x.id).cols, {x.id});
    for (std::size_t i = 0; i < c.size(); ++i)
      vals_[node_id(id).val + i] = vals_[node_id(x.id).val + i] + c[i];
    return {this, id};
  }

  Tensor dot_const(Tensor x, std::span<const double> c) {
    if (static_cast<std::size_t>(elems(x)) != c.size())
      throw ConfigError("dot_const: size mismatch");
    const int aux_off = push_aux(c);
    const std::int32_t id = push(Op::kDotConst, 1, 1, {x.id}, 0.0, aux_off);
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i)
      s += vals_[node_id(x.id).val + i] * c[i];
    vals_[node_id(id).val] = s;
    return {this, id};
  }

  // --- linear algebra ------------------------------------------------------

  // W: rows x cols (row-major), x: cols -> y: rows.
  Tensor matvec(Tensor W, Tensor x) {
    // Same reallocation hazard as binary(): read W's node before push.
    const int rows = node(W).rows, cols = node(W).cols;
    if (cols != elems(x) || node(x).cols != 1)
      throw ConfigError("matvec: inner dimensions do not match");
    const std::size_t vw = node(W).val, vx = node(x).val;
    const std::int32_t id = push(Op::kMatVec, rows, 1, {W.id, x.id});
    const double* wp = vals_.data() + vw;
    const double* xp = vals_.data() + vx;
    double* yp = vals_.data() + node_id(id).val;
    for (int i = 0; i < rows; ++i)
      yp[i] = kernels::matvec_row(wp + i * cols, xp, cols);
    return {this, id};
  }

  // --- hard extrema (exact min/max, subgradient to the winner) --------------

  Tensor hmin(Tensor a, Tensor b) { return binary(Op::kHMin, a, b); }
  Tensor hmax(Tensor a, Tensor b) { return binary(Op::kHMax, a, b); }

  // --- reductions ----------------------------------------------------------

  Tensor sum(Tensor v) {
    const std::int32_t id = push(Op::kSum, 1, 1, {v.id});
    double s = 0.0;
    for (int i = 0; i < elems(v); ++i) s += vals_[node_id(v.id).val + i];
    vals_[node_id(id).val] = s;
    return {this, id};
  }
  Tensor mean(Tensor v) {
    const std::int32_t id = push(Op::kMean, 1, 1, {v.id});
    double s = 0.0;
    const int n = elems(v);
    for (int i = 0; i < n; ++i) s += vals_[node_id(v.id).val + i];
    vals_[node_id(id).val] = s / n;
    return {this, id};
  }
  Tensor norm(Tensor v) {
    const std::int32_t id = push(Op::kNorm, 1, 1, {v.id});
    double s = 0.0;
    for (int i = 0; i < elems(v); ++i) {
      const double x = vals_[node_id(v.id).val + i];
      s += x * x;
    }
    vals_[node_id(id).val] = std::sqrt(s);
    return {this, id};
  }

  // Entropic aggregates over the entries of v (both include the 1/n
  // normalizer).  Stabilized by taring at the exact extremum, so
  //   lse_min(v)  = min v  -  tau * log( (1/n) sum exp(-(v_i - min)/tau) )
  // never overflows and lands in [min v, max v].
  Tensor lse_min(Tensor v, double tau) { return lse(Op::kLseMin, v, tau); }
  Tensor lse_max(Tensor v, double tau) { return lse(Op::kLseMax, v, tau); }

  // --- reverse sweep -------------------------------------------------------

  void backward(Tensor root) {
    if (elems(root) != 1)
      throw ConfigError("backward: root must be a scalar");
    grads_.assign(vals_.size(), 0.0);
    // Mark the subgraph feeding the root so unrelated nodes are skipped.
    std::vector<char> live(nodes_.size(), 0);
    live[root.id] = 1;
    for (std::int32_t i = root.id; i >= 0; --i) {
      if (!live[i]) continue;
      const Node& n = nodes_[i];
      for (int p = 0; p < n.par_n; ++p) live[parents_[n.par_off + p]] = 1;
    }
    grads_[node_id(root.id).val] = 1.0;
    for (std::int32_t i = root.id; i >= 0; --i) {
      if (live[i]) pull(nodes_[i]);
    }
  }

 private:
  struct Node {
    Op op;
    int rows, cols;
    std::size_t val;       // offset into vals_/grads_
    int par_off, par_n;    // slice of parents_
    double aux = 0.0;      // op payload: scale factor, tau, clip bound, ...
    double aux2 = 0.0;     // secondary payload (affine offset)
    int iaux = 0;          // index payload: get/slice origin, aux_ offset
  };

  void reserve_default() {
    nodes_.reserve(1 << 12);
    vals_.reserve(1 << 14);
    parents_.reserve(1 << 13);
  }

  const Node& node(Tensor t) const {
    if (t.tape != this) throw ConfigError("tensor belongs to another tape");
    return nodes_.at(t.id);
  }
  Node& node_mut(Tensor t) {
    if (t.tape != this) throw ConfigError("tensor belongs to another tape");
    return nodes_.at(t.id);
  }
  const Node& node_id(std::int32_t id) const { return nodes_[id]; }
  Node& node_mut_id(std::int32_t id) { return nodes_[id]; }

  void require_scalar(Tensor t, const char* where) const {
    if (elems(t) != 1)
      throw ConfigError(std::string(where) + ": scalar operand required");
  }

  std::int32_t push(Op op, int rows, int cols,
                    std::initializer_list<std::int32_t> ps, double aux = 0.0,
                    int iaux = 0) {
    return push(op, rows, cols,
                std::span<const std::int32_t>(ps.begin(), ps.size()), aux,
                iaux);
  }
  std::int32_t push(Op op, int rows, int cols, std::span<const std::int32_t> ps,
                    double aux = 0.0, int iaux = 0) {
    Node n;
    n.op = op;
    n.rows = rows;
    n.cols = cols;
    n.val = vals_.size();
    n.par_off = static_cast<int>(parents_.size());
    n.par_n = static_cast<int>(ps.size());
    n.aux = aux;
    n.iaux = iaux;
    parents_.insert(parents_.end(), ps.begin(), ps.end());
    vals_.resize(vals_.size() + static_cast<std::size_t>(rows) * cols, 0.0);
    nodes_.push_back(n);
    return static_cast<std::int32_t>(nodes_.size()) - 1;
  }

  int push_aux(std::span<const double> c) {
    const int off = static_cast<int>(aux_.size());
    aux_.insert(aux_.end(), c.begin(), c.end());
    return off;
  }

  std::int32_t unary(Op op, Tensor a, double aux = 0.0) {
    const Node& na = node(a);
    return push(op, na.rows, na.cols, {a.id}, aux);
  }

  double* val_ptr(std::int32_t id) { return vals_.data() + nodes_[id].val; }

  template <class Fn>
  void apply_unary(std::int32_t id, Fn&& fn) {
    const Node& n = nodes_[id];
    const Node& p = nodes_[parents_[n.par_off]];
    for (int i = 0; i < n.rows * n.cols; ++i)
      vals_[n.val + i] = fn(vals_[p.val + i]);
  }

  Tensor binary(Op op, Tensor a, Tensor b) {
    // Copy shapes/offsets out before push: it may grow nodes_ and invalidate
    // any Node reference held across the call.
    const int rows = node(a).rows, cols = node(a).cols;
    if (rows != node(b).rows || cols != node(b).cols)
      throw ConfigError("elementwise op: shape mismatch");
    const std::size_t va = node(a).val, vb = node(b).val;
    const std::int32_t id = push(op, rows, cols, {a.id, b.id});
    const std::size_t vo = node_id(id).val;
    for (int i = 0; i < rows * cols; ++i) {
      const double x = vals_[va + i], y = vals_[vb + i];
      double r = 0.0;
      switch (op) {
        case Op::kAdd: r = x + y; break;
        case Op::kSub: r = x - y; break;
        case Op::kMul: r = x * y; break;
        case Op::kHMin: r = x <= y ? x : y; break;
        case Op::kHMax: r = x >= y ? x : y; break;
        default: throw ConfigError("binary: unexpected op");
      }
      vals_[vo + i] = r;
    }
    return {this, id};
  }

  Tensor lse(Op op, Tensor v, double tau) {
    if (tau <= 0.0) throw ConfigError("lse: temperature must be positive");
    const int n = elems(v);
    if (n == 0) throw ConfigError("lse: empty input");
    const std::int32_t id = push(op, 1, 1, {v.id}, tau);
    const double* x = vals_.data() + node_id(v.id).val;
    vals_[node_id(id).val] = kernels::lse(op == Op::kLseMin, x, n, tau);
    return {this, id};
  }

  // Accumulate parent gradients for one node.
  void pull(const Node& n) {
    const double* g = grads_.data() + n.val;
    const double* y = vals_.data() + n.val;
    auto P = [&](int k) -> const Node& { return nodes_[parents_[n.par_off + k]]; };
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kAdd:
        for (int i = 0; i < n.rows * n.cols; ++i) {
          grads_[P(0).val + i] += g[i];
          grads_[P(1).val + i] += g[i];
        }
        break;
      case Op::kSub:
        for (int i = 0; i < n.rows * n.cols; ++i) {
          grads_[P(0).val + i] += g[i];
          grads_[P(1).val + i] -= g[i];
        }
        break;
      case Op::kMul:
        for (int i = 0; i < n.rows * n.cols; ++i) {
          grads_[P(0).val + i] += g[i] * vals_[P(1).val + i];
          grads_[P(1).val + i] += g[i] * vals_[P(0).val + i];
        }
        break;
      case Op::kScale:
        for (int i = 0; i < n.rows * n.cols; ++i)
          grads_[P(0).val + i] += g[i] * n.aux;
        break;
      case Op::kAffineScalar:
        grads_[P(0).val] += g[0] * n.aux;
        break;
      case Op::kMatVec: {
        const Node& w = P(0);
        const Node& x = P(1);
        for (int i = 0; i < w.rows; ++i) {
          const double gi = g[i];
          for (int j = 0; j < w.cols; ++j) {
            grads_[w.val + i * w.cols + j] += gi * vals_[x.val + j];
            grads_[x.val + j] += gi * vals_[w.val + i * w.cols + j];
          }
        }
        break;
      }
      case Op::kTanh:
        for (int i = 0; i < n.rows * n.cols; ++i)
          grads_[P(0).val + i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      case Op::kSigmoid:
        for (int i = 0; i < n.rows * n.cols; ++i)
          grads_[P(0).val + i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      case Op::kExp:
        for (int i = 0; i < n.rows * n.cols; ++i)
          grads_[P(0).val + i] += g[i] * y[i];
        break;
      case Op::kLog:
        for (int i = 0; i < n.rows * n.cols; ++i)
          grads_[P(0).val + i] += g[i] / vals_[P(0).val + i];
        break;
      case Op::kSoftplus:
        for (int i = 0; i < n.rows * n.cols; ++i) {
          const double x = vals_[P(0).val + i];
          grads_[P(0).val + i] += g[i] / (1.0 + std::exp(-x));
        }
        break;
      case Op::kSqrt:
        for (int i = 0; i < n.rows * n.cols; ++i)
          grads_[P(0).val + i] += y[i] > 0.0 ? g[i] / (2.0 * y[i]) : 0.0;
        break;
      case Op::kSquare:
        for (int i = 0; i < n.rows * n.cols; ++i)
          grads_[P(0).val + i] += g[i] * 2.0 * vals_[P(0).val + i];
        break;
      case Op::kClip:
        for (int i = 0; i < n.rows * n.cols; ++i) {
          const double x = vals_[P(0).val + i];
          if (x > -n.aux && x < n.aux) grads_[P(0).val + i] += g[i];
        }
        break;
      case Op::kRelu:
        for (int i = 0; i < n.rows * n.cols; ++i)
          if (vals_[P(0).val + i] > 0.0) grads_[P(0).val + i] += g[i];
        break;
      case Op::kHMin:
      case Op::kHMax:
        for (int i = 0; i < n.rows * n.cols; ++i) {
          const double a = vals_[P(0).val + i], b = vals_[P(1).val + i];
          const bool first = (n.op == Op::kHMin) ? (a <= b) : (a >= b);
          grads_[(first ? P(0) : P(1)).val + i] += g[i];
        }
        break;
      case Op::kSum:
        for (int i = 0; i < P(0).rows * P(0).cols; ++i)
          grads_[P(0).val + i] += g[0];
        break;
      case Op::kMean: {
        const int m = P(0).rows * P(0).cols;
        for (int i = 0; i < m; ++i) grads_[P(0).val + i] += g[0] / m;
        break;
      }
      case Op::kNorm:
        if (y[0] > 0.0) {
          for (int i = 0; i < P(0).rows * P(0).cols; ++i)
            grads_[P(0).val + i] += g[0] * vals_[P(0).val + i] / y[0];
        }
        break;
      case Op::kGet:
        grads_[P(0).val + n.iaux] += g[0];
        break;
      case Op::kSlice:
        for (int i = 0; i < n.rows; ++i)
          grads_[P(0).val + n.iaux + i] += g[i];
        break;
      case Op::kStack:
        for (int k = 0; k < n.par_n; ++k) grads_[P(k).val] += g[k];
        break;
      case Op::kConcatConst:
        for (int i = 0; i < P(0).rows * P(0).cols; ++i)
          grads_[P(0).val + i] += g[i];
        break;
      case Op::kAddVecConst:
        for (int i = 0; i < n.rows * n.cols; ++i)
          grads_[P(0).val + i] += g[i];
        break;
      case Op::kDotConst:
        for (int i = 0; i < P(0).rows * P(0).cols; ++i)
          grads_[P(0).val + i] += g[0] * aux_[n.iaux + i];
        break;
      case Op::kLseMin:
      case Op::kLseMax: {
        // d lse / d x_i is the softmin/softmax weight of x_i (weights sum 1).
        const double sgn = (n.op == Op::kLseMin) ? -1.0 : 1.0;
        const int m = P(0).rows * P(0).cols;
        const double* x = vals_.data() + P(0).val;
        double xm = x[0];
        for (int i = 1; i < m; ++i) xm = sgn * x[i] > sgn * xm ? x[i] : xm;
        double z = 0.0;
        for (int i = 0; i < m; ++i) z += std::exp(sgn * (x[i] - xm) / n.aux);
        for (int i = 0; i < m; ++i)
          grads_[P(0).val + i] += g[0] * std::exp(sgn * (x[i] - xm) / n.aux) / z;
        break;
      }
    }
  }

  std::vector<Node> nodes_;
  std::vector<double> vals_;
  std::vector<double> grads_;
  std::vector<std::int32_t> parents_;
  std::vector<double> aux_;
};

}  // namespace fluidlogic
