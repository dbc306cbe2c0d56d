#pragma once

#include <array>
#include <span>
#include <vector>

#include "autodiff.hpp"
#include "common.hpp"

namespace fluidlogic {

// ---------------------------------------------------------------------------
// Evaluation backends.
//
// All model kernels (MLP forward, drift/diffusion fields, atom semantics,
// modal aggregation) are written once as templates over a backend B and run
// in two modes:
//
//   ValueBackend  - plain doubles, no recording.  Used by evaluation,
//                   oracles and diagnostics; cheap enough for large
//                   Monte Carlo budgets and safe to run on worker threads.
//   GradBackend   - every Scalar/Vec is a Tensor on a Tape.  Used by
//                   training, where losses need parameter gradients.
//
// The ValueBackend forwards to the same kernels:: scalar routines the tape
// uses, so the two modes agree bit-for-bit on identical inputs.
// ---------------------------------------------------------------------------

// Capacity of the inline vectors: must cover both state dimensions and the
// widest MLP activation that flows through the value backend.
inline constexpr int kMaxDim = 32;

// Fixed-capacity vector: avoids heap traffic in the hot simulation loops.
struct VecD {
  std::array<double, kMaxDim> v{};
  int n = 0;

  static VecD of(std::span<const double> xs) {
    if (xs.size() > kMaxDim)
      throw ConfigError("VecD: dimension exceeds kMaxDim");
    VecD r;
    r.n = static_cast<int>(xs.size());
    for (int i = 0; i < r.n; ++i) r.v[i] = xs[i];
    return r;
  }
  double operator[](int i) const { return v[i]; }
  std::span<const double> span() const { return {v.data(), static_cast<std::size_t>(n)}; }
};

// Read-only row-major matrix view over parameter storage.
struct MatView {
  const double* w = nullptr;
  int rows = 0, cols = 0;
};

struct ValueCtx {};  // stateless

struct ValueBackend {
  using Ctx = ValueCtx;
  using Scalar = double;
  using Vec = VecD;
  using Mat = MatView;

  // construction / extraction
  static Vec make_vec(Ctx&, std::span<const double> xs) { return VecD::of(xs); }
  static Scalar constant(Ctx&, double x) { return x; }
  static double scalar_value(const Ctx&, Scalar s) { return s; }
  static void vec_values(const Ctx&, const Vec& v, std::span<double> out) {
    for (int i = 0; i < v.n; ++i) out[i] = v.v[i];
  }
  static int dim(const Ctx&, const Vec& v) { return v.n; }

  // shape
  static Scalar get(Ctx&, const Vec& v, int i) { return v.v[i]; }
  static Vec slice(Ctx&, const Vec& v, int lo, int len) {
    VecD r;
    r.n = len;
    for (int i = 0; i < len; ++i) r.v[i] = v.v[lo + i];
    return r;
  }
  static Vec concat_const(Ctx&, const Vec& x, std::span<const double> c) {
    if (x.n + c.size() > kMaxDim)
      throw ConfigError("concat_const: dimension exceeds kMaxDim");
    VecD r = x;
    for (double ci : c) r.v[r.n++] = ci;
    return r;
  }
  static Vec stack(Ctx&, std::span<const Scalar> xs) {
    return VecD::of({xs.data(), xs.size()});
  }

  // vector arithmetic
  static Vec add(Ctx&, const Vec& a, const Vec& b) {
    VecD r = a;
    for (int i = 0; i < a.n; ++i) r.v[i] = a.v[i] + b.v[i];
    return r;
  }
  static Vec sub(Ctx&, const Vec& a, const Vec& b) {
    VecD r = a;
    for (int i = 0; i < a.n; ++i) r.v[i] = a.v[i] - b.v[i];
    return r;
  }
  static Vec mul(Ctx&, const Vec& a, const Vec& b) {
    VecD r = a;
    for (int i = 0; i < a.n; ++i) r.v[i] = a.v[i] * b.v[i];
    return r;
  }
  static Vec scale(Ctx&, const Vec& a, double c) {
    VecD r = a;
    for (int i = 0; i < a.n; ++i) r.v[i] = c * a.v[i];
    return r;
  }
  static Vec add_vec_const(Ctx&, const Vec& a, std::span<const double> c) {
    VecD r = a;
    for (int i = 0; i < a.n; ++i) r.v[i] = a.v[i] + c[i];
    return r;
  }
  static Vec tanh_v(Ctx&, const Vec& a) {
    VecD r = a;
    for (int i = 0; i < a.n; ++i) r.v[i] = std::tanh(a.v[i]);
    return r;
  }
  static Vec softplus_v(Ctx&, const Vec& a) {
    VecD r = a;
    for (int i = 0; i < a.n; ++i) r.v[i] = kernels::softplus(a.v[i]);
    return r;
  }
  static Vec matvec(Ctx&, const Mat& m, const Vec& x) {
    if (m.rows > kMaxDim)
      throw ConfigError("matvec: dimension exceeds kMaxDim");
    VecD r;
    r.n = m.rows;
    for (int i = 0; i < m.rows; ++i)
      r.v[i] = kernels::matvec_row(m.w + i * m.cols, x.v.data(), m.cols);
    return r;
  }
  static Scalar dot_const(Ctx&, const Vec& a, std::span<const double> c) {
    double s = 0.0;
    for (int i = 0; i < a.n; ++i) s += a.v[i] * c[i];
    return s;
  }
  static Scalar norm(Ctx&, const Vec& a) {
    double s = 0.0;
    for (int i = 0; i < a.n; ++i) s += a.v[i] * a.v[i];
    return std::sqrt(s);
  }

  // scalar arithmetic
  static Scalar add(Ctx&, Scalar a, Scalar b) { return a + b; }
  static Scalar sub(Ctx&, Scalar a, Scalar b) { return a - b; }
  static Scalar mul(Ctx&, Scalar a, Scalar b) { return a * b; }
  static Scalar neg(Ctx&, Scalar a) { return -a; }
  static Scalar affine(Ctx&, Scalar x, double a, double b) { return a * x + b; }
  static Scalar tanh_s(Ctx&, Scalar x) { return std::tanh(x); }
  static Scalar exp_s(Ctx&, Scalar x) { return std::exp(x); }
  static Scalar square(Ctx&, Scalar x) { return x * x; }
  static Scalar relu(Ctx&, Scalar x) { return x > 0.0 ? x : 0.0; }
  static Scalar clip(Ctx&, Scalar x, double b) { return kernels::clip(x, b); }
  static Scalar hmin(Ctx&, Scalar a, Scalar b) { return a <= b ? a : b; }
  static Scalar hmax(Ctx&, Scalar a, Scalar b) { return a >= b ? a : b; }

  // aggregates over lists of scalars
  static Scalar lse_min(Ctx&, std::span<const Scalar> xs, double tau) {
    return kernels::lse(true, xs.data(), static_cast<int>(xs.size()), tau);
  }
  static Scalar lse_max(Ctx&, std::span<const Scalar> xs, double tau) {
    return kernels::lse(false, xs.data(), static_cast<int>(xs.size()), tau);
  }
  static Scalar mean(Ctx&, std::span<const Scalar> xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
  }
  static Scalar sum(Ctx&, std::span<const Scalar> xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
};

struct GradBackend {
  using Ctx = Tape;
  using Scalar = Tensor;
  using Vec = Tensor;
  using Mat = Tensor;

  static Vec make_vec(Ctx& t, std::span<const double> xs) {
    return t.leaf(xs, static_cast<int>(xs.size()), 1);
  }
  static Scalar constant(Ctx& t, double x) { return t.constant(x); }
  static double scalar_value(const Ctx& t, Scalar s) { return t.value(s); }
  static void vec_values(const Ctx& t, const Vec& v, std::span<double> out) {
    auto xs = t.values(v);
    std::copy(xs.begin(), xs.end(), out.begin());
  }
  static int dim(const Ctx& t, const Vec& v) { return t.rows(v); }

  static Scalar get(Ctx& t, const Vec& v, int i) { return t.get(v, i); }
  static Vec slice(Ctx& t, const Vec& v, int lo, int len) {
    return t.slice(v, lo, len);
  }
  static Vec concat_const(Ctx& t, const Vec& x, std::span<const double> c) {
    return t.concat_const(x, c);
  }
  static Vec stack(Ctx& t, std::span<const Scalar> xs) { return t.stack(xs); }

  static Vec add(Ctx& t, Vec a, Vec b) { return t.add(a, b); }
  static Vec sub(Ctx& t, Vec a, Vec b) { return t.sub(a, b); }
  static Vec mul(Ctx& t, Vec a, Vec b) { return t.mul(a, b); }
  static Vec scale(Ctx& t, Vec a, double c) { return t.scale(a, c); }
  static Vec add_vec_const(Ctx& t, Vec a, std::span<const double> c) {
    return t.add_vec_const(a, c);
  }
  static Vec tanh_v(Ctx& t, Vec a) { return t.tanh(a); }
  static Vec softplus_v(Ctx& t, Vec a) { return t.softplus(a); }
  static Vec matvec(Ctx& t, Mat m, Vec x) { return t.matvec(m, x); }
  static Scalar dot_const(Ctx& t, Vec a, std::span<const double> c) {
    return t.dot_const(a, c);
  }
  static Scalar norm(Ctx& t, Vec a) { return t.norm(a); }

  static Scalar neg(Ctx& t, Scalar a) { return t.neg(a); }
  static Scalar affine(Ctx& t, Scalar x, double a, double b) {
    return t.affine(x, a, b);
  }
  static Scalar tanh_s(Ctx& t, Scalar x) { return t.tanh(x); }
  static Scalar exp_s(Ctx& t, Scalar x) { return t.exp(x); }
  static Scalar square(Ctx& t, Scalar x) { return t.square(x); }
  static Scalar relu(Ctx& t, Scalar x) { return t.relu(x); }
  static Scalar clip(Ctx& t, Scalar x, double b) { return t.clip(x, b); }
  static Scalar hmin(Ctx& t, Scalar a, Scalar b) { return t.hmin(a, b); }
  static Scalar hmax(Ctx& t, Scalar a, Scalar b) { return t.hmax(a, b); }

  static Scalar lse_min(Ctx& t, std::span<const Scalar> xs, double tau) {
    return t.lse_min(t.stack(xs), tau);
  }
  static Scalar lse_max(Ctx& t, std::span<const Scalar> xs, double tau) {
    return t.lse_max(t.stack(xs), tau);
  }
  static Scalar mean(Ctx& t, std::span<const Scalar> xs) {
    return t.mean(t.stack(xs));
  }
  static Scalar sum(Ctx& t, std::span<const Scalar> xs) {
    return t.sum(t.stack(xs));
  }
};

}  // namespace fluidlogic
