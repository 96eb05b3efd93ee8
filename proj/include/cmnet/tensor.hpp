// Copyright 2026 The cmnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Dense real tensor with reverse-mode automatic differentiation on an
// explicit tape. Single-threaded per tape; independent tapes may run in
// parallel (the active tape is thread-local).

#pragma once

#include <algorithm>
#include <array>
#include <cstring>
#include <functional>
#include <limits>
#include <memory>
#include <utility>

#include "cmnet/common.hpp"

namespace cmnet {

template <class Real>
struct TensorData {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // allocated lazily, same extent as value
  bool requires_grad = false;
};

template <class Real>
class Tensor {
 public:
  Tensor() : d_(nullptr) {}

  explicit Tensor(Shape shape) : d_(std::make_shared<TensorData<Real>>()) {
    d_->shape = std::move(shape);
    d_->value.assign(numel(d_->shape), Real(0));
  }

  Tensor(Shape shape, std::vector<Real> value) : d_(std::make_shared<TensorData<Real>>()) {
    if (numel(shape) != value.size())
      throw shape_error("tensor data length " + std::to_string(value.size()) +
                        " does not match shape " + shape_str(shape));
    d_->shape = std::move(shape);
    d_->value = std::move(value);
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

  static Tensor full(Shape s, Real v) {
    Tensor t(std::move(s));
    std::fill(t.d_->value.begin(), t.d_->value.end(), v);
    return t;
  }

  static Tensor ones(Shape s) { return full(std::move(s), Real(1)); }

  static Tensor scalar(Real v) { return Tensor({1}, {v}); }

  static Tensor uniform(Shape s, Rng& rng, double lo, double hi, bool req_grad = false) {
    Tensor t(std::move(s));
    for (Real& x : t.d_->value) x = static_cast<Real>(rng.uniform(lo, hi));
    t.set_requires_grad(req_grad);
    return t;
  }

  static Tensor normal(Shape s, Rng& rng, double stddev = 1.0, bool req_grad = false) {
    Tensor t(std::move(s));
    for (Real& x : t.d_->value) x = static_cast<Real>(rng.normal() * stddev);
    t.set_requires_grad(req_grad);
    return t;
  }

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  std::size_t size() const { return d_->value.size(); }
  std::size_t dim(std::size_t i) const { return d_->shape.at(i); }
  std::size_t rank() const { return d_->shape.size(); }

  std::vector<Real>& value() { return d_->value; }
  const std::vector<Real>& value() const { return d_->value; }
  Real* data() { return d_->value.data(); }
  const Real* data() const { return d_->value.data(); }

  Real item() const {
    if (size() != 1) throw contract_error("item() on non-scalar tensor " + shape_str(shape()));
    return d_->value[0];
  }

  bool requires_grad() const { return d_ && d_->requires_grad; }
  void set_requires_grad(bool b) {
    d_->requires_grad = b;
    if (!b) d_->grad.clear();
  }

  bool grad_allocated() const { return !d_->grad.empty(); }

  std::vector<Real>& grad() {
    ensure_grad();
    return d_->grad;
  }
  const std::vector<Real>& grad() const { return d_->grad; }

  void ensure_grad() {
    if (d_->grad.empty()) d_->grad.assign(d_->value.size(), Real(0));
  }

  void zero_grad() {
    if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), Real(0));
  }

  // identity (same underlying buffer); copies of a Tensor share storage
  bool same_as(const Tensor& o) const { return d_ == o.d_; }

  // deep copy (fresh buffer, no grad, no tape link)
  Tensor clone() const { return Tensor(d_->shape, d_->value); }

  TensorData<Real>* node() const { return d_.get(); }

 private:
  std::shared_ptr<TensorData<Real>> d_;
};

// Ordered record of primitive operations. Creation order is topological by
// construction (an op is recorded after the ops producing its inputs), so a
// single reverse sweep visits every recorded operation exactly once.
template <class Real>
class Tape {
 public:
  Tape() : prev_(active_ref()) { active_ref() = this; }
  ~Tape() { active_ref() = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_ref(); }

  void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }

  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape once in reverse. The tape
  // is consumed: a second backward over the same records is a contract error.
  void backward(Tensor<Real> loss) {
    if (loss.size() != 1) throw contract_error("backward() needs a scalar loss, got " + shape_str(loss.shape()));
    if (consumed_) throw contract_error("backward() called twice on one tape");
    consumed_ = true;
    loss.ensure_grad();
    loss.grad()[0] += Real(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    nodes_.clear();
  }

 private:
  static Tape*& active_ref() {
    thread_local Tape* a = nullptr;
    return a;
  }
  std::vector<std::function<void()>> nodes_;
  Tape* prev_;
  bool consumed_ = false;
};

namespace detail {

template <class Real>
bool want_grad(std::initializer_list<const Tensor<Real>*> ins) {
  if (!Tape<Real>::active()) return false;
  for (const Tensor<Real>* t : ins)
    if (t && t->requires_grad()) return true;
  return false;
}

// Broadcast two shapes by trailing-dimension alignment with extent-1 expansion.
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      throw shape_error("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

// Row-major strides with 0 on broadcast (extent-1) dims, aligned to out rank.
inline std::vector<std::size_t> broadcast_strides(const Shape& s, const Shape& out) {
  std::vector<std::size_t> st(out.size(), 0);
  std::size_t acc = 1;
  const std::size_t off = out.size() - s.size();
  for (std::size_t i = s.size(); i-- > 0;) {
    st[off + i] = (s[i] == 1 && out[off + i] != 1) ? 0 : acc;
    acc *= s[i];
  }
  return st;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise binary ops with broadcasting
// ---------------------------------------------------------------------------

template <class Real, class Fwd, class Bwd>
Tensor<Real> binary_op(const Tensor<Real>& a, const Tensor<Real>& b, Fwd fwd, Bwd bwd) {
  const Shape os = detail::broadcast_shape(a.shape(), b.shape());
  Tensor<Real> out(os);
  const auto sa = detail::broadcast_strides(a.shape(), os);
  const auto sb = detail::broadcast_strides(b.shape(), os);
  const std::size_t n = out.size();
  const std::size_t r = os.size();
  std::vector<std::size_t> idx(r, 0);
  const Real* pa = a.data();
  const Real* pb = b.data();
  Real* po = out.data();
  std::size_t ia = 0, ib = 0;
  for (std::size_t k = 0; k < n; ++k) {
    po[k] = fwd(pa[ia], pb[ib]);
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < os[d]) break;
      idx[d] = 0;
      ia -= sa[d] * os[d];
      ib -= sb[d] * os[d];
    }
  }
  if (detail::want_grad<Real>({&a, &b})) {
    out.set_requires_grad(true);
    Tensor<Real> ac = a, bc = b, oc = out;
    auto sac = sa;
    auto sbc = sb;
    Tape<Real>::active()->record([ac, bc, oc, sac, sbc, bwd]() mutable {
      if (!oc.grad_allocated()) return;
      const Shape& os2 = oc.shape();
      const std::size_t n2 = oc.size();
      const std::size_t r2 = os2.size();
      std::vector<std::size_t> ix(r2, 0);
      const Real* g = oc.grad().data();
      const Real* pa2 = ac.data();
      const Real* pb2 = bc.data();
      Real* ga = ac.requires_grad() ? ac.grad().data() : nullptr;
      Real* gb = bc.requires_grad() ? bc.grad().data() : nullptr;
      std::size_t ia2 = 0, ib2 = 0;
      for (std::size_t k = 0; k < n2; ++k) {
        Real da = 0, db = 0;
        bwd(pa2[ia2], pb2[ib2], g[k], da, db);
        if (ga) ga[ia2] += da;
        if (gb) gb[ib2] += db;
        for (std::size_t d = r2; d-- > 0;) {
          ++ix[d];
          ia2 += sac[d];
          ib2 += sbc[d];
          if (ix[d] < os2[d]) break;
          ix[d] = 0;
          ia2 -= sac[d] * os2[d];
          ib2 -= sbc[d] * os2[d];
        }
      }
    });
  }
  return out;
}

template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary_op(
      a, b, [](Real x, Real y) { return x + y; },
      [](Real, Real, Real g, Real& da, Real& db) {
        da = g;
        db = g;
      });
}

template <class Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary_op(
      a, b, [](Real x, Real y) { return x - y; },
      [](Real, Real, Real g, Real& da, Real& db) {
        da = g;
        db = -g;
      });
}

template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary_op(
      a, b, [](Real x, Real y) { return x * y; },
      [](Real x, Real y, Real g, Real& da, Real& db) {
        da = g * y;
        db = g * x;
      });
}

template <class Real>
Tensor<Real> operator+(const Tensor<Real>& a, const Tensor<Real>& b) { return add(a, b); }
template <class Real>
Tensor<Real> operator-(const Tensor<Real>& a, const Tensor<Real>& b) { return sub(a, b); }
template <class Real>
Tensor<Real> operator*(const Tensor<Real>& a, const Tensor<Real>& b) { return mul(a, b); }

// ---------------------------------------------------------------------------
// elementwise unary ops
// ---------------------------------------------------------------------------

template <class Real, class Fwd, class Bwd>
Tensor<Real> unary_op(const Tensor<Real>& a, Fwd fwd, Bwd bwd) {
  Tensor<Real> out(a.shape());
  const std::size_t n = a.size();
  const Real* pa = a.data();
  Real* po = out.data();
  for (std::size_t i = 0; i < n; ++i) po[i] = fwd(pa[i]);
  if (detail::want_grad<Real>({&a})) {
    out.set_requires_grad(true);
    Tensor<Real> ac = a, oc = out;
    Tape<Real>::active()->record([ac, oc, bwd]() mutable {
      if (!oc.grad_allocated() || !ac.requires_grad()) return;
      const std::size_t n2 = oc.size();
      const Real* g = oc.grad().data();
      const Real* x = ac.data();
      const Real* y = oc.data();
      Real* ga = ac.grad().data();
      for (std::size_t i = 0; i < n2; ++i) ga[i] += bwd(x[i], y[i], g[i]);
    });
  }
  return out;
}

template <class Real>
Real stable_sigmoid(Real x) {
  if (x >= Real(0)) {
    Real e = std::exp(-x);
    return Real(1) / (Real(1) + e);
  }
  Real e = std::exp(x);
  return e / (Real(1) + e);
}

template <class Real>
Tensor<Real> sigmoid(const Tensor<Real>& a) {
  return unary_op(
      a, [](Real x) { return stable_sigmoid(x); },
      [](Real, Real y, Real g) { return g * y * (Real(1) - y); });
}

template <class Real>
Tensor<Real> relu(const Tensor<Real>& a) {
  return unary_op(
      a, [](Real x) { return x > Real(0) ? x : Real(0); },
      [](Real x, Real, Real g) { return x > Real(0) ? g : Real(0); });
}

// parametric ReLU with a fixed scalar slope (the learned per-channel variant
// lives in nn.hpp)
template <class Real>
Tensor<Real> prelu(const Tensor<Real>& a, Real alpha) {
  return unary_op(
      a, [alpha](Real x) { return x > Real(0) ? x : alpha * x; },
      [alpha](Real x, Real, Real g) { return x > Real(0) ? g : alpha * g; });
}

template <class Real>
Tensor<Real> tanh_t(const Tensor<Real>& a) {
  return unary_op(
      a, [](Real x) { return std::tanh(x); },
      [](Real, Real y, Real g) { return g * (Real(1) - y * y); });
}

template <class Real>
Tensor<Real> exp_t(const Tensor<Real>& a) {
  return unary_op(
      a, [](Real x) { return std::exp(x); },
      [](Real, Real y, Real g) { return g * y; });
}

template <class Real>
Tensor<Real> log_t(const Tensor<Real>& a) {
  return unary_op(
      a, [](Real x) { return std::log(x); },
      [](Real x, Real, Real g) { return g / x; });
}

// affine map a*x + b; covers negate (-1, 0), scalar-scale (c, 0) and
// scalar shifts in one primitive
template <class Real>
Tensor<Real> scale_shift(const Tensor<Real>& x, Real a, Real b) {
  return unary_op(
      x, [a, b](Real v) { return a * v + b; },
      [a](Real, Real, Real g) { return a * g; });
}

template <class Real>
Tensor<Real> negate(const Tensor<Real>& x) { return scale_shift(x, Real(-1), Real(0)); }

template <class Real>
Tensor<Real> scale(const Tensor<Real>& x, Real c) { return scale_shift(x, c, Real(0)); }

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> reshape(const Tensor<Real>& a, Shape s) {
  if (numel(s) != a.size())
    throw shape_error("reshape " + shape_str(a.shape()) + " -> " + shape_str(s));
  Tensor<Real> out(std::move(s), a.value());
  if (detail::want_grad<Real>({&a})) {
    out.set_requires_grad(true);
    Tensor<Real> ac = a, oc = out;
    Tape<Real>::active()->record([ac, oc]() mutable {
      if (!oc.grad_allocated() || !ac.requires_grad()) return;
      const Real* g = oc.grad().data();
      Real* ga = ac.grad().data();
      for (std::size_t i = 0; i < oc.size(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

template <class Real>
Tensor<Real> permute(const Tensor<Real>& a, const std::vector<std::size_t>& axes) {
  const std::size_t r = a.rank();
  if (axes.size() != r) throw shape_error("permute axes rank mismatch");
  Shape os(r);
  for (std::size_t i = 0; i < r; ++i) os[i] = a.dim(axes[i]);
  // strides of input walked in output order
  std::vector<std::size_t> ist(r, 1);
  for (std::size_t i = r - 1; i-- > 0;) ist[i] = ist[i + 1] * a.dim(i + 1);
  std::vector<std::size_t> st(r);
  for (std::size_t i = 0; i < r; ++i) st[i] = ist[axes[i]];
  Tensor<Real> out(os);
  const std::size_t n = a.size();
  std::vector<std::size_t> idx(r, 0);
  const Real* pa = a.data();
  Real* po = out.data();
  std::size_t off = 0;
  for (std::size_t k = 0; k < n; ++k) {
    po[k] = pa[off];
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      off += st[d];
      if (idx[d] < os[d]) break;
      idx[d] = 0;
      off -= st[d] * os[d];
    }
  }
  if (detail::want_grad<Real>({&a})) {
    out.set_requires_grad(true);
    Tensor<Real> ac = a, oc = out;
    auto stc = st;
    auto osc = os;
    Tape<Real>::active()->record([ac, oc, stc, osc]() mutable {
      if (!oc.grad_allocated() || !ac.requires_grad()) return;
      const std::size_t r2 = osc.size();
      std::vector<std::size_t> ix(r2, 0);
      const Real* g = oc.grad().data();
      Real* ga = ac.grad().data();
      std::size_t off2 = 0;
      for (std::size_t k = 0; k < oc.size(); ++k) {
        ga[off2] += g[k];
        for (std::size_t d = r2; d-- > 0;) {
          ++ix[d];
          off2 += stc[d];
          if (ix[d] < osc[d]) break;
          ix[d] = 0;
          off2 -= stc[d] * osc[d];
        }
      }
    });
  }
  return out;
}

template <class Real>
Tensor<Real> concat(const std::vector<Tensor<Real>>& parts, std::size_t axis) {
  if (parts.empty()) throw contract_error("concat of zero tensors");
  const Shape base = parts[0].shape();
  if (axis >= base.size()) throw shape_error("concat axis out of range");
  Shape os = base;
  os[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != base.size()) throw shape_error("concat rank mismatch");
    for (std::size_t d = 0; d < base.size(); ++d)
      if (d != axis && p.dim(d) != base[d]) throw shape_error("concat extent mismatch on axis " + std::to_string(d));
    os[axis] += p.dim(axis);
  }
  Tensor<Real> out(os);
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= os[d];
  for (std::size_t d = axis + 1; d < os.size(); ++d) inner *= os[d];
  Real* po = out.data();
  std::size_t col = 0;
  std::vector<std::size_t> starts;
  for (const auto& p : parts) {
    starts.push_back(col);
    const Real* pp = p.data();
    const std::size_t pn = p.dim(axis);
    for (std::size_t o = 0; o < outer; ++o)
      std::memcpy(po + (o * os[axis] + col) * inner, pp + o * pn * inner, pn * inner * sizeof(Real));
    col += pn;
  }
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (Tape<Real>::active() && any) {
    out.set_requires_grad(true);
    auto pc = parts;
    Tensor<Real> oc = out;
    auto osc = os;
    Tape<Real>::active()->record([pc, oc, osc, axis, outer, inner, starts]() mutable {
      if (!oc.grad_allocated()) return;
      const Real* g = oc.grad().data();
      for (std::size_t pi = 0; pi < pc.size(); ++pi) {
        if (!pc[pi].requires_grad()) continue;
        Real* gp = pc[pi].grad().data();
        const std::size_t pn = pc[pi].dim(axis);
        for (std::size_t o = 0; o < outer; ++o) {
          const Real* src = g + (o * osc[axis] + starts[pi]) * inner;
          Real* dst = gp + o * pn * inner;
          for (std::size_t k = 0; k < pn * inner; ++k) dst[k] += src[k];
        }
      }
    });
  }
  return out;
}

template <class Real>
Tensor<Real> slice(const Tensor<Real>& a, std::size_t axis, std::size_t start, std::size_t len) {
  if (axis >= a.rank() || start + len > a.dim(axis)) throw shape_error("slice out of range");
  Shape os = a.shape();
  os[axis] = len;
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= a.dim(d);
  for (std::size_t d = axis + 1; d < a.rank(); ++d) inner *= a.dim(d);
  Tensor<Real> out(os);
  const Real* pa = a.data();
  Real* po = out.data();
  const std::size_t an = a.dim(axis);
  for (std::size_t o = 0; o < outer; ++o)
    std::memcpy(po + o * len * inner, pa + (o * an + start) * inner, len * inner * sizeof(Real));
  if (detail::want_grad<Real>({&a})) {
    out.set_requires_grad(true);
    Tensor<Real> ac = a, oc = out;
    Tape<Real>::active()->record([ac, oc, axis, start, len, outer, inner]() mutable {
      if (!oc.grad_allocated() || !ac.requires_grad()) return;
      const Real* g = oc.grad().data();
      Real* ga = ac.grad().data();
      const std::size_t an2 = ac.dim(axis);
      for (std::size_t o = 0; o < outer; ++o) {
        Real* dst = ga + (o * an2 + start) * inner;
        const Real* src = g + o * len * inner;
        for (std::size_t k = 0; k < len * inner; ++k) dst[k] += src[k];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> sum_all(const Tensor<Real>& a) {
  Real acc = 0;
  const Real* pa = a.data();
  for (std::size_t i = 0; i < a.size(); ++i) acc += pa[i];
  Tensor<Real> out = Tensor<Real>::scalar(acc);
  if (detail::want_grad<Real>({&a})) {
    out.set_requires_grad(true);
    Tensor<Real> ac = a, oc = out;
    Tape<Real>::active()->record([ac, oc]() mutable {
      if (!oc.grad_allocated() || !ac.requires_grad()) return;
      const Real g = oc.grad()[0];
      Real* ga = ac.grad().data();
      for (std::size_t i = 0; i < ac.size(); ++i) ga[i] += g;
    });
  }
  return out;
}

// arithmetic mean over the listed axes; result shape is the remaining axes
// (scalar [1] if all axes are pooled)
template <class Real>
Tensor<Real> mean_pool(const Tensor<Real>& a, std::vector<std::size_t> axes) {
  const std::size_t r = a.rank();
  std::vector<bool> pooled(r, false);
  for (std::size_t ax : axes) {
    if (ax >= r) throw shape_error("mean_pool axis out of range");
    pooled[ax] = true;
  }
  Shape os;
  for (std::size_t d = 0; d < r; ++d)
    if (!pooled[d]) os.push_back(a.dim(d));
  if (os.empty()) os.push_back(1);
  std::size_t count = 1;
  for (std::size_t d = 0; d < r; ++d)
    if (pooled[d]) count *= a.dim(d);
  // output strides aligned to input dims (0 on pooled dims)
  std::vector<std::size_t> ost(r, 0);
  {
    std::size_t acc = 1;
    for (std::size_t d = r; d-- > 0;)
      if (!pooled[d]) {
        ost[d] = acc;
        acc *= a.dim(d);
      }
  }
  Tensor<Real> out(os);
  const Real* pa = a.data();
  Real* po = out.data();
  std::vector<std::size_t> idx(r, 0);
  std::size_t oo = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    po[oo] += pa[k];
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      oo += ost[d];
      if (idx[d] < a.dim(d)) break;
      idx[d] = 0;
      oo -= ost[d] * a.dim(d);
    }
  }
  const Real inv = Real(1) / static_cast<Real>(count);
  for (std::size_t i = 0; i < out.size(); ++i) po[i] *= inv;
  if (detail::want_grad<Real>({&a})) {
    out.set_requires_grad(true);
    Tensor<Real> ac = a, oc = out;
    auto ostc = ost;
    Tape<Real>::active()->record([ac, oc, ostc, inv]() mutable {
      if (!oc.grad_allocated() || !ac.requires_grad()) return;
      const std::size_t r2 = ac.rank();
      const Real* g = oc.grad().data();
      Real* ga = ac.grad().data();
      std::vector<std::size_t> ix(r2, 0);
      std::size_t oo2 = 0;
      for (std::size_t k = 0; k < ac.size(); ++k) {
        ga[k] += g[oo2] * inv;
        for (std::size_t d = r2; d-- > 0;) {
          ++ix[d];
          oo2 += ostc[d];
          if (ix[d] < ac.dim(d)) break;
          ix[d] = 0;
          oo2 -= ostc[d] * ac.dim(d);
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// matmul (2-D with optional transposes, plus batching over equal leading dims)
// ---------------------------------------------------------------------------

namespace detail {

template <class Real>
void gemm(const Real* a, const Real* b, Real* c, std::size_t M, std::size_t K, std::size_t N,
          bool ta, bool tb, bool accumulate) {
  if (!accumulate) std::fill(c, c + M * N, Real(0));
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t k = 0; k < K; ++k) {
      const Real av = ta ? a[k * M + m] : a[m * K + k];
      if (av == Real(0)) continue;
      const Real* bp = tb ? b + k : b + k * N;
      Real* cp = c + m * N;
      if (tb) {
        for (std::size_t n = 0; n < N; ++n) cp[n] += av * bp[n * K];
      } else {
        for (std::size_t n = 0; n < N; ++n) cp[n] += av * bp[n];
      }
    }
  }
}

}  // namespace detail

// a: [B..., M, K] (or [B..., K, M] when trans_a), b likewise; leading batch
// dims must match exactly.
template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b, bool trans_a = false, bool trans_b = false) {
  if (a.rank() < 2 || b.rank() < 2) throw shape_error("matmul needs rank >= 2");
  if (a.rank() != b.rank()) throw shape_error("matmul rank mismatch");
  const std::size_t r = a.rank();
  std::size_t batch = 1;
  for (std::size_t d = 0; d + 2 < r; ++d) {
    if (a.dim(d) != b.dim(d)) throw shape_error("matmul batch extent mismatch");
    batch *= a.dim(d);
  }
  const std::size_t M = trans_a ? a.dim(r - 1) : a.dim(r - 2);
  const std::size_t K = trans_a ? a.dim(r - 2) : a.dim(r - 1);
  const std::size_t Kb = trans_b ? b.dim(r - 1) : b.dim(r - 2);
  const std::size_t N = trans_b ? b.dim(r - 2) : b.dim(r - 1);
  if (K != Kb)
    throw shape_error("matmul inner extent mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Shape os;
  for (std::size_t d = 0; d + 2 < r; ++d) os.push_back(a.dim(d));
  os.push_back(M);
  os.push_back(N);
  Tensor<Real> out(os);
  const std::size_t an = a.dim(r - 2) * a.dim(r - 1);
  const std::size_t bn = b.dim(r - 2) * b.dim(r - 1);
  for (std::size_t i = 0; i < batch; ++i)
    detail::gemm(a.data() + i * an, b.data() + i * bn, out.data() + i * M * N, M, K, N, trans_a, trans_b, false);
  if (detail::want_grad<Real>({&a, &b})) {
    out.set_requires_grad(true);
    Tensor<Real> ac = a, bc = b, oc = out;
    Tape<Real>::active()->record([ac, bc, oc, trans_a, trans_b, batch, M, K, N, an, bn]() mutable {
      if (!oc.grad_allocated()) return;
      const Real* g = oc.grad().data();
      for (std::size_t i = 0; i < batch; ++i) {
        const Real* ga = g + i * M * N;
        if (ac.requires_grad()) {
          Real* da = ac.grad().data() + i * an;
          // dA = G B^T (plain); transposed layouts handled by flag algebra
          if (!trans_a)
            detail::gemm(ga, bc.data() + i * bn, da, M, N, K, false, !trans_b, true);
          else
            detail::gemm(bc.data() + i * bn, ga, da, K, N, M, trans_b, true, true);
        }
        if (bc.requires_grad()) {
          Real* db = bc.grad().data() + i * bn;
          if (!trans_b)
            detail::gemm(ac.data() + i * an, ga, db, K, M, N, !trans_a, false, true);
          else
            detail::gemm(ga, ac.data() + i * an, db, N, M, K, true, trans_a, true);
        }
      }
    });
  }
  return out;
}

// A [M,N] times x [N] -> [M]
template <class Real>
Tensor<Real> matvec(const Tensor<Real>& a, const Tensor<Real>& x) {
  if (a.rank() != 2 || x.rank() != 1) throw shape_error("matvec expects [M,N] and [N]");
  Tensor<Real> xc = reshape(x, {x.dim(0), 1});
  Tensor<Real> y = matmul(a, xc);
  return reshape(y, {a.dim(0)});
}

// ---------------------------------------------------------------------------
// softmax along an axis, numerically stabilized by max subtraction; an
// optional additive mask (0 / -inf, same shape) is applied to the logits.
// A fully masked slice yields all zeros rather than NaN.
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> softmax(const Tensor<Real>& a, std::size_t axis, const Tensor<Real>* mask = nullptr) {
  if (axis >= a.rank()) throw shape_error("softmax axis out of range");
  if (mask && mask->shape() != a.shape()) throw shape_error("softmax mask shape mismatch");
  std::size_t outer = 1, inner = 1;
  const std::size_t n = a.dim(axis);
  for (std::size_t d = 0; d < axis; ++d) outer *= a.dim(d);
  for (std::size_t d = axis + 1; d < a.rank(); ++d) inner *= a.dim(d);
  Tensor<Real> out(a.shape());
  const Real* pa = a.data();
  const Real* pm = mask ? mask->data() : nullptr;
  Real* po = out.data();
  const Real ninf = -std::numeric_limits<Real>::infinity();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      Real mx = ninf;
      for (std::size_t k = 0; k < n; ++k) {
        Real v = pa[base + k * inner];
        if (pm) v += pm[base + k * inner];
        if (v > mx) mx = v;
      }
      if (mx == ninf) {
        for (std::size_t k = 0; k < n; ++k) po[base + k * inner] = Real(0);
        continue;
      }
      Real sum = 0;
      for (std::size_t k = 0; k < n; ++k) {
        Real v = pa[base + k * inner];
        if (pm) v += pm[base + k * inner];
        Real e = (v == ninf) ? Real(0) : std::exp(v - mx);
        po[base + k * inner] = e;
        sum += e;
      }
      const Real inv = Real(1) / sum;
      for (std::size_t k = 0; k < n; ++k) po[base + k * inner] *= inv;
    }
  }
  if (detail::want_grad<Real>({&a})) {
    out.set_requires_grad(true);
    Tensor<Real> ac = a, oc = out;
    Tape<Real>::active()->record([ac, oc, axis, outer, inner, n]() mutable {
      if (!oc.grad_allocated() || !ac.requires_grad()) return;
      const Real* y = oc.data();
      const Real* g = oc.grad().data();
      Real* ga = ac.grad().data();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t base = o * n * inner + i;
          Real dot = 0;
          for (std::size_t k = 0; k < n; ++k) dot += g[base + k * inner] * y[base + k * inner];
          for (std::size_t k = 0; k < n; ++k) {
            const std::size_t ix = base + k * inner;
            ga[ix] += y[ix] * (g[ix] - dot);
          }
        }
      }
    });
  }
  return out;
}

// cast between precisions (values only; no tape link)
template <class To, class From>
Tensor<To> cast_tensor(const Tensor<From>& a) {
  Tensor<To> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = static_cast<To>(a.data()[i]);
  return out;
}

}  // namespace cmnet
