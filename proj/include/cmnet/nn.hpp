// Copyright 2026 The cmnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Network primitives on top of the tensor engine: causal 2-D convolution,
// transposed convolution, batch norm, per-channel PReLU, a GRU cell, and the
// named parameter store.

#pragma once

#include <map>
#include <optional>

#include "cmnet/tensor.hpp"

namespace cmnet {

struct Stride2d {
  std::size_t t = 1;
  std::size_t f = 1;
};

// Time padding is past-only by construction; frequency padding may be
// asymmetric.
struct ConvPadding {
  std::size_t past_t = 0;
  std::size_t left_f = 0;
  std::size_t right_f = 0;
};

// Cropping of the scatter output of a transposed conv. head_* gives the
// number of leading rows/columns dropped; the output extents are explicit so
// the tail crop is implied. head_t = 0 drops only the future-side temporal
// overhang (causal rule); head_t = kT-1 makes the op the exact adjoint of a
// conv with full past padding.
struct TransposeCrop {
  std::size_t head_t = 0;
  std::size_t head_f = 0;
  std::size_t out_t = 0;
  std::size_t out_f = 0;
};

// input [Ci,T,F], kernel [Co,Ci,kT,kF] (cross-correlation, no flip)
template <class Real>
Tensor<Real> conv2d(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>* bias,
                    Stride2d stride, ConvPadding pad) {
  if (x.rank() != 3 || w.rank() != 4) throw shape_error("conv2d expects [Ci,T,F] and [Co,Ci,kT,kF]");
  const std::size_t Ci = x.dim(0), T = x.dim(1), F = x.dim(2);
  const std::size_t Co = w.dim(0), kT = w.dim(2), kF = w.dim(3);
  if (w.dim(1) != Ci) throw shape_error("conv2d channel mismatch: input " + shape_str(x.shape()) +
                                        " kernel " + shape_str(w.shape()));
  if (bias && (bias->rank() != 1 || bias->dim(0) != Co)) throw shape_error("conv2d bias shape");
  if (kT > T + pad.past_t || kF > F + pad.left_f + pad.right_f)
    throw shape_error("conv2d kernel larger than padded input");
  if (stride.t == 0 || stride.f == 0) throw shape_error("conv2d zero stride");
  const std::size_t To = (T + pad.past_t - kT) / stride.t + 1;
  const std::size_t Fo = (F + pad.left_f + pad.right_f - kF) / stride.f + 1;
  Tensor<Real> out({Co, To, Fo});
  Real* po = out.data();
  const Real* px = x.data();
  const Real* pw = w.data();
  for (std::size_t co = 0; co < Co; ++co) {
    const Real bv = bias ? bias->data()[co] : Real(0);
    Real* oc = po + co * To * Fo;
    std::fill(oc, oc + To * Fo, bv);
    for (std::size_t ci = 0; ci < Ci; ++ci) {
      const Real* xc = px + ci * T * F;
      for (std::size_t kt = 0; kt < kT; ++kt) {
        for (std::size_t kf = 0; kf < kF; ++kf) {
          const Real wv = pw[((co * Ci + ci) * kT + kt) * kF + kf];
          if (wv == Real(0)) continue;
          for (std::size_t to = 0; to < To; ++to) {
            const std::ptrdiff_t ti = static_cast<std::ptrdiff_t>(to * stride.t + kt) -
                                      static_cast<std::ptrdiff_t>(pad.past_t);
            if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(T)) continue;
            const Real* xr = xc + static_cast<std::size_t>(ti) * F;
            Real* orow = oc + to * Fo;
            for (std::size_t fo = 0; fo < Fo; ++fo) {
              const std::ptrdiff_t fi = static_cast<std::ptrdiff_t>(fo * stride.f + kf) -
                                        static_cast<std::ptrdiff_t>(pad.left_f);
              if (fi < 0 || fi >= static_cast<std::ptrdiff_t>(F)) continue;
              orow[fo] += wv * xr[static_cast<std::size_t>(fi)];
            }
          }
        }
      }
    }
  }
  const Tensor<Real>* bptr = bias;
  if (detail::want_grad<Real>({&x, &w, bptr})) {
    out.set_requires_grad(true);
    Tensor<Real> xc = x, wc = w, oc = out;
    std::optional<Tensor<Real>> bc;
    if (bias) bc = *bias;
    Tape<Real>::active()->record([xc, wc, bc, oc, stride, pad, Ci, T, F, Co, kT, kF, To, Fo]() mutable {
      if (!oc.grad_allocated()) return;
      const Real* g = oc.grad().data();
      if (bc && bc->requires_grad()) {
        Real* gb = bc->grad().data();
        for (std::size_t co = 0; co < Co; ++co) {
          Real acc = 0;
          const Real* gc = g + co * To * Fo;
          for (std::size_t i = 0; i < To * Fo; ++i) acc += gc[i];
          gb[co] += acc;
        }
      }
      const bool gx = xc.requires_grad();
      const bool gw = wc.requires_grad();
      if (!gx && !gw) return;
      Real* dx = gx ? xc.grad().data() : nullptr;
      Real* dw = gw ? wc.grad().data() : nullptr;
      const Real* px = xc.data();
      const Real* pw = wc.data();
      for (std::size_t co = 0; co < Co; ++co) {
        const Real* gc = g + co * To * Fo;
        for (std::size_t ci = 0; ci < Ci; ++ci) {
          const Real* xcp = px + ci * T * F;
          Real* dxc = gx ? dx + ci * T * F : nullptr;
          for (std::size_t kt = 0; kt < kT; ++kt) {
            for (std::size_t kf = 0; kf < kF; ++kf) {
              const std::size_t widx = ((co * Ci + ci) * kT + kt) * kF + kf;
              const Real wv = pw[widx];
              Real wacc = 0;
              for (std::size_t to = 0; to < To; ++to) {
                const std::ptrdiff_t ti = static_cast<std::ptrdiff_t>(to * stride.t + kt) -
                                          static_cast<std::ptrdiff_t>(pad.past_t);
                if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(T)) continue;
                const Real* xr = xcp + static_cast<std::size_t>(ti) * F;
                Real* dxr = gx ? dxc + static_cast<std::size_t>(ti) * F : nullptr;
                const Real* grow = gc + to * Fo;
                for (std::size_t fo = 0; fo < Fo; ++fo) {
                  const std::ptrdiff_t fi = static_cast<std::ptrdiff_t>(fo * stride.f + kf) -
                                            static_cast<std::ptrdiff_t>(pad.left_f);
                  if (fi < 0 || fi >= static_cast<std::ptrdiff_t>(F)) continue;
                  const Real gv = grow[fo];
                  if (gw) wacc += gv * xr[static_cast<std::size_t>(fi)];
                  if (gx) dxr[static_cast<std::size_t>(fi)] += gv * wv;
                }
              }
              if (gw) dw[widx] += wacc;
            }
          }
        }
      }
    });
  }
  return out;
}

// input [Ci,T,F], kernel [Ci,Co,kT,kF]; scatter-add then crop.
template <class Real>
Tensor<Real> conv2d_transpose(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>* bias,
                              Stride2d stride, TransposeCrop crop) {
  if (x.rank() != 3 || w.rank() != 4) throw shape_error("conv2d_transpose expects [Ci,T,F] and [Ci,Co,kT,kF]");
  const std::size_t Ci = x.dim(0), T = x.dim(1), F = x.dim(2);
  const std::size_t Co = w.dim(1), kT = w.dim(2), kF = w.dim(3);
  if (w.dim(0) != Ci) throw shape_error("conv2d_transpose channel mismatch");
  if (bias && (bias->rank() != 1 || bias->dim(0) != Co)) throw shape_error("conv2d_transpose bias shape");
  const std::size_t fullT = (T - 1) * stride.t + kT;
  const std::size_t fullF = (F - 1) * stride.f + kF;
  if (crop.out_t == 0 || crop.out_f == 0) throw shape_error("conv2d_transpose output extents unset");
  if (crop.head_t + crop.out_t > fullT || crop.head_f + crop.out_f > fullF)
    throw shape_error("conv2d_transpose target extent unreachable: full " + std::to_string(fullT) + "x" +
                      std::to_string(fullF) + " crop head (" + std::to_string(crop.head_t) + "," +
                      std::to_string(crop.head_f) + ") out (" + std::to_string(crop.out_t) + "," +
                      std::to_string(crop.out_f) + ")");
  const std::size_t To = crop.out_t, Fo = crop.out_f;
  Tensor<Real> out({Co, To, Fo});
  Real* po = out.data();
  const Real* px = x.data();
  const Real* pw = w.data();
  if (bias) {
    for (std::size_t co = 0; co < Co; ++co)
      std::fill(po + co * To * Fo, po + (co + 1) * To * Fo, bias->data()[co]);
  }
  for (std::size_t ci = 0; ci < Ci; ++ci) {
    const Real* xcp = px + ci * T * F;
    for (std::size_t co = 0; co < Co; ++co) {
      Real* ocp = po + co * To * Fo;
      for (std::size_t kt = 0; kt < kT; ++kt) {
        for (std::size_t kf = 0; kf < kF; ++kf) {
          const Real wv = pw[((ci * Co + co) * kT + kt) * kF + kf];
          if (wv == Real(0)) continue;
          for (std::size_t t = 0; t < T; ++t) {
            const std::ptrdiff_t to = static_cast<std::ptrdiff_t>(t * stride.t + kt) -
                                      static_cast<std::ptrdiff_t>(crop.head_t);
            if (to < 0 || to >= static_cast<std::ptrdiff_t>(To)) continue;
            const Real* xr = xcp + t * F;
            Real* orow = ocp + static_cast<std::size_t>(to) * Fo;
            for (std::size_t f = 0; f < F; ++f) {
              const std::ptrdiff_t fo = static_cast<std::ptrdiff_t>(f * stride.f + kf) -
                                        static_cast<std::ptrdiff_t>(crop.head_f);
              if (fo < 0 || fo >= static_cast<std::ptrdiff_t>(Fo)) continue;
              orow[static_cast<std::size_t>(fo)] += wv * xr[f];
            }
          }
        }
      }
    }
  }
  const Tensor<Real>* bptr = bias;
  if (detail::want_grad<Real>({&x, &w, bptr})) {
    out.set_requires_grad(true);
    Tensor<Real> xc = x, wc = w, oc = out;
    std::optional<Tensor<Real>> bc;
    if (bias) bc = *bias;
    Tape<Real>::active()->record([xc, wc, bc, oc, stride, crop, Ci, T, F, Co, kT, kF, To, Fo]() mutable {
      if (!oc.grad_allocated()) return;
      const Real* g = oc.grad().data();
      if (bc && bc->requires_grad()) {
        Real* gb = bc->grad().data();
        for (std::size_t co = 0; co < Co; ++co) {
          Real acc = 0;
          const Real* gc = g + co * To * Fo;
          for (std::size_t i = 0; i < To * Fo; ++i) acc += gc[i];
          gb[co] += acc;
        }
      }
      const bool gx = xc.requires_grad();
      const bool gw = wc.requires_grad();
      if (!gx && !gw) return;
      Real* dx = gx ? xc.grad().data() : nullptr;
      Real* dw = gw ? wc.grad().data() : nullptr;
      const Real* px = xc.data();
      const Real* pw = wc.data();
      for (std::size_t ci = 0; ci < Ci; ++ci) {
        const Real* xcp = px + ci * T * F;
        Real* dxc = gx ? dx + ci * T * F : nullptr;
        for (std::size_t co = 0; co < Co; ++co) {
          const Real* gc = g + co * To * Fo;
          for (std::size_t kt = 0; kt < kT; ++kt) {
            for (std::size_t kf = 0; kf < kF; ++kf) {
              const std::size_t widx = ((ci * Co + co) * kT + kt) * kF + kf;
              const Real wv = pw[widx];
              Real wacc = 0;
              for (std::size_t t = 0; t < T; ++t) {
                const std::ptrdiff_t to = static_cast<std::ptrdiff_t>(t * stride.t + kt) -
                                          static_cast<std::ptrdiff_t>(crop.head_t);
                if (to < 0 || to >= static_cast<std::ptrdiff_t>(To)) continue;
                const Real* grow = gc + static_cast<std::size_t>(to) * Fo;
                const Real* xr = xcp + t * F;
                Real* dxr = gx ? dxc + t * F : nullptr;
                for (std::size_t f = 0; f < F; ++f) {
                  const std::ptrdiff_t fo = static_cast<std::ptrdiff_t>(f * stride.f + kf) -
                                            static_cast<std::ptrdiff_t>(crop.head_f);
                  if (fo < 0 || fo >= static_cast<std::ptrdiff_t>(Fo)) continue;
                  const Real gv = grow[static_cast<std::size_t>(fo)];
                  if (gw) wacc += gv * xr[f];
                  if (gx) dxr[f] += gv * wv;
                }
              }
              if (gw) dw[widx] += wacc;
            }
          }
        }
      }
    });
  }
  return out;
}

template <class Real>
Tensor<Real> conv2d(const Tensor<Real>& x, const Tensor<Real>& w, Stride2d stride, ConvPadding pad) {
  return conv2d(x, w, static_cast<const Tensor<Real>*>(nullptr), stride, pad);
}

template <class Real>
Tensor<Real> conv2d_transpose(const Tensor<Real>& x, const Tensor<Real>& w, Stride2d stride,
                              TransposeCrop crop) {
  return conv2d_transpose(x, w, static_cast<const Tensor<Real>*>(nullptr), stride, crop);
}

enum class BnMode { Train, Infer };

// Per-channel batch norm over the (T,F) extent of a [C,T,F] tensor. Running
// stats are plain tensors mutated in place during training (momentum 0.1);
// inference uses them frozen, so it stays per-frame causal. Variance is
// biased in both the normalizer and the running estimate.
template <class Real>
Tensor<Real> batch_norm(const Tensor<Real>& x, const Tensor<Real>& gamma, const Tensor<Real>& beta,
                        Tensor<Real>& running_mean, Tensor<Real>& running_var, BnMode mode,
                        Real momentum = Real(0.1), Real eps = Real(1e-5)) {
  if (x.rank() != 3) throw shape_error("batch_norm expects [C,T,F]");
  const std::size_t C = x.dim(0), N = x.dim(1) * x.dim(2);
  if (gamma.size() != C || beta.size() != C || running_mean.size() != C || running_var.size() != C)
    throw shape_error("batch_norm parameter extents");
  Tensor<Real> out(x.shape());
  const Real* px = x.data();
  Real* po = out.data();
  std::vector<Real> mu(C), inv_std(C);
  if (mode == BnMode::Train) {
    for (std::size_t c = 0; c < C; ++c) {
      const Real* xc = px + c * N;
      Real m = 0;
      for (std::size_t i = 0; i < N; ++i) m += xc[i];
      m /= static_cast<Real>(N);
      Real v = 0;
      for (std::size_t i = 0; i < N; ++i) {
        const Real d = xc[i] - m;
        v += d * d;
      }
      v /= static_cast<Real>(N);
      mu[c] = m;
      inv_std[c] = Real(1) / std::sqrt(v + eps);
      running_mean.data()[c] = (Real(1) - momentum) * running_mean.data()[c] + momentum * m;
      running_var.data()[c] = (Real(1) - momentum) * running_var.data()[c] + momentum * v;
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mu[c] = running_mean.data()[c];
      inv_std[c] = Real(1) / std::sqrt(running_var.data()[c] + eps);
    }
  }
  const Real* pg = gamma.data();
  const Real* pb = beta.data();
  for (std::size_t c = 0; c < C; ++c) {
    const Real* xc = px + c * N;
    Real* oc = po + c * N;
    const Real a = pg[c] * inv_std[c];
    const Real b = pb[c] - a * mu[c];
    for (std::size_t i = 0; i < N; ++i) oc[i] = a * xc[i] + b;
  }
  if (detail::want_grad<Real>({&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    Tensor<Real> xc = x, gc = gamma, bc = beta, oc = out;
    Tape<Real>::active()->record([xc, gc, bc, oc, mu, inv_std, mode, C, N]() mutable {
      if (!oc.grad_allocated()) return;
      const Real* g = oc.grad().data();
      const Real* px = xc.data();
      const Real* pg = gc.data();
      Real* dx = xc.requires_grad() ? xc.grad().data() : nullptr;
      Real* dgm = gc.requires_grad() ? gc.grad().data() : nullptr;
      Real* dbt = bc.requires_grad() ? bc.grad().data() : nullptr;
      for (std::size_t c = 0; c < C; ++c) {
        const Real* gcp = g + c * N;
        const Real* xcp = px + c * N;
        Real sum_g = 0, sum_gx = 0;
        for (std::size_t i = 0; i < N; ++i) {
          const Real xhat = (xcp[i] - mu[c]) * inv_std[c];
          sum_g += gcp[i];
          sum_gx += gcp[i] * xhat;
        }
        if (dgm) dgm[c] += sum_gx;
        if (dbt) dbt[c] += sum_g;
        if (dx) {
          Real* dxc = dx + c * N;
          const Real a = pg[c] * inv_std[c];
          if (mode == BnMode::Train) {
            const Real inv_n = Real(1) / static_cast<Real>(N);
            for (std::size_t i = 0; i < N; ++i) {
              const Real xhat = (xcp[i] - mu[c]) * inv_std[c];
              dxc[i] += a * (gcp[i] - sum_g * inv_n - xhat * sum_gx * inv_n);
            }
          } else {
            for (std::size_t i = 0; i < N; ++i) dxc[i] += a * gcp[i];
          }
        }
      }
    });
  }
  return out;
}

// PReLU with a learned slope per channel of a [C,...] tensor.
template <class Real>
Tensor<Real> prelu_channel(const Tensor<Real>& x, const Tensor<Real>& alpha) {
  if (x.rank() < 1 || alpha.rank() != 1 || alpha.dim(0) != x.dim(0))
    throw shape_error("prelu_channel expects [C,...] and alpha [C]");
  const std::size_t C = x.dim(0), N = x.size() / C;
  Tensor<Real> out(x.shape());
  const Real* px = x.data();
  const Real* pa = alpha.data();
  Real* po = out.data();
  for (std::size_t c = 0; c < C; ++c) {
    const Real a = pa[c];
    const Real* xc = px + c * N;
    Real* oc = po + c * N;
    for (std::size_t i = 0; i < N; ++i) oc[i] = xc[i] > Real(0) ? xc[i] : a * xc[i];
  }
  if (detail::want_grad<Real>({&x, &alpha})) {
    out.set_requires_grad(true);
    Tensor<Real> xc2 = x, ac = alpha, oc = out;
    Tape<Real>::active()->record([xc2, ac, oc, C, N]() mutable {
      if (!oc.grad_allocated()) return;
      const Real* g = oc.grad().data();
      const Real* px = xc2.data();
      const Real* pa = ac.data();
      Real* dx = xc2.requires_grad() ? xc2.grad().data() : nullptr;
      Real* da = ac.requires_grad() ? ac.grad().data() : nullptr;
      for (std::size_t c = 0; c < C; ++c) {
        const Real a = pa[c];
        const Real* xcp = px + c * N;
        const Real* gc = g + c * N;
        Real acc = 0;
        for (std::size_t i = 0; i < N; ++i) {
          if (xcp[i] > Real(0)) {
            if (dx) dx[c * N + i] += gc[i];
          } else {
            if (dx) dx[c * N + i] += a * gc[i];
            acc += gc[i] * xcp[i];
          }
        }
        if (da) da[c] += acc;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// GRU
// ---------------------------------------------------------------------------

template <class Real>
struct GruCell {
  Tensor<Real> wz, uz, bz;
  Tensor<Real> wr, ur, br;
  Tensor<Real> wh, uh, bh;
  std::size_t input_size() const { return wz.dim(1); }
  std::size_t hidden_size() const { return wz.dim(0); }
};

// z = s(Wz x + Uz h + bz), r = s(Wr x + Ur h + br),
// hc = tanh(Wh x + Uh (r.h) + bh), h' = (1-z).h + z.hc
template <class Real>
Tensor<Real> gru_step(const GruCell<Real>& cell, const Tensor<Real>& x_t, const Tensor<Real>& h_prev) {
  if (x_t.rank() != 1 || h_prev.rank() != 1) throw shape_error("gru_step expects vectors");
  if (x_t.dim(0) != cell.input_size() || h_prev.dim(0) != cell.hidden_size())
    throw shape_error("gru_step extent mismatch");
  Tensor<Real> z = sigmoid(add(add(matvec(cell.wz, x_t), matvec(cell.uz, h_prev)), cell.bz));
  Tensor<Real> r = sigmoid(add(add(matvec(cell.wr, x_t), matvec(cell.ur, h_prev)), cell.br));
  Tensor<Real> hc = tanh_t(add(add(matvec(cell.wh, x_t), matvec(cell.uh, mul(r, h_prev))), cell.bh));
  return add(mul(scale_shift(z, Real(-1), Real(1)), h_prev), mul(z, hc));
}

// Unidirectional scan over a [T] scalar sequence with h0 = 0; returns the [T]
// hidden-state sequence (hidden size must be 1 for the scalar packing).
template <class Real>
Tensor<Real> gru_run_scalar(const GruCell<Real>& cell, const Tensor<Real>& seq) {
  if (seq.rank() != 1) throw shape_error("gru_run_scalar expects [T]");
  if (cell.hidden_size() != 1 || cell.input_size() != 1)
    throw shape_error("gru_run_scalar needs hidden/input size 1");
  const std::size_t T = seq.dim(0);
  Tensor<Real> h = Tensor<Real>::zeros({1});
  std::vector<Tensor<Real>> outs;
  outs.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    Tensor<Real> x_t = slice(seq, 0, t, 1);
    h = gru_step(cell, x_t, h);
    outs.push_back(h);
  }
  return concat(outs, 0);
}

// ---------------------------------------------------------------------------
// parameter store
// ---------------------------------------------------------------------------

enum class Init { Zeros, Ones, KaimingUniform, Const };

template <class Real>
class ParameterStore {
 public:
  struct Entry {
    Tensor<Real> tensor;
    bool trainable = true;
  };

  explicit ParameterStore(std::uint64_t seed = 1) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  bool contains(const std::string& name) const { return map_.count(name) != 0; }

  Tensor<Real> get_or_create(const std::string& name, const Shape& shape, Init init,
                             std::size_t fan_in = 1, bool trainable = true, double const_val = 0.0) {
    auto it = map_.find(name);
    if (it != map_.end()) {
      if (it->second.tensor.shape() != shape)
        throw shape_error("parameter '" + name + "' exists with shape " +
                          shape_str(it->second.tensor.shape()) + ", requested " + shape_str(shape));
      return it->second.tensor;
    }
    Tensor<Real> t(shape);
    switch (init) {
      case Init::Zeros:
        break;
      case Init::Ones:
        std::fill(t.value().begin(), t.value().end(), Real(1));
        break;
      case Init::Const:
        std::fill(t.value().begin(), t.value().end(), static_cast<Real>(const_val));
        break;
      case Init::KaimingUniform: {
        // seeded by name so initialization is independent of creation order
        Rng rng(mix_seed(seed_, fnv1a(name)));
        const double bound = std::sqrt(1.0 / static_cast<double>(fan_in == 0 ? 1 : fan_in));
        for (Real& v : t.value()) v = static_cast<Real>(rng.uniform(-bound, bound));
        break;
      }
    }
    t.set_requires_grad(trainable);
    map_.emplace(name, Entry{t, trainable});
    return t;
  }

  Tensor<Real> at(const std::string& name) const {
    auto it = map_.find(name);
    if (it == map_.end()) throw contract_error("unknown parameter '" + name + "'");
    return it->second.tensor;
  }

  bool trainable(const std::string& name) const {
    auto it = map_.find(name);
    if (it == map_.end()) throw contract_error("unknown parameter '" + name + "'");
    return it->second.trainable;
  }

  const std::map<std::string, Entry>& entries() const { return map_; }
  std::map<std::string, Entry>& entries() { return map_; }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& [k, e] : map_)
      if (e.trainable) n += e.tensor.size();
    return n;
  }

  // trainable parameter totals grouped by the first `depth` dot-separated
  // name components
  std::map<std::string, std::size_t> breakdown(std::size_t depth = 1) const {
    std::map<std::string, std::size_t> out;
    for (const auto& [k, e] : map_) {
      if (!e.trainable) continue;
      std::size_t pos = 0;
      for (std::size_t i = 0; i < depth; ++i) {
        std::size_t p = k.find('.', pos);
        if (p == std::string::npos) {
          pos = k.size();
          break;
        }
        pos = p + 1;
      }
      std::string key = k.substr(0, pos == k.size() ? pos : pos - 1);
      out[key] += e.tensor.size();
    }
    return out;
  }

  void zero_grad() {
    for (auto& [k, e] : map_)
      if (e.trainable) e.tensor.zero_grad();
  }

  template <class To>
  ParameterStore<To> cast() const {
    ParameterStore<To> out(seed_);
    for (const auto& [k, e] : map_) {
      Tensor<To> t = cast_tensor<To>(e.tensor);
      t.set_requires_grad(e.trainable);
      out.entries().emplace(k, typename ParameterStore<To>::Entry{t, e.trainable});
    }
    return out;
  }

 private:
  std::map<std::string, Entry> map_;
  std::uint64_t seed_;
};

}  // namespace cmnet
