// Copyright 2026 The cmnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Differentiable bridges between the DSP layer and the tensor engine: the
// iSTFT primitive (double math inside, exact adjoint backward), mask
// application as a complex product, and the SI-SNR training loss.

#pragma once

#include "cmnet/signal.hpp"
#include "cmnet/tensor.hpp"

namespace cmnet {

// [2,T,F] tensor (re, im planes) from a spectrogram
template <class Real>
Tensor<Real> spec_to_tensor(const ComplexSpectrogram& s) {
  Tensor<Real> t({2, s.frames, s.bins});
  Real* p = t.data();
  for (std::size_t i = 0; i < s.re.size(); ++i) p[i] = static_cast<Real>(s.re[i]);
  for (std::size_t i = 0; i < s.im.size(); ++i) p[s.re.size() + i] = static_cast<Real>(s.im[i]);
  return t;
}

inline ComplexSpectrogram tensor_to_spec(const Tensor<double>& t, const StftConfig& cfg) {
  if (t.rank() != 3 || t.dim(0) != 2) throw shape_error("tensor_to_spec expects [2,T,F]");
  ComplexSpectrogram s = ComplexSpectrogram::zeros(t.dim(1), t.dim(2), cfg);
  const double* p = t.data();
  std::copy(p, p + s.re.size(), s.re.begin());
  std::copy(p + s.re.size(), p + 2 * s.re.size(), s.im.begin());
  return s;
}

// network input [4,T,F]: [X_r, X_i, Y_r, Y_i]
template <class Real>
Tensor<Real> make_input_planes(const ComplexSpectrogram& X, const ComplexSpectrogram& Y) {
  if (X.frames != Y.frames || X.bins != Y.bins)
    throw contract_error("aligned far-end and mic spectrograms disagree in shape");
  const std::size_t n = X.re.size();
  Tensor<Real> t({4, X.frames, X.bins});
  Real* p = t.data();
  for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<Real>(X.re[i]);
  for (std::size_t i = 0; i < n; ++i) p[n + i] = static_cast<Real>(X.im[i]);
  for (std::size_t i = 0; i < n; ++i) p[2 * n + i] = static_cast<Real>(Y.re[i]);
  for (std::size_t i = 0; i < n; ++i) p[3 * n + i] = static_cast<Real>(Y.im[i]);
  return t;
}

// Complex product S = Y * M on [2,T,F] plane tensors. Equals the polar-form
// application (magnitude product, phase sum) of crm_apply.
template <class Real>
Tensor<Real> crm_apply_op(const Tensor<Real>& y, const Tensor<Real>& m) {
  if (y.shape() != m.shape() || y.rank() != 3 || y.dim(0) != 2)
    throw shape_error("crm_apply_op expects matching [2,T,F] tensors");
  const std::size_t T = y.dim(1), F = y.dim(2);
  Tensor<Real> yr = slice(y, 0, 0, 1), yi = slice(y, 0, 1, 1);
  Tensor<Real> mr = slice(m, 0, 0, 1), mi = slice(m, 0, 1, 1);
  Tensor<Real> sr = sub(mul(yr, mr), mul(yi, mi));
  Tensor<Real> si = add(mul(yr, mi), mul(yi, mr));
  Tensor<Real> out = concat<Real>({sr, si}, 0);
  (void)T;
  (void)F;
  return out;
}

// Differentiable iSTFT of a [2,T,F] tensor, truncated/zero-padded to
// out_len samples. Forward math runs in double; backward applies the exact
// adjoint of the linear map.
template <class Real>
Tensor<Real> istft_op(const Tensor<Real>& spec, const StftConfig& cfg, std::size_t out_len) {
  if (spec.rank() != 3 || spec.dim(0) != 2) throw shape_error("istft_op expects [2,T,F]");
  const std::size_t T = spec.dim(1), F = spec.dim(2);
  std::vector<double> re(T * F), im(T * F);
  const Real* p = spec.data();
  for (std::size_t i = 0; i < T * F; ++i) re[i] = static_cast<double>(p[i]);
  for (std::size_t i = 0; i < T * F; ++i) im[i] = static_cast<double>(p[T * F + i]);
  std::vector<double> wave = detail::istft_planes(re.data(), im.data(), T, F, cfg);
  Tensor<Real> out({out_len});
  for (std::size_t n = 0; n < out_len; ++n)
    out.data()[n] = n < wave.size() ? static_cast<Real>(wave[n]) : Real(0);
  if (detail::want_grad<Real>({&spec})) {
    out.set_requires_grad(true);
    Tensor<Real> sc = spec, oc = out;
    Tape<Real>::active()->record([sc, oc, cfg, T, F, out_len]() mutable {
      if (!oc.grad_allocated() || !sc.requires_grad()) return;
      std::vector<double> gw(out_len);
      for (std::size_t n = 0; n < out_len; ++n) gw[n] = static_cast<double>(oc.grad()[n]);
      std::vector<double> gre(T * F, 0.0), gim(T * F, 0.0);
      detail::istft_adjoint(gw.data(), out_len, T, F, cfg, gre.data(), gim.data());
      Real* g = sc.grad().data();
      for (std::size_t i = 0; i < T * F; ++i) g[i] += static_cast<Real>(gre[i]);
      for (std::size_t i = 0; i < T * F; ++i) g[T * F + i] += static_cast<Real>(gim[i]);
    });
  }
  return out;
}

// SI-SNR of an estimate tensor against a fixed reference, in dB, capped at
// +60 via 60 - relu(60 - x). Matches the numeric si_snr() to rounding.
template <class Real>
Tensor<Real> si_snr_op(const Tensor<Real>& est, const std::vector<double>& ref, double eps = 1e-8,
                       double cap_db = 60.0) {
  if (est.rank() != 1 || est.size() != ref.size()) throw contract_error("si_snr_op length mismatch");
  double ref_energy = 0;
  for (double v : ref) ref_energy += v * v;
  if (ref_energy == 0.0) throw contract_error("si_snr_op reference is all zero");
  Tensor<Real> ref_t({ref.size()});
  for (std::size_t i = 0; i < ref.size(); ++i) ref_t.data()[i] = static_cast<Real>(ref[i]);
  Tensor<Real> dot = sum_all(mul(est, ref_t));                         // [1]
  Tensor<Real> a = scale(dot, static_cast<Real>(1.0 / (ref_energy + eps)));
  Tensor<Real> target = mul(a, ref_t);                                 // broadcast [1]x[N]
  Tensor<Real> noise = sub(est, target);
  Tensor<Real> tgt_e = scale_shift(sum_all(mul(target, target)), Real(1), static_cast<Real>(eps));
  Tensor<Real> noi_e = scale_shift(sum_all(mul(noise, noise)), Real(1), static_cast<Real>(eps));
  const Real k = static_cast<Real>(10.0 / std::log(10.0));
  Tensor<Real> val = scale(sub(log_t(tgt_e), log_t(noi_e)), k);
  // min(cap, val), NaN-preserving so a poisoned forward surfaces in the loss
  const Real cap = static_cast<Real>(cap_db);
  return unary_op(
      val, [cap](Real x) { return x < cap ? x : (x != x ? x : cap); },
      [cap](Real x, Real, Real g) { return x < cap ? g : Real(0); });
}

}  // namespace cmnet
