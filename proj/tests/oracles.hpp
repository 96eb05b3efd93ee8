// Copyright 2026 The cmnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Independent reference implementations used as test oracles. These are
// deliberately naive (explicit loops, direct sums) and must stay decoupled
// from the library code paths they check.

#pragma once

#include <complex>
#include <vector>

#include "cmnet/nn.hpp"

namespace oracle {

using cmnet::Shape;
using cmnet::Tensor;

// triple-loop matrix product
inline std::vector<double> matmul_ref(const std::vector<double>& a, const std::vector<double>& b,
                                      std::size_t M, std::size_t K, std::size_t N) {
  std::vector<double> c(M * N, 0.0);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t n = 0; n < N; ++n) c[m * N + n] += a[m * K + k] * b[k * N + n];
  return c;
}

// six-loop cross-correlation with past-only time padding
inline std::vector<double> conv2d_ref(const std::vector<double>& x, std::size_t Ci, std::size_t T,
                                      std::size_t F, const std::vector<double>& w, std::size_t Co,
                                      std::size_t kT, std::size_t kF, const std::vector<double>& bias,
                                      std::size_t sT, std::size_t sF, std::size_t padT, std::size_t padL,
                                      std::size_t padR, std::size_t& To, std::size_t& Fo) {
  To = (T + padT - kT) / sT + 1;
  Fo = (F + padL + padR - kF) / sF + 1;
  std::vector<double> out(Co * To * Fo, 0.0);
  for (std::size_t co = 0; co < Co; ++co)
    for (std::size_t to = 0; to < To; ++to)
      for (std::size_t fo = 0; fo < Fo; ++fo) {
        double acc = bias.empty() ? 0.0 : bias[co];
        for (std::size_t ci = 0; ci < Ci; ++ci)
          for (std::size_t kt = 0; kt < kT; ++kt)
            for (std::size_t kf = 0; kf < kF; ++kf) {
              const long ti = static_cast<long>(to * sT + kt) - static_cast<long>(padT);
              const long fi = static_cast<long>(fo * sF + kf) - static_cast<long>(padL);
              if (ti < 0 || ti >= static_cast<long>(T) || fi < 0 || fi >= static_cast<long>(F)) continue;
              acc += x[(ci * T + ti) * F + fi] * w[((co * Ci + ci) * kT + kt) * kF + kf];
            }
        out[(co * To + to) * Fo + fo] = acc;
      }
  return out;
}

// scatter-add transposed convolution followed by cropping
inline std::vector<double> conv2d_transpose_ref(const std::vector<double>& x, std::size_t Ci,
                                                std::size_t T, std::size_t F,
                                                const std::vector<double>& w, std::size_t Co,
                                                std::size_t kT, std::size_t kF,
                                                const std::vector<double>& bias, std::size_t sT,
                                                std::size_t sF, std::size_t headT, std::size_t headF,
                                                std::size_t To, std::size_t Fo) {
  const std::size_t fullT = (T - 1) * sT + kT;
  const std::size_t fullF = (F - 1) * sF + kF;
  std::vector<double> full(Co * fullT * fullF, 0.0);
  for (std::size_t ci = 0; ci < Ci; ++ci)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t co = 0; co < Co; ++co)
          for (std::size_t kt = 0; kt < kT; ++kt)
            for (std::size_t kf = 0; kf < kF; ++kf)
              full[(co * fullT + t * sT + kt) * fullF + f * sF + kf] +=
                  x[(ci * T + t) * F + f] * w[((ci * Co + co) * kT + kt) * kF + kf];
  std::vector<double> out(Co * To * Fo, 0.0);
  for (std::size_t co = 0; co < Co; ++co)
    for (std::size_t to = 0; to < To; ++to)
      for (std::size_t fo = 0; fo < Fo; ++fo)
        out[(co * To + to) * Fo + fo] =
            full[(co * fullT + to + headT) * fullF + fo + headF] + (bias.empty() ? 0.0 : bias[co]);
  return out;
}

// gate-equation GRU step, scalar arithmetic
inline std::vector<double> gru_step_ref(const std::vector<double>& x, const std::vector<double>& h,
                                        std::size_t I, std::size_t H, const std::vector<double>& wz,
                                        const std::vector<double>& uz, const std::vector<double>& bz,
                                        const std::vector<double>& wr, const std::vector<double>& ur,
                                        const std::vector<double>& br, const std::vector<double>& wh,
                                        const std::vector<double>& uh, const std::vector<double>& bh) {
  auto mv = [](const std::vector<double>& m, const std::vector<double>& v, std::size_t rows,
               std::size_t cols) {
    std::vector<double> out(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) out[r] += m[r * cols + c] * v[c];
    return out;
  };
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  std::vector<double> z = mv(wz, x, H, I), r = mv(wr, x, H, I), hc = mv(wh, x, H, I);
  std::vector<double> uzh = mv(uz, h, H, H), urh = mv(ur, h, H, H);
  std::vector<double> out(H);
  std::vector<double> rh(H);
  for (std::size_t i = 0; i < H; ++i) {
    z[i] = sig(z[i] + uzh[i] + bz[i]);
    r[i] = sig(r[i] + urh[i] + br[i]);
    rh[i] = r[i] * h[i];
  }
  std::vector<double> uhrh = mv(uh, rh, H, H);
  for (std::size_t i = 0; i < H; ++i) {
    hc[i] = std::tanh(hc[i] + uhrh[i] + bh[i]);
    out[i] = (1.0 - z[i]) * h[i] + z[i] * hc[i];
  }
  return out;
}

// direct DFT of a real frame, bins 0..n/2
inline std::vector<std::complex<double>> dft_ref(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc(0, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double ang = -2.0 * 3.141592653589793 * static_cast<double>(k * i) / static_cast<double>(n);
      acc += x[i] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

// broadcast binary op by explicit expansion to the output shape
inline std::vector<double> broadcast_ref(const std::vector<double>& a, const Shape& sa,
                                         const std::vector<double>& b, const Shape& sb,
                                         const Shape& so, double (*op)(double, double)) {
  const std::size_t r = so.size();
  auto index_of = [&](const Shape& s, const std::vector<std::size_t>& idx) {
    std::size_t off = 0, stride = 1;
    const std::size_t pad = r - s.size();
    for (std::size_t d = s.size(); d-- > 0;) {
      const std::size_t i = s[d] == 1 ? 0 : idx[d + pad];
      off += i * stride;
      stride *= s[d];
    }
    return off;
  };
  std::vector<double> out(cmnet::numel(so));
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = op(a[index_of(sa, idx)], b[index_of(sb, idx)]);
    for (std::size_t d = r; d-- > 0;) {
      if (++idx[d] < so[d]) break;
      idx[d] = 0;
    }
  }
  return out;
}

// Per-frame loop implementation of the feature catcher attention math:
// K/V come from the folded frames, Q from the mask-gated frames, both
// softmaxes causal, scaled by 1/sqrt(d); output is the attended G projected
// back plus the residual. All inputs are raw row-major buffers.
struct FcRef {
  std::size_t C, T, F, d;
  std::vector<double> wk, bk, wv, bv, wq, bq, wo, bo;  // wk/wv/wq: [CF x d], wo: [d x CF]

  std::vector<double> fold(const std::vector<double>& x) const {
    std::vector<double> out(T * C * F);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t f = 0; f < F; ++f) out[t * C * F + c * F + f] = x[(c * T + t) * F + f];
    return out;
  }

  std::vector<double> project(const std::vector<double>& frames, const std::vector<double>& w,
                              const std::vector<double>& b) const {
    const std::size_t cf = C * F;
    std::vector<double> out(T * d, 0.0);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t j = 0; j < d; ++j) {
        double acc = b[j];
        for (std::size_t i = 0; i < cf; ++i) acc += frames[t * cf + i] * w[i * d + j];
        out[t * d + j] = acc;
      }
    return out;
  }

  static std::vector<double> causal_softmax_rows(const std::vector<double>& logits, std::size_t T) {
    std::vector<double> out(T * T, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      double mx = -1e300;
      for (std::size_t u = 0; u <= t; ++u) mx = std::max(mx, logits[t * T + u]);
      double sum = 0;
      for (std::size_t u = 0; u <= t; ++u) sum += std::exp(logits[t * T + u] - mx);
      for (std::size_t u = 0; u <= t; ++u) out[t * T + u] = std::exp(logits[t * T + u] - mx) / sum;
    }
    return out;
  }

  // returns [C,T,F] output; mask may be empty (unmasked query path)
  std::vector<double> run(const std::vector<double>& f_in, const std::vector<double>& mask) const {
    const std::size_t cf = C * F;
    std::vector<double> frames = fold(f_in);
    std::vector<double> qin = frames;
    if (!mask.empty()) {
      std::vector<double> gated(f_in.size());
      for (std::size_t i = 0; i < f_in.size(); ++i) gated[i] = f_in[i] * mask[i];
      qin = fold(gated);
    }
    std::vector<double> K = project(frames, wk, bk);
    std::vector<double> V = project(frames, wv, bv);
    std::vector<double> Q = project(qin, wq, bq);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<double> logits(T * T, 0.0);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t u = 0; u < T; ++u) {
        double acc = 0;
        for (std::size_t j = 0; j < d; ++j) acc += K[t * d + j] * V[u * d + j];
        logits[t * T + u] = acc * scale;
      }
    std::vector<double> X = causal_softmax_rows(logits, T);
    std::vector<double> G(T * d, 0.0);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t u = 0; u < T; ++u)
        for (std::size_t j = 0; j < d; ++j) G[t * d + j] += X[t * T + u] * V[u * d + j];
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t u = 0; u < T; ++u) {
        double acc = 0;
        for (std::size_t j = 0; j < d; ++j) acc += Q[t * d + j] * G[u * d + j];
        logits[t * T + u] = acc * scale;
      }
    std::vector<double> Y = causal_softmax_rows(logits, T);
    std::vector<double> O(T * d, 0.0);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t u = 0; u < T; ++u)
        for (std::size_t j = 0; j < d; ++j) O[t * d + j] += Y[t * T + u] * G[u * d + j];
    std::vector<double> out(C * T * F);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t i = 0; i < cf; ++i) {
        double acc = bo[i];
        for (std::size_t j = 0; j < d; ++j) acc += O[t * d + j] * wo[j * cf + i];
        const std::size_t c = i / F, f = i % F;
        out[(c * T + t) * F + f] = acc + f_in[(c * T + t) * F + f];
      }
    return out;
  }
};

}  // namespace oracle
