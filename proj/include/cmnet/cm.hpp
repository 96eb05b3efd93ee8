// Copyright 2026 The cmnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Collaboration module: target-positive / target-negative masks, the feature
// catcher (global non-local attention followed by mask-guided local
// attention), and the learnable interactive selection between the two
// branches. Attention runs over time with frequency folded into the feature
// axis; every softmax is causally masked and the GRUs are unidirectional.

#pragma once

#include <fstream>
#include <iomanip>

#include "cmnet/nn.hpp"

namespace cmnet {

struct CmToggles {
  bool tpb = true;
  bool tnb = true;
  bool ib = true;

  void validate() const {
    if (ib && !(tpb && tnb))
      throw config_error("interactive block requires both target-positive and target-negative blocks");
  }
};

struct CmConfig {
  std::size_t channels = 64;    // bottleneck channels
  std::size_t freq = 65;        // bottleneck frequency extent
  std::size_t kernel_t = 3;     // conv block kernel (time)
  std::size_t kernel_f = 7;     // conv block kernel (frequency)
  std::size_t fc_dim = 64;      // attention key length d
  std::size_t gru_hidden = 1;
};

template <class Real>
struct FcTrace {
  Tensor<Real> k, v, q, g;       // [T,d]
  Tensor<Real> x_attn, y_attn;   // [T,T], row-stochastic, causal
};

template <class Real>
struct CmTrace {
  Tensor<Real> m_tp, m_tn;       // [C,T,F]
  Tensor<Real> f_tp, f_tn;       // branch outputs
  Tensor<Real> w_tp, w_tn;       // [T] selection weights
  Tensor<Real> f_out;
  FcTrace<Real> fc_tp, fc_tn;
  bool has_masks = false;
  bool has_weights = false;
};

// additive attention mask: 0 where t' <= t, -inf where t' > t
template <class Real>
Tensor<Real> causal_time_mask(std::size_t T) {
  Tensor<Real> m({T, T});
  const Real ninf = -std::numeric_limits<Real>::infinity();
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t u = t + 1; u < T; ++u) m.data()[t * T + u] = ninf;
  return m;
}

// M_tp = sigmoid(conv(relu(conv(F_in)))), channel-preserving causal convs
template <class Real>
Tensor<Real> conv_block_mask(const Tensor<Real>& f_in, ParameterStore<Real>& ps,
                             const CmConfig& cfg, const std::string& prefix = "cm.mask") {
  const std::size_t C = f_in.dim(0);
  const ConvPadding pad{cfg.kernel_t - 1, (cfg.kernel_f - 1) / 2, cfg.kernel_f - 1 - (cfg.kernel_f - 1) / 2};
  const std::size_t fan = C * cfg.kernel_t * cfg.kernel_f;
  Tensor<Real> w1 = ps.get_or_create(prefix + ".conv1.w", {C, C, cfg.kernel_t, cfg.kernel_f},
                                     Init::KaimingUniform, fan);
  Tensor<Real> b1 = ps.get_or_create(prefix + ".conv1.b", {C}, Init::Zeros);
  Tensor<Real> w2 = ps.get_or_create(prefix + ".conv2.w", {C, C, cfg.kernel_t, cfg.kernel_f},
                                     Init::KaimingUniform, fan);
  Tensor<Real> b2 = ps.get_or_create(prefix + ".conv2.b", {C}, Init::Zeros);
  Tensor<Real> h = relu(conv2d(f_in, w1, &b1, {1, 1}, pad));
  return sigmoid(conv2d(h, w2, &b2, {1, 1}, pad));
}

template <class Real>
Tensor<Real> complement_mask(const Tensor<Real>& m_tp) {
  return scale_shift(m_tp, Real(-1), Real(1));
}

// Feature catcher. Projections are (1,1) convs expressed as per-frame
// matmuls on the frequency-folded feature vector (size C*F), mapping to the
// d-dimensional key space and back. `mask` gates the query path; pass null
// for the unmasked self-attention variant used as the CM substitute.
template <class Real>
Tensor<Real> fc_block(const Tensor<Real>& f_in, const Tensor<Real>* mask, ParameterStore<Real>& ps,
                      const CmConfig& cfg, const std::string& prefix, FcTrace<Real>* trace = nullptr) {
  if (f_in.rank() != 3) throw contract_error("fc_block expects [C,T,F]");
  if (mask && mask->shape() != f_in.shape()) throw contract_error("fc_block mask shape mismatch");
  const std::size_t C = f_in.dim(0), T = f_in.dim(1), F = f_in.dim(2);
  const std::size_t cf = C * F;
  const std::size_t d = cfg.fc_dim;
  auto fold = [T, C, F, cf](const Tensor<Real>& x) {
    return reshape(permute(x, {1, 0, 2}), {T, cf});
  };
  Tensor<Real> wk = ps.get_or_create(prefix + ".key.w", {cf, d}, Init::KaimingUniform, cf);
  Tensor<Real> bk = ps.get_or_create(prefix + ".key.b", {d}, Init::Zeros);
  Tensor<Real> wv = ps.get_or_create(prefix + ".value.w", {cf, d}, Init::KaimingUniform, cf);
  Tensor<Real> bv = ps.get_or_create(prefix + ".value.b", {d}, Init::Zeros);
  Tensor<Real> wq = ps.get_or_create(prefix + ".query.w", {cf, d}, Init::KaimingUniform, cf);
  Tensor<Real> bq = ps.get_or_create(prefix + ".query.b", {d}, Init::Zeros);
  Tensor<Real> wo = ps.get_or_create(prefix + ".out.w", {d, cf}, Init::KaimingUniform, d);
  Tensor<Real> bo = ps.get_or_create(prefix + ".out.b", {cf}, Init::Zeros);

  Tensor<Real> frames = fold(f_in);
  Tensor<Real> k = add(matmul(frames, wk), bk);
  Tensor<Real> v = add(matmul(frames, wv), bv);
  Tensor<Real> qin = mask ? fold(mul(*mask, f_in)) : frames;
  Tensor<Real> q = add(matmul(qin, wq), bq);

  Tensor<Real> cmask = causal_time_mask<Real>(T);
  const Real inv_sqrt_d = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(d)));
  Tensor<Real> x_attn = softmax(scale(matmul(k, v, false, true), inv_sqrt_d), 1, &cmask);
  Tensor<Real> g = matmul(x_attn, v);
  Tensor<Real> y_attn = softmax(scale(matmul(q, g, false, true), inv_sqrt_d), 1, &cmask);
  Tensor<Real> o = matmul(y_attn, g);

  Tensor<Real> out_flat = add(matmul(o, wo), bo);
  Tensor<Real> out = permute(reshape(out_flat, {T, C, F}), {1, 0, 2});
  if (trace) {
    trace->k = k;
    trace->v = v;
    trace->q = q;
    trace->g = g;
    trace->x_attn = x_attn;
    trace->y_attn = y_attn;
  }
  return add(out, f_in);  // residual
}

template <class Real>
GruCell<Real> make_gru(ParameterStore<Real>& ps, const std::string& prefix, std::size_t hidden,
                       std::size_t input) {
  GruCell<Real> c;
  c.wz = ps.get_or_create(prefix + ".wz", {hidden, input}, Init::KaimingUniform, input);
  c.uz = ps.get_or_create(prefix + ".uz", {hidden, hidden}, Init::KaimingUniform, hidden);
  c.bz = ps.get_or_create(prefix + ".bz", {hidden}, Init::Zeros);
  c.wr = ps.get_or_create(prefix + ".wr", {hidden, input}, Init::KaimingUniform, input);
  c.ur = ps.get_or_create(prefix + ".ur", {hidden, hidden}, Init::KaimingUniform, hidden);
  c.br = ps.get_or_create(prefix + ".br", {hidden}, Init::Zeros);
  c.wh = ps.get_or_create(prefix + ".wh", {hidden, input}, Init::KaimingUniform, input);
  c.uh = ps.get_or_create(prefix + ".uh", {hidden, hidden}, Init::KaimingUniform, hidden);
  c.bh = ps.get_or_create(prefix + ".bh", {hidden}, Init::Zeros);
  return c;
}

// F_gf = mean over channels and frequency of (F_tp + F_tn); two independent
// unidirectional GRUs map the per-frame scalar sequence to selection logits;
// a two-way softmax yields w_tp, w_tn broadcast back over (C, F).
template <class Real>
Tensor<Real> interactive_block(const Tensor<Real>& f_tp, const Tensor<Real>& f_tn,
                               ParameterStore<Real>& ps, const CmConfig& cfg,
                               const std::string& prefix = "cm", CmTrace<Real>* trace = nullptr) {
  if (f_tp.shape() != f_tn.shape()) throw contract_error("interactive_block shape mismatch");
  const std::size_t T = f_tp.dim(1);
  GruCell<Real> g1 = make_gru(ps, prefix + ".gru1", cfg.gru_hidden, 1);
  GruCell<Real> g2 = make_gru(ps, prefix + ".gru2", cfg.gru_hidden, 1);
  Tensor<Real> f_gf = mean_pool(add(f_tp, f_tn), {0, 2});  // [T]
  Tensor<Real> s1 = gru_run_scalar(g1, f_gf);
  Tensor<Real> s2 = gru_run_scalar(g2, f_gf);
  Tensor<Real> logits = concat<Real>({reshape(s1, {1, T}), reshape(s2, {1, T})}, 0);  // [2,T]
  Tensor<Real> w = softmax(logits, 0);
  Tensor<Real> w_tp = slice(w, 0, 0, 1);  // [1,T]
  Tensor<Real> w_tn = slice(w, 0, 1, 1);
  Tensor<Real> w_tp_b = reshape(w_tp, {std::size_t(1), T, std::size_t(1)});
  Tensor<Real> w_tn_b = reshape(w_tn, {std::size_t(1), T, std::size_t(1)});
  Tensor<Real> out = add(mul(w_tp_b, f_tp), mul(w_tn_b, f_tn));
  if (trace) {
    trace->w_tp = reshape(w_tp, {T});
    trace->w_tn = reshape(w_tn, {T});
    trace->has_weights = true;
  }
  return out;
}

// Full module with ablation routing. Output shape always equals input shape.
//   tpb+tnb+ib : interactive combination of both branches
//   tpb only   : target-positive branch
//   tnb only   : target-negative branch (mask still derived from the conv block)
//   tpb+tnb    : plain sum
//   none       : two stacked unmasked self-attention blocks (parameter-matched substitute)
template <class Real>
Tensor<Real> cm_forward(const Tensor<Real>& f_in, ParameterStore<Real>& ps, const CmConfig& cfg,
                        const CmToggles& toggles, CmTrace<Real>* trace = nullptr) {
  toggles.validate();
  if (!toggles.tpb && !toggles.tnb) {
    Tensor<Real> h = fc_block<Real>(f_in, nullptr, ps, cfg, "cm.sa1");
    return fc_block<Real>(h, nullptr, ps, cfg, "cm.sa2");
  }
  Tensor<Real> m_tp = conv_block_mask(f_in, ps, cfg);
  Tensor<Real> m_tn = complement_mask(m_tp);
  if (trace) {
    trace->m_tp = m_tp;
    trace->m_tn = m_tn;
    trace->has_masks = true;
  }
  Tensor<Real> f_tp, f_tn;
  if (toggles.tpb) {
    f_tp = fc_block(f_in, &m_tp, ps, cfg, "cm.fc_tp", trace ? &trace->fc_tp : nullptr);
    if (trace) trace->f_tp = f_tp;
  }
  if (toggles.tnb) {
    f_tn = fc_block(f_in, &m_tn, ps, cfg, "cm.fc_tn", trace ? &trace->fc_tn : nullptr);
    if (trace) trace->f_tn = f_tn;
  }
  Tensor<Real> out;
  if (toggles.ib)
    out = interactive_block(f_tp, f_tn, ps, cfg, "cm", trace);
  else if (toggles.tpb && toggles.tnb)
    out = add(f_tp, f_tn);
  else if (toggles.tpb)
    out = f_tp;
  else
    out = f_tn;
  if (trace) trace->f_out = out;
  return out;
}

// Channel-averaged T x F grid of a [C,T,F] tensor as space-delimited text,
// row = frame, column = bin, 6 significant digits.
template <class Real>
void write_channel_mean_grid(const Tensor<Real>& m, const std::string& path) {
  if (m.rank() != 3) throw contract_error("grid dump expects [C,T,F]");
  const std::size_t C = m.dim(0), T = m.dim(1), F = m.dim(2);
  std::ofstream os(path);
  if (!os) throw io_error("cannot write attention map '" + path + "'");
  os << std::setprecision(6);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t f = 0; f < F; ++f) {
      double acc = 0;
      for (std::size_t c = 0; c < C; ++c) acc += static_cast<double>(m.data()[(c * T + t) * F + f]);
      os << (f ? " " : "") << acc / static_cast<double>(C);
    }
    os << "\n";
  }
  if (!os) throw io_error("failed writing attention map '" + path + "'");
}

// One file per mask (m_tp.txt, m_tn.txt) under `dir`.
template <class Real>
void dump_attention_maps(const Tensor<Real>& f_in, ParameterStore<Real>& ps, const CmConfig& cfg,
                         const std::string& dir) {
  Tensor<Real> m_tp = conv_block_mask(f_in, ps, cfg);
  Tensor<Real> m_tn = complement_mask(m_tp);
  write_channel_mean_grid(m_tp, dir + "/m_tp.txt");
  write_channel_mean_grid(m_tn, dir + "/m_tn.txt");
}

}  // namespace cmnet
