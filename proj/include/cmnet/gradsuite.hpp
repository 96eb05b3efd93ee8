// Copyright 2026 The cmnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// The named gradient-check suite: one finite-difference check per layer
// type plus the end-to-end toy model (network -> mask application -> iSTFT
// -> SI-SNR) under each ablation case, at both precisions.

#pragma once

#include "cmnet/gradcheck.hpp"
#include "cmnet/train.hpp"

namespace cmnet {

namespace gradsuite_detail {

struct ElementwiseB {
  template <class R>
  Tensor<R> operator()(ParameterStore<R>& ps) const {
    auto x = ps.get_or_create("x", {24}, Init::KaimingUniform, 1);
    auto y = add(sigmoid(x), tanh_t(scale(x, R(0.7))));
    auto z = mul(prelu(y, R(0.25)), exp_t(scale(x, R(0.1))));
    auto w = log_t(scale_shift(mul(z, z), R(1), R(1)));
    return sum_all(w);
  }
};

struct MatmulB {
  template <class R>
  Tensor<R> operator()(ParameterStore<R>& ps) const {
    auto a = ps.get_or_create("a", {5, 3}, Init::KaimingUniform, 3);
    auto b = ps.get_or_create("b", {4, 3}, Init::KaimingUniform, 3);
    auto c = ps.get_or_create("c", {5, 4}, Init::KaimingUniform, 4);
    auto y = matmul(matmul(a, b, false, true), c, true, false);
    return sum_all(mul(y, y));
  }
};

struct SoftmaxB {
  template <class R>
  Tensor<R> operator()(ParameterStore<R>& ps) const {
    auto x = ps.get_or_create("x", {6, 6}, Init::KaimingUniform, 1);
    auto w = ps.get_or_create("w", {6, 6}, Init::KaimingUniform, 6);
    Tensor<R> m({6, 6});
    const R ninf = -std::numeric_limits<R>::infinity();
    for (std::size_t t = 0; t < 6; ++t)
      for (std::size_t u = t + 1; u < 6; ++u) m.value()[t * 6 + u] = ninf;
    return sum_all(mul(softmax(scale(x, R(1.5)), 1, &m), w));
  }
};

struct ConvB {
  template <class R>
  Tensor<R> operator()(ParameterStore<R>& ps) const {
    auto x = ps.get_or_create("x", {3, 5, 9}, Init::KaimingUniform, 4);
    auto w = ps.get_or_create("w", {2, 3, 3, 5}, Init::KaimingUniform, 45);
    auto b = ps.get_or_create("b", {2}, Init::KaimingUniform, 1);
    auto y = conv2d(x, w, &b, {1, 2}, {2, 2, 2});
    return sum_all(mul(y, y));
  }
};

struct DeconvB {
  template <class R>
  Tensor<R> operator()(ParameterStore<R>& ps) const {
    auto x = ps.get_or_create("x", {3, 5, 5}, Init::KaimingUniform, 4);
    auto w = ps.get_or_create("w", {3, 2, 3, 5}, Init::KaimingUniform, 45);
    auto b = ps.get_or_create("b", {2}, Init::KaimingUniform, 1);
    auto y = conv2d_transpose(x, w, &b, {1, 2}, {0, 2, 5, 9});
    return sum_all(mul(y, y));
  }
};

struct BnTrainB {
  template <class R>
  Tensor<R> operator()(ParameterStore<R>& ps) const {
    auto x = ps.get_or_create("x", {3, 4, 5}, Init::KaimingUniform, 2);
    auto g = ps.get_or_create("g", {3}, Init::Ones);
    auto b = ps.get_or_create("b", {3}, Init::Zeros);
    auto rm = ps.get_or_create("rm", {3}, Init::Zeros, 1, false);
    auto rv = ps.get_or_create("rv", {3}, Init::Ones, 1, false);
    auto y = batch_norm(x, g, b, rm, rv, BnMode::Train);
    return sum_all(mul(y, y));
  }
};

struct BnInferB {
  template <class R>
  Tensor<R> operator()(ParameterStore<R>& ps) const {
    auto x = ps.get_or_create("x", {3, 4, 5}, Init::KaimingUniform, 2);
    auto g = ps.get_or_create("g", {3}, Init::Ones);
    auto b = ps.get_or_create("b", {3}, Init::Zeros);
    auto rm = ps.get_or_create("rm", {3}, Init::Zeros, 1, false);
    auto rv = ps.get_or_create("rv", {3}, Init::Ones, 1, false);
    auto y = batch_norm(x, g, b, rm, rv, BnMode::Infer);
    return sum_all(mul(y, y));
  }
};

struct PreluChB {
  template <class R>
  Tensor<R> operator()(ParameterStore<R>& ps) const {
    auto x = ps.get_or_create("x", {3, 4, 5}, Init::KaimingUniform, 2);
    auto a = ps.get_or_create("a", {3}, Init::Const, 1, true, 0.25);
    auto y = prelu_channel(x, a);
    return sum_all(mul(y, y));
  }
};

struct GruB {
  template <class R>
  Tensor<R> operator()(ParameterStore<R>& ps) const {
    auto cell = make_gru(ps, "gru", 1, 1);
    auto x = ps.get_or_create("x", {9}, Init::KaimingUniform, 1);
    auto y = gru_run_scalar(cell, x);
    return sum_all(mul(y, y));
  }
};

struct PoolShapeB {
  template <class R>
  Tensor<R> operator()(ParameterStore<R>& ps) const {
    auto x = ps.get_or_create("x", {3, 4, 6}, Init::KaimingUniform, 2);
    auto p = permute(x, {1, 0, 2});
    auto r = reshape(p, {4, 18});
    auto s = slice(r, 1, 2, 9);
    auto c = concat<R>({s, s}, 1);
    auto m = mean_pool(c, {1});
    return sum_all(mul(m, m));
  }
};

struct IstftB {
  template <class R>
  Tensor<R> operator()(ParameterStore<R>& ps) const {
    auto x = ps.get_or_create("x", {2, 3, 257}, Init::KaimingUniform, 8);
    StftConfig cfg;
    auto y = istft_op(x, cfg, 900);
    return sum_all(mul(y, y));
  }
};

struct SiSnrB {
  std::vector<double> ref;
  template <class R>
  Tensor<R> operator()(ParameterStore<R>& ps) const {
    auto x = ps.get_or_create("x", {200}, Init::KaimingUniform, 1);
    return negate(si_snr_op(x, ref));
  }
};

struct CrmApplyB {
  template <class R>
  Tensor<R> operator()(ParameterStore<R>& ps) const {
    auto m = ps.get_or_create("m", {2, 4, 9}, Init::KaimingUniform, 2);
    auto y = ps.get_or_create("y", {2, 4, 9}, Init::KaimingUniform, 2);
    auto s = crm_apply_op(y, m);
    return sum_all(mul(s, s));
  }
};

// full training path with the constant DSP front end (alignment, STFTs)
// hoisted out of the differentiated region
struct EndToEndB {
  ModelConfig cfg;
  ComplexSpectrogram X, Y;
  std::vector<double> target;
  std::size_t out_len;

  template <class R>
  Tensor<R> operator()(ParameterStore<R>& ps) const {
    CmNet<R> net(cfg, ps);
    Tensor<R> mask = net.forward(make_input_planes<R>(X, Y), BnMode::Train);
    Tensor<R> s_hat = crm_apply_op(spec_to_tensor<R>(Y), mask);
    Tensor<R> wave = istft_op(s_hat, Y.cfg, out_len);
    return negate(si_snr_op(wave, target));
  }
};

}  // namespace gradsuite_detail

// builds the 8-frame toy pipeline inputs once
inline gradsuite_detail::EndToEndB make_toy_loss_builder(int case_id, std::uint64_t seed) {
  ScenarioSpec spec;
  spec.duration_s = 0.5;
  spec.ser_db = 0.0;
  spec.echo.delay_samples = 64;
  spec.seed = seed;
  Scenario sc = mix_scenario(spec);
  const std::size_t n = 512 + 7 * 256;  // 8 frames
  // slice where the near-end signal is live (a leading syllable gap would
  // leave the SI-SNR reference all zero)
  std::size_t i0 = 0;
  while (i0 + n < sc.s.samples.size() && std::abs(sc.s.samples[i0]) < 0.05) ++i0;
  if (i0 + n > sc.s.samples.size()) i0 = sc.s.samples.size() - n;
  auto cut = [i0, n](Waveform& w) { w.samples = {w.samples.begin() + i0, w.samples.begin() + i0 + n}; };
  cut(sc.y);
  cut(sc.s);
  cut(sc.x);
  sc.y.samples.resize(n);
  sc.s.samples.resize(n);
  sc.x.samples.resize(n);
  gradsuite_detail::EndToEndB b;
  b.cfg = ModelConfig::toy(257);
  b.cfg.encoder_channels = {2, 3, 4};
  b.cfg.decoder_channels = {3, 2, 2};
  b.cfg.fc_dim = 4;
  b.cfg.case_id = case_id;
  const AlignResult align = gcc_phat_align(sc.y, sc.x);
  b.Y = stft(sc.y);
  b.X = stft(align.aligned);
  b.target = sc.s.samples;
  b.out_len = n;
  return b;
}

// Every layer type plus the end-to-end toy model under all five ablation
// cases, checked at 64-bit and 32-bit.
inline GradCheckReport run_gradient_suite(double tol64 = 1e-6, double tol32 = 1e-4,
                                          std::uint64_t seed = 2024,
                                          std::size_t max_per_tensor = 4) {
  using namespace gradsuite_detail;
  GradCheckReport report;
  GradCheckOptions o64;
  o64.tol = tol64;
  o64.max_per_tensor = max_per_tensor;
  o64.seed = seed;
  GradCheckOptions o32 = o64;
  o32.tol = tol32;

  SiSnrB sisnr;
  {
    Rng rng(seed);
    sisnr.ref.resize(200);
    for (auto& v : sisnr.ref) v = rng.normal();
  }

  auto both = [&](const std::string& name, const auto& builder) {
    report.entries.push_back(
        finite_difference_check<double>(name + "/f64", builder, ParameterStore<double>(seed), o64));
    report.entries.push_back(
        finite_difference_check<float>(name + "/f32", builder, ParameterStore<double>(seed), o32));
  };

  both("elementwise", ElementwiseB{});
  both("matmul", MatmulB{});
  both("softmax", SoftmaxB{});
  both("conv2d", ConvB{});
  both("conv2d_transpose", DeconvB{});
  both("batch_norm_train", BnTrainB{});
  both("batch_norm_infer", BnInferB{});
  both("prelu", PreluChB{});
  both("gru", GruB{});
  both("pool_shape", PoolShapeB{});
  both("istft", IstftB{});
  both("si_snr", sisnr);
  both("crm_apply", CrmApplyB{});
  for (int c = 1; c <= 5; ++c) both("e2e_case" + std::to_string(c), make_toy_loss_builder(c, seed));
  return report;
}

}  // namespace cmnet
