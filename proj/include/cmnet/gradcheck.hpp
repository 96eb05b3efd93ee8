// Copyright 2026 The cmnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Central finite-difference verification of backward passes. The reference
// differences are always evaluated in double at the same parameter points so
// the check stays meaningful for float32 instantiations: at 64-bit this is
// the classic FD-vs-AD test, at 32-bit it measures fp32 forward/backward
// rounding against an accurate gradient estimate.

#pragma once

#include <functional>

#include "cmnet/nn.hpp"

namespace cmnet {

struct GradCheckOptions {
  double h = 1e-5;
  double tol = 1e-6;
  std::size_t max_per_tensor = 8;
  std::uint64_t seed = 17;
};

struct GradCheckEntry {
  std::string block;
  double max_rel_err = 0.0;
  std::string worst_param;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool all_pass() const {
    for (const auto& e : entries)
      if (!e.pass) return false;
    return true;
  }
  double max_rel_err() const {
    double m = 0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_err);
    return m;
  }
};

// Builder contract: template <class R> Tensor<R> operator()(ParameterStore<R>&) const
// producing a scalar loss. Any parameters the builder needs are created in
// the store on first use, so the master copy taken here is self-warming.
template <class R, class Builder>
GradCheckEntry finite_difference_check(const std::string& name, const Builder& builder,
                                       ParameterStore<double> master, GradCheckOptions opt = {}) {
  builder(master);  // materialize every parameter before casting

  ParameterStore<R> ps_r = master.template cast<R>();
  {
    Tape<R> tape;
    Tensor<R> loss = builder(ps_r);
    tape.backward(loss);
  }

  ParameterStore<double> ps_d = master.template cast<double>();
  GradCheckEntry entry;
  entry.block = name;
  // Step ladder: composite losses have kinked activations (batch norm
  // centers values right at the PReLU corner), which biases a central
  // difference at the base step; the bias vanishes linearly in h while
  // rounding noise grows as 1/h, so each probe is scored at its best step.
  // A wrong backward disagrees with every step because the differences
  // converge to the true gradient.
  const std::array<double, 3> steps{opt.h, opt.h / 10.0, opt.h / 100.0};
  struct Probe {
    std::string where;
    double ad;
    std::array<double, 3> fd;
  };
  std::vector<Probe> probes;
  double f_scale = 1.0;
  for (auto& [pname, e] : ps_d.entries()) {
    if (!e.trainable) continue;
    Tensor<double> pd = e.tensor;
    Tensor<R> pr = ps_r.at(pname);
    const std::size_t n = pd.size();
    const std::size_t k = std::min(n, opt.max_per_tensor);
    Rng rng(mix_seed(opt.seed, fnv1a(name + "/" + pname)));
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t ix = (k == n) ? i : rng.index(n);
      const double v0 = pd.data()[ix];
      Probe p;
      p.where = pname + "[" + std::to_string(ix) + "]";
      for (std::size_t si = 0; si < steps.size(); ++si) {
        pd.data()[ix] = v0 + steps[si];
        const double fp = builder(ps_d).item();
        pd.data()[ix] = v0 - steps[si];
        const double fm = builder(ps_d).item();
        pd.data()[ix] = v0;
        f_scale = std::max({f_scale, std::abs(fp), std::abs(fm)});
        p.fd[si] = (fp - fm) / (2.0 * steps[si]);
      }
      p.ad = pr.grad_allocated() ? static_cast<double>(pr.grad()[ix]) : 0.0;
      probes.push_back(std::move(p));
    }
  }
  // Noise floors: double rounding of the two loss evaluations per step, plus
  // the checked precision's own accumulation rounding (relevant for float32
  // backward passes, where exact-zero gradients leave cancellation residue).
  double gmax = 0;
  for (const Probe& p : probes)
    for (double fd : p.fd) gmax = std::max(gmax, std::abs(fd));
  const double eps_r = static_cast<double>(std::numeric_limits<R>::epsilon());
  for (const Probe& p : probes) {
    double err = std::numeric_limits<double>::infinity();
    for (std::size_t si = 0; si < steps.size(); ++si) {
      const double noise =
          64.0 * 2.220446049250313e-16 * f_scale / steps[si] + 16.0 * eps_r * std::max(gmax, 1.0);
      const double denom = std::max({std::abs(p.fd[si]), std::abs(p.ad), noise / opt.tol});
      err = std::min(err, std::abs(p.ad - p.fd[si]) / denom);
    }
    if (err > entry.max_rel_err) {
      entry.max_rel_err = err;
      entry.worst_param = p.where;
    }
  }
  entry.pass = entry.max_rel_err < opt.tol;
  return entry;
}

// Convenience check for a scalar function of one input tensor, double only.
// Checks every element of x (or a subset when x is large).
inline double fd_max_rel_err(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                             Tensor<double> x, double h = 1e-5, std::size_t max_entries = 64,
                             std::uint64_t seed = 23) {
  x.set_requires_grad(true);
  x.zero_grad();
  {
    Tape<double> tape;
    Tensor<double> loss = f(x);
    tape.backward(loss);
  }
  std::vector<double> ad(x.grad().begin(), x.grad().end());
  x.set_requires_grad(false);
  const std::size_t n = x.size();
  const std::size_t k = std::min(n, max_entries);
  Rng rng(seed);
  std::vector<std::size_t> picks(k);
  for (std::size_t i = 0; i < k; ++i) picks[i] = (k == n) ? i : rng.index(n);
  std::vector<double> fd(k);
  double f_scale = 1.0;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t ix = picks[i];
    const double v0 = x.data()[ix];
    x.data()[ix] = v0 + h;
    const double fp = f(x).item();
    x.data()[ix] = v0 - h;
    const double fm = f(x).item();
    x.data()[ix] = v0;
    f_scale = std::max({f_scale, std::abs(fp), std::abs(fm)});
    fd[i] = (fp - fm) / (2.0 * h);
  }
  const double noise_abs = 64.0 * 2.220446049250313e-16 * f_scale / h;
  double worst = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double denom = std::max({std::abs(fd[i]), std::abs(ad[picks[i]]), noise_abs * 1e6});
    worst = std::max(worst, std::abs(ad[picks[i]] - fd[i]) / denom);
  }
  return worst;
}

}  // namespace cmnet
