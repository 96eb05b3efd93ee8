// Copyright 2026 The cmnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Training loop (negative SI-SNR on the reconstructed waveform, Adam with
// global grad-norm clipping), the evaluation harness, and the five-case
// ablation runner. Everything is a pure function of its seeds.

#pragma once

#include <chrono>
#include <filesystem>
#include <functional>

#include "cmnet/data.hpp"
#include "cmnet/model.hpp"

namespace cmnet {

// ---------------------------------------------------------------------------
// enhance pipeline (shared by eval, the CLI, and tests)
// ---------------------------------------------------------------------------

template <class Real>
struct EnhanceOut {
  Waveform out;
  AlignResult align;
  Tensor<Real> mask;
};

template <class Real>
EnhanceOut<Real> enhance(const ModelConfig& cfg, ParameterStore<Real>& ps, const Waveform& mic,
                         const Waveform& far, CmTrace<Real>* trace = nullptr,
                         std::vector<std::string>* shape_trace = nullptr) {
  if (mic.sample_rate != kSampleRate || far.sample_rate != kSampleRate)
    throw io_error("enhance expects 16 kHz mono input (got " + std::to_string(mic.sample_rate) + "/" +
                   std::to_string(far.sample_rate) + " Hz)");
  EnhanceOut<Real> res;
  res.align = gcc_phat_align(mic, far);
  const ComplexSpectrogram Y = stft(mic);
  const ComplexSpectrogram X = stft(res.align.aligned);
  CmNet<Real> net(cfg, ps);
  res.mask = net.forward(make_input_planes<Real>(X, Y), BnMode::Infer, trace, shape_trace);
  Tensor<Real> s_hat = crm_apply_op(spec_to_tensor<Real>(Y), res.mask);
  Tensor<Real> wave = istft_op(s_hat, Y.cfg, mic.samples.size());
  res.out.sample_rate = kSampleRate;
  res.out.samples.resize(mic.samples.size());
  for (std::size_t i = 0; i < res.out.samples.size(); ++i)
    res.out.samples[i] = static_cast<double>(wave.data()[i]);
  return res;
}

// ---------------------------------------------------------------------------
// Adam with global gradient-norm clipping
// ---------------------------------------------------------------------------

template <class Real>
class Adam {
 public:
  Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
       double clip_norm = 5.0)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), clip_(clip_norm) {}

  // one update over every trainable tensor; returns the pre-clip grad norm
  double step(ParameterStore<Real>& ps) {
    double norm_sq = 0;
    for (auto& [name, e] : ps.entries()) {
      if (!e.trainable || !e.tensor.grad_allocated()) continue;
      for (Real g : e.tensor.grad()) norm_sq += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(norm_sq);
    const double scale = (clip_ > 0 && norm > clip_) ? clip_ / norm : 1.0;
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (auto& [name, e] : ps.entries()) {
      if (!e.trainable) continue;
      auto& slot = slots_[name];
      if (slot.m.empty()) {
        slot.m.assign(e.tensor.size(), 0.0);
        slot.v.assign(e.tensor.size(), 0.0);
      }
      Real* p = e.tensor.data();
      const bool has_g = e.tensor.grad_allocated();
      for (std::size_t i = 0; i < e.tensor.size(); ++i) {
        const double g = has_g ? static_cast<double>(e.tensor.grad()[i]) * scale : 0.0;
        slot.m[i] = b1_ * slot.m[i] + (1.0 - b1_) * g;
        slot.v[i] = b2_ * slot.v[i] + (1.0 - b2_) * g * g;
        const double mh = slot.m[i] / bc1;
        const double vh = slot.v[i] / bc2;
        p[i] = static_cast<Real>(static_cast<double>(p[i]) - lr_ * mh / (std::sqrt(vh) + eps_));
      }
    }
    return norm;
  }

 private:
  struct Slot {
    std::vector<double> m, v;
  };
  std::map<std::string, Slot> slots_;
  double lr_, b1_, b2_, eps_, clip_;
  std::size_t t_ = 0;
};

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

struct ScenarioDistribution {
  std::vector<ScenarioKind> kinds{ScenarioKind::DT};
  double ser_min = -15.0, ser_max = 15.0;
  // one entry is drawn per step; a negative value means "no added noise"
  std::vector<double> snr_choices{-1.0, 5.0};
  double duration_s = 10.0;
  NoiseKind noise = NoiseKind::White;
  EchoPathSpec echo;
  std::size_t max_delay_samples = 1000;
  bool fixed = false;  // reuse the step-0 scenario every step (tiny overfit)

  ScenarioSpec sample(std::uint64_t seed, std::size_t step) const {
    const std::uint64_t s = fixed ? mix_seed(seed, 0) : mix_seed(seed, step + 1);
    Rng rng(s);
    ScenarioSpec spec;
    spec.kind = kinds[rng.index(kinds.size())];
    if (spec.kind == ScenarioKind::ST_FE)
      throw config_error("training scenarios need a near-end reference (DT or ST_NE)");
    spec.duration_s = duration_s;
    if (spec.kind == ScenarioKind::DT) spec.ser_db = rng.uniform(ser_min, ser_max);
    const double snr = snr_choices.empty() ? -1.0 : snr_choices[rng.index(snr_choices.size())];
    if (snr >= 0.0) spec.snr_db = snr;
    spec.noise = noise;
    spec.echo = echo;
    spec.echo.delay_samples = max_delay_samples ? rng.index(max_delay_samples + 1) : echo.delay_samples;
    spec.seed = s;
    return spec;
  }
};

struct TrainConfig {
  std::size_t steps = 200;
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double clip_norm = 5.0;
  std::size_t batch_size = 1;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
  std::uint64_t seed = 7;
  ScenarioDistribution dist;

  void validate() const {
    if (steps == 0 || batch_size == 0) throw config_error("steps and batch_size must be positive");
    if (dist.duration_s < 0.5) throw config_error("chunk duration must be >= 0.5 s");
  }
};

struct TrainResult {
  std::vector<double> loss_curve;  // loss per step (loss = -SI-SNR in dB)
  double best_loss = std::numeric_limits<double>::infinity();
};

// loss for one scenario under an active tape
template <class Real>
Tensor<Real> training_loss(CmNet<Real>& net, const Scenario& sc) {
  const AlignResult align = gcc_phat_align(sc.y, sc.x);
  const ComplexSpectrogram Y = stft(sc.y);
  const ComplexSpectrogram X = stft(align.aligned);
  Tensor<Real> mask = net.forward(make_input_planes<Real>(X, Y), BnMode::Train);
  Tensor<Real> s_hat_spec = crm_apply_op(spec_to_tensor<Real>(Y), mask);
  Tensor<Real> s_hat = istft_op(s_hat_spec, Y.cfg, sc.y.samples.size());
  return negate(si_snr_op(s_hat, sc.s.samples));
}

template <class Real>
TrainResult train(const ModelConfig& mcfg, ParameterStore<Real>& ps, const TrainConfig& tcfg,
                  const std::string& out_dir = "",
                  const std::function<void(std::size_t, double)>& on_step = {}) {
  tcfg.validate();
  mcfg.validate();
  CmNet<Real> net(mcfg, ps);
  Adam<Real> opt(tcfg.lr, tcfg.beta1, tcfg.beta2, tcfg.adam_eps, tcfg.clip_norm);
  TrainResult res;
  std::ofstream curve;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    curve.open(out_dir + "/loss_curve.csv");
    curve << "step,loss\n";
  }
  for (std::size_t step = 0; step < tcfg.steps; ++step) {
    ps.zero_grad();
    double loss_acc = 0;
    std::uint64_t last_seed = 0;
    for (std::size_t b = 0; b < tcfg.batch_size; ++b) {
      const ScenarioSpec spec = tcfg.dist.sample(mix_seed(tcfg.seed, b), step);
      last_seed = spec.seed;
      const Scenario sc = mix_scenario(spec);
      Tape<Real> tape;
      Tensor<Real> loss = scale(training_loss(net, sc), static_cast<Real>(1.0 / tcfg.batch_size));
      const double lv = static_cast<double>(loss.item()) * tcfg.batch_size;
      if (!std::isfinite(lv))
        throw contract_error("non-finite loss at step " + std::to_string(step) + " (scenario seed " +
                             std::to_string(spec.seed) + ")");
      loss_acc += lv / tcfg.batch_size;
      tape.backward(loss);
    }
    opt.step(ps);
    res.loss_curve.push_back(loss_acc);
    res.best_loss = std::min(res.best_loss, loss_acc);
    if (curve.is_open()) curve << step << "," << loss_acc << "\n";
    if (on_step) on_step(step, loss_acc);
    if (!out_dir.empty() && tcfg.checkpoint_every && (step + 1) % tcfg.checkpoint_every == 0) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "checkpoint_%06zu", step + 1);
      save_checkpoint(out_dir + "/" + std::string(buf), mcfg, ps);
    }
    (void)last_seed;
  }
  if (!out_dir.empty()) save_checkpoint(out_dir + "/checkpoint_final", mcfg, ps);
  return res;
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

struct EvalSpec {
  ScenarioKind kind = ScenarioKind::DT;
  std::optional<double> ser_db = 0.0;
  std::optional<double> snr_db;
  double duration_s = 4.0;
  std::size_t num_seeds = 3;
  std::uint64_t seed_base = 100;
  NoiseKind noise = NoiseKind::White;
  EchoPathSpec echo;

  std::string label() const {
    std::ostringstream os;
    os << to_string(kind) << "/snr=" << (snr_db ? std::to_string(static_cast<int>(*snr_db)) : "-");
    return os.str();
  }
};

// the four Table-1 conditions
inline std::vector<EvalSpec> default_eval_specs(double duration_s = 4.0, std::size_t num_seeds = 3,
                                                std::size_t delay_samples = 400) {
  EchoPathSpec echo;
  echo.delay_samples = delay_samples;
  std::vector<EvalSpec> specs;
  EvalSpec dt;
  dt.kind = ScenarioKind::DT;
  dt.ser_db = 0.0;
  dt.duration_s = duration_s;
  dt.num_seeds = num_seeds;
  dt.echo = echo;
  specs.push_back(dt);          // DT, no added noise
  dt.snr_db = 5.0;
  dt.seed_base = 200;
  specs.push_back(dt);          // DT at 5 dB SNR
  EvalSpec ne;
  ne.kind = ScenarioKind::ST_NE;
  ne.ser_db.reset();
  ne.snr_db = 5.0;
  ne.duration_s = duration_s;
  ne.num_seeds = num_seeds;
  ne.seed_base = 300;
  specs.push_back(ne);          // near-end single talk at 5 dB SNR
  EvalSpec fe;
  fe.kind = ScenarioKind::ST_FE;
  fe.ser_db.reset();
  fe.duration_s = duration_s;
  fe.num_seeds = num_seeds;
  fe.seed_base = 400;
  fe.echo = echo;
  specs.push_back(fe);          // far-end single talk, no added noise
  return specs;
}

struct EvalRow {
  std::string condition;
  std::uint64_t seed = 0;
  std::optional<double> sisnr_out, sisnr_in;  // DT / ST_NE
  std::optional<double> erle_db;              // ST_FE
};

struct EvalAggregate {
  std::string condition;
  std::string metric;
  double mean = 0, stddev = 0;
  std::size_t n = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::size_t param_count = 0;
  std::string fingerprint;
  std::string noise_kind = "white";

  std::vector<EvalAggregate> aggregates() const {
    std::map<std::pair<std::string, std::string>, std::vector<double>> acc;
    for (const auto& r : rows) {
      if (r.sisnr_out) acc[{r.condition, "sisnr_out"}].push_back(*r.sisnr_out);
      if (r.sisnr_in) acc[{r.condition, "sisnr_in"}].push_back(*r.sisnr_in);
      if (r.erle_db) acc[{r.condition, "erle"}].push_back(*r.erle_db);
    }
    std::vector<EvalAggregate> out;
    for (const auto& [key, vals] : acc) {
      EvalAggregate a;
      a.condition = key.first;
      a.metric = key.second;
      a.n = vals.size();
      for (double v : vals) a.mean += v;
      a.mean /= static_cast<double>(vals.size());
      for (double v : vals) a.stddev += (v - a.mean) * (v - a.mean);
      a.stddev = vals.size() > 1 ? std::sqrt(a.stddev / static_cast<double>(vals.size() - 1)) : 0.0;
      out.push_back(a);
    }
    return out;
  }

  std::string to_text() const {
    std::ostringstream os;
    os << "params " << param_count << "  config " << fingerprint << "  noise " << noise_kind << "\n";
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-14s %-10s %10s %10s %6s\n", "condition", "metric", "mean", "std", "n");
    os << buf;
    for (const auto& a : aggregates()) {
      std::snprintf(buf, sizeof buf, "%-14s %-10s %10.3f %10.3f %6zu\n", a.condition.c_str(),
                    a.metric.c_str(), a.mean, a.stddev, a.n);
      os << buf;
    }
    return os.str();
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << "condition,seed,sisnr_in,sisnr_out,erle\n";
    auto opt = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string(); };
    for (const auto& r : rows)
      os << r.condition << "," << r.seed << "," << opt(r.sisnr_in) << "," << opt(r.sisnr_out) << ","
         << opt(r.erle_db) << "\n";
    return os.str();
  }
};

// Inference per scenario; SI-SNR for DT/ST_NE (with the unprocessed mixture
// as the improvement baseline), ERLE for far-end single talk.
template <class Real>
EvalReport evaluate(const ModelConfig& mcfg, ParameterStore<Real>& ps,
                    const std::vector<EvalSpec>& specs) {
  EvalReport rep;
  rep.param_count = ps.trainable_count();
  char fp[32];
  std::snprintf(fp, sizeof fp, "%016llx", static_cast<unsigned long long>(config_fingerprint(mcfg)));
  rep.fingerprint = fp;
  for (const auto& es : specs) {
    rep.noise_kind = to_string(es.noise);
    for (std::size_t k = 0; k < es.num_seeds; ++k) {
      ScenarioSpec spec;
      spec.kind = es.kind;
      spec.duration_s = es.duration_s;
      spec.ser_db = es.ser_db;
      spec.snr_db = es.snr_db;
      spec.noise = es.noise;
      spec.echo = es.echo;
      spec.seed = mix_seed(es.seed_base, k);
      const Scenario sc = mix_scenario(spec);
      EnhanceOut<Real> out = enhance(mcfg, ps, sc.y, sc.x);
      EvalRow row;
      row.condition = es.label();
      row.seed = spec.seed;
      if (es.kind == ScenarioKind::ST_FE) {
        row.erle_db = erle(sc.y, out.out);
      } else {
        row.sisnr_out = si_snr(out.out, sc.s);
        row.sisnr_in = si_snr(sc.y, sc.s);
      }
      rep.rows.push_back(row);
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// ablation harness
// ---------------------------------------------------------------------------

struct AblationRow {
  int case_id = 0;
  std::size_t params = 0;
  double dt_plain_sisnr = 0, dt_noisy_sisnr = 0, st_ne_sisnr = 0, st_fe_erle = 0;
  double dt_plain_in = 0, dt_noisy_in = 0, st_ne_in = 0;
};

struct AblationReport {
  std::vector<AblationRow> rows;

  std::string to_text() const {
    std::ostringstream os;
    char buf[200];
    std::snprintf(buf, sizeof buf, "%-5s %-9s %12s %12s %12s %12s\n", "case", "params", "DT(-)", "DT(5)",
                  "ST_NE(5)", "ST_FE ERLE");
    os << buf;
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%-5d %-9zu %12.3f %12.3f %12.3f %12.3f\n", r.case_id, r.params,
                    r.dt_plain_sisnr, r.dt_noisy_sisnr, r.st_ne_sisnr, r.st_fe_erle);
      os << buf;
    }
    return os.str();
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << "case,params,dt_plain_sisnr,dt_noisy_sisnr,st_ne_sisnr,st_fe_erle,dt_plain_in,dt_noisy_in,st_ne_in\n";
    for (const auto& r : rows)
      os << r.case_id << "," << r.params << "," << r.dt_plain_sisnr << "," << r.dt_noisy_sisnr << ","
         << r.st_ne_sisnr << "," << r.st_fe_erle << "," << r.dt_plain_in << "," << r.dt_noisy_in << ","
         << r.st_ne_in << "\n";
    return os.str();
  }
};

// Trains each of the five cases under an identical budget and evaluates on a
// shared scenario set; the data order is fixed by the seeds alone, so every
// case sees identical mixtures.
inline AblationReport ablation_run(ModelConfig base, const TrainConfig& budget,
                                   const std::vector<EvalSpec>& eval_specs,
                                   const std::string& out_dir = "") {
  AblationReport rep;
  for (int c = 1; c <= 5; ++c) {
    ModelConfig cfg = base;
    cfg.case_id = c;
    ParameterStore<float> ps(cfg.seed);
    const std::string dir = out_dir.empty() ? "" : out_dir + "/case" + std::to_string(c);
    train(cfg, ps, budget, dir);
    const EvalReport er = evaluate(cfg, ps, eval_specs);
    AblationRow row;
    row.case_id = c;
    row.params = ps.trainable_count();
    for (const auto& a : er.aggregates()) {
      if (a.condition == "DT/snr=-" && a.metric == "sisnr_out") row.dt_plain_sisnr = a.mean;
      if (a.condition == "DT/snr=-" && a.metric == "sisnr_in") row.dt_plain_in = a.mean;
      if (a.condition == "DT/snr=5" && a.metric == "sisnr_out") row.dt_noisy_sisnr = a.mean;
      if (a.condition == "DT/snr=5" && a.metric == "sisnr_in") row.dt_noisy_in = a.mean;
      if (a.condition == "ST_NE/snr=5" && a.metric == "sisnr_out") row.st_ne_sisnr = a.mean;
      if (a.condition == "ST_NE/snr=5" && a.metric == "sisnr_in") row.st_ne_in = a.mean;
      if (a.condition == "ST_FE/snr=-" && a.metric == "erle") row.st_fe_erle = a.mean;
    }
    rep.rows.push_back(row);
  }
  if (!out_dir.empty()) {
    std::ofstream txt(out_dir + "/ablation.txt");
    txt << rep.to_text();
    std::ofstream csv(out_dir + "/ablation.csv");
    csv << rep.to_csv();
  }
  return rep;
}

}  // namespace cmnet
