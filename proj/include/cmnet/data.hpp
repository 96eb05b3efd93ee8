// Copyright 2026 The cmnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Hermetic scenario synthesis: seeded pseudo-speech, decaying-noise echo
// paths with optional memoryless nonlinearity, and mixture assembly at
// prescribed SER/SNR. Every generator is a pure function of its seed.

#pragma once

#include <optional>

#include "cmnet/signal.hpp"

namespace cmnet {

enum class ScenarioKind { DT, ST_NE, ST_FE };
enum class NonlinKind { None, HardClip, Arctan };
enum class NoiseKind { White, Lowpass };

inline std::string to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::DT: return "DT";
    case ScenarioKind::ST_NE: return "ST_NE";
    default: return "ST_FE";
  }
}

inline std::string to_string(NoiseKind k) { return k == NoiseKind::White ? "white" : "lowpass"; }

inline std::string to_string(NonlinKind k) {
  switch (k) {
    case NonlinKind::None: return "none";
    case NonlinKind::HardClip: return "hardclip";
    default: return "arctan";
  }
}

struct EchoPathSpec {
  double rir_seconds = 0.08;      // echo tail length
  double rir_decay_db = 50.0;     // amplitude decay across the tail
  NonlinKind nonlinearity = NonlinKind::Arctan;
  std::size_t delay_samples = 0;  // bulk delay embedded as leading zeros
};

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::DT;
  double duration_s = 10.0;
  std::optional<double> ser_db;  // required for DT, forbidden for single-talk
  std::optional<double> snr_db;
  NoiseKind noise = NoiseKind::White;
  EchoPathSpec echo;
  std::uint64_t seed = 1;

  void validate() const {
    if (duration_s < 0.5) throw config_error("scenario duration must be >= 0.5 s");
    if (kind == ScenarioKind::DT && !ser_db)
      throw config_error("DT scenario needs an SER");
    if (kind != ScenarioKind::DT && ser_db)
      throw config_error("SER given for a single-talk scenario");
  }
};

// Deterministic pseudo-speech: 3-5 harmonics on a drifting fundamental in
// [80, 300] Hz plus a weak syllable-gated aspiration-noise component (pure
// harmonic combs leave cross-correlation delay estimates ambiguous modulo
// the pitch period), all amplitude-modulated by a 2-8 Hz syllabic envelope
// with silent gaps, peak-normalized to 0.5.
inline Waveform synth_speechlike(double duration_s, std::uint64_t seed) {
  if (duration_s < 0.5) throw config_error("synth_speechlike duration must be >= 0.5 s");
  Rng rng(mix_seed(seed, fnv1a("speech")));
  const std::size_t n = static_cast<std::size_t>(duration_s * kSampleRate);
  const double f0 = rng.uniform(80.0, 300.0);
  const std::size_t nharm = 3 + rng.index(3);
  std::vector<double> phase(nharm), amp(nharm);
  for (std::size_t h = 0; h < nharm; ++h) {
    phase[h] = rng.uniform(0.0, 6.283185307179586);
    amp[h] = 1.0 / static_cast<double>(h + 1);
  }
  const double syll_hz = rng.uniform(2.0, 8.0);
  const double syll_len = static_cast<double>(kSampleRate) / syll_hz;
  const double vib_hz = rng.uniform(3.0, 6.0);
  const double vib_phase = rng.uniform(0.0, 6.283185307179586);
  // per-syllable gains, ~25% silent; at least one syllable inside the
  // signal extent must be live
  const std::size_t n_syll_in = static_cast<std::size_t>(std::ceil(n / syll_len));
  const std::size_t n_syll = n_syll_in + 1;
  std::vector<double> gain(n_syll);
  bool any_active = false;
  for (std::size_t k = 0; k < n_syll; ++k) {
    const bool active = rng.uniform() > 0.25;
    gain[k] = active ? rng.uniform(0.4, 1.0) : 0.0;
    any_active = any_active || (active && k < n_syll_in);
  }
  if (!any_active) gain[0] = 1.0;
  Waveform w;
  w.samples.resize(n);
  double ph_acc = 0.0;
  double noise_state = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kSampleRate;
    const double f = f0 * (1.0 + 0.02 * std::sin(6.283185307179586 * vib_hz * t + vib_phase));
    ph_acc += 6.283185307179586 * f / kSampleRate;
    const std::size_t k = static_cast<std::size_t>(i / syll_len);
    const double frac = (static_cast<double>(i) - static_cast<double>(k) * syll_len) / syll_len;
    const double env = gain[k] * std::pow(std::sin(3.141592653589793 * frac), 2.0);
    double v = 0;
    for (std::size_t h = 0; h < nharm; ++h) v += amp[h] * std::sin(static_cast<double>(h + 1) * ph_acc + phase[h]);
    const double n_raw = rng.normal();
    const double aspiration = 0.35 * (n_raw - noise_state);  // first difference, high-passed
    noise_state = n_raw;
    w.samples[i] = env * (v + aspiration);
  }
  double peak = 0;
  for (double v : w.samples) peak = std::max(peak, std::abs(v));
  if (peak > 0) {
    const double s = 0.5 / peak;
    for (double& v : w.samples) v *= s;
  }
  return w;
}

// Seeded exponentially decaying white-noise impulse response: delay_samples
// leading zeros, first live tap +1 (dominant), tail scaled to decay by
// rir_decay_db across its length.
inline std::vector<double> synth_rir(const EchoPathSpec& spec, std::uint64_t seed) {
  Rng rng(mix_seed(seed, fnv1a("rir")));
  const std::size_t tail = static_cast<std::size_t>(spec.rir_seconds * kSampleRate);
  const std::size_t len = spec.delay_samples + std::max<std::size_t>(tail, 1);
  std::vector<double> rir(len, 0.0);
  rir[spec.delay_samples] = 1.0;
  double tail_peak = 0.0;
  for (std::size_t i = 1; i < tail; ++i) {
    const double a = std::pow(10.0, -spec.rir_decay_db / 20.0 * static_cast<double>(i) /
                                        static_cast<double>(tail));
    rir[spec.delay_samples + i] = 0.35 * a * rng.normal();
    tail_peak = std::max(tail_peak, std::abs(rir[spec.delay_samples + i]));
  }
  if (tail_peak > 0.6) {
    const double s = 0.6 / tail_peak;
    for (std::size_t i = 1; i < tail; ++i) rir[spec.delay_samples + i] *= s;
  }
  return rir;
}

inline std::vector<double> apply_nonlinearity(const std::vector<double>& x, NonlinKind kind) {
  if (kind == NonlinKind::None) return x;
  double peak = 0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  std::vector<double> out(x.size());
  if (kind == NonlinKind::HardClip) {
    const double c = 0.6 * peak;
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::min(c, std::max(-c, x[i]));
  } else {  // arctan soft saturation with unit slope at the origin
    const double a = 0.6 * peak * 2.0 / 3.141592653589793;
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = a == 0 ? 0.0 : a * std::atan(x[i] / a);
  }
  return out;
}

// d = RIR (*) g(x), truncated to len(x)
inline Waveform synth_echo(const Waveform& x, const EchoPathSpec& spec, std::uint64_t seed) {
  double peak = 0;
  for (double v : x.samples) peak = std::max(peak, std::abs(v));
  if (peak == 0.0) throw contract_error("synth_echo: far-end signal is silent");
  const std::vector<double> g = apply_nonlinearity(x.samples, spec.nonlinearity);
  const std::vector<double> rir = synth_rir(spec, seed);
  Waveform d;
  d.samples.assign(x.samples.size(), 0.0);
  for (std::size_t k = 0; k < rir.size(); ++k) {
    const double h = rir[k];
    if (h == 0.0) continue;
    for (std::size_t n = k; n < d.samples.size(); ++n) d.samples[n] += h * g[n - k];
  }
  return d;
}

inline Waveform synth_noise(std::size_t n, NoiseKind kind, std::uint64_t seed) {
  Rng rng(mix_seed(seed, fnv1a("noise")));
  Waveform w;
  w.samples.resize(n);
  if (kind == NoiseKind::White) {
    for (double& v : w.samples) v = 0.1 * rng.normal();
  } else {
    double state = 0.0;
    for (double& v : w.samples) {
      state = 0.9 * state + 0.1 * (0.1 * rng.normal());
      v = state * 10.0;
    }
  }
  return w;
}

struct Scenario {
  ScenarioSpec spec;
  Waveform y;          // microphone mixture
  Waveform s;          // near-end target (zero for ST_FE)
  Waveform x;          // far-end playback reference (zero for ST_NE)
  Waveform x_aligned;  // x shifted by the ground-truth bulk delay
  Waveform d;          // echo as captured (zero for ST_NE)
  Waveform v;          // additive noise (zero when no SNR given)
  long true_delay = 0;
};

// y = d + s + v, exactly; echo scaled to the SER against the near-end
// speech, noise scaled to the SNR.
inline Scenario mix_scenario(const ScenarioSpec& spec) {
  spec.validate();
  Scenario sc;
  sc.spec = spec;
  const std::size_t n = static_cast<std::size_t>(spec.duration_s * kSampleRate);
  auto zeros = [n]() {
    Waveform w;
    w.samples.assign(n, 0.0);
    return w;
  };
  sc.s = (spec.kind != ScenarioKind::ST_FE) ? synth_speechlike(spec.duration_s, mix_seed(spec.seed, 1))
                                            : zeros();
  sc.x = (spec.kind != ScenarioKind::ST_NE) ? synth_speechlike(spec.duration_s, mix_seed(spec.seed, 2))
                                            : zeros();
  sc.true_delay = static_cast<long>(spec.echo.delay_samples);
  if (spec.kind == ScenarioKind::ST_NE) {
    sc.d = zeros();
  } else {
    Waveform d = synth_echo(sc.x, spec.echo, spec.seed);
    if (spec.kind == ScenarioKind::DT)
      d = scale_to_ratio(d, sc.s, *spec.ser_db, RatioKind::SER);
    sc.d = std::move(d);
  }
  if (spec.snr_db) {
    const Waveform& ref = (spec.kind == ScenarioKind::ST_FE) ? sc.d : sc.s;
    sc.v = scale_to_ratio(synth_noise(n, spec.noise, spec.seed), ref, *spec.snr_db, RatioKind::SNR);
  } else {
    sc.v = zeros();
  }
  sc.y.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) sc.y.samples[i] = sc.d.samples[i] + sc.s.samples[i] + sc.v.samples[i];
  sc.x_aligned = zeros();
  for (std::size_t i = spec.echo.delay_samples; i < n; ++i)
    sc.x_aligned.samples[i] = sc.x.samples[i - spec.echo.delay_samples];
  return sc;
}

}  // namespace cmnet
