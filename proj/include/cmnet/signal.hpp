// Copyright 2026 The cmnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Classical DSP layer: STFT/iSTFT with a periodic Hamming window, GCC-PHAT
// delay alignment, complex-ratio-mask arithmetic, SI-SNR, ERLE, and the
// SER/SNR mixing helpers.

#pragma once

#include "cmnet/fft.hpp"

namespace cmnet {

inline constexpr int kSampleRate = 16000;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  std::size_t size() const { return samples.size(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

struct StftConfig {
  std::size_t window_length = 512;
  std::size_t hop = 256;
  std::size_t fft_size = 512;

  std::size_t bins() const { return fft_size / 2 + 1; }

  void validate() const {
    if (hop != window_length / 2) throw config_error("stft hop must be window_length/2");
    if (fft_size < window_length || !is_pow2(fft_size)) throw config_error("stft fft_size invalid");
  }

  // periodic Hamming; strictly positive everywhere
  std::vector<double> window() const {
    std::vector<double> w(window_length);
    for (std::size_t n = 0; n < window_length; ++n)
      w[n] = 0.54 - 0.46 * std::cos(2.0 * 3.141592653589793 * static_cast<double>(n) /
                                    static_cast<double>(window_length));
    return w;
  }
};

struct ComplexSpectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<double> re, im;  // row-major [frame][bin]
  StftConfig cfg;

  double& at_re(std::size_t t, std::size_t f) { return re[t * bins + f]; }
  double& at_im(std::size_t t, std::size_t f) { return im[t * bins + f]; }
  double at_re(std::size_t t, std::size_t f) const { return re[t * bins + f]; }
  double at_im(std::size_t t, std::size_t f) const { return im[t * bins + f]; }

  static ComplexSpectrogram zeros(std::size_t frames, std::size_t bins, StftConfig cfg = {}) {
    ComplexSpectrogram s;
    s.frames = frames;
    s.bins = bins;
    s.re.assign(frames * bins, 0.0);
    s.im.assign(frames * bins, 0.0);
    s.cfg = cfg;
    return s;
  }
};

// T x F complex mask with polar accessors.
struct CRMask {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<double> re, im;

  double mag(std::size_t t, std::size_t f) const {
    const std::size_t i = t * bins + f;
    return std::hypot(re[i], im[i]);
  }
  double phase(std::size_t t, std::size_t f) const {
    const std::size_t i = t * bins + f;
    return std::atan2(im[i], re[i]);
  }
};

// Frame t covers samples [t*hop, t*hop + window_length); the signal is
// zero-padded at the end so the final partial frame is complete. No
// lookahead beyond each frame's own window.
inline ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg = {}) {
  cfg.validate();
  const std::size_t len = w.samples.size();
  if (len < cfg.window_length)
    throw contract_error("stft input shorter than one window (" + std::to_string(len) + " samples)");
  const std::size_t T = 1 + (len - cfg.window_length + cfg.hop - 1) / cfg.hop;
  const std::vector<double> win = cfg.window();
  ComplexSpectrogram spec = ComplexSpectrogram::zeros(T, cfg.bins(), cfg);
  std::vector<double> frame(cfg.fft_size, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t start = t * cfg.hop;
    std::fill(frame.begin(), frame.end(), 0.0);
    for (std::size_t i = 0; i < cfg.window_length; ++i) {
      const std::size_t n = start + i;
      frame[i] = (n < len ? w.samples[n] : 0.0) * win[i];
    }
    auto bins = rfft(frame.data(), cfg.fft_size, cfg.fft_size);
    for (std::size_t f = 0; f < spec.bins; ++f) {
      spec.at_re(t, f) = bins[f].real();
      spec.at_im(t, f) = bins[f].imag();
    }
  }
  return spec;
}

namespace detail {

// Shared weighted overlap-add core; also used by the differentiable wrapper.
inline std::vector<double> istft_planes(const double* re, const double* im, std::size_t T,
                                        std::size_t F, const StftConfig& cfg) {
  cfg.validate();
  if (F != cfg.bins()) throw shape_error("istft bin count mismatch");
  const std::vector<double> win = cfg.window();
  const std::size_t out_len = (T - 1) * cfg.hop + cfg.window_length;
  std::vector<double> acc(out_len, 0.0), env(out_len, 0.0);
  std::vector<std::complex<double>> bins(F);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t f = 0; f < F; ++f) bins[f] = {re[t * F + f], im[t * F + f]};
    std::vector<double> frame = irfft(bins.data(), F, cfg.fft_size);
    const std::size_t start = t * cfg.hop;
    for (std::size_t i = 0; i < cfg.window_length; ++i) {
      acc[start + i] += win[i] * frame[i];
      env[start + i] += win[i] * win[i];
    }
  }
  for (std::size_t n = 0; n < out_len; ++n) acc[n] /= std::max(env[n], 1e-12);
  return acc;
}

// Adjoint of istft_planes as a linear map from (re, im) to the waveform.
inline void istft_adjoint(const double* g_wave, std::size_t g_len, std::size_t T, std::size_t F,
                          const StftConfig& cfg, double* g_re, double* g_im) {
  const std::vector<double> win = cfg.window();
  const std::size_t out_len = (T - 1) * cfg.hop + cfg.window_length;
  std::vector<double> env(out_len, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < cfg.window_length; ++i) env[t * cfg.hop + i] += win[i] * win[i];
  std::vector<double> gw(out_len, 0.0);
  for (std::size_t n = 0; n < out_len && n < g_len; ++n) gw[n] = g_wave[n] / std::max(env[n], 1e-12);
  const std::size_t N = cfg.fft_size;
  std::vector<std::complex<double>> a(N);
  for (std::size_t t = 0; t < T; ++t) {
    std::fill(a.begin(), a.end(), std::complex<double>{0.0, 0.0});
    const std::size_t start = t * cfg.hop;
    for (std::size_t i = 0; i < cfg.window_length; ++i) a[i] = {win[i] * gw[start + i], 0.0};
    fft_inplace(a, false);
    for (std::size_t f = 0; f < F; ++f) {
      const double c = (f == 0 || f == N / 2) ? 1.0 : 2.0;
      g_re[t * F + f] += (c / static_cast<double>(N)) * a[f].real();
      g_im[t * F + f] += (f == 0 || f == N / 2) ? 0.0 : (2.0 / static_cast<double>(N)) * a[f].imag();
    }
  }
}

}  // namespace detail

// Weighted overlap-add with synthesis window = analysis window and division
// by the summed squared-window envelope.
inline Waveform istft(const ComplexSpectrogram& spec) {
  Waveform w;
  w.sample_rate = kSampleRate;
  w.samples = detail::istft_planes(spec.re.data(), spec.im.data(), spec.frames, spec.bins, spec.cfg);
  return w;
}

struct AlignResult {
  long delay = 0;
  Waveform aligned;
  bool no_signal = false;      // silent far end, alignment skipped
  bool low_confidence = false; // peak-to-mean ratio below 4
  double peak_mean_ratio = 0.0;
};

// Phase-transform cross-correlation over the whole utterance; the delay
// search is restricted to nonnegative lags (the far end is never ahead of
// its echo).
inline AlignResult gcc_phat_align(const Waveform& mic, const Waveform& far, double max_delay_s = 0.5) {
  if (mic.sample_rate != far.sample_rate) throw contract_error("gcc_phat_align sample-rate mismatch");
  AlignResult res;
  res.aligned = far;
  res.aligned.samples.resize(mic.samples.size(), 0.0);
  double peak = 0;
  for (double v : far.samples) peak = std::max(peak, std::abs(v));
  if (peak == 0.0) {
    res.no_signal = true;
    return res;
  }
  const std::size_t max_lag =
      static_cast<std::size_t>(max_delay_s * static_cast<double>(mic.sample_rate));
  const std::size_t need = std::max(mic.samples.size(), far.samples.size()) + max_lag + 1;
  const std::size_t nfft = next_pow2(need);
  std::vector<std::complex<double>> A(nfft, {0, 0}), B(nfft, {0, 0});
  for (std::size_t i = 0; i < mic.samples.size(); ++i) A[i] = {mic.samples[i], 0};
  for (std::size_t i = 0; i < far.samples.size(); ++i) B[i] = {far.samples[i], 0};
  fft_inplace(A, false);
  fft_inplace(B, false);
  for (std::size_t k = 0; k < nfft; ++k) {
    const std::complex<double> r = A[k] * std::conj(B[k]);
    A[k] = r / std::max(std::abs(r), 1e-12);
  }
  fft_inplace(A, true);
  std::size_t best = 0;
  double best_v = -1e300, mean_abs = 0;
  for (std::size_t lag = 0; lag <= max_lag; ++lag) {
    const double v = A[lag].real();
    mean_abs += std::abs(v);
    if (v > best_v) {
      best_v = v;
      best = lag;
    }
  }
  mean_abs /= static_cast<double>(max_lag + 1);
  res.delay = static_cast<long>(best);
  res.peak_mean_ratio = best_v / std::max(mean_abs, 1e-300);
  res.low_confidence = res.peak_mean_ratio < 4.0;
  // shift far forward by the delay, zero-padded, truncated to mic length
  std::fill(res.aligned.samples.begin(), res.aligned.samples.end(), 0.0);
  for (std::size_t n = best; n < mic.samples.size(); ++n) {
    const std::size_t src = n - best;
    if (src < far.samples.size()) res.aligned.samples[n] = far.samples[src];
  }
  return res;
}

// Per-bin complex ratio (Y -> S) with the denominator floored at 1e-10 and
// the mask magnitude clipped to 10.
inline CRMask crm_compute(const ComplexSpectrogram& Y, const ComplexSpectrogram& S,
                          double denom_floor = 1e-10, double mag_clip = 10.0) {
  if (Y.frames != S.frames || Y.bins != S.bins) throw shape_error("crm_compute shape mismatch");
  CRMask m;
  m.frames = Y.frames;
  m.bins = Y.bins;
  m.re.resize(Y.re.size());
  m.im.resize(Y.im.size());
  for (std::size_t i = 0; i < Y.re.size(); ++i) {
    const double yr = Y.re[i], yi = Y.im[i], sr = S.re[i], si = S.im[i];
    const double den = std::max(yr * yr + yi * yi, denom_floor);
    double mr = (yr * sr + yi * si) / den;
    double mi = (yr * si - yi * sr) / den;
    const double mag = std::hypot(mr, mi);
    if (mag > mag_clip) {
      const double s = mag_clip / mag;
      mr *= s;
      mi *= s;
    }
    m.re[i] = mr;
    m.im[i] = mi;
  }
  return m;
}

// Polar-form application: |S| = |Y|*|M|, phase(S) = phase(Y) + phase(M).
// Algebraically the complex product Y*M.
inline ComplexSpectrogram crm_apply(const ComplexSpectrogram& Y, const CRMask& M) {
  if (Y.frames != M.frames || Y.bins != M.bins) throw shape_error("crm_apply shape mismatch");
  ComplexSpectrogram out = ComplexSpectrogram::zeros(Y.frames, Y.bins, Y.cfg);
  for (std::size_t i = 0; i < Y.re.size(); ++i) {
    const double ymag = std::hypot(Y.re[i], Y.im[i]);
    const double yphs = std::atan2(Y.im[i], Y.re[i]);
    const double mmag = std::hypot(M.re[i], M.im[i]);
    const double mphs = std::atan2(M.im[i], M.re[i]);
    const double mag = ymag * mmag;
    const double phs = yphs + mphs;
    out.re[i] = mag * std::cos(phs);
    out.im[i] = mag * std::sin(phs);
  }
  return out;
}

// Scale-invariant SNR in dB, capped at +60.
inline double si_snr(const std::vector<double>& est, const std::vector<double>& ref,
                     double eps = 1e-8, double cap_db = 60.0) {
  if (est.size() != ref.size()) throw contract_error("si_snr length mismatch");
  double ref_energy = 0;
  for (double v : ref) ref_energy += v * v;
  if (ref_energy == 0.0) throw contract_error("si_snr reference is all zero");
  double dot = 0;
  for (std::size_t i = 0; i < est.size(); ++i) dot += est[i] * ref[i];
  const double a = dot / (ref_energy + eps);
  double tgt = 0, noise = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double t = a * ref[i];
    const double e = est[i] - t;
    tgt += t * t;
    noise += e * e;
  }
  const double val = 10.0 * std::log10((tgt + eps) / (noise + eps));
  return std::min(val, cap_db);
}

inline double si_snr(const Waveform& est, const Waveform& ref) { return si_snr(est.samples, ref.samples); }

// Echo return loss enhancement in dB for far-end single-talk segments. The
// denominator floor is relative (eps * mic energy), which pins est = 0 to
// exactly 100 dB.
inline double erle(const std::vector<double>& mic, const std::vector<double>& est, double eps = 1e-10) {
  if (mic.size() != est.size()) throw contract_error("erle length mismatch");
  double ym = 0, ys = 0;
  for (double v : mic) ym += v * v;
  for (double v : est) ys += v * v;
  if (ym == 0.0) return 0.0;
  return 10.0 * std::log10(ym / (ys + eps * ym));
}

inline double erle(const Waveform& mic, const Waveform& est) { return erle(mic.samples, est.samples); }

enum class RatioKind { SER, SNR };

// Mean power over active samples (magnitude above 1e-4 of the peak).
inline double active_power(const std::vector<double>& x) {
  double peak = 0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak == 0.0) return 0.0;
  const double thr = 1e-4 * peak;
  double acc = 0;
  std::size_t n = 0;
  for (double v : x) {
    if (std::abs(v) > thr) {
      acc += v * v;
      ++n;
    }
  }
  return n ? acc / static_cast<double>(n) : 0.0;
}

// Returns `signal` scaled so that 10*log10(P_ref / P_signal) == target_db
// with powers averaged over active samples.
inline Waveform scale_to_ratio(const Waveform& signal, const Waveform& reference, double target_db,
                               RatioKind kind) {
  (void)kind;  // semantics only; the arithmetic is identical for SER and SNR
  const double ps = active_power(signal.samples);
  const double pr = active_power(reference.samples);
  if (ps == 0.0 || pr == 0.0) throw contract_error("scale_to_ratio on silent input");
  const double gain = std::sqrt(pr / (ps * std::pow(10.0, target_db / 10.0)));
  Waveform out = signal;
  for (double& v : out.samples) v *= gain;
  return out;
}

}  // namespace cmnet
