// Copyright 2026 The cmnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Iterative radix-2 complex FFT, plus the real-input helpers used by the
// STFT front end and GCC-PHAT. Power-of-two sizes only.

#pragma once

#include <complex>

#include "cmnet/common.hpp"

namespace cmnet {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (!is_pow2(n)) throw contract_error("fft size must be a power of two, got " + std::to_string(n));
  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * 3.141592653589793238462643383279502884 / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= inv;
  }
}

// DFT of a real frame; returns bins 0..nfft/2.
inline std::vector<std::complex<double>> rfft(const double* x, std::size_t len, std::size_t nfft) {
  std::vector<std::complex<double>> a(nfft, {0.0, 0.0});
  for (std::size_t i = 0; i < len && i < nfft; ++i) a[i] = {x[i], 0.0};
  fft_inplace(a, false);
  a.resize(nfft / 2 + 1);
  return a;
}

// Inverse of rfft under the real-signal convention: the imaginary parts of
// bin 0 and bin nfft/2 do not contribute (they are dropped before the
// Hermitian extension), so the output is exactly real.
inline std::vector<double> irfft(const std::complex<double>* bins, std::size_t nbins, std::size_t nfft) {
  if (nbins != nfft / 2 + 1) throw contract_error("irfft bin count mismatch");
  std::vector<std::complex<double>> a(nfft);
  a[0] = {bins[0].real(), 0.0};
  a[nfft / 2] = {bins[nfft / 2].real(), 0.0};
  for (std::size_t k = 1; k < nfft / 2; ++k) {
    a[k] = bins[k];
    a[nfft - k] = std::conj(bins[k]);
  }
  fft_inplace(a, true);
  std::vector<double> out(nfft);
  for (std::size_t i = 0; i < nfft; ++i) out[i] = a[i].real();
  return out;
}

}  // namespace cmnet
