// include/avsep/fft.hpp
//
// Copyright 2026 avsep authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#ifndef AVSEP_FFT_HPP_
#define AVSEP_FFT_HPP_

#include <cmath>
#include <complex>
#include <vector>

#include "avsep/error.hpp"

namespace avsep {

inline bool is_power_of_two(long n) { return n > 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 FFT. Forward transform is unnormalized; the
// inverse applies the 1/n factor.
inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (!is_power_of_two(static_cast<long>(n)))
    throw InvalidInput("fft length must be a power of two, got " +
                       std::to_string(n));
  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double inv_n = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= inv_n;
  }
}

// Real-input FFT: returns the n/2+1 non-redundant bins.
inline void rfft(const double* x, long n, std::complex<double>* out) {
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) buf[static_cast<std::size_t>(i)] = x[i];
  fft_inplace(buf, false);
  for (long k = 0; k <= n / 2; ++k) out[k] = buf[static_cast<std::size_t>(k)];
}

// Inverse of rfft: reconstructs the length-n real signal from n/2+1 bins
// assuming conjugate symmetry.
inline void irfft(const std::complex<double>* bins, long n, double* out) {
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(n));
  for (long k = 0; k <= n / 2; ++k) buf[static_cast<std::size_t>(k)] = bins[k];
  for (long k = n / 2 + 1; k < n; ++k)
    buf[static_cast<std::size_t>(k)] = std::conj(bins[n - k]);
  fft_inplace(buf, true);
  for (long i = 0; i < n; ++i) out[i] = buf[static_cast<std::size_t>(i)].real();
}

}  // namespace avsep

#endif  // AVSEP_FFT_HPP_
