// include/avsep/dsp.hpp
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

#ifndef AVSEP_DSP_HPP_
#define AVSEP_DSP_HPP_

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "avsep/error.hpp"
#include "avsep/fft.hpp"
#include "avsep/tensor.hpp"
#include "avsep/wav_io.hpp"

namespace avsep {

enum class WindowKind { Hann };

struct StftConfig {
  long window_length = 400;
  long hop = 160;
  long fft_size = 512;
  WindowKind window = WindowKind::Hann;
  bool center_pad = true;

  void validate() const {
    if (hop <= 0) throw InvalidInput("stft hop must be positive");
    if (window_length > fft_size)
      throw InvalidInput("stft window_length must be <= fft_size");
    if (hop > window_length)
      throw InvalidInput("stft hop must be <= window_length");
    if (!is_power_of_two(fft_size))
      throw InvalidInput("stft fft_size must be a power of two");
  }

  long freq_bins() const { return fft_size / 2 + 1; }

  bool operator==(const StftConfig& o) const {
    return window_length == o.window_length && hop == o.hop &&
           fft_size == o.fft_size && window == o.window &&
           center_pad == o.center_pad;
  }
};

// Periodic Hann, the standard analysis window for STFT processing.
inline std::vector<double> make_window(const StftConfig& cfg) {
  std::vector<double> w(static_cast<std::size_t>(cfg.window_length));
  const double n = static_cast<double>(cfg.window_length);
  for (long i = 0; i < cfg.window_length; ++i)
    w[static_cast<std::size_t>(i)] =
        0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(i) / n));
  return w;
}

// F x T complex grid stored as separate real/imag planes.
struct ComplexSpectrogram {
  Tensor real;  // (F, T)
  Tensor imag;  // (F, T)
  StftConfig config;

  long freq_bins() const { return real.ndim() == 2 ? real.dim(0) : 0; }
  long frames() const { return real.ndim() == 2 ? real.dim(1) : 0; }

  static ComplexSpectrogram zeros(long freq, long frames, StftConfig cfg = {}) {
    ComplexSpectrogram s;
    s.real = Tensor({freq, frames});
    s.imag = Tensor({freq, frames});
    s.config = cfg;
    return s;
  }

  void check_consistent(const char* what) const {
    check_same_shape(real, imag, what);
    if (real.ndim() != 2) throw ShapeError(std::string(what) + ": expected F x T grid");
  }
};

// Bounded complex ratio mask; components live in [-bound, bound].
struct ComplexMask {
  Tensor real;  // (F, T)
  Tensor imag;  // (F, T)
  double bound = 5.0;

  long freq_bins() const { return real.ndim() == 2 ? real.dim(0) : 0; }
  long frames() const { return real.ndim() == 2 ? real.dim(1) : 0; }

  static ComplexMask zeros(long freq, long frames, double bound = 5.0) {
    ComplexMask m;
    m.real = Tensor({freq, frames});
    m.imag = Tensor({freq, frames});
    m.bound = bound;
    return m;
  }
};

namespace detail {

inline void check_waveform(const Waveform& w, const char* what) {
  if (w.samples.empty()) throw InvalidInput(std::string(what) + ": empty waveform");
  if (w.sample_rate <= 0)
    throw InvalidInput(std::string(what) + ": sample_rate must be positive");
  for (double v : w.samples)
    if (!std::isfinite(v))
      throw InvalidInput(std::string(what) + ": non-finite sample");
}

// Reflect padding without repeating the edge sample, matching the common
// centered-STFT convention.
inline std::vector<double> reflect_pad(const std::vector<double>& x, long pad) {
  const long n = static_cast<long>(x.size());
  if (n <= pad)
    throw InvalidInput("signal too short for reflect padding (need > " +
                       std::to_string(pad) + " samples, got " +
                       std::to_string(n) + ")");
  std::vector<double> out(static_cast<std::size_t>(n + 2 * pad));
  for (long i = 0; i < pad; ++i)
    out[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(pad - i)];
  for (long i = 0; i < n; ++i)
    out[static_cast<std::size_t>(pad + i)] = x[static_cast<std::size_t>(i)];
  for (long i = 0; i < pad; ++i)
    out[static_cast<std::size_t>(pad + n + i)] =
        x[static_cast<std::size_t>(n - 2 - i)];
  return out;
}

}  // namespace detail

inline ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg = {}) {
  cfg.validate();
  detail::check_waveform(w, "stft");

  const long n = w.size();
  const long pad = cfg.center_pad ? cfg.window_length / 2 : 0;
  std::vector<double> x =
      cfg.center_pad ? detail::reflect_pad(w.samples, pad) : w.samples;

  long frames;
  if (cfg.center_pad) {
    frames = 1 + n / cfg.hop;
  } else {
    if (n < cfg.window_length)
      throw InvalidInput("stft: signal shorter than window");
    frames = 1 + (n - cfg.window_length) / cfg.hop;
  }

  const std::vector<double> win = make_window(cfg);
  const long bins = cfg.freq_bins();
  ComplexSpectrogram spec = ComplexSpectrogram::zeros(bins, frames, cfg);

  std::vector<double> frame(static_cast<std::size_t>(cfg.fft_size), 0.0);
  std::vector<std::complex<double>> out(static_cast<std::size_t>(bins));
  for (long t = 0; t < frames; ++t) {
    const long start = t * cfg.hop;
    for (long i = 0; i < cfg.window_length; ++i)
      frame[static_cast<std::size_t>(i)] =
          x[static_cast<std::size_t>(start + i)] * win[static_cast<std::size_t>(i)];
    // trailing fft_size - window_length entries stay zero
    rfft(frame.data(), cfg.fft_size, out.data());
    for (long k = 0; k < bins; ++k) {
      spec.real.at({k, t}) = out[static_cast<std::size_t>(k)].real();
      spec.imag.at({k, t}) = out[static_cast<std::size_t>(k)].imag();
    }
  }
  return spec;
}

// Least-squares overlap-add synthesis: windowed frames are summed and the
// result divided by the accumulated squared window. Exact inverse of stft
// up to floating point wherever the window power is non-negligible.
inline Waveform istft(const ComplexSpectrogram& s, const StftConfig& cfg,
                      long out_length, int sample_rate = 16000) {
  cfg.validate();
  s.check_consistent("istft");
  if (s.freq_bins() != cfg.freq_bins())
    throw ShapeError("istft: spectrogram has " + std::to_string(s.freq_bins()) +
                     " bins, config implies " + std::to_string(cfg.freq_bins()));
  const long frames = s.frames();
  if (out_length < 0) throw InvalidInput("istft: negative out_length");
  if (out_length > frames * cfg.hop + (cfg.center_pad ? 0 : cfg.window_length))
    throw InvalidInput("istft: out_length exceeds synthesizable range");

  const std::vector<double> win = make_window(cfg);
  const long pad = cfg.center_pad ? cfg.window_length / 2 : 0;
  const long total = (frames - 1) * cfg.hop + cfg.window_length;
  std::vector<double> acc(static_cast<std::size_t>(total), 0.0);
  std::vector<double> wsum(static_cast<std::size_t>(total), 0.0);

  std::vector<std::complex<double>> bins(static_cast<std::size_t>(cfg.freq_bins()));
  std::vector<double> frame(static_cast<std::size_t>(cfg.fft_size));
  for (long t = 0; t < frames; ++t) {
    for (long k = 0; k < cfg.freq_bins(); ++k)
      bins[static_cast<std::size_t>(k)] = {s.real.at({k, t}), s.imag.at({k, t})};
    irfft(bins.data(), cfg.fft_size, frame.data());
    const long start = t * cfg.hop;
    for (long i = 0; i < cfg.window_length; ++i) {
      const double wv = win[static_cast<std::size_t>(i)];
      acc[static_cast<std::size_t>(start + i)] +=
          frame[static_cast<std::size_t>(i)] * wv;
      wsum[static_cast<std::size_t>(start + i)] += wv * wv;
    }
  }

  Waveform out;
  out.sample_rate = sample_rate;
  out.samples.assign(static_cast<std::size_t>(out_length), 0.0);
  for (long i = 0; i < out_length; ++i) {
    const long j = i + pad;
    if (j >= total) break;  // beyond synthesized range: stays zero
    const double ws = wsum[static_cast<std::size_t>(j)];
    if (ws < 1e-12) {
      // Window tapers reach zero right at the signal boundary; interior
      // samples must always be covered.
      const bool interior =
          i >= cfg.window_length && i < out_length - cfg.window_length;
      if (interior)
        throw SynthesisError("window power sum below 1e-12 at sample " +
                             std::to_string(i));
      out.samples[static_cast<std::size_t>(i)] = 0.0;
    } else {
      out.samples[static_cast<std::size_t>(i)] =
          acc[static_cast<std::size_t>(j)] / ws;
    }
  }
  return out;
}

inline double rms(const Waveform& w) {
  if (w.samples.empty()) return 0.0;
  double e = 0.0;
  for (double v : w.samples) e += v * v;
  return std::sqrt(e / static_cast<double>(w.samples.size()));
}

// Scales b so that RMS(a) / RMS(scale*b) hits the requested SNR, then sums.
// snr_db = +inf is the "no second source" sentinel and yields scale 0.
inline std::pair<Waveform, double> mix_waveforms(const Waveform& a,
                                                 const Waveform& b,
                                                 double snr_db) {
  detail::check_waveform(a, "mix_waveforms");
  detail::check_waveform(b, "mix_waveforms");
  if (a.samples.size() != b.samples.size() || a.sample_rate != b.sample_rate)
    throw ShapeError("mix_waveforms: length/rate mismatch (" +
                     std::to_string(a.samples.size()) + "@" +
                     std::to_string(a.sample_rate) + " vs " +
                     std::to_string(b.samples.size()) + "@" +
                     std::to_string(b.sample_rate) + ")");

  double scale = 0.0;
  if (!std::isinf(snr_db)) {
    const double rms_a = rms(a);
    const double rms_b = rms(b);
    if (rms_b <= 0.0)
      throw DegenerateSource("mix_waveforms: silent second source with finite SNR");
    scale = rms_a / (rms_b * std::pow(10.0, snr_db / 20.0));
  }

  Waveform mix;
  mix.sample_rate = a.sample_rate;
  mix.samples.resize(a.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i)
    mix.samples[i] = a.samples[i] + scale * b.samples[i];
  return {std::move(mix), scale};
}

// Ground-truth complex ratio mask: S * conj(X) / (|X|^2 + eps), with the
// real and imaginary parts clamped independently to [-K, K].
inline ComplexMask compute_cirm(const ComplexSpectrogram& source,
                                const ComplexSpectrogram& mixture, double K,
                                double eps = 1e-8) {
  source.check_consistent("compute_cirm source");
  mixture.check_consistent("compute_cirm mixture");
  check_same_shape(source.real, mixture.real, "compute_cirm");
  if (K <= 0.0) throw InvalidInput("compute_cirm: K must be positive");

  ComplexMask m = ComplexMask::zeros(source.freq_bins(), source.frames(), K);
  const long n = source.real.numel();
  const double* sr = source.real.data();
  const double* si = source.imag.data();
  const double* xr = mixture.real.data();
  const double* xi = mixture.imag.data();
  double* mr = m.real.data();
  double* mi = m.imag.data();
  for (long i = 0; i < n; ++i) {
    const double denom = xr[i] * xr[i] + xi[i] * xi[i] + eps;
    double re = (sr[i] * xr[i] + si[i] * xi[i]) / denom;
    double im = (si[i] * xr[i] - sr[i] * xi[i]) / denom;
    if (re > K) re = K;
    if (re < -K) re = -K;
    if (im > K) im = K;
    if (im < -K) im = -K;
    mr[i] = re;
    mi[i] = im;
  }
  return m;
}

// Element-wise complex product X * M.
inline ComplexSpectrogram apply_mask(const ComplexSpectrogram& x,
                                     const ComplexMask& m) {
  x.check_consistent("apply_mask");
  check_same_shape(x.real, m.real, "apply_mask");
  check_same_shape(m.real, m.imag, "apply_mask mask");

  ComplexSpectrogram out = ComplexSpectrogram::zeros(x.freq_bins(), x.frames(), x.config);
  const long n = x.real.numel();
  const double* xr = x.real.data();
  const double* xi = x.imag.data();
  const double* mr = m.real.data();
  const double* mi = m.imag.data();
  double* yr = out.real.data();
  double* yi = out.imag.data();
  for (long i = 0; i < n; ++i) {
    yr[i] = xr[i] * mr[i] - xi[i] * mi[i];
    yi[i] = xr[i] * mi[i] + xi[i] * mr[i];
  }
  return out;
}

// Drops the highest frequency bin, e.g. 257 x T -> 256 x T for the vocal
// attributes network input.
inline ComplexSpectrogram crop_for_embedding(const ComplexSpectrogram& s) {
  s.check_consistent("crop_for_embedding");
  const long f = s.freq_bins();
  if (f < 257)
    throw ShapeError("crop_for_embedding: need >= 257 frequency bins, got " +
                     std::to_string(f));
  const long t = s.frames();
  ComplexSpectrogram out = ComplexSpectrogram::zeros(f - 1, t, s.config);
  for (long k = 0; k + 1 < f; ++k)
    for (long j = 0; j < t; ++j) {
      out.real.at({k, j}) = s.real.at({k, j});
      out.imag.at({k, j}) = s.imag.at({k, j});
    }
  return out;
}

}  // namespace avsep

#endif  // AVSEP_DSP_HPP_
