// include/avsep/metrics.hpp
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

#ifndef AVSEP_METRICS_HPP_
#define AVSEP_METRICS_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "avsep/error.hpp"
#include "avsep/fft.hpp"
#include "avsep/wav_io.hpp"

namespace avsep {

// ---------------------------------------------------------------------------
// BSS eval: SDR / SIR / SAR via orthogonal projections
// ---------------------------------------------------------------------------

struct BssMetrics {
  double sdr = 0.0;
  double sir = 0.0;
  double sar = 0.0;
};

namespace detail {

constexpr double kDbCap = 100.0;

inline double capped_db_ratio(double num, double den) {
  if (num <= 0.0) return -kDbCap;
  if (den <= 0.0) return kDbCap;
  double db = 10.0 * std::log10(num / den);
  if (db > kDbCap) db = kDbCap;
  if (db < -kDbCap) db = -kDbCap;
  return db;
}

}  // namespace detail

// Decomposes each estimate into target / interference / artifact energies:
//   s_target = projection of the estimate onto its own reference,
//   e_interf = projection onto span(all references) minus s_target,
//   e_artif  = residual outside the reference span.
// Ratios are reported in dB, capped at +-100.
inline std::vector<BssMetrics> bss_eval(const std::vector<Waveform>& references,
                                        const std::vector<Waveform>& estimates) {
  if (references.size() != estimates.size() || references.empty())
    throw ShapeError("bss_eval: need equal, non-zero source counts");
  const long n = references[0].size();
  for (const auto& r : references)
    if (r.size() != n) throw ShapeError("bss_eval: reference length mismatch");
  for (const auto& e : estimates)
    if (e.size() != n) throw ShapeError("bss_eval: estimate length mismatch");

  const int k = static_cast<int>(references.size());
  Eigen::MatrixXd R(n, k);
  for (int j = 0; j < k; ++j) {
    const auto& s = references[static_cast<std::size_t>(j)].samples;
    for (long i = 0; i < n; ++i) R(i, j) = s[static_cast<std::size_t>(i)];
    if (R.col(j).squaredNorm() <= 0.0)
      throw DegenerateReference("bss_eval: reference " + std::to_string(j) +
                                " has zero energy");
  }
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b)
      if ((R.col(a) - R.col(b)).squaredNorm() == 0.0)
        throw DegenerateReference("bss_eval: references " + std::to_string(a) +
                                  " and " + std::to_string(b) + " are identical");

  const Eigen::MatrixXd gram = R.transpose() * R;  // k x k
  Eigen::LDLT<Eigen::MatrixXd> solver(gram);

  std::vector<BssMetrics> out(static_cast<std::size_t>(k));
  Eigen::VectorXd est(n);
  for (int j = 0; j < k; ++j) {
    const auto& e = estimates[static_cast<std::size_t>(j)].samples;
    for (long i = 0; i < n; ++i) est(i) = e[static_cast<std::size_t>(i)];

    const double own = R.col(j).squaredNorm();
    const Eigen::VectorXd s_target = (est.dot(R.col(j)) / own) * R.col(j);
    const Eigen::VectorXd coef = solver.solve(R.transpose() * est);
    const Eigen::VectorXd e_span = R * coef;
    const Eigen::VectorXd e_interf = e_span - s_target;
    const Eigen::VectorXd e_artif = est - e_span;

    const double p_target = s_target.squaredNorm();
    const double p_interf = e_interf.squaredNorm();
    const double p_artif = e_artif.squaredNorm();

    BssMetrics m;
    m.sdr = detail::capped_db_ratio(p_target, p_interf + p_artif);
    m.sir = detail::capped_db_ratio(p_target, p_interf);
    m.sar = detail::capped_db_ratio((s_target + e_interf).squaredNorm(), p_artif);
    out[static_cast<std::size_t>(j)] = m;
  }
  return out;
}

// ---------------------------------------------------------------------------
// STOI
// ---------------------------------------------------------------------------

namespace detail {

// Rational polyphase resampler with a Hann-windowed sinc lowpass.
inline std::vector<double> resample(const std::vector<double>& x, long fs_in,
                                    long fs_out) {
  if (fs_in == fs_out) return x;
  const long g = std::gcd(fs_in, fs_out);
  const long up = fs_out / g;
  const long down = fs_in / g;
  const long m = std::max(up, down);
  const long half = 10 * m;  // half-width in upsampled samples
  const double fc = 0.5 / static_cast<double>(m);  // cycles per upsampled sample

  const long n_in = static_cast<long>(x.size());
  const long n_out = (n_in * up) / down;
  std::vector<double> y(static_cast<std::size_t>(n_out), 0.0);
  for (long n = 0; n < n_out; ++n) {
    const long center = n * down;  // position in the upsampled grid
    // contributing input samples: m_in with |center - m_in*up| <= half
    const long lo = (center - half + up - 1) / up;
    const long hi = (center + half) / up;
    double acc = 0.0;
    for (long mi = std::max(0L, lo); mi <= std::min(n_in - 1, hi); ++mi) {
      const double t = static_cast<double>(center - mi * up);
      double h;
      if (t == 0.0) {
        h = 2.0 * fc;
      } else {
        h = std::sin(2.0 * M_PI * fc * t) / (M_PI * t);
      }
      const double w = 0.5 * (1.0 + std::cos(M_PI * t / static_cast<double>(half)));
      acc += x[static_cast<std::size_t>(mi)] * h * w;
    }
    y[static_cast<std::size_t>(n)] = acc * static_cast<double>(up);
  }
  return y;
}

// Symmetric Hann as used by the reference intelligibility metric.
inline std::vector<double> hanning_sym(long n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i)
    w[static_cast<std::size_t>(i)] =
        0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(i + 1) /
                              static_cast<double>(n + 1)));
  return w;
}

}  // namespace detail

// Short-time objective intelligibility (standard parameters: 10 kHz,
// 15 one-third octave bands from 150 Hz, 256-sample frames, 30-frame
// segments, -15 dB clipping, 40 dB silent-frame threshold).
inline double stoi(const Waveform& clean, const Waveform& processed) {
  if (clean.size() != processed.size())
    throw ShapeError("stoi: length mismatch");
  if (clean.sample_rate != processed.sample_rate)
    throw ShapeError("stoi: sample rate mismatch");
  if (clean.duration_seconds() < 0.384)
    throw InvalidInput("stoi: need at least 384 ms of signal");

  const long fs = 10000;
  const long frame_len = 256;
  const long hop = 128;
  const long fft_len = 512;
  const long n_bands = 15;
  const double min_cf = 150.0;
  const long seg_len = 30;
  const double beta_clip = std::pow(10.0, 15.0 / 20.0);  // -15 dB lower SDR bound
  const double dyn_range = 40.0;

  std::vector<double> x = detail::resample(clean.samples, clean.sample_rate, fs);
  std::vector<double> y =
      detail::resample(processed.samples, processed.sample_rate, fs);

  // Remove silent frames, judged on the clean signal.
  const auto win = detail::hanning_sym(frame_len);
  const long n_frames_all =
      static_cast<long>(x.size()) < frame_len
          ? 0
          : 1 + (static_cast<long>(x.size()) - frame_len) / hop;
  if (n_frames_all <= 0) throw InvalidInput("stoi: signal too short after resampling");

  std::vector<double> frame_db(static_cast<std::size_t>(n_frames_all));
  double max_db = -1e300;
  for (long f = 0; f < n_frames_all; ++f) {
    double e = 0.0;
    for (long i = 0; i < frame_len; ++i) {
      const double v = x[static_cast<std::size_t>(f * hop + i)] *
                       win[static_cast<std::size_t>(i)];
      e += v * v;
    }
    const double db = 10.0 * std::log10(e + 1e-300);
    frame_db[static_cast<std::size_t>(f)] = db;
    max_db = std::max(max_db, db);
  }
  if (max_db <= 10.0 * std::log10(1e-300) + 1.0)
    throw SilentReference("stoi: clean signal is silent");

  std::vector<long> kept;
  for (long f = 0; f < n_frames_all; ++f)
    if (frame_db[static_cast<std::size_t>(f)] > max_db - dyn_range) kept.push_back(f);
  if (kept.empty()) throw SilentReference("stoi: no frames above the silence threshold");

  // Overlap-add of the kept windowed frames at 50% hop.
  const long n_kept = static_cast<long>(kept.size());
  const long recon_len = (n_kept - 1) * hop + frame_len;
  std::vector<double> xs(static_cast<std::size_t>(recon_len), 0.0);
  std::vector<double> ys(static_cast<std::size_t>(recon_len), 0.0);
  for (long j = 0; j < n_kept; ++j) {
    const long src = kept[static_cast<std::size_t>(j)] * hop;
    const long dst = j * hop;
    for (long i = 0; i < frame_len; ++i) {
      const double wv = win[static_cast<std::size_t>(i)];
      xs[static_cast<std::size_t>(dst + i)] += x[static_cast<std::size_t>(src + i)] * wv;
      ys[static_cast<std::size_t>(dst + i)] += y[static_cast<std::size_t>(src + i)] * wv;
    }
  }

  // One-third octave band magnitudes over STFT frames.
  const long n_frames = 1 + (recon_len - frame_len) / hop;
  if (n_frames < seg_len)
    throw InvalidInput("stoi: fewer than 30 analysis frames after silence removal");

  const long bins = fft_len / 2 + 1;
  std::vector<double> band_lo(static_cast<std::size_t>(n_bands));
  std::vector<double> band_hi(static_cast<std::size_t>(n_bands));
  for (long b = 0; b < n_bands; ++b) {
    const double cf = min_cf * std::pow(2.0, static_cast<double>(b) / 3.0);
    band_lo[static_cast<std::size_t>(b)] = cf / std::pow(2.0, 1.0 / 6.0);
    band_hi[static_cast<std::size_t>(b)] = cf * std::pow(2.0, 1.0 / 6.0);
  }
  auto bin_freq = [&](long k) {
    return static_cast<double>(k) * static_cast<double>(fs) /
           static_cast<double>(fft_len);
  };
  // Snap band edges to the nearest FFT bin, covering [lo_bin, hi_bin).
  std::vector<long> lo_bin(static_cast<std::size_t>(n_bands));
  std::vector<long> hi_bin(static_cast<std::size_t>(n_bands));
  for (long b = 0; b < n_bands; ++b) {
    long best_lo = 0, best_hi = 0;
    double d_lo = 1e300, d_hi = 1e300;
    for (long k = 0; k < bins; ++k) {
      const double dl = std::abs(bin_freq(k) - band_lo[static_cast<std::size_t>(b)]);
      const double dh = std::abs(bin_freq(k) - band_hi[static_cast<std::size_t>(b)]);
      if (dl < d_lo) { d_lo = dl; best_lo = k; }
      if (dh < d_hi) { d_hi = dh; best_hi = k; }
    }
    lo_bin[static_cast<std::size_t>(b)] = best_lo;
    hi_bin[static_cast<std::size_t>(b)] = best_hi;
  }

  std::vector<double> xb(static_cast<std::size_t>(n_bands * n_frames));
  std::vector<double> yb(static_cast<std::size_t>(n_bands * n_frames));
  std::vector<double> frame(static_cast<std::size_t>(fft_len), 0.0);
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(bins));
  for (long f = 0; f < n_frames; ++f) {
    for (int which = 0; which < 2; ++which) {
      const auto& src = which == 0 ? xs : ys;
      auto& dst = which == 0 ? xb : yb;
      std::fill(frame.begin(), frame.end(), 0.0);
      for (long i = 0; i < frame_len; ++i)
        frame[static_cast<std::size_t>(i)] =
            src[static_cast<std::size_t>(f * hop + i)] * win[static_cast<std::size_t>(i)];
      rfft(frame.data(), fft_len, spec.data());
      for (long b = 0; b < n_bands; ++b) {
        double e = 0.0;
        for (long k = lo_bin[static_cast<std::size_t>(b)];
             k < hi_bin[static_cast<std::size_t>(b)]; ++k)
          e += std::norm(spec[static_cast<std::size_t>(k)]);
        dst[static_cast<std::size_t>(b * n_frames + f)] = std::sqrt(e);
      }
    }
  }

  // Clipped, normalized correlation over 30-frame sliding segments.
  double total = 0.0;
  long count = 0;
  for (long m = seg_len; m <= n_frames; ++m) {
    for (long b = 0; b < n_bands; ++b) {
      const double* xv = &xb[static_cast<std::size_t>(b * n_frames + m - seg_len)];
      const double* yv = &yb[static_cast<std::size_t>(b * n_frames + m - seg_len)];
      double ex = 0.0, ey = 0.0;
      for (long i = 0; i < seg_len; ++i) {
        ex += xv[i] * xv[i];
        ey += yv[i] * yv[i];
      }
      const double alpha = ey > 0.0 ? std::sqrt(ex / ey) : 0.0;
      double sx = 0.0, sy = 0.0;
      double buf_y[30];
      for (long i = 0; i < seg_len; ++i) {
        const double clipped = std::min(alpha * yv[i], xv[i] * (1.0 + beta_clip));
        buf_y[i] = clipped;
        sx += xv[i];
        sy += clipped;
      }
      const double mx = sx / seg_len, my = sy / seg_len;
      double num = 0.0, dx = 0.0, dy = 0.0;
      for (long i = 0; i < seg_len; ++i) {
        const double a = xv[i] - mx;
        const double c = buf_y[i] - my;
        num += a * c;
        dx += a * a;
        dy += c * c;
      }
      const double den = std::sqrt(dx * dy);
      total += den > 0.0 ? num / den : 0.0;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Cross-modal verification: AUC and EER
// ---------------------------------------------------------------------------

struct VerificationReport {
  double auc = 0.0;
  double eer = 0.0;
  long n_pairs = 0;
  double threshold_at_eer = 0.0;
};

// Scores are similarities in [0, 1]; labels mark same-person pairs. AUC is
// the exhaustive positive-vs-negative comparison (ties count one half); EER
// is found by linear interpolation over the score sweep.
inline VerificationReport verification_from_scores(const std::vector<double>& scores,
                                                   const std::vector<bool>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw InvalidInput("verification: need matching, non-empty scores/labels");
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i)
    (labels[i] ? pos : neg).push_back(scores[i]);
  if (pos.empty() || neg.empty())
    throw InvalidInput("verification: both classes must be present");

  double won = 0.0;
  for (double p : pos)
    for (double q : neg) {
      if (p > q)
        won += 1.0;
      else if (p == q)
        won += 0.5;
    }
  const double auc = won / (static_cast<double>(pos.size()) *
                            static_cast<double>(neg.size()));

  // EER: accept when score >= threshold. FAR falls and FRR rises with the
  // threshold; interpolate where they cross.
  std::vector<double> thresholds = scores;
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());
  thresholds.insert(thresholds.begin(), thresholds.front() - 1.0);
  thresholds.push_back(thresholds.back() + 1.0);

  auto far_at = [&](double t) {
    long a = 0;
    for (double q : neg)
      if (q >= t) ++a;
    return static_cast<double>(a) / static_cast<double>(neg.size());
  };
  auto frr_at = [&](double t) {
    long r = 0;
    for (double p : pos)
      if (p < t) ++r;
    return static_cast<double>(r) / static_cast<double>(pos.size());
  };

  VerificationReport rep;
  rep.n_pairs = static_cast<long>(scores.size());
  rep.auc = auc;

  double prev_t = thresholds.front();
  double prev_diff = far_at(prev_t) - frr_at(prev_t);  // starts >= 0
  rep.eer = 0.5;
  rep.threshold_at_eer = prev_t;
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    const double t = thresholds[i];
    const double diff = far_at(t) - frr_at(t);
    if (diff <= 0.0) {
      // crossing between prev_t and t
      const double denom = prev_diff - diff;
      const double frac = denom > 0.0 ? prev_diff / denom : 0.0;
      const double t_star = prev_t + frac * (t - prev_t);
      const double far0 = far_at(prev_t), far1 = far_at(t);
      const double frr0 = frr_at(prev_t), frr1 = frr_at(t);
      const double far_star = far0 + frac * (far1 - far0);
      const double frr_star = frr0 + frac * (frr1 - frr0);
      rep.eer = 0.5 * (far_star + frr_star);
      rep.threshold_at_eer = t_star;
      break;
    }
    prev_t = t;
    prev_diff = diff;
  }
  return rep;
}

// Face/voice pair verification. Each index i is one (face, voice) trial;
// the score is 1 - cosine_distance/2, mapped into [0, 1].
inline VerificationReport verification_scores(
    const std::vector<std::vector<double>>& face_embs,
    const std::vector<std::vector<double>>& voice_embs,
    const std::vector<bool>& labels) {
  if (face_embs.size() != voice_embs.size() || face_embs.size() != labels.size())
    throw InvalidInput("verification_scores: input sizes must match");
  std::vector<double> scores(face_embs.size());
  for (std::size_t i = 0; i < face_embs.size(); ++i) {
    const auto& f = face_embs[i];
    const auto& v = voice_embs[i];
    if (f.size() != v.size() || f.empty())
      throw ShapeError("verification_scores: embedding dim mismatch");
    double dot = 0.0, nf = 0.0, nv = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) {
      dot += f[k] * v[k];
      nf += f[k] * f[k];
      nv += v[k] * v[k];
    }
    const double denom = std::sqrt(nf * nv);
    const double cosine = denom > 0.0 ? dot / denom : 0.0;
    const double dist = 1.0 - cosine;        // cosine distance in [0, 2]
    scores[i] = 1.0 - dist / 2.0;            // similarity in [0, 1]
  }
  return verification_from_scores(scores, labels);
}

}  // namespace avsep

#endif  // AVSEP_METRICS_HPP_
