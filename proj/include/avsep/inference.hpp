// include/avsep/inference.hpp
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
//
// Sliding-window separation: fixed-length windows are masked independently
// and blended back together. Mask prediction is pluggable so the trained
// model, a ground-truth-mask oracle, and the identity baseline all drive the
// same pipeline.

#ifndef AVSEP_INFERENCE_HPP_
#define AVSEP_INFERENCE_HPP_

#include <cmath>
#include <memory>
#include <vector>

#include "avsep/dsp.hpp"
#include "avsep/error.hpp"
#include "avsep/metrics.hpp"
#include "avsep/model.hpp"

namespace avsep {

struct WindowConfig {
  double window_seconds = 2.55;
  double hop_seconds = 1.275;
  enum class Blend { crossfade_hann, overlap_average } blend = Blend::crossfade_hann;

  void validate() const {
    if (hop_seconds <= 0 || hop_seconds > window_seconds)
      throw InvalidInput("window blending needs 0 < hop <= window");
  }
  std::string blend_name() const {
    return blend == Blend::crossfade_hann ? "crossfade_hann" : "overlap_average";
  }
};

// Per-speaker visual material covering a whole clip.
struct SpeakerVisualStream {
  Tensor mouth_rois;  // (M, H, W), M frames over the clip
  Tensor face_image;  // (3, S, S)
  long n_frames() const { return mouth_rois.ndim() == 3 ? mouth_rois.dim(0) : 0; }
};

struct SeparationResult {
  std::vector<Waveform> sources;
  // window_masks[w][k]: mask for speaker k in window w (kept on request)
  std::vector<std::vector<ComplexMask>> window_masks;
  std::vector<long> window_starts;
  double window_seconds = 0, hop_seconds = 0;
  std::string blend;
};

struct WindowContext {
  long start_sample = 0;
  long window_samples = 0;
  int sample_rate = 16000;
  long window_index = 0;
};

struct MaskPredictor {
  virtual ~MaskPredictor() = default;
  virtual int n_speakers() const = 0;
  virtual std::vector<ComplexMask> predict(const ComplexSpectrogram& mix_spec,
                                           const WindowContext& ctx) = 0;
};

// Drives the trained separator. In dedicated mode both speakers go through
// one pass; in general mode each speaker is separated independently.
class ModelPredictor : public MaskPredictor {
 public:
  ModelPredictor(const SeparatorModel& model,
                 std::vector<SpeakerVisualStream> streams, int fps = 25)
      : model_(model), streams_(std::move(streams)), fps_(fps) {
    const auto& cfg = model_.config();
    const bool dedicated = cfg.mode == SeparatorMode::dedicated_two_speaker;
    if (dedicated && streams_.size() != 2)
      throw ConfigError("dedicated two-speaker model needs exactly 2 visual streams");
    if (streams_.empty())
      throw ConfigError("model predictor needs at least one visual stream");
  }

  int n_speakers() const override { return static_cast<int>(streams_.size()); }

  std::vector<ComplexMask> predict(const ComplexSpectrogram& mix_spec,
                                   const WindowContext& ctx) override {
    const auto& cfg = model_.config();
    std::vector<FaceTrackInput> vis;
    for (const auto& s : streams_) vis.push_back(slice(s, ctx));
    if (cfg.mode == SeparatorMode::dedicated_two_speaker)
      return model_.predict_masks(mix_spec, vis[0], &vis[1]);
    std::vector<ComplexMask> masks;
    for (const auto& v : vis) {
      auto m = model_.predict_masks(mix_spec, v, nullptr);
      masks.push_back(std::move(m[0]));
    }
    return masks;
  }

 private:
  FaceTrackInput slice(const SpeakerVisualStream& s, const WindowContext& ctx) const {
    const auto& cfg = model_.config();
    const long n = cfg.n_time_steps;
    long first = std::lround(static_cast<double>(ctx.start_sample) /
                             ctx.sample_rate * fps_);
    first = std::max(0L, std::min(first, s.n_frames() - n));
    if (first < 0)
      throw AlignmentError("visual stream has fewer frames than one window");
    FaceTrackInput f;
    const long h = s.mouth_rois.dim(1), w = s.mouth_rois.dim(2);
    f.mouth_rois = Tensor({n, h, w});
    std::copy(s.mouth_rois.data() + first * h * w,
              s.mouth_rois.data() + (first + n) * h * w, f.mouth_rois.data());
    f.face_image = s.face_image;
    return f;
  }

  const SeparatorModel& model_;
  std::vector<SpeakerVisualStream> streams_;
  int fps_;
};

// Emits the ground-truth complex ratio masks; the end-to-end oracle for the
// separation pipeline.
class OracleMaskPredictor : public MaskPredictor {
 public:
  OracleMaskPredictor(std::vector<Waveform> sources, StftConfig cfg = {},
                      double bound = 5.0, double eps = 1e-8)
      : sources_(std::move(sources)), cfg_(cfg), bound_(bound), eps_(eps) {}

  int n_speakers() const override { return static_cast<int>(sources_.size()); }

  std::vector<ComplexMask> predict(const ComplexSpectrogram& mix_spec,
                                   const WindowContext& ctx) override {
    std::vector<ComplexMask> out;
    for (const auto& s : sources_) {
      Waveform seg;
      seg.sample_rate = s.sample_rate;
      seg.samples.assign(
          s.samples.begin() + ctx.start_sample,
          s.samples.begin() + ctx.start_sample + ctx.window_samples);
      ComplexSpectrogram src = stft(seg, cfg_);
      out.push_back(compute_cirm(src, mix_spec, bound_, eps_));
    }
    return out;
  }

 private:
  std::vector<Waveform> sources_;
  StftConfig cfg_;
  double bound_, eps_;
};

// Unit mask: the estimate equals the mixture (comparison floor).
class IdentityPredictor : public MaskPredictor {
 public:
  explicit IdentityPredictor(int n) : n_(n) {}
  int n_speakers() const override { return n_; }
  std::vector<ComplexMask> predict(const ComplexSpectrogram& mix_spec,
                                   const WindowContext&) override {
    std::vector<ComplexMask> out;
    for (int k = 0; k < n_; ++k) {
      ComplexMask m = ComplexMask::zeros(mix_spec.freq_bins(), mix_spec.frames());
      m.real.fill(1.0);
      out.push_back(std::move(m));
    }
    return out;
  }

 private:
  int n_;
};

namespace detail {

// Blend weight profile for one window. Interior windows use a periodic Hann
// so that 50% overlap partitions unity exactly; the first and last windows
// are flattened on their outward-facing halves to keep full weight at the
// clip edges.
inline std::vector<double> blend_profile(long len, bool first, bool last,
                                         WindowConfig::Blend blend) {
  std::vector<double> w(static_cast<std::size_t>(len), 1.0);
  if (blend == WindowConfig::Blend::overlap_average) return w;
  for (long i = 0; i < len; ++i) {
    const double s = std::sin(M_PI * static_cast<double>(i) / static_cast<double>(len));
    w[static_cast<std::size_t>(i)] = s * s;
  }
  if (first)
    for (long i = 0; i < len / 2; ++i) w[static_cast<std::size_t>(i)] = 1.0;
  if (last)
    for (long i = len / 2; i < len; ++i) w[static_cast<std::size_t>(i)] = 1.0;
  return w;
}

}  // namespace detail

// Weighted overlap-add of per-window signals. Returns the blended waveform
// and the accumulated (pre-normalization) weight field.
inline std::pair<Waveform, std::vector<double>> blend_windows(
    const std::vector<Waveform>& windows, const std::vector<long>& starts,
    long total_len, WindowConfig::Blend blend) {
  if (windows.empty() || windows.size() != starts.size())
    throw InvalidInput("blend_windows: empty or mismatched inputs");
  Waveform out;
  out.sample_rate = windows[0].sample_rate;
  out.samples.assign(static_cast<std::size_t>(total_len), 0.0);
  std::vector<double> wsum(static_cast<std::size_t>(total_len), 0.0);

  for (std::size_t wi = 0; wi < windows.size(); ++wi) {
    const long len = windows[wi].size();
    const auto prof = detail::blend_profile(len, wi == 0, wi + 1 == windows.size(),
                                            blend);
    const long start = starts[wi];
    for (long i = 0; i < len && start + i < total_len; ++i) {
      out.samples[static_cast<std::size_t>(start + i)] +=
          prof[static_cast<std::size_t>(i)] * windows[wi].samples[static_cast<std::size_t>(i)];
      wsum[static_cast<std::size_t>(start + i)] += prof[static_cast<std::size_t>(i)];
    }
  }
  for (long i = 0; i < total_len; ++i) {
    if (wsum[static_cast<std::size_t>(i)] > 1e-9)
      out.samples[static_cast<std::size_t>(i)] /= wsum[static_cast<std::size_t>(i)];
  }
  return {std::move(out), std::move(wsum)};
}

// Window start offsets: regular hop grid plus a right-aligned final window
// when the grid does not land exactly on the clip end.
inline std::vector<long> window_starts(long clip_len, long win, long hop) {
  std::vector<long> starts;
  for (long s = 0; s + win <= clip_len; s += hop) starts.push_back(s);
  if (starts.empty() || starts.back() + win < clip_len)
    starts.push_back(clip_len - win);
  return starts;
}

inline SeparationResult separate_clip(const Waveform& mixture,
                                      const std::vector<SpeakerVisualStream>& visuals,
                                      MaskPredictor& predictor,
                                      const WindowConfig& wcfg = {},
                                      const StftConfig& stft_cfg = {}, int fps = 25,
                                      bool keep_masks = false) {
  wcfg.validate();
  const long win = static_cast<long>(std::llround(wcfg.window_seconds *
                                                  mixture.sample_rate));
  const long hop = static_cast<long>(std::llround(wcfg.hop_seconds *
                                                  mixture.sample_rate));
  if (mixture.size() < win)
    throw ClipTooShort("clip is " + std::to_string(mixture.duration_seconds()) +
                       " s, window is " + std::to_string(wcfg.window_seconds) + " s");
  for (const auto& v : visuals) {
    const double vis_sec = static_cast<double>(v.n_frames()) / fps;
    if (std::abs(vis_sec - mixture.duration_seconds()) > wcfg.hop_seconds)
      throw AlignmentError("visual stream covers " + std::to_string(vis_sec) +
                           " s, audio is " +
                           std::to_string(mixture.duration_seconds()) + " s");
  }

  const auto starts = window_starts(mixture.size(), win, hop);
  const int n_src = predictor.n_speakers();

  std::vector<std::vector<Waveform>> per_source(static_cast<std::size_t>(n_src));
  SeparationResult result;
  result.window_starts = starts;
  result.window_seconds = wcfg.window_seconds;
  result.hop_seconds = wcfg.hop_seconds;
  result.blend = wcfg.blend_name();

  for (std::size_t wi = 0; wi < starts.size(); ++wi) {
    WindowContext ctx;
    ctx.start_sample = starts[wi];
    ctx.window_samples = win;
    ctx.sample_rate = mixture.sample_rate;
    ctx.window_index = static_cast<long>(wi);

    Waveform seg;
    seg.sample_rate = mixture.sample_rate;
    seg.samples.assign(mixture.samples.begin() + ctx.start_sample,
                       mixture.samples.begin() + ctx.start_sample + win);
    ComplexSpectrogram mix_spec = stft(seg, stft_cfg);
    std::vector<ComplexMask> masks = predictor.predict(mix_spec, ctx);
    if (static_cast<int>(masks.size()) != n_src)
      throw ShapeError("predictor emitted " + std::to_string(masks.size()) +
                       " masks for " + std::to_string(n_src) + " speakers");
    for (int k = 0; k < n_src; ++k) {
      ComplexSpectrogram sep = apply_mask(mix_spec, masks[static_cast<std::size_t>(k)]);
      per_source[static_cast<std::size_t>(k)].push_back(
          istft(sep, stft_cfg, win, mixture.sample_rate));
    }
    if (keep_masks) result.window_masks.push_back(std::move(masks));
  }

  for (int k = 0; k < n_src; ++k) {
    auto [blended, wsum] = blend_windows(per_source[static_cast<std::size_t>(k)],
                                         starts, mixture.size(), wcfg.blend);
    result.sources.push_back(std::move(blended));
  }
  return result;
}

// Target-speaker enhancement: one output stream, general single-speaker
// model required.
inline SeparationResult enhance_clip(const Waveform& mixture,
                                     const SpeakerVisualStream& target,
                                     const SeparatorModel& model,
                                     const WindowConfig& wcfg = {}, int fps = 25) {
  if (model.config().mode != SeparatorMode::general_single_speaker)
    throw ConfigError("enhancement needs the general single-speaker model");
  ModelPredictor predictor(model, {target}, fps);
  return separate_clip(mixture, {target}, predictor, wcfg, model.config().stft, fps);
}

// Best assignment of estimates to references by mean SDR; used when
// evaluating unconditioned (audio-only) baselines.
inline std::vector<int> assign_best_permutation(
    const std::vector<Waveform>& estimates, const std::vector<Waveform>& references) {
  if (estimates.size() != references.size())
    throw ShapeError("assign_best_permutation: count mismatch");
  if (estimates.empty() || estimates.size() > 3)
    throw InvalidInput("assign_best_permutation: 1 to 3 sources supported");
  const int n = static_cast<int>(estimates.size());
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_sdr = -1e300;
  do {
    std::vector<Waveform> ordered;
    for (int i = 0; i < n; ++i)
      ordered.push_back(references[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
    const auto metrics = bss_eval(ordered, estimates);
    double mean = 0.0;
    for (const auto& m : metrics) mean += m.sdr;
    mean /= n;
    if (mean > best_sdr) {
      best_sdr = mean;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace avsep

#endif  // AVSEP_INFERENCE_HPP_
