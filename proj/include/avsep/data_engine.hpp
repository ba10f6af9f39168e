// include/avsep/data_engine.hpp
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

#ifndef AVSEP_DATA_ENGINE_HPP_
#define AVSEP_DATA_ENGINE_HPP_

#include <array>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "avsep/dsp.hpp"
#include "avsep/error.hpp"
#include "avsep/image_io.hpp"
#include "avsep/manifest.hpp"
#include "avsep/rng.hpp"
#include "avsep/tensor.hpp"

namespace avsep {

// Lip-corruption augmentation: a circular time shift plus an occluded span
// filled with the per-segment mean frame.
struct CorruptionSpec {
  double time_shift = 0.0;          // seconds, [0, 1]
  double occlusion_duration = 0.0;  // seconds, [0, 1]
  long occlusion_start = 0;         // frame index
  bool enabled = false;

  void validate(double segment_seconds, long n_frames, int fps) const {
    if (time_shift < 0.0 || time_shift > segment_seconds)
      throw InvalidInput("corruption time_shift outside the segment");
    if (occlusion_duration < 0.0 || occlusion_duration > segment_seconds)
      throw InvalidInput("corruption occlusion_duration outside the segment");
    if (occlusion_start < 0 || occlusion_start >= n_frames)
      throw InvalidInput("corruption occlusion_start outside the segment");
    (void)fps;
  }
};

// Visual inputs for one speaker on one segment: N mouth ROIs plus a single
// identity face image, both normalized to [0, 1].
struct FaceTrackInput {
  Tensor mouth_rois;  // (N, H, W)
  Tensor face_image;  // (3, H, W)
  CorruptionSpec corruption;

  long n_frames() const { return mouth_rois.ndim() == 3 ? mouth_rois.dim(0) : 0; }
};

// The two-mixture training sample. x1 = sA1 + sB and x2 = sA2 + sB hold
// exactly, with sB already carrying its mixing scale.
struct TrainingTuple {
  Waveform x1, x2;
  Waveform sA1, sA2, sB;
  ComplexSpectrogram X1, X2;
  // order: mask for A in X1, A in X2, B in X1, B in X2
  std::array<ComplexMask, 4> gt_masks;
  FaceTrackInput visuals_A1, visuals_A2, visuals_B;
  std::optional<Waveform> noise1, noise2;

  std::string video_a, video_b;
  std::string clip_a1, clip_a2, clip_b;
  uint64_t seed = 0;
};

struct SamplerOptions {
  double segment_seconds = 2.55;
  int fps = 25;
  long n_frames = 64;
  int roi_size = 88;
  int face_size = 224;
  double mix_snr_lo = -2.5;
  double mix_snr_hi = 2.5;
  double mask_bound = 5.0;
  double cirm_eps = 1e-8;
  StftConfig stft_cfg{};
  bool corruption_enabled = false;
  double corruption_max_shift = 1.0;      // seconds
  double corruption_max_occlusion = 1.0;  // seconds
};

namespace detail {

inline Tensor load_roi_frames(const ManifestEntry& entry, long first_frame,
                              long n_frames, int roi_size) {
  Tensor out({n_frames, roi_size, roi_size});
  for (long f = 0; f < n_frames; ++f) {
    const auto& path = entry.roi_files.at(static_cast<std::size_t>(first_frame + f));
    Image8 img = read_image(path);
    if (img.channels != 1 || img.width != roi_size || img.height != roi_size)
      throw ShapeError("ROI frame " + path + " is not " + std::to_string(roi_size) +
                       "x" + std::to_string(roi_size) + " grayscale");
    for (int y = 0; y < roi_size; ++y)
      for (int x = 0; x < roi_size; ++x)
        out.at({f, y, x}) = static_cast<double>(img.at(y, x)) / 255.0;
  }
  return out;
}

inline Tensor load_face(const std::string& path, int face_size) {
  Image8 img = read_image(path);
  if (img.channels != 3 || img.width != face_size || img.height != face_size)
    throw ShapeError("face crop " + path + " is not " + std::to_string(face_size) +
                     "x" + std::to_string(face_size) + " RGB");
  Tensor out({3, face_size, face_size});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < face_size; ++y)
      for (int x = 0; x < face_size; ++x)
        out.at({c, y, x}) = static_cast<double>(img.at(y, x, c)) / 255.0;
  return out;
}

inline Waveform cut_segment(const Waveform& clip, long start, long n) {
  Waveform out;
  out.sample_rate = clip.sample_rate;
  out.samples.assign(clip.samples.begin() + start, clip.samples.begin() + start + n);
  return out;
}

}  // namespace detail

// Applies the corruption: circular shift by round(time_shift * fps) frames,
// then the occluded span is replaced by the mean frame of the segment.
// The face image is untouched. Disabled specs return the input unchanged.
inline FaceTrackInput corrupt_rois(const FaceTrackInput& f, const CorruptionSpec& spec,
                                   int fps = 25) {
  if (!spec.enabled) return f;
  const long n = f.n_frames();
  spec.validate(static_cast<double>(n) / fps, n, fps);
  const long h = f.mouth_rois.dim(1);
  const long w = f.mouth_rois.dim(2);
  const long shift =
      static_cast<long>(std::llround(spec.time_shift * fps)) % std::max(n, 1L);

  FaceTrackInput out = f;
  Tensor& dst = out.mouth_rois;
  const Tensor& src = f.mouth_rois;
  const long frame_elems = h * w;
  for (long t = 0; t < n; ++t) {
    const long from = (t - shift + n) % n;
    for (long i = 0; i < frame_elems; ++i)
      dst[t * frame_elems + i] = src[from * frame_elems + i];
  }

  const long occl_frames = static_cast<long>(std::llround(spec.occlusion_duration * fps));
  if (occl_frames > 0) {
    std::vector<double> mean(static_cast<std::size_t>(frame_elems), 0.0);
    for (long t = 0; t < n; ++t)
      for (long i = 0; i < frame_elems; ++i)
        mean[static_cast<std::size_t>(i)] += dst[t * frame_elems + i];
    for (auto& v : mean) v /= static_cast<double>(n);
    for (long k = 0; k < occl_frames && spec.occlusion_start + k < n; ++k) {
      const long t = spec.occlusion_start + k;
      for (long i = 0; i < frame_elems; ++i)
        dst[t * frame_elems + i] = mean[static_cast<std::size_t>(i)];
    }
  }
  return out;
}

inline CorruptionSpec draw_corruption_spec(Rng& rng, const SamplerOptions& opt) {
  CorruptionSpec spec;
  spec.enabled = true;
  spec.time_shift = rng.uniform(0.0, opt.corruption_max_shift);
  spec.occlusion_duration = rng.uniform(0.0, opt.corruption_max_occlusion);
  spec.occlusion_start =
      static_cast<long>(rng.uniform_index(static_cast<uint64_t>(opt.n_frames)));
  return spec;
}

// Draws one mix-and-separate tuple: two segments of speaker A (distinct
// clips when available, else disjoint windows of one clip) and one of
// speaker B, mixed at a uniformly drawn SNR, with ground-truth masks against
// both mixtures. Deterministic given (manifest digest, seed).
inline TrainingTuple sample_training_tuple(const Manifest& manifest, uint64_t seed,
                                           const SamplerOptions& opt = {}) {
  if (manifest.by_video.size() < 2)
    throw InvalidInput("tuple sampling needs at least 2 distinct video_ids");

  const long seg_samples = static_cast<long>(
      std::llround(opt.segment_seconds * 16000.0));
  const long spf = 16000 / opt.fps;  // samples per ROI frame
  const long span_frames = opt.n_frames;  // frames consumed per segment

  // fold the manifest digest into the stream so identical (content, seed)
  // pairs reproduce byte-identical tuples
  uint64_t mixed = seed;
  for (char c : manifest.digest) mixed = mixed * 1099511628211ULL + static_cast<uint64_t>(c);
  Rng rng(mixed);

  const auto videos = manifest.video_ids();

  auto max_start_frame = [&](const ManifestEntry& e) {
    const long by_audio = (e.audio_samples - seg_samples) / spf;
    const long by_roi = static_cast<long>(e.roi_files.size()) - span_frames;
    return std::min(by_audio, by_roi);
  };

  for (int attempt = 0; attempt < 64; ++attempt) {
    const std::size_t ai = rng.uniform_index(videos.size());
    std::size_t bi = rng.uniform_index(videos.size() - 1);
    if (bi >= ai) ++bi;
    const auto& clips_a = manifest.by_video.at(videos[ai]);
    const auto& clips_b = manifest.by_video.at(videos[bi]);

    // segments for A: two distinct clips, or two disjoint windows of one
    std::size_t ca1, ca2;
    long fa1 = -1, fa2 = -1;
    if (clips_a.size() >= 2) {
      const std::size_t i1 = rng.uniform_index(clips_a.size());
      std::size_t i2 = rng.uniform_index(clips_a.size() - 1);
      if (i2 >= i1) ++i2;
      ca1 = clips_a[i1];
      ca2 = clips_a[i2];
      const long m1 = max_start_frame(manifest.entries[ca1]);
      const long m2 = max_start_frame(manifest.entries[ca2]);
      if (m1 < 0 || m2 < 0) continue;
      fa1 = static_cast<long>(rng.uniform_index(static_cast<uint64_t>(m1 + 1)));
      fa2 = static_cast<long>(rng.uniform_index(static_cast<uint64_t>(m2 + 1)));
    } else {
      ca1 = ca2 = clips_a[0];
      const ManifestEntry& e = manifest.entries[ca1];
      const long m = max_start_frame(e);
      if (m < span_frames) continue;  // cannot cut two disjoint windows
      fa1 = static_cast<long>(rng.uniform_index(static_cast<uint64_t>(m - span_frames + 1)));
      fa2 = fa1 + span_frames +
            static_cast<long>(rng.uniform_index(static_cast<uint64_t>(m - fa1 - span_frames + 1)));
    }

    const std::size_t cb = clips_b[rng.uniform_index(clips_b.size())];
    const long mb = max_start_frame(manifest.entries[cb]);
    if (mb < 0) continue;
    const long fb = static_cast<long>(rng.uniform_index(static_cast<uint64_t>(mb + 1)));

    const ManifestEntry& ea1 = manifest.entries[ca1];
    const ManifestEntry& ea2 = manifest.entries[ca2];
    const ManifestEntry& eb = manifest.entries[cb];

    Waveform wa1 = read_wav(ea1.audio_path);
    Waveform wa2 = (ca2 == ca1) ? wa1 : read_wav(ea2.audio_path);
    Waveform wb = read_wav(eb.audio_path);

    TrainingTuple t;
    t.seed = seed;
    t.video_a = videos[ai];
    t.video_b = videos[bi];
    t.clip_a1 = ea1.clip_id;
    t.clip_a2 = ea2.clip_id;
    t.clip_b = eb.clip_id;
    t.sA1 = detail::cut_segment(wa1, fa1 * spf, seg_samples);
    t.sA2 = detail::cut_segment(wa2, fa2 * spf, seg_samples);
    Waveform sb_raw = detail::cut_segment(wb, fb * spf, seg_samples);

    if (rms(t.sA1) <= 0.0 || rms(t.sA2) <= 0.0 || rms(sb_raw) <= 0.0)
      continue;  // silent segment, draw again

    const double snr = rng.uniform(opt.mix_snr_lo, opt.mix_snr_hi);
    const double scale = mix_waveforms(t.sA1, sb_raw, snr).second;
    t.sB = sb_raw;
    for (auto& v : t.sB.samples) v *= scale;
    // rebuild both mixtures from the stored scaled source so that
    // x_i - sA_i - sB is identically zero
    t.x1 = t.sA1;
    t.x2 = t.sA2;
    for (std::size_t i = 0; i < t.x1.samples.size(); ++i) {
      t.x1.samples[i] += t.sB.samples[i];
      t.x2.samples[i] += t.sB.samples[i];
    }

    t.X1 = stft(t.x1, opt.stft_cfg);
    t.X2 = stft(t.x2, opt.stft_cfg);
    const ComplexSpectrogram SA1 = stft(t.sA1, opt.stft_cfg);
    const ComplexSpectrogram SA2 = stft(t.sA2, opt.stft_cfg);
    const ComplexSpectrogram SB = stft(t.sB, opt.stft_cfg);
    t.gt_masks[0] = compute_cirm(SA1, t.X1, opt.mask_bound, opt.cirm_eps);
    t.gt_masks[1] = compute_cirm(SA2, t.X2, opt.mask_bound, opt.cirm_eps);
    t.gt_masks[2] = compute_cirm(SB, t.X1, opt.mask_bound, opt.cirm_eps);
    t.gt_masks[3] = compute_cirm(SB, t.X2, opt.mask_bound, opt.cirm_eps);

    // one identity image per speaker, shared by that speaker's segments
    const std::string face_a =
        ea1.face_files[rng.uniform_index(ea1.face_files.size())];
    const std::string face_b =
        eb.face_files[rng.uniform_index(eb.face_files.size())];
    Tensor face_a_img = detail::load_face(face_a, opt.face_size);
    Tensor face_b_img = detail::load_face(face_b, opt.face_size);

    t.visuals_A1.mouth_rois = detail::load_roi_frames(ea1, fa1, span_frames, opt.roi_size);
    t.visuals_A2.mouth_rois = detail::load_roi_frames(ea2, fa2, span_frames, opt.roi_size);
    t.visuals_B.mouth_rois = detail::load_roi_frames(eb, fb, span_frames, opt.roi_size);
    t.visuals_A1.face_image = face_a_img;
    t.visuals_A2.face_image = face_a_img;
    t.visuals_B.face_image = face_b_img;

    if (opt.corruption_enabled) {
      for (FaceTrackInput* v : {&t.visuals_A1, &t.visuals_A2, &t.visuals_B}) {
        const CorruptionSpec spec = draw_corruption_spec(rng, opt);
        *v = corrupt_rois(*v, spec, opt.fps);
        v->corruption = spec;
      }
    }
    return t;
  }
  throw SamplingExhausted("no usable tuple after 64 attempts; clips too short?");
}

// Loads every WAV in a directory as an enhancement noise pool.
inline std::vector<Waveform> load_noise_pool(const std::string& dir,
                                             double min_seconds = 2.55) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("noise pool directory missing: " + dir);
  std::vector<std::string> files = detail::sorted_dir_files(dir);
  std::vector<Waveform> pool;
  for (const auto& f : files) {
    if (fs::path(f).extension() != ".wav") continue;
    Waveform w = read_wav(f);
    if (w.duration_seconds() < min_seconds)
      throw InvalidInput("noise clip " + f + " shorter than " +
                         std::to_string(min_seconds) + " s");
    pool.push_back(std::move(w));
  }
  return pool;
}

// Adds independently drawn non-speech noise to both mixtures at the given
// SNR (speech mixture vs noise) and recomputes the ground-truth masks
// against the noisy mixtures. snr_db = +inf leaves the tuple unchanged.
inline TrainingTuple add_enhancement_noise(const TrainingTuple& t,
                                           const std::vector<Waveform>& noise_pool,
                                           double snr_db, uint64_t rng_seed,
                                           const SamplerOptions& opt = {}) {
  if (std::isinf(snr_db) && snr_db > 0) return t;
  if (noise_pool.empty()) throw InvalidInput("enhancement noise pool is empty");

  Rng rng(rng_seed * 0x9e3779b97f4a7c15ULL + 17);
  const long seg = t.x1.size();

  auto draw_noise = [&]() {
    const auto& clip = noise_pool[rng.uniform_index(noise_pool.size())];
    if (clip.size() < seg)
      throw InvalidInput("noise clip shorter than the speech segment");
    const long start =
        static_cast<long>(rng.uniform_index(static_cast<uint64_t>(clip.size() - seg + 1)));
    return detail::cut_segment(clip, start, seg);
  };

  TrainingTuple out = t;
  for (int which = 0; which < 2; ++which) {
    Waveform& x = which == 0 ? out.x1 : out.x2;
    Waveform noise = draw_noise();
    auto [noisy, scale] = mix_waveforms(x, noise, snr_db);
    x = std::move(noisy);
    for (auto& v : noise.samples) v *= scale;
    (which == 0 ? out.noise1 : out.noise2) = std::move(noise);
  }
  out.X1 = stft(out.x1, opt.stft_cfg);
  out.X2 = stft(out.x2, opt.stft_cfg);
  const ComplexSpectrogram SA1 = stft(out.sA1, opt.stft_cfg);
  const ComplexSpectrogram SA2 = stft(out.sA2, opt.stft_cfg);
  const ComplexSpectrogram SB = stft(out.sB, opt.stft_cfg);
  out.gt_masks[0] = compute_cirm(SA1, out.X1, opt.mask_bound, opt.cirm_eps);
  out.gt_masks[1] = compute_cirm(SA2, out.X2, opt.mask_bound, opt.cirm_eps);
  out.gt_masks[2] = compute_cirm(SB, out.X1, opt.mask_bound, opt.cirm_eps);
  out.gt_masks[3] = compute_cirm(SB, out.X2, opt.mask_bound, opt.cirm_eps);
  return out;
}

}  // namespace avsep

#endif  // AVSEP_DATA_ENGINE_HPP_
