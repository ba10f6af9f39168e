// include/avsep/fixture.hpp
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

#ifndef AVSEP_FIXTURE_HPP_
#define AVSEP_FIXTURE_HPP_

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "avsep/error.hpp"
#include "avsep/image_io.hpp"
#include "avsep/rng.hpp"
#include "avsep/wav_io.hpp"

namespace avsep {

// Desk-scale synthetic corpus. Each speaker gets a fixed set of
// formant-like resonances and a pitch range, so voices are spectrally
// distinct; ROI pixel patterns follow the audio envelope; face crops carry a
// per-speaker color pattern.
struct FixtureOptions {
  int n_speakers = 8;
  int clips_per_speaker = 4;
  double clip_seconds = 3.3;
  int sample_rate = 16000;
  int fps = 25;
  int roi_size = 88;
  int face_size = 224;
  int faces_per_clip = 3;
  int noise_clips = 0;  // optional non-speech pool for enhancement runs
};

namespace detail {

struct SpeakerVoice {
  double f0_lo = 0, f0_hi = 0;
  double formants[3] = {0, 0, 0};
};

inline SpeakerVoice speaker_voice(Rng& rng) {
  SpeakerVoice v;
  const double f0_center = rng.uniform(95.0, 230.0);
  v.f0_lo = f0_center * 0.92;
  v.f0_hi = f0_center * 1.08;
  v.formants[0] = rng.uniform(300.0, 850.0);
  v.formants[1] = rng.uniform(1000.0, 2100.0);
  v.formants[2] = rng.uniform(2400.0, 4200.0);
  return v;
}

inline Waveform synth_clip(const SpeakerVoice& v, Rng& rng, long n, int rate) {
  Waveform w;
  w.sample_rate = rate;
  w.samples.assign(static_cast<std::size_t>(n), 0.0);

  const double f0 = rng.uniform(v.f0_lo, v.f0_hi);
  const double vibrato_rate = rng.uniform(4.0, 7.0);
  const double vibrato_depth = rng.uniform(0.002, 0.008);
  const double am1 = rng.uniform(1.8, 4.5);
  const double am2 = rng.uniform(0.5, 1.3);
  const double ph1 = rng.uniform(0.0, 6.28);
  const double ph2 = rng.uniform(0.0, 6.28);

  const int harmonics = static_cast<int>(4400.0 / f0);
  std::vector<double> gains(static_cast<std::size_t>(harmonics));
  std::vector<double> phases(static_cast<std::size_t>(harmonics));
  for (int h = 1; h <= harmonics; ++h) {
    const double f = f0 * h;
    double g = 0.015;  // weak floor keeps every band non-degenerate
    for (double fc : v.formants) {
      const double bw = 160.0;
      g += std::exp(-0.5 * (f - fc) * (f - fc) / (bw * bw));
    }
    gains[static_cast<std::size_t>(h - 1)] = g;
    phases[static_cast<std::size_t>(h - 1)] = rng.uniform(0.0, 2.0 * M_PI);
  }

  double peak = 0.0;
  for (long i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    const double am = 0.62 + 0.26 * std::sin(2.0 * M_PI * am1 * t + ph1) +
                      0.12 * std::sin(2.0 * M_PI * am2 * t + ph2);
    const double f_inst = f0 * (1.0 + vibrato_depth *
                                          std::sin(2.0 * M_PI * vibrato_rate * t));
    double s = 0.0;
    for (int h = 1; h <= harmonics; ++h)
      s += gains[static_cast<std::size_t>(h - 1)] *
           std::sin(2.0 * M_PI * f_inst * h * t + phases[static_cast<std::size_t>(h - 1)]);
    const double x = am * s;
    w.samples[static_cast<std::size_t>(i)] = x;
    peak = std::max(peak, std::abs(x));
  }
  const double norm = peak > 0.0 ? 0.5 / peak : 1.0;
  for (auto& x : w.samples) x *= norm;
  return w;
}

// Non-speech noise: band-limited colored noise with slow level drift.
inline Waveform synth_noise_clip(Rng& rng, long n, int rate) {
  Waveform w;
  w.sample_rate = rate;
  w.samples.assign(static_cast<std::size_t>(n), 0.0);
  // two-pole lowpass on white noise, cutoff varies per clip
  const double cutoff = rng.uniform(400.0, 3000.0);
  const double a = std::exp(-2.0 * M_PI * cutoff / rate);
  const double drift_rate = rng.uniform(0.2, 0.8);
  const double drift_phase = rng.uniform(0.0, 6.28);
  double s1 = 0.0, s2 = 0.0, peak = 0.0;
  for (long i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    const double level = 0.7 + 0.3 * std::sin(2.0 * M_PI * drift_rate * t + drift_phase);
    s1 = a * s1 + (1.0 - a) * rng.normal();
    s2 = a * s2 + (1.0 - a) * s1;
    const double x = level * s2;
    w.samples[static_cast<std::size_t>(i)] = x;
    peak = std::max(peak, std::abs(x));
  }
  const double norm = peak > 0.0 ? 0.45 / peak : 1.0;
  for (auto& x : w.samples) x *= norm;
  return w;
}

// Mouth ROI frame: per-speaker texture plus an elliptical opening whose
// height tracks the audio envelope.
inline Image8 roi_frame(int size, double envelope, uint64_t speaker_tag,
                        Rng& frame_rng) {
  Image8 img;
  img.width = size;
  img.height = size;
  img.channels = 1;
  img.pixels.assign(static_cast<std::size_t>(size * size), 0);
  Rng tex(speaker_tag);
  const double base = tex.uniform(60.0, 110.0);
  const double stripe_freq = tex.uniform(0.15, 0.45);
  const double stripe_amp = tex.uniform(10.0, 30.0);

  const double cx = size / 2.0;
  const double cy = size * 0.55;
  const double mouth_w = size * 0.34;
  const double mouth_h = size * (0.04 + 0.22 * envelope);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double v = base + stripe_amp * std::sin(stripe_freq * x) +
                 0.5 * stripe_amp * std::sin(stripe_freq * 1.7 * y);
      const double dx = (x - cx) / mouth_w;
      const double dy = (y - cy) / std::max(mouth_h, 1.0);
      if (dx * dx + dy * dy < 1.0) v = 15.0 + 10.0 * envelope;
      v += frame_rng.uniform(-4.0, 4.0);
      img.at(y, x) = static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
    }
  }
  return img;
}

// Face crop: identicon-style blocks colored from the speaker seed, with a
// small per-image brightness jitter.
inline Image8 face_image(int size, uint64_t speaker_tag, Rng& img_rng) {
  Image8 img;
  img.width = size;
  img.height = size;
  img.channels = 3;
  img.pixels.assign(static_cast<std::size_t>(size * size * 3), 0);
  Rng tex(speaker_tag * 7919 + 13);
  double base[3], block[3];
  for (int c = 0; c < 3; ++c) base[c] = tex.uniform(40.0, 200.0);
  for (int c = 0; c < 3; ++c) block[c] = tex.uniform(40.0, 220.0);
  const int grid = 7;
  bool cells[7][7];
  for (int gy = 0; gy < grid; ++gy)
    for (int gx = 0; gx < grid; ++gx) cells[gy][gx] = tex.uniform() < 0.45;

  const double jitter = img_rng.uniform(-10.0, 10.0);
  const int cell = size / grid;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const int gy = std::min(y / cell, grid - 1);
      const int gx = std::min(x / cell, grid - 1);
      for (int c = 0; c < 3; ++c) {
        const double v = (cells[gy][gx] ? block[c] : base[c]) + jitter +
                         img_rng.uniform(-3.0, 3.0);
        img.at(y, x, c) = static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
      }
    }
  return img;
}

inline std::string zero_pad(int v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s = "0" + s;
  return s;
}

}  // namespace detail

// Writes the corpus and returns the manifest path. Layout:
//   <out_dir>/spk<k>/clip<j>/{audio.wav, rois/f0000.pgm..., faces/f00.ppm...}
//   <out_dir>/noise/noise00.wav...   (when noise_clips > 0)
//   <out_dir>/manifest.jsonl
inline std::string make_synthetic_fixture(const std::string& out_dir,
                                          uint64_t seed,
                                          const FixtureOptions& opt = {}) {
  namespace fs = std::filesystem;
  if (opt.n_speakers < 2)
    throw InvalidInput("fixture needs at least 2 speakers");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create fixture directory " + out_dir);

  Rng root(seed);
  const long clip_samples =
      static_cast<long>(std::llround(opt.clip_seconds * opt.sample_rate));
  const int frames_per_clip =
      static_cast<int>(opt.clip_seconds * opt.fps);  // floor

  std::vector<std::string> manifest_lines;
  for (int k = 0; k < opt.n_speakers; ++k) {
    Rng spk_rng = root.fork(1000 + static_cast<uint64_t>(k));
    const detail::SpeakerVoice voice = detail::speaker_voice(spk_rng);
    const uint64_t speaker_tag = seed * 31 + static_cast<uint64_t>(k);

    for (int j = 0; j < opt.clips_per_speaker; ++j) {
      Rng clip_rng = spk_rng.fork(static_cast<uint64_t>(j) + 1);
      const fs::path clip_dir = fs::path(out_dir) / ("spk" + detail::zero_pad(k, 2)) /
                                ("clip" + detail::zero_pad(j, 2));
      fs::create_directories(clip_dir / "rois", ec);
      fs::create_directories(clip_dir / "faces", ec);
      if (ec) throw IoError("cannot create clip directory " + clip_dir.string());

      Waveform audio = detail::synth_clip(voice, clip_rng, clip_samples, opt.sample_rate);
      write_wav((clip_dir / "audio.wav").string(), audio);

      // per-frame envelope, normalized over the clip
      const long spf = opt.sample_rate / opt.fps;
      std::vector<double> env(static_cast<std::size_t>(frames_per_clip), 0.0);
      double env_max = 1e-12;
      for (int f = 0; f < frames_per_clip; ++f) {
        double e = 0.0;
        for (long i = f * spf; i < (f + 1) * spf && i < audio.size(); ++i)
          e += audio.samples[static_cast<std::size_t>(i)] *
               audio.samples[static_cast<std::size_t>(i)];
        env[static_cast<std::size_t>(f)] = std::sqrt(e / static_cast<double>(spf));
        env_max = std::max(env_max, env[static_cast<std::size_t>(f)]);
      }
      for (int f = 0; f < frames_per_clip; ++f) {
        Rng frame_rng = clip_rng.fork(5000 + static_cast<uint64_t>(f));
        Image8 roi = detail::roi_frame(opt.roi_size,
                                       env[static_cast<std::size_t>(f)] / env_max,
                                       speaker_tag, frame_rng);
        write_image((clip_dir / "rois" / ("f" + detail::zero_pad(f, 4) + ".pgm")).string(),
                    roi);
      }
      for (int f = 0; f < opt.faces_per_clip; ++f) {
        Rng img_rng = clip_rng.fork(9000 + static_cast<uint64_t>(f));
        Image8 face = detail::face_image(opt.face_size, speaker_tag, img_rng);
        write_image((clip_dir / "faces" / ("f" + detail::zero_pad(f, 2) + ".ppm")).string(),
                    face);
      }

      nlohmann::json line = {
          {"clip_id", "spk" + detail::zero_pad(k, 2) + "_clip" + detail::zero_pad(j, 2)},
          {"audio_path", (clip_dir / "audio.wav").lexically_relative(out_dir).string()},
          {"roi_dir", (clip_dir / "rois").lexically_relative(out_dir).string()},
          {"face_dir", (clip_dir / "faces").lexically_relative(out_dir).string()},
          {"video_id", "vid_spk" + detail::zero_pad(k, 2)}};
      manifest_lines.push_back(line.dump());
    }
  }

  if (opt.noise_clips > 0) {
    const fs::path noise_dir = fs::path(out_dir) / "noise";
    fs::create_directories(noise_dir, ec);
    if (ec) throw IoError("cannot create noise directory");
    for (int j = 0; j < opt.noise_clips; ++j) {
      Rng noise_rng = root.fork(77000 + static_cast<uint64_t>(j));
      Waveform noise = detail::synth_noise_clip(noise_rng, clip_samples, opt.sample_rate);
      write_wav((noise_dir / ("noise" + detail::zero_pad(j, 2) + ".wav")).string(), noise);
    }
  }

  const std::string manifest_path = (fs::path(out_dir) / "manifest.jsonl").string();
  std::ofstream mf(manifest_path);
  if (!mf) throw IoError("cannot write manifest " + manifest_path);
  for (const auto& l : manifest_lines) mf << l << "\n";
  mf.close();
  if (!mf) throw IoError("failed while writing manifest " + manifest_path);
  return manifest_path;
}

}  // namespace avsep

#endif  // AVSEP_FIXTURE_HPP_
