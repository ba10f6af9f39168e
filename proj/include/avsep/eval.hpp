// include/avsep/eval.hpp
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
// Separation evaluation protocol: seeded synthetic two-speaker test pairs
// from a manifest, run through the sliding-window pipeline, scored with
// BSS metrics and STOI, and aggregated into a JSON report.

#ifndef AVSEP_EVAL_HPP_
#define AVSEP_EVAL_HPP_

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

#include "avsep/data_engine.hpp"
#include "avsep/inference.hpp"
#include "avsep/manifest.hpp"
#include "avsep/metrics.hpp"
#include "avsep/model.hpp"

namespace avsep {

struct EvalProtocol {
  int n_pairs = 20;
  uint64_t seed = 0;
  double mix_snr_db = 0.0;
  enum class Estimator { model, oracle_masks, mixture_baseline } estimator =
      Estimator::model;
  bool best_permutation = false;  // evaluate unassigned estimates at their best
  WindowConfig window;
  StftConfig stft;
  double mask_bound = 5.0;
  double cirm_eps = 1e-8;
  int fps = 25;

  std::string estimator_name() const {
    switch (estimator) {
      case Estimator::model: return "model";
      case Estimator::oracle_masks: return "oracle_masks";
      case Estimator::mixture_baseline: return "mixture_baseline";
    }
    return "model";
  }
};

struct PairEvalResult {
  std::string clip_a, clip_b;
  std::vector<BssMetrics> sources;
  std::vector<double> stoi_scores;
  double mixture_sdr = 0.0;  // mixture-as-estimate floor, mean over sources
};

struct EvalReport {
  std::string protocol;
  std::string manifest_digest;
  std::string config_digest;
  uint64_t seed = 0;
  std::vector<PairEvalResult> per_pair;
  double mean_sdr = 0, mean_sir = 0, mean_sar = 0, mean_stoi = 0;
  double mean_mixture_sdr = 0;

  nlohmann::json to_json() const {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : per_pair) {
      nlohmann::json srcs = nlohmann::json::array();
      for (std::size_t k = 0; k < p.sources.size(); ++k)
        srcs.push_back({{"sdr", p.sources[k].sdr},
                        {"sir", p.sources[k].sir},
                        {"sar", p.sources[k].sar},
                        {"stoi", p.stoi_scores[k]}});
      pairs.push_back({{"clip_a", p.clip_a},
                       {"clip_b", p.clip_b},
                       {"sources", srcs},
                       {"mixture_sdr", p.mixture_sdr}});
    }
    return {{"protocol", protocol},
            {"manifest_digest", manifest_digest},
            {"config_digest", config_digest},
            {"seed", seed},
            {"per_pair", pairs},
            {"aggregate",
             {{"sdr", mean_sdr},
              {"sir", mean_sir},
              {"sar", mean_sar},
              {"stoi", mean_stoi},
              {"mixture_sdr", mean_mixture_sdr},
              {"pesq", nullptr}}}};
  }
};

// Loads a clip's visual material; the face image defaults to the central
// crop for reproducibility, or a seeded random choice when face_rng is
// given.
inline SpeakerVisualStream load_visual_stream(const ManifestEntry& entry,
                                              int roi_size, int face_size,
                                              Rng* face_rng = nullptr) {
  SpeakerVisualStream s;
  const long m = static_cast<long>(entry.roi_files.size());
  s.mouth_rois = Tensor({m, roi_size, roi_size});
  for (long f = 0; f < m; ++f) {
    Image8 img = read_image(entry.roi_files[static_cast<std::size_t>(f)]);
    if (img.channels != 1 || img.width != roi_size || img.height != roi_size)
      throw ShapeError("ROI frame " + entry.roi_files[static_cast<std::size_t>(f)] +
                       " is not " + std::to_string(roi_size) + "x" +
                       std::to_string(roi_size) + " grayscale");
    for (int y = 0; y < roi_size; ++y)
      for (int x = 0; x < roi_size; ++x)
        s.mouth_rois.at({f, y, x}) = static_cast<double>(img.at(y, x)) / 255.0;
  }
  const std::size_t face_idx =
      face_rng ? static_cast<std::size_t>(face_rng->uniform_index(entry.face_files.size()))
               : entry.face_files.size() / 2;
  s.face_image = detail::load_face(entry.face_files[face_idx], face_size);
  return s;
}

struct ClipEmbeddings {
  std::string clip_id;
  std::string video_id;
  std::vector<double> face;
  std::vector<double> voice;
};

// Face embedding from the clip's central face crop and voice embedding from
// the spectrogram of the clip's central segment. Deterministic.
inline std::vector<ClipEmbeddings> extract_clip_embeddings(
    const Manifest& manifest, const SeparatorModel& model) {
  const ModelConfig& cfg = model.config();
  const long seg = (cfg.frames() - 1) * cfg.stft.hop;
  std::vector<ClipEmbeddings> out;
  for (const auto& entry : manifest.entries) {
    ClipEmbeddings ce;
    ce.clip_id = entry.clip_id;
    ce.video_id = entry.video_id;

    Tensor face_img = detail::load_face(
        entry.face_files[entry.face_files.size() / 2], static_cast<int>(cfg.face_size));
    nn::Tape tape;
    Tensor face = model.face_forward(face_img, tape);
    ce.face.assign(face.data(), face.data() + face.numel());

    Waveform clip = read_wav(entry.audio_path);
    if (clip.size() < seg)
      throw ClipTooShort("clip " + entry.clip_id + " shorter than one segment");
    const long start = (clip.size() - seg) / 2;
    Waveform segment;
    segment.sample_rate = clip.sample_rate;
    segment.samples.assign(clip.samples.begin() + start,
                           clip.samples.begin() + start + seg);
    ComplexSpectrogram spec = stft(segment, cfg.stft);
    // drop the top frequency bin (generalizes crop_for_embedding to any fft)
    const long fc = spec.freq_bins() - 1, frames = spec.frames();
    Tensor spec_t({2, fc, frames});
    for (long k = 0; k < fc; ++k)
      for (long t = 0; t < frames; ++t) {
        spec_t.at({0, k, t}) = spec.real.at({k, t});
        spec_t.at({1, k, t}) = spec.imag.at({k, t});
      }
    Tensor voice = model.vocal_forward(spec_t, tape);
    ce.voice.assign(voice.data(), voice.data() + voice.numel());
    out.push_back(std::move(ce));
  }
  return out;
}

// All ordered (face_i, voice_j) trials over the manifest's clips; a trial is
// positive when both clips come from the same source video.
inline VerificationReport verify_manifest(const Manifest& manifest,
                                          const SeparatorModel& model) {
  const auto embs = extract_clip_embeddings(manifest, model);
  std::vector<std::vector<double>> faces, voices;
  std::vector<bool> labels;
  for (const auto& fe : embs)
    for (const auto& ve : embs) {
      faces.push_back(fe.face);
      voices.push_back(ve.voice);
      labels.push_back(fe.video_id == ve.video_id);
    }
  return verification_scores(faces, voices, labels);
}

// Builds seeded test pairs from distinct videos, separates each mixture,
// and scores against the known sources. The model pointer may be null for
// the oracle and mixture-baseline estimators.
inline EvalReport evaluate_separation(const Manifest& manifest,
                                      const SeparatorModel* model,
                                      const EvalProtocol& proto) {
  if (manifest.by_video.size() < 2)
    throw InvalidInput("evaluation needs at least 2 distinct video_ids");
  if (proto.estimator == EvalProtocol::Estimator::model && model == nullptr)
    throw InvalidInput("model estimator needs a model");

  uint64_t mixed = proto.seed;
  for (char c : manifest.digest) mixed = mixed * 1099511628211ULL + static_cast<uint64_t>(c);
  Rng rng(mixed ^ 0xE7A1ULL);

  const auto videos = manifest.video_ids();
  EvalReport report;
  report.protocol = proto.estimator_name();
  report.manifest_digest = manifest.digest;
  report.config_digest = model ? model->config().digest() : "none";
  report.seed = proto.seed;

  const long win = static_cast<long>(std::llround(proto.window.window_seconds * 16000));

  for (int pair = 0; pair < proto.n_pairs; ++pair) {
    const std::size_t ai = rng.uniform_index(videos.size());
    std::size_t bi = rng.uniform_index(videos.size() - 1);
    if (bi >= ai) ++bi;
    const auto& clips_a = manifest.by_video.at(videos[ai]);
    const auto& clips_b = manifest.by_video.at(videos[bi]);
    const ManifestEntry& ea = manifest.entries[clips_a[rng.uniform_index(clips_a.size())]];
    const ManifestEntry& eb = manifest.entries[clips_b[rng.uniform_index(clips_b.size())]];

    Waveform wa = read_wav(ea.audio_path);
    Waveform wb = read_wav(eb.audio_path);
    const long len = std::min(wa.size(), wb.size());
    if (len < win)
      throw ClipTooShort("evaluation clip shorter than one window: " + ea.clip_id);
    wa.samples.resize(static_cast<std::size_t>(len));
    wb.samples.resize(static_cast<std::size_t>(len));

    auto [mix, scale] = mix_waveforms(wa, wb, proto.mix_snr_db);
    Waveform wb_scaled = wb;
    for (auto& v : wb_scaled.samples) v *= scale;
    const std::vector<Waveform> refs = {wa, wb_scaled};

    std::vector<Waveform> estimates;
    if (proto.estimator == EvalProtocol::Estimator::oracle_masks) {
      OracleMaskPredictor pred(refs, proto.stft, proto.mask_bound, proto.cirm_eps);
      auto res = separate_clip(mix, {}, pred, proto.window, proto.stft, proto.fps);
      estimates = std::move(res.sources);
    } else if (proto.estimator == EvalProtocol::Estimator::mixture_baseline) {
      IdentityPredictor pred(2);
      auto res = separate_clip(mix, {}, pred, proto.window, proto.stft, proto.fps);
      estimates = std::move(res.sources);
    } else {
      const auto& cfg = model->config();
      std::vector<SpeakerVisualStream> streams = {
          load_visual_stream(ea, static_cast<int>(cfg.roi_size),
                             static_cast<int>(cfg.face_size)),
          load_visual_stream(eb, static_cast<int>(cfg.roi_size),
                             static_cast<int>(cfg.face_size))};
      ModelPredictor pred(*model, streams, proto.fps);
      auto res = separate_clip(mix, streams, pred, proto.window, cfg.stft, proto.fps);
      estimates = std::move(res.sources);
    }

    if (proto.best_permutation) {
      const auto perm = assign_best_permutation(estimates, refs);
      // reorder estimates so estimate i faces reference i
      std::vector<Waveform> ordered(estimates.size());
      for (std::size_t i = 0; i < estimates.size(); ++i)
        ordered[static_cast<std::size_t>(perm[i])] = std::move(estimates[i]);
      estimates = std::move(ordered);
    }

    PairEvalResult pr;
    pr.clip_a = ea.clip_id;
    pr.clip_b = eb.clip_id;
    pr.sources = bss_eval(refs, estimates);
    for (std::size_t k = 0; k < refs.size(); ++k)
      pr.stoi_scores.push_back(stoi(refs[k], estimates[k]));
    const auto floor_metrics = bss_eval(refs, {mix, mix});
    pr.mixture_sdr = 0.5 * (floor_metrics[0].sdr + floor_metrics[1].sdr);
    report.per_pair.push_back(std::move(pr));
  }

  double n = 0;
  for (const auto& p : report.per_pair) {
    for (std::size_t k = 0; k < p.sources.size(); ++k) {
      report.mean_sdr += p.sources[k].sdr;
      report.mean_sir += p.sources[k].sir;
      report.mean_sar += p.sources[k].sar;
      report.mean_stoi += p.stoi_scores[k];
      n += 1;
    }
    report.mean_mixture_sdr += p.mixture_sdr;
  }
  if (n > 0) {
    report.mean_sdr /= n;
    report.mean_sir /= n;
    report.mean_sar /= n;
    report.mean_stoi /= n;
    report.mean_mixture_sdr /= static_cast<double>(report.per_pair.size());
  }
  return report;
}

}  // namespace avsep

#endif  // AVSEP_EVAL_HPP_
