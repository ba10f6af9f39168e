// include/avsep/cli.hpp
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
// Command-line front end. Exit codes: 0 success, 1 domain error, 2 usage.

#ifndef AVSEP_CLI_HPP_
#define AVSEP_CLI_HPP_

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "avsep/config.hpp"
#include "avsep/eval.hpp"
#include "avsep/fixture.hpp"
#include "avsep/inference.hpp"
#include "avsep/runner.hpp"

namespace avsep {

namespace cli_detail {

inline RunConfig build_config(const std::string& config_arg,
                              const std::vector<std::string>& overrides,
                              bool no_cross_modal, bool no_consistency,
                              bool static_face_only, bool lip_motion_only) {
  RunConfig rc = RunConfig::resolve(config_arg);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got \"" + kv + "\"");
    rc.set_from_string(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (static_face_only && lip_motion_only)
    throw ConfigError("--static-face-only and --lip-motion-only conflict");
  if (static_face_only) rc.set("model.visual_mode", "face_only");
  if (lip_motion_only) rc.set("model.visual_mode", "lip_only");
  if (no_cross_modal) rc.set("train.use_cross_modal", false);
  if (no_consistency) rc.set("train.use_consistency", false);
  return rc;
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  os << j.dump(2) << "\n";
}

inline SpeakerVisualStream load_stream_from_dirs(const std::string& roi_dir,
                                                 const std::string& face_dir,
                                                 int roi_size, int face_size,
                                                 Rng* face_rng) {
  ManifestEntry fake;
  fake.roi_dir = roi_dir;
  fake.face_dir = face_dir;
  fake.roi_files = detail::sorted_dir_files(roi_dir);
  fake.face_files = detail::sorted_dir_files(face_dir);
  if (fake.roi_files.empty()) throw MissingAsset("no ROI frames in " + roi_dir);
  if (fake.face_files.empty()) throw MissingAsset("no face crops in " + face_dir);
  return load_visual_stream(fake, roi_size, face_size, face_rng);
}

inline void write_separation(const SeparationResult& res, const std::string& out_dir,
                             const std::string& clip_id, const std::string& digest,
                             uint64_t seed, const std::string& mode) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  nlohmann::json outputs = nlohmann::json::array();
  for (std::size_t k = 0; k < res.sources.size(); ++k) {
    const std::string name = clip_id + ".spk" + std::to_string(k + 1) + ".wav";
    write_wav((fs::path(out_dir) / name).string(), res.sources[k]);
    outputs.push_back(name);
  }
  nlohmann::json sidecar = {{"clip_id", clip_id},
                            {"mode", mode},
                            {"outputs", outputs},
                            {"window_seconds", res.window_seconds},
                            {"hop_seconds", res.hop_seconds},
                            {"blend", res.blend},
                            {"n_windows", res.window_starts.size()},
                            {"config_digest", digest},
                            {"seed", seed}};
  write_json((fs::path(out_dir) / (clip_id + ".json")).string(), sidecar);
}

}  // namespace cli_detail

inline int dispatch(int argc, const char* const* argv) {
  CLI::App app{"avsep: audio-visual speech separation toolkit"};
  app.require_subcommand(1);

  uint64_t seed = 0;
  app.add_option("--seed", seed, "global random seed")->capture_default_str();

  std::string config_arg = "paper";
  std::vector<std::string> overrides;
  bool no_cross_modal = false, no_consistency = false;
  bool static_face_only = false, lip_motion_only = false;
  app.add_option("--config", config_arg,
                 "preset name (desk, paper) or path to a JSON config");
  app.add_option("--set", overrides, "override a config key, e.g. --set train.batch_size=4");
  app.add_flag("--no-cross-modal-loss", no_cross_modal, "disable the cross-modal matching loss");
  app.add_flag("--no-consistency-loss", no_consistency, "disable the speaker consistency loss");
  app.add_flag("--static-face-only", static_face_only, "guide separation with the face image only");
  app.add_flag("--lip-motion-only", lip_motion_only, "guide separation with lip motion only");

  // ---- fixture ----
  auto* fixture_cmd = app.add_subcommand("fixture", "generate a synthetic desk-scale corpus");
  std::string fixture_out;
  FixtureOptions fx;
  fixture_cmd->add_option("--out", fixture_out, "output directory (default: $AVSEP_CACHE)");
  fixture_cmd->add_option("--speakers", fx.n_speakers, "number of speakers")->capture_default_str();
  fixture_cmd->add_option("--clips", fx.clips_per_speaker, "clips per speaker")->capture_default_str();
  fixture_cmd->add_option("--clip-seconds", fx.clip_seconds, "clip duration")->capture_default_str();
  fixture_cmd->add_option("--noise-clips", fx.noise_clips, "non-speech clips for enhancement")->capture_default_str();
  fixture_cmd->add_option("--roi-size", fx.roi_size, "mouth ROI side length")->capture_default_str();
  fixture_cmd->add_option("--face-size", fx.face_size, "face crop side length")->capture_default_str();

  // ---- sample ----
  auto* sample_cmd = app.add_subcommand("sample", "preview one training tuple");
  std::string sample_manifest, sample_out;
  sample_cmd->add_option("--manifest", sample_manifest, "manifest path")->required();
  sample_cmd->add_option("--out", sample_out, "output directory")->required();

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "train the separator");
  std::string train_manifest, train_out, train_resume, train_noise_dir;
  long train_steps = 100;
  int train_workers = 1;
  bool no_timing = false;
  train_cmd->add_option("--manifest", train_manifest, "manifest path")->required();
  train_cmd->add_option("--out", train_out, "output directory")->required();
  train_cmd->add_option("--steps", train_steps, "total optimization steps")->capture_default_str();
  train_cmd->add_option("--resume", train_resume, "checkpoint to resume from");
  train_cmd->add_option("--workers", train_workers, "data/gradient worker threads")->capture_default_str();
  train_cmd->add_option("--noise-dir", train_noise_dir, "enhancement noise pool directory");
  train_cmd->add_flag("--no-timing", no_timing, "omit wall_ms from log records");

  // ---- separate ----
  auto* sep_cmd = app.add_subcommand("separate", "separate a two-speaker clip");
  std::string sep_input, sep_ckpt, sep_out, rois_a, faces_a, rois_b, faces_b;
  long random_face_seed = -1;
  sep_cmd->add_option("--input", sep_input, "mixture WAV")->required();
  sep_cmd->add_option("--checkpoint", sep_ckpt, "trained checkpoint")->required();
  sep_cmd->add_option("--out-dir", sep_out, "output directory")->required();
  sep_cmd->add_option("--rois-a", rois_a, "speaker A mouth-ROI directory")->required();
  sep_cmd->add_option("--faces-a", faces_a, "speaker A face-crop directory")->required();
  sep_cmd->add_option("--rois-b", rois_b, "speaker B mouth-ROI directory");
  sep_cmd->add_option("--faces-b", faces_b, "speaker B face-crop directory");
  sep_cmd->add_option("--random-face-frame", random_face_seed,
                      "pick the face image at random with this seed (default: central)");

  // ---- enhance ----
  auto* enh_cmd = app.add_subcommand("enhance", "suppress non-target audio around one speaker");
  std::string enh_input, enh_ckpt, enh_out, enh_rois, enh_faces;
  enh_cmd->add_option("--input", enh_input, "noisy WAV")->required();
  enh_cmd->add_option("--checkpoint", enh_ckpt, "trained checkpoint")->required();
  enh_cmd->add_option("--out-dir", enh_out, "output directory")->required();
  enh_cmd->add_option("--rois", enh_rois, "target mouth-ROI directory")->required();
  enh_cmd->add_option("--faces", enh_faces, "target face-crop directory")->required();
  enh_cmd->add_option("--random-face-frame", random_face_seed,
                      "pick the face image at random with this seed (default: central)");

  // ---- eval-sep ----
  auto* evs_cmd = app.add_subcommand("eval-sep", "separation quality over seeded test pairs");
  std::string evs_manifest, evs_ckpt, evs_out;
  bool oracle_masks = false, mixture_baseline = false, best_perm = false;
  int evs_pairs = -1;
  evs_cmd->add_option("--manifest", evs_manifest, "manifest path")->required();
  evs_cmd->add_option("--checkpoint", evs_ckpt, "trained checkpoint (for the model estimator)");
  evs_cmd->add_option("--out", evs_out, "report JSON path");
  evs_cmd->add_option("--pairs", evs_pairs, "number of test pairs");
  evs_cmd->add_flag("--oracle-masks", oracle_masks, "use ground-truth masks (pipeline oracle)");
  evs_cmd->add_flag("--mixture-baseline", mixture_baseline, "estimate = mixture floor");
  evs_cmd->add_flag("--best-permutation", best_perm, "score unassigned estimates at their best matching");

  // ---- eval-verify ----
  auto* evv_cmd = app.add_subcommand("eval-verify", "cross-modal face-voice verification");
  std::string evv_manifest, evv_ckpt, evv_out;
  evv_cmd->add_option("--manifest", evv_manifest, "manifest path")->required();
  evv_cmd->add_option("--checkpoint", evv_ckpt, "trained checkpoint")->required();
  evv_cmd->add_option("--out", evv_out, "report JSON path");

  // ---- export-embeddings ----
  auto* exp_cmd = app.add_subcommand("export-embeddings", "face/voice embeddings as CSV");
  std::string exp_manifest, exp_ckpt, exp_out;
  exp_cmd->add_option("--manifest", exp_manifest, "manifest path")->required();
  exp_cmd->add_option("--checkpoint", exp_ckpt, "trained checkpoint")->required();
  exp_cmd->add_option("--out", exp_out, "CSV output path")->required();

  // ---- check ----
  auto* check_cmd = app.add_subcommand("check", "self-test: DSP round-trip and gradient fidelity");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    std::cerr << app.help() << "\n";
    return 2;
  }

  try {
    RunConfig rc = cli_detail::build_config(config_arg, overrides, no_cross_modal,
                                            no_consistency, static_face_only,
                                            lip_motion_only);

    if (*fixture_cmd) {
      std::string out = fixture_out;
      if (out.empty()) {
        const char* cache = std::getenv("AVSEP_CACHE");
        if (!cache)
          throw ConfigError("fixture needs --out or the AVSEP_CACHE environment variable");
        out = std::string(cache) + "/fixture-" + std::to_string(seed);
      }
      const std::string manifest = make_synthetic_fixture(out, seed, fx);
      std::cout << manifest << "\n";
      return 0;
    }

    if (*sample_cmd) {
      namespace fs = std::filesystem;
      Manifest m = load_manifest(sample_manifest);
      TrainingTuple t = sample_training_tuple(m, seed, rc.sampler_options());
      fs::create_directories(sample_out);
      write_wav((fs::path(sample_out) / "x1.wav").string(), t.x1);
      write_wav((fs::path(sample_out) / "x2.wav").string(), t.x2);
      write_wav((fs::path(sample_out) / "sA1.wav").string(), t.sA1);
      write_wav((fs::path(sample_out) / "sA2.wav").string(), t.sA2);
      write_wav((fs::path(sample_out) / "sB.wav").string(), t.sB);
      nlohmann::json meta = {{"video_a", t.video_a},   {"video_b", t.video_b},
                             {"clip_a1", t.clip_a1},   {"clip_a2", t.clip_a2},
                             {"clip_b", t.clip_b},     {"seed", seed},
                             {"config_digest", rc.digest()},
                             {"manifest_digest", m.digest}};
      cli_detail::write_json((fs::path(sample_out) / "tuple.json").string(), meta);
      std::cout << "tuple written to " << sample_out << "\n";
      return 0;
    }

    if (*train_cmd) {
      namespace fs = std::filesystem;
      fs::create_directories(train_out);
      Manifest m = load_manifest(train_manifest);
      const ModelConfig mcfg = rc.model_config();
      TrainConfig tcfg = rc.train_config();
      tcfg.loss.use_cross_modal = rc.get<bool>("train.use_cross_modal");
      tcfg.loss.use_consistency = rc.get<bool>("train.use_consistency");

      TrainState state = train_resume.empty() ? TrainState::create(mcfg, seed)
                                              : load_checkpoint(train_resume);
      state.run_digest = rc.digest();
      state.run_seed = seed;

      RunOptions run;
      run.steps = train_steps;
      run.seed = seed;
      run.workers = train_workers;
      run.log_path = (fs::path(train_out) / "log.jsonl").string();
      run.checkpoint_path = (fs::path(train_out) / "checkpoint.ckpt").string();
      run.noise_dir = train_noise_dir;
      run.log_timing = !no_timing;

      nlohmann::json echo = rc.json();
      echo["seed"] = seed;
      echo["config_digest"] = rc.digest();
      cli_detail::write_json((fs::path(train_out) / "run_config.json").string(), echo);

      LossBreakdown last = run_training(state, m, rc.sampler_options(), tcfg, run,
                                        rc.digest());
      save_checkpoint(state, run.checkpoint_path);
      std::cout << "step " << state.step << " total " << last.total << " mask "
                << last.mask_prediction << "\n";
      return 0;
    }

    if (*sep_cmd) {
      TrainState state = load_checkpoint(sep_ckpt);
      const ModelConfig& mcfg = state.model->config();
      Rng face_rng(static_cast<uint64_t>(random_face_seed));
      Rng* rng_ptr = random_face_seed >= 0 ? &face_rng : nullptr;
      std::vector<SpeakerVisualStream> streams;
      streams.push_back(cli_detail::load_stream_from_dirs(
          rois_a, faces_a, static_cast<int>(mcfg.roi_size),
          static_cast<int>(mcfg.face_size), rng_ptr));
      if (!rois_b.empty()) {
        if (faces_b.empty()) throw ConfigError("--rois-b needs --faces-b");
        streams.push_back(cli_detail::load_stream_from_dirs(
            rois_b, faces_b, static_cast<int>(mcfg.roi_size),
            static_cast<int>(mcfg.face_size), rng_ptr));
      }
      Waveform mix = read_wav(sep_input);
      ModelPredictor pred(*state.model, streams, rc.get<int>("sampler.fps"));
      auto res = separate_clip(mix, streams, pred, rc.window_config(), mcfg.stft,
                               rc.get<int>("sampler.fps"));
      const std::string clip_id = std::filesystem::path(sep_input).stem().string();
      cli_detail::write_separation(res, sep_out, clip_id, state.run_digest.empty()
                                                              ? rc.digest()
                                                              : state.run_digest,
                                   seed, "separate");
      std::cout << "wrote " << res.sources.size() << " sources to " << sep_out << "\n";
      return 0;
    }

    if (*enh_cmd) {
      TrainState state = load_checkpoint(enh_ckpt);
      const ModelConfig& mcfg = state.model->config();
      Rng face_rng(static_cast<uint64_t>(random_face_seed));
      Rng* rng_ptr = random_face_seed >= 0 ? &face_rng : nullptr;
      SpeakerVisualStream target = cli_detail::load_stream_from_dirs(
          enh_rois, enh_faces, static_cast<int>(mcfg.roi_size),
          static_cast<int>(mcfg.face_size), rng_ptr);
      Waveform mix = read_wav(enh_input);
      auto res = enhance_clip(mix, target, *state.model, rc.window_config(),
                              rc.get<int>("sampler.fps"));
      const std::string clip_id = std::filesystem::path(enh_input).stem().string();
      cli_detail::write_separation(res, enh_out, clip_id, state.run_digest.empty()
                                                              ? rc.digest()
                                                              : state.run_digest,
                                   seed, "enhance");
      std::cout << "wrote enhanced audio to " << enh_out << "\n";
      return 0;
    }

    if (*evs_cmd) {
      Manifest m = load_manifest(evs_manifest);
      EvalProtocol proto;
      proto.n_pairs = evs_pairs > 0 ? evs_pairs : rc.get<int>("eval.pairs");
      proto.seed = seed;
      proto.mix_snr_db = rc.get<double>("eval.mix_snr_db");
      proto.window = rc.window_config();
      proto.best_permutation = best_perm;
      proto.stft.window_length = rc.get<long>("stft.window_length");
      proto.stft.hop = rc.get<long>("stft.hop");
      proto.stft.fft_size = rc.get<long>("stft.fft_size");
      proto.fps = rc.get<int>("sampler.fps");

      std::unique_ptr<TrainState> state;
      const SeparatorModel* model = nullptr;
      if (oracle_masks) {
        proto.estimator = EvalProtocol::Estimator::oracle_masks;
      } else if (mixture_baseline) {
        proto.estimator = EvalProtocol::Estimator::mixture_baseline;
      } else {
        if (evs_ckpt.empty())
          throw ConfigError("eval-sep needs --checkpoint, --oracle-masks, or --mixture-baseline");
        state = std::make_unique<TrainState>(load_checkpoint(evs_ckpt));
        model = state->model.get();
      }
      EvalReport report = evaluate_separation(m, model, proto);
      std::cout << "estimator " << proto.estimator_name() << "  pairs "
                << report.per_pair.size() << "\n"
                << "mean sdr " << report.mean_sdr << "  sir " << report.mean_sir
                << "  sar " << report.mean_sar << "  stoi " << report.mean_stoi
                << "  mixture-floor sdr " << report.mean_mixture_sdr << "\n";
      if (!evs_out.empty()) cli_detail::write_json(evs_out, report.to_json());
      return 0;
    }

    if (*evv_cmd) {
      Manifest m = load_manifest(evv_manifest);
      TrainState state = load_checkpoint(evv_ckpt);
      VerificationReport rep = verify_manifest(m, *state.model);
      nlohmann::json out = {{"auc", rep.auc},
                            {"eer", rep.eer},
                            {"n_pairs", rep.n_pairs},
                            {"threshold_at_eer", rep.threshold_at_eer},
                            {"manifest_digest", m.digest},
                            {"config_digest", state.model->config().digest()},
                            {"seed", seed}};
      std::cout << "auc " << rep.auc << "  eer " << rep.eer << "  pairs "
                << rep.n_pairs << "\n";
      if (!evv_out.empty()) cli_detail::write_json(evv_out, out);
      return 0;
    }

    if (*exp_cmd) {
      Manifest m = load_manifest(exp_manifest);
      TrainState state = load_checkpoint(exp_ckpt);
      const auto embs = extract_clip_embeddings(m, *state.model);
      std::ofstream os(exp_out);
      if (!os) throw IoError("cannot write " + exp_out);
      os << "# config_digest=" << state.model->config().digest() << " seed=" << seed
         << "\n";
      os << "clip_id,video_id,modality";
      const std::size_t dim = embs.empty() ? 0 : embs[0].face.size();
      for (std::size_t i = 0; i < dim; ++i) os << ",v" << i;
      os << "\n";
      os.precision(17);
      for (const auto& e : embs) {
        os << e.clip_id << "," << e.video_id << ",face";
        for (double v : e.face) os << "," << v;
        os << "\n";
        os << e.clip_id << "," << e.video_id << ",voice";
        for (double v : e.voice) os << "," << v;
        os << "\n";
      }
      std::cout << "wrote " << 2 * embs.size() << " rows to " << exp_out << "\n";
      return 0;
    }

    if (*check_cmd) {
      bool all_ok = true;
      // DSP round-trip
      {
        double worst = 0.0;
        for (uint64_t s = 0; s < 20; ++s) {
          Rng rng(s + 1);
          Waveform w;
          w.samples.resize(40800);
          for (auto& v : w.samples) v = rng.uniform(-0.5, 0.5);
          ComplexSpectrogram spec = stft(w);
          Waveform back = istft(spec, spec.config, w.size());
          double num = 0, den = 0;
          for (std::size_t i = 400; i + 400 < w.samples.size(); ++i) {
            const double d = w.samples[i] - back.samples[i];
            num += d * d;
            den += w.samples[i] * w.samples[i];
          }
          worst = std::max(worst, std::sqrt(num / den));
        }
        const bool ok = worst <= 1e-6;
        all_ok &= ok;
        std::cout << (ok ? "PASS" : "FAIL") << " dsp round-trip (worst rel err "
                  << worst << ")\n";
      }
      // shape conformance
      {
        Rng rng(7);
        Waveform w;
        w.samples.resize(40800);
        for (auto& v : w.samples) v = rng.uniform(-0.5, 0.5);
        ComplexSpectrogram s = stft(w);
        const bool ok = s.freq_bins() == 257 && s.frames() == 256;
        all_ok &= ok;
        std::cout << (ok ? "PASS" : "FAIL") << " stft shape 257x256\n";
      }
      // gradient fidelity on the reduced model
      {
        ModelConfig tiny;
        tiny.n_time_steps = 8;
        tiny.channel_scale = 0.0625;
        tiny.embed_dim = 16;
        tiny.roi_size = 40;
        tiny.face_size = 48;
        tiny.stft.window_length = 100;
        tiny.stft.hop = 40;
        tiny.stft.fft_size = 128;
        tiny.init_seed = 7;
        GradCheckReport rep = gradient_check(tiny, LossWeights{}, seed + 11, 220);
        const bool ok = rep.passed(1e-3);
        all_ok &= ok;
        std::cout << (ok ? "PASS" : "FAIL") << " gradient check (" << rep.n_checked
                  << " params, max rel err " << rep.max_rel_err << ")\n";
      }
      return all_ok ? 0 : 1;
    }

    std::cerr << app.help() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace avsep

#endif  // AVSEP_CLI_HPP_
