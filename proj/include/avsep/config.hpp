// include/avsep/config.hpp
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
// Run configuration: a flat map of dotted keys merged from a preset or JSON
// file plus command-line overrides. Unknown keys are rejected; the content
// digest of the effective settings is stamped into every artifact.

#ifndef AVSEP_CONFIG_HPP_
#define AVSEP_CONFIG_HPP_

#include <json.hpp>

#include <fstream>
#include <map>
#include <set>
#include <string>

#include "avsep/digest.hpp"
#include "avsep/error.hpp"
#include "avsep/inference.hpp"
#include "avsep/model.hpp"
#include "avsep/training.hpp"

namespace avsep {

class RunConfig {
 public:
  RunConfig() { values_ = defaults(); }

  static nlohmann::json defaults() {
    return {
        {"model.channel_scale", 1.0},
        {"model.mode", "dedicated_two_speaker"},
        {"model.visual_mode", "full"},
        {"model.embed_dim", 128},
        {"model.lip_feature_dim", 512},
        {"model.audio_channels", 512},
        {"model.mask_bound", 5.0},
        {"model.use_norm", true},
        {"model.init_seed", 1},
        {"model.n_time_steps", 64},
        {"model.roi_size", 88},
        {"model.face_size", 224},
        {"stft.window_length", 400},
        {"stft.hop", 160},
        {"stft.fft_size", 512},
        {"train.learning_rate", 1e-4},
        {"train.weight_decay", 1e-4},
        {"train.batch_size", 128},
        {"train.checkpoint_interval", 500},
        {"train.lambda1", 0.01},
        {"train.lambda2", 0.01},
        {"train.margin", 0.5},
        {"train.sum_reduction", false},
        {"train.use_cross_modal", true},
        {"train.use_consistency", true},
        {"train.corruption", false},
        {"train.corruption_max_shift", 1.0},
        {"train.corruption_max_occlusion", 1.0},
        {"train.enhancement", false},
        {"train.enhancement_snr_lo", -5.0},
        {"train.enhancement_snr_hi", 5.0},
        {"sampler.mix_snr_lo", -2.5},
        {"sampler.mix_snr_hi", 2.5},
        {"sampler.fps", 25},
        {"sampler.cirm_eps", 1e-8},
        {"eval.pairs", 20},
        {"eval.mix_snr_db", 0.0},
        {"window.seconds", 2.55},
        {"window.hop_seconds", 1.275},
        {"window.blend", "crossfade_hann"},
    };
  }

  // Named presets: "paper" is the defaults; "desk" shrinks the model and
  // batch for commodity hardware.
  static RunConfig preset(const std::string& name) {
    RunConfig cfg;
    if (name == "paper") return cfg;
    if (name == "desk") {
      cfg.set("model.channel_scale", 0.25);
      cfg.set("train.batch_size", 8);
      return cfg;
    }
    throw ConfigError("unknown preset \"" + name + "\" (use desk or paper)");
  }

  static RunConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("config file: ") + e.what());
    }
    RunConfig cfg;
    for (const auto& [key, value] : j.items()) cfg.set(key, value);
    return cfg;
  }

  // Preset name or a path to a JSON file.
  static RunConfig resolve(const std::string& name_or_path) {
    if (name_or_path == "desk" || name_or_path == "paper")
      return preset(name_or_path);
    return from_file(name_or_path);
  }

  void set(const std::string& key, const nlohmann::json& value) {
    if (!values_.contains(key))
      throw ConfigError("unknown config key \"" + key + "\"");
    // keep the original type where sensible
    values_[key] = value;
  }

  void set_from_string(const std::string& key, const std::string& raw) {
    if (!values_.contains(key))
      throw ConfigError("unknown config key \"" + key + "\"");
    const auto& current = values_[key];
    try {
      if (current.is_boolean()) {
        values_[key] = (raw == "true" || raw == "1");
      } else if (current.is_number_integer()) {
        values_[key] = std::stol(raw);
      } else if (current.is_number_float()) {
        values_[key] = std::stod(raw);
      } else {
        values_[key] = raw;
      }
    } catch (const std::exception&) {
      throw ConfigError("cannot parse value \"" + raw + "\" for key " + key);
    }
  }

  template <typename T>
  T get(const std::string& key) const {
    if (!values_.contains(key)) throw ConfigError("unknown config key " + key);
    return values_.at(key).get<T>();
  }

  const nlohmann::json& json() const { return values_; }

  std::string digest() const { return digest_of_string(values_.dump()); }

  ModelConfig model_config() const {
    ModelConfig m;
    m.channel_scale = get<double>("model.channel_scale");
    m.mode = separator_mode_from(get<std::string>("model.mode"));
    m.visual_mode = visual_mode_from(get<std::string>("model.visual_mode"));
    m.embed_dim = get<long>("model.embed_dim");
    m.lip_feature_dim = get<long>("model.lip_feature_dim");
    m.audio_channels = get<long>("model.audio_channels");
    m.mask_bound = get<double>("model.mask_bound");
    m.use_norm = get<bool>("model.use_norm");
    m.init_seed = get<uint64_t>("model.init_seed");
    m.n_time_steps = get<long>("model.n_time_steps");
    m.roi_size = get<long>("model.roi_size");
    m.face_size = get<long>("model.face_size");
    m.stft.window_length = get<long>("stft.window_length");
    m.stft.hop = get<long>("stft.hop");
    m.stft.fft_size = get<long>("stft.fft_size");
    return m;
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.learning_rate = get<double>("train.learning_rate");
    t.weight_decay = get<double>("train.weight_decay");
    t.batch_size = get<long>("train.batch_size");
    t.checkpoint_interval = get<long>("train.checkpoint_interval");
    t.loss.lambda1 = get<double>("train.lambda1");
    t.loss.lambda2 = get<double>("train.lambda2");
    t.loss.margin = get<double>("train.margin");
    t.loss.sum_reduction = get<bool>("train.sum_reduction");
    t.corruption = get<bool>("train.corruption");
    t.enhancement = get<bool>("train.enhancement");
    t.enhancement_snr_lo = get<double>("train.enhancement_snr_lo");
    t.enhancement_snr_hi = get<double>("train.enhancement_snr_hi");
    return t;
  }

  SamplerOptions sampler_options() const {
    SamplerOptions s;
    s.mix_snr_lo = get<double>("sampler.mix_snr_lo");
    s.mix_snr_hi = get<double>("sampler.mix_snr_hi");
    s.fps = get<int>("sampler.fps");
    s.cirm_eps = get<double>("sampler.cirm_eps");
    s.mask_bound = get<double>("model.mask_bound");
    s.n_frames = get<long>("model.n_time_steps");
    s.roi_size = static_cast<int>(get<long>("model.roi_size"));
    s.face_size = static_cast<int>(get<long>("model.face_size"));
    s.stft_cfg.window_length = get<long>("stft.window_length");
    s.stft_cfg.hop = get<long>("stft.hop");
    s.stft_cfg.fft_size = get<long>("stft.fft_size");
    s.corruption_enabled = get<bool>("train.corruption");
    s.corruption_max_shift = get<double>("train.corruption_max_shift");
    s.corruption_max_occlusion = get<double>("train.corruption_max_occlusion");
    // segment length follows the spectrogram frame count
    s.segment_seconds =
        static_cast<double>((4 * s.n_frames - 1) * s.stft_cfg.hop) / 16000.0;
    return s;
  }

  WindowConfig window_config() const {
    WindowConfig w;
    w.window_seconds = get<double>("window.seconds");
    w.hop_seconds = get<double>("window.hop_seconds");
    const std::string blend = get<std::string>("window.blend");
    if (blend == "crossfade_hann")
      w.blend = WindowConfig::Blend::crossfade_hann;
    else if (blend == "overlap_average")
      w.blend = WindowConfig::Blend::overlap_average;
    else
      throw ConfigError("unknown blend \"" + blend + "\"");
    return w;
  }

 private:
  nlohmann::json values_;
};

}  // namespace avsep

#endif  // AVSEP_CONFIG_HPP_
