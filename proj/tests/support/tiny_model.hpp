// tests/support/tiny_model.hpp
//
// Reduced model configuration used by gradient checks and fast training
// tests: short segments, small images, narrow channels.

#ifndef AVSEP_TESTS_SUPPORT_TINY_MODEL_HPP_
#define AVSEP_TESTS_SUPPORT_TINY_MODEL_HPP_

#include "avsep/model.hpp"

namespace tiny {

inline avsep::ModelConfig config(avsep::SeparatorMode mode =
                                     avsep::SeparatorMode::dedicated_two_speaker,
                                 avsep::VisualMode vis = avsep::VisualMode::full) {
  avsep::ModelConfig cfg;
  cfg.n_time_steps = 8;
  cfg.lip_feature_dim = 512;
  cfg.embed_dim = 16;
  cfg.audio_channels = 512;
  cfg.channel_scale = 0.0625;
  cfg.mode = mode;
  cfg.visual_mode = vis;
  cfg.roi_size = 40;
  cfg.face_size = 48;
  cfg.stft.window_length = 100;
  cfg.stft.hop = 40;
  cfg.stft.fft_size = 128;  // 65 bins -> 16 after the stride-2 stages
  cfg.init_seed = 7;
  return cfg;
}

}  // namespace tiny

#endif  // AVSEP_TESTS_SUPPORT_TINY_MODEL_HPP_
