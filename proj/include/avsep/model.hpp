// include/avsep/model.hpp
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
// The audio-visual separator: lip-motion encoder (3D conv stem + shared
// per-frame 2D encoder + temporal convolutions), facial and vocal attribute
// encoders (residual image encoders ending in unit-norm embeddings), and a
// U-Net style mask predictor over complex spectrograms with frequency
// pooling on the way down and frequency upsampling plus skip connections on
// the way up. A Tanh + scaling head bounds mask components to [-K, K].

#ifndef AVSEP_MODEL_HPP_
#define AVSEP_MODEL_HPP_

#include <json.hpp>

#include <algorithm>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "avsep/data_engine.hpp"
#include "avsep/digest.hpp"
#include "avsep/dsp.hpp"
#include "avsep/error.hpp"
#include "avsep/nn.hpp"

namespace avsep {

enum class SeparatorMode { general_single_speaker, dedicated_two_speaker };
enum class VisualMode { full, lip_only, face_only, none };

inline std::string to_string(SeparatorMode m) {
  return m == SeparatorMode::general_single_speaker ? "general_single_speaker"
                                                    : "dedicated_two_speaker";
}
inline std::string to_string(VisualMode m) {
  switch (m) {
    case VisualMode::full: return "full";
    case VisualMode::lip_only: return "lip_only";
    case VisualMode::face_only: return "face_only";
    case VisualMode::none: return "none";
  }
  return "full";
}
inline SeparatorMode separator_mode_from(const std::string& s) {
  if (s == "general_single_speaker") return SeparatorMode::general_single_speaker;
  if (s == "dedicated_two_speaker") return SeparatorMode::dedicated_two_speaker;
  throw ConfigError("unknown separator mode: " + s);
}
inline VisualMode visual_mode_from(const std::string& s) {
  if (s == "full") return VisualMode::full;
  if (s == "lip_only") return VisualMode::lip_only;
  if (s == "face_only") return VisualMode::face_only;
  if (s == "none") return VisualMode::none;
  throw ConfigError("unknown visual mode: " + s);
}

struct ModelConfig {
  long n_time_steps = 64;      // N
  long lip_feature_dim = 512;  // V_l at scale 1
  long embed_dim = 128;        // V_f, face and voice embedding width
  long audio_channels = 512;   // D at scale 1
  double mask_bound = 5.0;     // K
  double channel_scale = 1.0;
  SeparatorMode mode = SeparatorMode::dedicated_two_speaker;
  VisualMode visual_mode = VisualMode::full;
  long roi_size = 88;
  long face_size = 224;
  StftConfig stft{};
  bool use_norm = true;
  uint64_t init_seed = 1;

  long scaled(long base) const {
    const long v = static_cast<long>(std::llround(base * channel_scale));
    return std::max<long>(1, v);
  }
  long v_l() const { return scaled(lip_feature_dim); }
  long v_f() const { return embed_dim; }
  long d_audio() const { return scaled(audio_channels); }
  long freq_bins() const { return stft.freq_bins(); }
  long frames() const { return 4 * n_time_steps; }

  long visual_dim() const {
    switch (visual_mode) {
      case VisualMode::full: return v_l() + v_f();
      case VisualMode::lip_only: return v_l();
      case VisualMode::face_only: return v_f();
      case VisualMode::none: return 0;
    }
    return 0;
  }
  int speakers_in_fusion() const {
    if (visual_mode == VisualMode::none) return 0;
    return mode == SeparatorMode::dedicated_two_speaker ? 2 : 1;
  }
  long fusion_dim() const { return d_audio() + visual_dim() * speakers_in_fusion(); }
  long n_masks() const { return mode == SeparatorMode::dedicated_two_speaker ? 2 : 1; }

  nlohmann::json to_json() const {
    return {{"n_time_steps", n_time_steps},
            {"lip_feature_dim", lip_feature_dim},
            {"embed_dim", embed_dim},
            {"audio_channels", audio_channels},
            {"mask_bound", mask_bound},
            {"channel_scale", channel_scale},
            {"mode", to_string(mode)},
            {"visual_mode", to_string(visual_mode)},
            {"roi_size", roi_size},
            {"face_size", face_size},
            {"stft_window", stft.window_length},
            {"stft_hop", stft.hop},
            {"stft_fft", stft.fft_size},
            {"use_norm", use_norm},
            {"init_seed", init_seed}};
  }
  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.n_time_steps = j.at("n_time_steps").get<long>();
    c.lip_feature_dim = j.at("lip_feature_dim").get<long>();
    c.embed_dim = j.at("embed_dim").get<long>();
    c.audio_channels = j.at("audio_channels").get<long>();
    c.mask_bound = j.at("mask_bound").get<double>();
    c.channel_scale = j.at("channel_scale").get<double>();
    c.mode = separator_mode_from(j.at("mode").get<std::string>());
    c.visual_mode = visual_mode_from(j.at("visual_mode").get<std::string>());
    c.roi_size = j.at("roi_size").get<long>();
    c.face_size = j.at("face_size").get<long>();
    c.stft.window_length = j.at("stft_window").get<long>();
    c.stft.hop = j.at("stft_hop").get<long>();
    c.stft.fft_size = j.at("stft_fft").get<long>();
    c.use_norm = j.at("use_norm").get<bool>();
    c.init_seed = j.at("init_seed").get<uint64_t>();
    return c;
  }
  std::string digest() const { return digest_of_string(to_json().dump()); }
};

// 128-dim (by default) unit-norm attribute vector.
struct Embedding {
  Tensor values;
  enum class Modality { face, voice } modality = Modality::face;
};

namespace nnm {

using namespace ::avsep::nn;

// Residual image-encoder block: two 3x3 convolutions with normalization and
// an identity or 1x1-projection skip.
struct BasicBlock : Layer {
  Sequential main;
  Sequential proj;  // empty = identity skip
  bool has_proj = false;

  BasicBlock(ParamStore& s, Rng& rng, const std::string& name, long in_c, long out_c,
             long stride, bool use_norm) {
    main.emplace<Conv2d>(s, rng, name + ".conv1", in_c, out_c, 3, 3, stride, stride, 1, 1);
    if (use_norm) main.emplace<InstanceNorm>(s, name + ".in1", out_c);
    main.emplace<ReLU>();
    main.emplace<Conv2d>(s, rng, name + ".conv2", out_c, out_c, 3, 3, 1, 1, 1, 1);
    if (use_norm) main.emplace<InstanceNorm>(s, name + ".in2", out_c);
    if (stride != 1 || in_c != out_c) {
      has_proj = true;
      proj.emplace<Conv2d>(s, rng, name + ".proj", in_c, out_c, 1, 1, stride, stride, 0, 0);
      if (use_norm) proj.emplace<InstanceNorm>(s, name + ".proj_in", out_c);
    }
  }

  Tensor forward(const Tensor& x, Tape& tape) const override {
    Tensor m = main.forward(x, tape);
    Tensor sk = has_proj ? proj.forward(x, tape) : x;
    Tensor pre(m.shape());
    for (long i = 0; i < m.numel(); ++i) pre[i] = m[i] + sk[i];
    Tensor y(pre.shape());
    for (long i = 0; i < pre.numel(); ++i) y[i] = pre[i] > 0.0 ? pre[i] : 0.0;
    tape.push(pre);
    return y;
  }

  Tensor backward(const Tensor& gy, Tape& tape, Grads& grads) const override {
    Tensor pre = tape.pop();
    Tensor gpre(pre.shape());
    for (long i = 0; i < pre.numel(); ++i) gpre[i] = pre[i] > 0.0 ? gy[i] : 0.0;
    Tensor dx_skip;
    if (has_proj) {
      dx_skip = proj.backward(gpre, tape, grads);
    } else {
      dx_skip = gpre;
    }
    Tensor dx = main.backward(gpre, tape, grads);
    for (long i = 0; i < dx.numel(); ++i) dx[i] += dx_skip[i];
    return dx;
  }
};

// Applies a shared 2D stack to every temporal frame of (C, T, H, W). When
// the stack emits vectors the output is (D, T); otherwise (C', T, H', W').
struct PerFrame : Layer {
  Sequential stack;

  Tensor forward(const Tensor& x, Tape& tape) const override {
    const long c = x.dim(0), t_len = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor out;
    for (long t = 0; t < t_len; ++t) {
      Tensor frame({c, h, w});
      for (long ci = 0; ci < c; ++ci) {
        const double* src = x.data() + (ci * t_len + t) * h * w;
        std::copy(src, src + h * w, frame.data() + ci * h * w);
      }
      Tensor y = stack.forward(frame, tape);
      if (t == 0) {
        if (y.ndim() == 1) {
          out = Tensor({y.numel(), t_len});
        } else {
          out = Tensor({y.dim(0), t_len, y.dim(1), y.dim(2)});
        }
      }
      if (y.ndim() == 1) {
        for (long d = 0; d < y.numel(); ++d) out.at({d, t}) = y[d];
      } else {
        const long hw = y.dim(1) * y.dim(2);
        for (long co = 0; co < y.dim(0); ++co) {
          double* dst = out.data() + (co * t_len + t) * hw;
          std::copy(y.data() + co * hw, y.data() + (co + 1) * hw, dst);
        }
      }
    }
    tape.push(Tensor::from_vector({4}, {static_cast<double>(c), static_cast<double>(t_len),
                                        static_cast<double>(h), static_cast<double>(w)}));
    return out;
  }

  Tensor backward(const Tensor& gy, Tape& tape, Grads& grads) const override {
    Tensor dims = tape.pop();
    const long c = static_cast<long>(dims[0]);
    const long t_len = static_cast<long>(dims[1]);
    const long h = static_cast<long>(dims[2]);
    const long w = static_cast<long>(dims[3]);
    Tensor dx({c, t_len, h, w});
    // frames were pushed in ascending t; pop back in reverse
    for (long t = t_len - 1; t >= 0; --t) {
      Tensor gframe;
      if (gy.ndim() == 2) {
        gframe = Tensor({gy.dim(0)});
        for (long d = 0; d < gy.dim(0); ++d) gframe[d] = gy.at({d, t});
      } else {
        const long hw = gy.dim(2) * gy.dim(3);
        gframe = Tensor({gy.dim(0), gy.dim(2), gy.dim(3)});
        for (long co = 0; co < gy.dim(0); ++co) {
          const double* src = gy.data() + (co * t_len + t) * hw;
          std::copy(src, src + hw, gframe.data() + co * hw);
        }
      }
      Tensor dframe = stack.backward(gframe, tape, grads);
      for (long ci = 0; ci < c; ++ci) {
        double* dst = dx.data() + (ci * t_len + t) * h * w;
        const double* src = dframe.data() + ci * h * w;
        std::copy(src, src + h * w, dst);
      }
    }
    return dx;
  }
};

// Temporal residual block over (C, 1, N).
struct TemporalResidual : Layer {
  Sequential inner;

  TemporalResidual(ParamStore& s, Rng& rng, const std::string& name, long ch,
                   long kernel, bool use_norm) {
    inner.emplace<Conv2d>(s, rng, name + ".conv1", ch, ch, 1, kernel, 1, 1, 0, kernel / 2);
    if (use_norm) inner.emplace<InstanceNorm>(s, name + ".in1", ch);
    inner.emplace<ReLU>();
    inner.emplace<Conv2d>(s, rng, name + ".conv2", ch, ch, 1, kernel, 1, 1, 0, kernel / 2);
    if (use_norm) inner.emplace<InstanceNorm>(s, name + ".in2", ch);
  }

  Tensor forward(const Tensor& x, Tape& tape) const override {
    Tensor h = inner.forward(x, tape);
    Tensor pre(h.shape());
    for (long i = 0; i < h.numel(); ++i) pre[i] = h[i] + x[i];
    Tensor y(pre.shape());
    for (long i = 0; i < pre.numel(); ++i) y[i] = pre[i] > 0.0 ? pre[i] : 0.0;
    tape.push(pre);
    return y;
  }

  Tensor backward(const Tensor& gy, Tape& tape, Grads& grads) const override {
    Tensor pre = tape.pop();
    Tensor gpre(pre.shape());
    for (long i = 0; i < pre.numel(); ++i) gpre[i] = pre[i] > 0.0 ? gy[i] : 0.0;
    Tensor dx = inner.backward(gpre, tape, grads);
    for (long i = 0; i < dx.numel(); ++i) dx[i] += gpre[i];
    return dx;
  }
};

}  // namespace nnm

// ---------------------------------------------------------------------------
// SeparatorModel
// ---------------------------------------------------------------------------

class SeparatorModel {
 public:
  explicit SeparatorModel(ModelConfig cfg) : cfg_(cfg) {
    validate_config();
    Rng rng(cfg_.init_seed);
    build_lip(rng);
    build_image_encoder(face_, "face", 3, rng);
    build_image_encoder(vocal_, "vocal", 2, rng);
    build_unet(rng);
  }

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // ---- lip motion encoder: (N, H, W) -> (V_l, N)
  Tensor lip_forward(const Tensor& rois, nn::Tape& tape) const {
    if (rois.ndim() != 3 || rois.dim(0) != cfg_.n_time_steps ||
        rois.dim(1) != cfg_.roi_size || rois.dim(2) != cfg_.roi_size)
      throw ShapeError("lip encoder expects (" + std::to_string(cfg_.n_time_steps) +
                       "," + std::to_string(cfg_.roi_size) + "," +
                       std::to_string(cfg_.roi_size) + "), got " + rois.shape_str());
    Tensor x = rois.reshaped({1, cfg_.n_time_steps, cfg_.roi_size, cfg_.roi_size});
    Tensor h = lip_stem_.forward(x, tape);      // (c3d, N, H/4, W/4)
    h = lip_frames_.forward(h, tape);           // (V_l, N)
    h = h.reshaped({cfg_.v_l(), 1, cfg_.n_time_steps});
    h = lip_tcn_.forward(h, tape);              // (V_l, 1, N)
    return h.reshaped({cfg_.v_l(), cfg_.n_time_steps});
  }

  Tensor lip_backward(const Tensor& gy, nn::Tape& tape, nn::Grads& grads) const {
    Tensor g = gy.reshaped({cfg_.v_l(), 1, cfg_.n_time_steps});
    g = lip_tcn_.backward(g, tape, grads);
    g = g.reshaped({cfg_.v_l(), cfg_.n_time_steps});
    g = lip_frames_.backward(g, tape, grads);
    g = lip_stem_.backward(g, tape, grads);
    return g.reshaped({cfg_.n_time_steps, cfg_.roi_size, cfg_.roi_size});
  }

  // ---- facial attributes: (3, S, S) -> unit (V_f)
  Tensor face_forward(const Tensor& img, nn::Tape& tape) const {
    if (img.ndim() != 3 || img.dim(0) != 3 || img.dim(1) != cfg_.face_size ||
        img.dim(2) != cfg_.face_size)
      throw ShapeError("face encoder expects (3," + std::to_string(cfg_.face_size) +
                       "," + std::to_string(cfg_.face_size) + "), got " +
                       img.shape_str());
    return face_.forward(img, tape);
  }
  Tensor face_backward(const Tensor& gy, nn::Tape& tape, nn::Grads& grads) const {
    return face_.backward(gy, tape, grads);
  }

  // ---- vocal attributes: (2, F-1, T) cropped spectrogram -> unit (V_f)
  Tensor vocal_forward(const Tensor& spec, nn::Tape& tape) const {
    const long f_crop = cfg_.freq_bins() - 1;
    if (spec.ndim() != 3 || spec.dim(0) != 2 || spec.dim(1) != f_crop)
      throw ShapeError("vocal encoder expects (2," + std::to_string(f_crop) + ",T); " +
                       "got " + spec.shape_str() +
                       (spec.ndim() == 3 && spec.dim(1) == cfg_.freq_bins()
                            ? " (crop the top frequency bin first)"
                            : ""));
    return vocal_.forward(spec, tape);
  }
  Tensor vocal_backward(const Tensor& gy, nn::Tape& tape, nn::Grads& grads) const {
    return vocal_.backward(gy, tape, grads);
  }

  // ---- mask predictor: spectrogram (2, F, T) + visual (V_vis*k, 1, N)
  //      -> bounded masks (2*n_masks, F, T)
  Tensor separator_forward(const Tensor& spec, const Tensor& visual,
                           nn::Tape& tape) const {
    if (spec.ndim() != 3 || spec.dim(0) != 2 || spec.dim(1) != cfg_.freq_bins() ||
        spec.dim(2) != cfg_.frames())
      throw ShapeError("separator expects (2," + std::to_string(cfg_.freq_bins()) +
                       "," + std::to_string(cfg_.frames()) + "), got " +
                       spec.shape_str());
    const long vis_ch = cfg_.visual_dim() * cfg_.speakers_in_fusion();
    if (vis_ch > 0 &&
        (visual.ndim() != 3 || visual.dim(0) != vis_ch || visual.dim(1) != 1 ||
         visual.dim(2) != cfg_.n_time_steps))
      throw ShapeError("fusion expects visual (" + std::to_string(vis_ch) + ",1," +
                       std::to_string(cfg_.n_time_steps) + "), got " +
                       visual.shape_str());

    Tensor x0 = down0_.forward(spec, tape);
    Tensor x1 = down1_.forward(x0, tape);
    std::vector<Tensor> skips;
    Tensor h = x1;
    for (std::size_t i = 0; i < enc_blocks_.size(); ++i) {
      h = enc_blocks_[i].forward(h, tape);
      skips.push_back(h);
      h = pool_.forward(h, tape);
    }
    Tensor z = vis_ch > 0 ? nn::concat_channels(h, visual) : h;
    for (std::size_t i = enc_blocks_.size(); i-- > 0;) {
      z = upsample_.forward(z, tape);
      z = nn::concat_channels(z, skips[i]);
      z = dec_blocks_[i].forward(z, tape);
    }
    z = nn::concat_channels(z, x1);
    z = up1_.forward(z, tape);
    z = nn::concat_channels(z, x0);
    z = up2_.forward(z, tape);
    return z;  // already Tanh-scaled to [-K, K]
  }

  // Returns (d_spec, d_visual). d_visual is empty when no visual stream is
  // fused (audio-only configuration).
  std::pair<Tensor, Tensor> separator_backward(const Tensor& gy, nn::Tape& tape,
                                               nn::Grads& grads) const {
    const long vis_ch = cfg_.visual_dim() * cfg_.speakers_in_fusion();
    const long a0 = down0_ch_, a1 = down1_ch_;

    Tensor g = up2_.backward(gy, tape, grads);
    auto [gz2, gx0_cat] = nn::split_channels(g, g.dim(0) - a0);
    g = up1_.backward(gz2, tape, grads);
    auto [gz1, gx1_cat] = nn::split_channels(g, g.dim(0) - a1);

    std::vector<Tensor> skip_grads(enc_blocks_.size());
    Tensor gz = gz1;
    for (std::size_t i = 0; i < enc_blocks_.size(); ++i) {
      gz = dec_blocks_[i].backward(gz, tape, grads);
      const long skip_ch = enc_ch_[i + 1];
      auto [gu, gskip] = nn::split_channels(gz, gz.dim(0) - skip_ch);
      skip_grads[i] = std::move(gskip);
      gz = upsample_.backward(gu, tape, grads);
    }

    Tensor gvis;
    if (vis_ch > 0) {
      auto [genc, gv] = nn::split_channels(gz, gz.dim(0) - vis_ch);
      gvis = std::move(gv);
      gz = std::move(genc);
    }
    for (std::size_t i = enc_blocks_.size(); i-- > 0;) {
      gz = pool_.backward(gz, tape, grads);
      axpy(1.0, skip_grads[i], gz);
      gz = enc_blocks_[i].backward(gz, tape, grads);
    }
    axpy(1.0, gx1_cat, gz);
    gz = down1_.backward(gz, tape, grads);
    axpy(1.0, gx0_cat, gz);
    Tensor dspec = down0_.backward(gz, tape, grads);
    return {std::move(dspec), std::move(gvis)};
  }

  // ---- visual feature assembly --------------------------------------------

  // lip (V_l, N) and/or unit face (V_f) -> (V_vis, 1, N)
  Tensor assemble_visual(const Tensor* lip, const Tensor* face) const {
    const long n = cfg_.n_time_steps;
    switch (cfg_.visual_mode) {
      case VisualMode::none:
        return Tensor();
      case VisualMode::lip_only:
        return lip->reshaped({cfg_.v_l(), 1, n});
      case VisualMode::face_only:
        return tile_face(*face).reshaped({cfg_.v_f(), 1, n});
      case VisualMode::full: {
        Tensor tiled = tile_face(*face);
        Tensor cat = nn::concat_channels(*lip, tiled);
        return cat.reshaped({cfg_.v_l() + cfg_.v_f(), 1, n});
      }
    }
    return Tensor();
  }

  // Splits d(visual) back into (d_lip, d_face); either may be empty.
  std::pair<Tensor, Tensor> visual_grad_to_parts(const Tensor& gvis) const {
    const long n = cfg_.n_time_steps;
    switch (cfg_.visual_mode) {
      case VisualMode::none:
        return {Tensor(), Tensor()};
      case VisualMode::lip_only:
        return {gvis.reshaped({cfg_.v_l(), n}), Tensor()};
      case VisualMode::face_only:
        return {Tensor(), untile_face(gvis.reshaped({cfg_.v_f(), n}))};
      case VisualMode::full: {
        Tensor flat = gvis.reshaped({cfg_.v_l() + cfg_.v_f(), n});
        auto [glip, gtile] = nn::split_channels(flat, cfg_.v_l());
        return {std::move(glip), untile_face(gtile)};
      }
    }
    return {Tensor(), Tensor()};
  }

  Tensor tile_face(const Tensor& face) const {
    const long n = cfg_.n_time_steps;
    Tensor out({cfg_.v_f(), n});
    for (long d = 0; d < cfg_.v_f(); ++d)
      for (long t = 0; t < n; ++t) out.at({d, t}) = face[d];
    return out;
  }
  Tensor untile_face(const Tensor& g) const {
    Tensor out({cfg_.v_f()});
    for (long d = 0; d < cfg_.v_f(); ++d) {
      double acc = 0.0;
      for (long t = 0; t < cfg_.n_time_steps; ++t) acc += g.at({d, t});
      out[d] = acc;
    }
    return out;
  }

  // ---- high-level inference ------------------------------------------------

  // Predicts one mask (general mode) or two (dedicated mode) for a mixture
  // spectrogram. visual_B must be present exactly when the model is the
  // dedicated two-speaker variant.
  std::vector<ComplexMask> predict_masks(const ComplexSpectrogram& mixture,
                                         const FaceTrackInput& visual_a,
                                         const FaceTrackInput* visual_b) const {
    const bool dedicated = cfg_.mode == SeparatorMode::dedicated_two_speaker;
    if (dedicated && visual_b == nullptr)
      throw ConfigError("dedicated two-speaker model needs both speakers' visuals");
    if (!dedicated && visual_b != nullptr)
      throw ConfigError("general single-speaker model takes one speaker's visuals");

    nn::Tape tape;
    Tensor visual = encode_visual_stream(visual_a, tape);
    if (dedicated) {
      Tensor vb = encode_visual_stream(*visual_b, tape);
      visual = nn::concat_channels(visual, vb);
    }
    Tensor spec = spectrogram_to_tensor(mixture);
    Tensor out = separator_forward(spec, visual, tape);
    return masks_from_tensor(out);
  }

  Tensor encode_visual_stream(const FaceTrackInput& v, nn::Tape& tape) const {
    Tensor lip, face;
    if (cfg_.visual_mode == VisualMode::full || cfg_.visual_mode == VisualMode::lip_only)
      lip = lip_forward(v.mouth_rois, tape);
    if (cfg_.visual_mode == VisualMode::full || cfg_.visual_mode == VisualMode::face_only)
      face = face_forward(v.face_image, tape);
    return assemble_visual(lip.empty() ? nullptr : &lip, face.empty() ? nullptr : &face);
  }

  static Tensor spectrogram_to_tensor(const ComplexSpectrogram& s) {
    Tensor out({2, s.freq_bins(), s.frames()});
    std::copy(s.real.data(), s.real.data() + s.real.numel(), out.data());
    std::copy(s.imag.data(), s.imag.data() + s.imag.numel(),
              out.data() + s.real.numel());
    return out;
  }

  std::vector<ComplexMask> masks_from_tensor(const Tensor& out) const {
    const long f = out.dim(1), t = out.dim(2);
    std::vector<ComplexMask> masks;
    for (long k = 0; k < cfg_.n_masks(); ++k) {
      ComplexMask m = ComplexMask::zeros(f, t, cfg_.mask_bound);
      std::copy(out.data() + (2 * k) * f * t, out.data() + (2 * k + 1) * f * t,
                m.real.data());
      std::copy(out.data() + (2 * k + 1) * f * t, out.data() + (2 * k + 2) * f * t,
                m.imag.data());
      masks.push_back(std::move(m));
    }
    return masks;
  }

  const std::vector<long>& encoder_channels() const { return enc_ch_; }
  long bottleneck_freq_extent() const { return f_after_downs_; }
  long n_freq_blocks() const { return n_blocks_; }

 private:
  void validate_config() {
    cfg_.stft.validate();
    const long f = cfg_.freq_bins();
    const long t = cfg_.frames();
    const long f1 = nn::conv_out(f, 4, 2, 1);
    const long f2 = nn::conv_out(f1, 4, 2, 1);
    if (nn::conv_out(t, 4, 2, 1) != t / 2 || t % 4 != 0)
      throw ConfigError("spectrogram frames must be 4x the time steps");
    if (nn::conv_out(t / 2, 4, 2, 1) != cfg_.n_time_steps)
      throw ConfigError("two stride-2 stages must land on N time steps");
    if ((f2 & (f2 - 1)) != 0)
      throw ConfigError("frequency extent after the stride-2 stages must be a power "
                        "of two, got " + std::to_string(f2));
    n_blocks_ = 0;
    for (long v = f2; v > 1; v /= 2) ++n_blocks_;
    f_after_downs_ = f2;
  }

  void build_lip(Rng& rng) {
    const long c3d = cfg_.scaled(24);
    lip_stem_.emplace<nn::Conv3d>(params_, rng, "lip.conv3d", 1, c3d, 5, 7, 7, 2, 2, 2, 3, 3);
    if (cfg_.use_norm) lip_stem_.emplace<nn::InstanceNorm>(params_, "lip.in0", c3d);
    lip_stem_.emplace<nn::ReLU>();

    auto* pf = lip_frames_.emplace<nnm::PerFrame>();
    pf->stack.emplace<nn::MaxPool2d>(2, 2, 0);
    long ch = c3d;
    const long widths[3] = {cfg_.scaled(48), cfg_.scaled(96), cfg_.scaled(192)};
    for (int i = 0; i < 3; ++i) {
      pf->stack.emplace<nn::Conv2d>(params_, rng, "lip.pf.conv" + std::to_string(i),
                                    ch, widths[i], 3, 3, 2, 2, 1, 1);
      if (cfg_.use_norm)
        pf->stack.emplace<nn::InstanceNorm>(params_, "lip.pf.in" + std::to_string(i),
                                            widths[i]);
      pf->stack.emplace<nn::ReLU>();
      ch = widths[i];
    }
    pf->stack.emplace<nn::GlobalAvgPool>();
    pf->stack.emplace<nn::Linear>(params_, rng, "lip.pf.fc", ch, cfg_.v_l());

    lip_tcn_.emplace<nnm::TemporalResidual>(params_, rng, "lip.tcn0", cfg_.v_l(), 5,
                                            cfg_.use_norm);
    lip_tcn_.emplace<nnm::TemporalResidual>(params_, rng, "lip.tcn1", cfg_.v_l(), 5,
                                            cfg_.use_norm);
  }

  void build_image_encoder(nn::Sequential& net, const std::string& name, long in_ch,
                           Rng& rng) {
    const long c1 = cfg_.scaled(64), c2 = cfg_.scaled(128), c3 = cfg_.scaled(256),
               c4 = cfg_.scaled(512);
    net.emplace<nn::Conv2d>(params_, rng, name + ".stem", in_ch, c1, 7, 7, 2, 2, 3, 3);
    if (cfg_.use_norm) net.emplace<nn::InstanceNorm>(params_, name + ".stem_in", c1);
    net.emplace<nn::ReLU>();
    net.emplace<nn::MaxPool2d>(3, 2, 1);
    const long stage_ch[4] = {c1, c2, c3, c4};
    long ch = c1;
    for (int s = 0; s < 4; ++s) {
      const long stride = s == 0 ? 1 : 2;
      net.emplace<nnm::BasicBlock>(params_, rng,
                                   name + ".s" + std::to_string(s) + "b0", ch,
                                   stage_ch[s], stride, cfg_.use_norm);
      net.emplace<nnm::BasicBlock>(params_, rng,
                                   name + ".s" + std::to_string(s) + "b1",
                                   stage_ch[s], stage_ch[s], 1, cfg_.use_norm);
      ch = stage_ch[s];
    }
    net.emplace<nn::GlobalAvgPool>();
    net.emplace<nn::Linear>(params_, rng, name + ".fc", ch, cfg_.v_f());
    net.emplace<nn::L2Normalize>();
  }

  void build_unet(Rng& rng) {
    const long a1 = cfg_.scaled(64);
    const long a0 = std::max<long>(1, a1 / 2);
    down0_ch_ = a0;
    down1_ch_ = a1;
    down0_.emplace<nn::Conv2d>(params_, rng, "unet.down0", 2, a0, 4, 4, 2, 2, 1, 1);
    if (cfg_.use_norm) down0_.emplace<nn::InstanceNorm>(params_, "unet.down0_in", a0);
    down0_.emplace<nn::LeakyReLU>(0.1);
    down1_.emplace<nn::Conv2d>(params_, rng, "unet.down1", a0, a1, 4, 4, 2, 2, 1, 1);
    if (cfg_.use_norm) down1_.emplace<nn::InstanceNorm>(params_, "unet.down1_in", a1);
    down1_.emplace<nn::LeakyReLU>(0.1);

    // geometric channel ramp from a1 up to D across the frequency-halving
    // blocks; the deepest block always lands exactly on D
    const long d = cfg_.d_audio();
    enc_ch_.assign(1, a1);
    for (long i = 1; i <= n_blocks_; ++i) {
      const double frac = static_cast<double>(i) / static_cast<double>(n_blocks_);
      long c = static_cast<long>(std::llround(a1 * std::pow(
                   static_cast<double>(d) / static_cast<double>(a1), frac)));
      if (i == n_blocks_) c = d;
      enc_ch_.push_back(std::max<long>(1, c));
    }

    enc_blocks_.clear();
    dec_blocks_.clear();
    for (long i = 1; i <= n_blocks_; ++i) {
      nn::Sequential enc;
      enc.emplace<nn::Conv2d>(params_, rng, "unet.enc" + std::to_string(i) + "a",
                              enc_ch_[i - 1], enc_ch_[i], 3, 3, 1, 1, 1, 1);
      if (cfg_.use_norm)
        enc.emplace<nn::InstanceNorm>(params_, "unet.enc" + std::to_string(i) + "a_in",
                                      enc_ch_[i]);
      enc.emplace<nn::LeakyReLU>(0.1);
      enc.emplace<nn::Conv2d>(params_, rng, "unet.enc" + std::to_string(i) + "b",
                              enc_ch_[i], enc_ch_[i], 3, 3, 1, 1, 1, 1);
      if (cfg_.use_norm)
        enc.emplace<nn::InstanceNorm>(params_, "unet.enc" + std::to_string(i) + "b_in",
                                      enc_ch_[i]);
      enc.emplace<nn::LeakyReLU>(0.1);
      enc_blocks_.push_back(std::move(enc));
    }

    const long vis_ch = cfg_.visual_dim() * cfg_.speakers_in_fusion();
    // No normalization anywhere on the decoder path: per-sample
    // normalization subtracts each channel's mean over time, which would
    // erase exactly the time-constant conditioning injected at the
    // bottleneck (the tiled identity embedding).
    for (long i = 1; i <= n_blocks_; ++i) {
      // decoder block i consumes the upsampled path plus skip i
      const long from_up = (i == n_blocks_) ? cfg_.d_audio() + vis_ch : enc_ch_[i];
      const long in_c = from_up + enc_ch_[i];
      const long out_c = enc_ch_[i - 1];
      nn::Sequential dec;
      dec.emplace<nn::Conv2d>(params_, rng, "unet.dec" + std::to_string(i) + "a",
                              in_c, out_c, 3, 3, 1, 1, 1, 1);
      dec.emplace<nn::ReLU>();
      dec.emplace<nn::Conv2d>(params_, rng, "unet.dec" + std::to_string(i) + "b",
                              out_c, out_c, 3, 3, 1, 1, 1, 1);
      dec.emplace<nn::ReLU>();
      dec_blocks_.push_back(std::move(dec));
    }
    // dec_blocks_[i-1] is block i; the forward pass walks them deepest-first

    const long f = cfg_.freq_bins(), t = cfg_.frames();
    const long f1 = nn::conv_out(f, 4, 2, 1), t1 = t / 2;
    const long f2 = f_after_downs_, t2 = cfg_.n_time_steps;
    const long op1_f = f1 - ((f2 - 1) * 2 - 2 + 4);
    const long op1_t = t1 - ((t2 - 1) * 2 - 2 + 4);
    const long op2_f = f - ((f1 - 1) * 2 - 2 + 4);
    const long op2_t = t - ((t1 - 1) * 2 - 2 + 4);
    up1_.emplace<nn::ConvTranspose2d>(params_, rng, "unet.up1", 2 * a1, a0, 4, 4, 2, 2,
                                      1, 1, op1_f, op1_t);
    up1_.emplace<nn::ReLU>();
    up2_.emplace<nn::ConvTranspose2d>(params_, rng, "unet.up2", 2 * a0,
                                      2 * cfg_.n_masks(), 4, 4, 2, 2, 1, 1, op2_f,
                                      op2_t);
    up2_.emplace<nn::Tanh>();
    up2_.emplace<nn::Scale>(cfg_.mask_bound);
  }

  ModelConfig cfg_;
  nn::ParamStore params_;

  nn::Sequential lip_stem_, lip_frames_, lip_tcn_;
  nn::Sequential face_, vocal_;
  nn::Sequential down0_, down1_, up1_, up2_;
  std::vector<nn::Sequential> enc_blocks_;
  std::vector<nn::Sequential> dec_blocks_;  // index i-1 = block i after reverse
  nn::AvgPoolFreq pool_;
  nn::UpsampleFreq upsample_;
  std::vector<long> enc_ch_;
  long n_blocks_ = 0;
  long f_after_downs_ = 0;
  long down0_ch_ = 0, down1_ch_ = 0;
};

}  // namespace avsep

#endif  // AVSEP_MODEL_HPP_
