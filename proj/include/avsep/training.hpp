// include/avsep/training.hpp
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
// Optimization loop: two-mixture forward passes, the combined objective,
// adaptive-moment updates with decoupled weight decay, checkpointing, and a
// finite-difference gradient check on reduced configurations.

#ifndef AVSEP_TRAINING_HPP_
#define AVSEP_TRAINING_HPP_

#include <fstream>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "avsep/data_engine.hpp"
#include "avsep/model.hpp"
#include "avsep/objectives.hpp"

namespace avsep {

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  long batch_size = 128;  // paper scale; the desk preset drops this to 8
  long max_steps = 1000;
  uint64_t seed = 0;
  LossWeights loss;
  bool corruption = false;
  bool enhancement = false;
  double enhancement_snr_lo = -5.0;
  double enhancement_snr_hi = 5.0;
  long checkpoint_interval = 500;
  int workers = 1;
  double divergence_guard = 1e6;
  // constant by default; optional step decay is off unless factor < 1
  double lr_decay_factor = 1.0;
  long lr_decay_steps = 0;

  void validate() const {
    if (learning_rate <= 0) throw InvalidInput("learning_rate must be positive");
    if (batch_size <= 0) throw InvalidInput("batch_size must be positive");
    if (weight_decay < 0) throw InvalidInput("weight_decay must be >= 0");
    loss.validate();
  }

  double lr_at(long step) const {
    if (lr_decay_factor >= 1.0 || lr_decay_steps <= 0) return learning_rate;
    double lr = learning_rate;
    for (long s = lr_decay_steps; s <= step; s += lr_decay_steps) lr *= lr_decay_factor;
    return lr;
  }
};

struct TrainState {
  std::unique_ptr<SeparatorModel> model;
  std::vector<Tensor> adam_m;
  std::vector<Tensor> adam_v;
  long step = 0;
  Rng rng;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::string run_digest;  // effective run-config digest, stamped into artifacts
  uint64_t run_seed = 0;

  static TrainState create(const ModelConfig& cfg, uint64_t seed) {
    TrainState st;
    st.model = std::make_unique<SeparatorModel>(cfg);
    for (const auto& p : st.model->params().values) {
      st.adam_m.emplace_back(p.shape());
      st.adam_v.emplace_back(p.shape());
    }
    st.rng = Rng(seed ^ 0x5eedF00dULL);
    return st;
  }
};

namespace detail {

inline Tensor spec_tensor(const ComplexSpectrogram& s) {
  return SeparatorModel::spectrogram_to_tensor(s);
}

// channel pair k of the network output as a ComplexMask view
inline ComplexMask mask_from_output(const Tensor& out, long k, double bound) {
  const long f = out.dim(1), t = out.dim(2);
  ComplexMask m = ComplexMask::zeros(f, t, bound);
  std::copy(out.data() + (2 * k) * f * t, out.data() + (2 * k + 1) * f * t,
            m.real.data());
  std::copy(out.data() + (2 * k + 1) * f * t, out.data() + (2 * k + 2) * f * t,
            m.imag.data());
  return m;
}

// complex product S = X * M as the (2, F-1, T) cropped vocal-net input
inline Tensor masked_cropped(const ComplexSpectrogram& x, const ComplexMask& m) {
  const long f = x.freq_bins(), t = x.frames();
  Tensor out({2, f - 1, t});
  for (long i = 0; i < f - 1; ++i)
    for (long j = 0; j < t; ++j) {
      const double xr = x.real.at({i, j}), xi = x.imag.at({i, j});
      const double mr = m.real.at({i, j}), mi = m.imag.at({i, j});
      out.at({0, i, j}) = xr * mr - xi * mi;
      out.at({1, i, j}) = xr * mi + xi * mr;
    }
  return out;
}

// gradient of the cropped masked spectrogram w.r.t. the mask, as the
// (2, F, T) output-channel layout for one mask slot
inline void accumulate_mask_grad_from_vocal(const Tensor& d_masked,
                                            const ComplexSpectrogram& x,
                                            Tensor& d_out, long k) {
  const long f = x.freq_bins(), t = x.frames();
  for (long i = 0; i < f - 1; ++i)
    for (long j = 0; j < t; ++j) {
      const double xr = x.real.at({i, j}), xi = x.imag.at({i, j});
      const double gr = d_masked.at({0, i, j}), gi = d_masked.at({1, i, j});
      d_out.at({2 * k, i, j}) += gr * xr + gi * xi;
      d_out.at({2 * k + 1, i, j}) += -gr * xi + gi * xr;
    }
}

struct EffectiveWeights {
  LossWeights w;
  bool use_pit = false;
  bool need_embeddings = false;
};

inline EffectiveWeights effective_weights(const LossWeights& base,
                                          const ModelConfig& mcfg) {
  EffectiveWeights e;
  e.w = base;
  if (mcfg.visual_mode == VisualMode::lip_only ||
      mcfg.visual_mode == VisualMode::none)
    e.w.use_cross_modal = false;  // no face embedding exists
  if (mcfg.visual_mode == VisualMode::none) {
    e.w.use_consistency = false;
    e.use_pit = true;  // audio-only baseline trains permutation-invariant
  }
  e.need_embeddings = e.w.use_cross_modal || e.w.use_consistency;
  return e;
}

}  // namespace detail

// Forward + backward for one tuple; gradients accumulate into `grads`.
// Returns the unweighted per-term values combined per the effective flags.
inline LossBreakdown tuple_backward(const SeparatorModel& model,
                                    const TrainingTuple& tuple,
                                    const LossWeights& weights, nn::Grads& grads) {
  const ModelConfig& cfg = model.config();
  const auto eff = detail::effective_weights(weights, cfg);
  const bool dedicated = cfg.mode == SeparatorMode::dedicated_two_speaker;
  const bool use_lip = cfg.visual_mode == VisualMode::full ||
                       cfg.visual_mode == VisualMode::lip_only;
  const bool use_face = cfg.visual_mode == VisualMode::full ||
                        cfg.visual_mode == VisualMode::face_only;
  if (!dedicated && cfg.visual_mode == VisualMode::none)
    throw ConfigError("audio-only training requires the dedicated two-speaker mode");

  // ---- forward: visual encoders ----
  nn::Tape tape_lip_a1, tape_lip_a2, tape_lip_b, tape_face_a, tape_face_b;
  Tensor lip_a1, lip_a2, lip_b, face_a, face_b;
  if (use_lip) {
    lip_a1 = model.lip_forward(tuple.visuals_A1.mouth_rois, tape_lip_a1);
    lip_a2 = model.lip_forward(tuple.visuals_A2.mouth_rois, tape_lip_a2);
    lip_b = model.lip_forward(tuple.visuals_B.mouth_rois, tape_lip_b);
  }
  if (use_face) {
    face_a = model.face_forward(tuple.visuals_A1.face_image, tape_face_a);
    face_b = model.face_forward(tuple.visuals_B.face_image, tape_face_b);
  }

  auto vis_of = [&](const Tensor* lip, const Tensor* face) {
    return model.assemble_visual(lip, face);
  };

  // ---- forward: separator passes ----
  Tensor x1 = detail::spec_tensor(tuple.X1);
  Tensor x2 = detail::spec_tensor(tuple.X2);

  // pass outputs and the visuals fed to each pass
  struct Pass {
    Tensor out;
    nn::Tape tape;
  };
  std::vector<Pass> passes;
  // mask slots: [0]=A@X1, [1]=A@X2, [2]=B@X1, [3]=B@X2
  ComplexMask pred[4];
  // which pass and output slot each mask came from
  int pass_of[4], slot_of[4];

  if (dedicated) {
    passes.resize(2);
    Tensor va1 = use_lip || use_face ? vis_of(use_lip ? &lip_a1 : nullptr,
                                              use_face ? &face_a : nullptr)
                                     : Tensor();
    Tensor va2 = use_lip || use_face ? vis_of(use_lip ? &lip_a2 : nullptr,
                                              use_face ? &face_a : nullptr)
                                     : Tensor();
    Tensor vb = use_lip || use_face ? vis_of(use_lip ? &lip_b : nullptr,
                                             use_face ? &face_b : nullptr)
                                    : Tensor();
    Tensor v1 = cfg.visual_mode == VisualMode::none ? Tensor()
                                                    : nn::concat_channels(va1, vb);
    Tensor v2 = cfg.visual_mode == VisualMode::none ? Tensor()
                                                    : nn::concat_channels(va2, vb);
    passes[0].out = model.separator_forward(x1, v1, passes[0].tape);
    passes[1].out = model.separator_forward(x2, v2, passes[1].tape);
    pass_of[0] = 0; slot_of[0] = 0;  // A from X1
    pass_of[1] = 1; slot_of[1] = 0;  // A from X2
    pass_of[2] = 0; slot_of[2] = 1;  // B from X1
    pass_of[3] = 1; slot_of[3] = 1;  // B from X2
  } else {
    passes.resize(4);
    Tensor va1 = vis_of(use_lip ? &lip_a1 : nullptr, use_face ? &face_a : nullptr);
    Tensor va2 = vis_of(use_lip ? &lip_a2 : nullptr, use_face ? &face_a : nullptr);
    Tensor vb = vis_of(use_lip ? &lip_b : nullptr, use_face ? &face_b : nullptr);
    passes[0].out = model.separator_forward(x1, va1, passes[0].tape);
    passes[1].out = model.separator_forward(x2, va2, passes[1].tape);
    passes[2].out = model.separator_forward(x1, vb, passes[2].tape);
    passes[3].out = model.separator_forward(x2, vb, passes[3].tape);
    pass_of[0] = 0; slot_of[0] = 0;
    pass_of[1] = 1; slot_of[1] = 0;
    pass_of[2] = 2; slot_of[2] = 0;
    pass_of[3] = 3; slot_of[3] = 0;
  }
  for (int k = 0; k < 4; ++k)
    pred[k] = detail::mask_from_output(passes[static_cast<std::size_t>(pass_of[k])].out,
                                       slot_of[k], cfg.mask_bound);

  // ---- mask loss (assigned or permutation-invariant) ----
  double mask_part = 0.0;
  // gradient w.r.t. each pass output, accumulated across loss paths
  std::vector<Tensor> d_out(passes.size());
  for (std::size_t i = 0; i < passes.size(); ++i) d_out[i] = Tensor(passes[i].out.shape());

  int gt_assign[4] = {0, 1, 2, 3};  // mask slot k learns gt_masks[gt_assign[k]]
  if (eff.use_pit) {
    // per mixture: best assignment of the two emitted masks
    auto [c1, p1] = pit_mask_loss({pred[0], pred[2]},
                                  {tuple.gt_masks[0], tuple.gt_masks[2]},
                                  weights.sum_reduction);
    auto [c2, p2] = pit_mask_loss({pred[1], pred[3]},
                                  {tuple.gt_masks[1], tuple.gt_masks[3]},
                                  weights.sum_reduction);
    mask_part = c1 + c2;
    // map pit permutations back onto slots {0,2} and {1,3}
    gt_assign[0] = p1[0] == 0 ? 0 : 2;
    gt_assign[2] = p1[1] == 0 ? 0 : 2;
    gt_assign[1] = p2[0] == 0 ? 1 : 3;
    gt_assign[3] = p2[1] == 0 ? 1 : 3;
  } else {
    for (int k = 0; k < 4; ++k)
      mask_part += mask_pair_loss(pred[k],
                                  tuple.gt_masks[static_cast<std::size_t>(k)],
                                  weights.sum_reduction);
  }

  if (eff.w.use_mask) {
    for (int k = 0; k < 4; ++k) {
      Tensor g = mask_pair_loss_grad(
          pred[k], tuple.gt_masks[static_cast<std::size_t>(gt_assign[k])],
          weights.sum_reduction);
      Tensor& dst = d_out[static_cast<std::size_t>(pass_of[k])];
      const long ft = g.dim(1) * g.dim(2);
      for (long i = 0; i < 2 * ft; ++i) dst[slot_of[k] * 2 * ft + i] += g[i];
    }
  }

  // ---- embedding losses ----
  double cross_part = 0.0, cons_part = 0.0;
  Tensor face_loss_grad_a, face_loss_grad_b;
  bool has_face_loss_grad = false;
  if (eff.need_embeddings) {
    nn::Tape tape_v[4];
    Tensor emb[4];
    const ComplexSpectrogram* mix_of[4] = {&tuple.X1, &tuple.X2, &tuple.X1, &tuple.X2};
    Tensor masked[4];
    for (int k = 0; k < 4; ++k) {
      masked[k] = detail::masked_cropped(*mix_of[k], pred[k]);
      emb[k] = model.vocal_forward(masked[k], tape_v[k]);
    }
    // emb: 0=aA1, 1=aA2, 2=aB1, 3=aB2
    Tensor d_emb[4];
    for (int k = 0; k < 4; ++k) d_emb[k] = Tensor(emb[k].shape());
    Tensor d_face_a_loss(face_a.empty() ? std::vector<long>{cfg.v_f()} : face_a.shape());
    Tensor d_face_b_loss(d_face_a_loss.shape());

    const double m = weights.margin;
    if (eff.w.use_cross_modal) {
      const TripletGrad t1 = triplet_loss_grad(emb[0], face_a, face_b, m);
      const TripletGrad t2 = triplet_loss_grad(emb[1], face_a, face_b, m);
      const TripletGrad t3 = triplet_loss_grad(emb[2], face_b, face_a, m);
      const TripletGrad t4 = triplet_loss_grad(emb[3], face_b, face_a, m);
      cross_part = t1.loss + t2.loss + t3.loss + t4.loss;
      const double l1 = weights.lambda1;
      axpy(l1, t1.d_anchor, d_emb[0]);
      axpy(l1, t2.d_anchor, d_emb[1]);
      axpy(l1, t3.d_anchor, d_emb[2]);
      axpy(l1, t4.d_anchor, d_emb[3]);
      axpy(l1, t1.d_pos, d_face_a_loss);
      axpy(l1, t2.d_pos, d_face_a_loss);
      axpy(l1, t3.d_neg, d_face_a_loss);
      axpy(l1, t4.d_neg, d_face_a_loss);
      axpy(l1, t1.d_neg, d_face_b_loss);
      axpy(l1, t2.d_neg, d_face_b_loss);
      axpy(l1, t3.d_pos, d_face_b_loss);
      axpy(l1, t4.d_pos, d_face_b_loss);
    }
    if (eff.w.use_consistency) {
      const TripletGrad c1 = triplet_loss_grad(emb[0], emb[1], emb[2], m);
      const TripletGrad c2 = triplet_loss_grad(emb[0], emb[1], emb[3], m);
      cons_part = c1.loss + c2.loss;
      const double l2 = weights.lambda2;
      axpy(l2, c1.d_anchor, d_emb[0]);
      axpy(l2, c2.d_anchor, d_emb[0]);
      axpy(l2, c1.d_pos, d_emb[1]);
      axpy(l2, c2.d_pos, d_emb[1]);
      axpy(l2, c1.d_neg, d_emb[2]);
      axpy(l2, c2.d_neg, d_emb[3]);
    }

    // vocal nets backward; their input gradients feed the mask slots
    for (int k = 3; k >= 0; --k) {
      Tensor d_masked = model.vocal_backward(d_emb[k], tape_v[k], grads);
      detail::accumulate_mask_grad_from_vocal(
          d_masked, *mix_of[k], d_out[static_cast<std::size_t>(pass_of[k])],
          slot_of[k]);
    }

    // face embeddings also receive loss gradients (fusion gradients are
    // added below)
    if (use_face && eff.w.use_cross_modal) {
      face_loss_grad_a = std::move(d_face_a_loss);
      face_loss_grad_b = std::move(d_face_b_loss);
      has_face_loss_grad = true;
    }
  }

  // ---- separator backward ----
  Tensor d_lip_a1, d_lip_a2, d_lip_b, d_face_a, d_face_b;
  auto add_part = [](Tensor& acc, const Tensor& part) {
    if (part.empty()) return;
    if (acc.empty())
      acc = part;
    else
      axpy(1.0, part, acc);
  };

  for (std::size_t i = passes.size(); i-- > 0;) {
    auto [dspec, dvis] = model.separator_backward(d_out[i], passes[i].tape, grads);
    (void)dspec;
    if (cfg.visual_mode == VisualMode::none) continue;
    if (dedicated) {
      const long per = cfg.visual_dim();
      auto [dva, dvb] = nn::split_channels(dvis, per);
      auto [dlip_a, dface_a_part] = model.visual_grad_to_parts(dva);
      auto [dlip_b, dface_b_part] = model.visual_grad_to_parts(dvb);
      add_part(i == 0 ? d_lip_a1 : d_lip_a2, dlip_a);
      add_part(d_face_a, dface_a_part);
      add_part(d_lip_b, dlip_b);
      add_part(d_face_b, dface_b_part);
    } else {
      auto [dlip, dface] = model.visual_grad_to_parts(dvis);
      switch (i) {
        case 0: add_part(d_lip_a1, dlip); add_part(d_face_a, dface); break;
        case 1: add_part(d_lip_a2, dlip); add_part(d_face_a, dface); break;
        default: add_part(d_lip_b, dlip); add_part(d_face_b, dface); break;
      }
    }
  }

  if (has_face_loss_grad) {
    add_part(d_face_a, face_loss_grad_a);
    add_part(d_face_b, face_loss_grad_b);
  }

  if (use_face) {
    model.face_backward(d_face_b, tape_face_b, grads);
    model.face_backward(d_face_a, tape_face_a, grads);
  }
  if (use_lip) {
    model.lip_backward(d_lip_b, tape_lip_b, grads);
    model.lip_backward(d_lip_a2, tape_lip_a2, grads);
    model.lip_backward(d_lip_a1, tape_lip_a1, grads);
  }

  return total_loss(mask_part, cross_part, cons_part, eff.w);
}

// One optimization step over a materialized batch. Deterministic: per-tuple
// gradients are reduced in index order regardless of worker scheduling.
inline LossBreakdown train_step(TrainState& state,
                                const std::vector<TrainingTuple>& batch,
                                const TrainConfig& cfg) {
  cfg.validate();
  if (batch.empty()) throw InvalidInput("train_step: empty batch");
  SeparatorModel& model = *state.model;
  auto& store = model.params();

  const int workers =
      std::max(1, std::min<int>(cfg.workers, static_cast<int>(batch.size())));
  std::vector<nn::Grads> grads(static_cast<std::size_t>(workers), nn::Grads(store));
  std::vector<LossBreakdown> breakdowns(batch.size());

  auto run_range = [&](int w, std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i)
      breakdowns[i] = tuple_backward(model, batch[i], cfg.loss,
                                     grads[static_cast<std::size_t>(w)]);
  };
  if (workers == 1) {
    run_range(0, 0, batch.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t per = (batch.size() + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const std::size_t lo = static_cast<std::size_t>(w) * per;
      const std::size_t hi = std::min(batch.size(), lo + per);
      if (lo >= hi) break;
      pool.emplace_back(run_range, w, lo, hi);
    }
    for (auto& t : pool) t.join();
  }

  for (int w = 1; w < workers; ++w) grads[0].add(grads[static_cast<std::size_t>(w)]);
  grads[0].scale(1.0 / static_cast<double>(batch.size()));

  LossBreakdown avg;
  for (const auto& b : breakdowns) {
    avg.mask_prediction += b.mask_prediction;
    avg.cross_modal += b.cross_modal;
    avg.consistency += b.consistency;
    avg.total += b.total;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  avg.mask_prediction *= inv;
  avg.cross_modal *= inv;
  avg.consistency *= inv;
  avg.total *= inv;

  if (std::isnan(avg.total) || std::isinf(avg.total)) {
    const char* term = std::isnan(avg.mask_prediction) || std::isinf(avg.mask_prediction)
                           ? "mask_prediction"
                           : (std::isnan(avg.cross_modal) || std::isinf(avg.cross_modal)
                                  ? "cross_modal"
                                  : "consistency");
    throw NumericalError(std::string("non-finite loss in ") + term);
  }
  if (avg.total > cfg.divergence_guard)
    throw Diverged("loss " + std::to_string(avg.total) + " exceeded the guard " +
                   std::to_string(cfg.divergence_guard));

  // AdamW
  state.step += 1;
  const double lr = cfg.lr_at(state.step);
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t pi = 0; pi < store.values.size(); ++pi) {
    Tensor& p = store.values[pi];
    Tensor& m = state.adam_m[pi];
    Tensor& v = state.adam_v[pi];
    const Tensor& g = grads[0].g[pi];
    for (long i = 0; i < p.numel(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps) +
                    cfg.weight_decay * p[i]);
    }
  }
  return avg;
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

inline void save_checkpoint(const TrainState& state, const std::string& path) {
  const auto& store = state.model->params();
  nlohmann::json header;
  header["format"] = "avsep-checkpoint-v1";
  header["config"] = state.model->config().to_json();
  header["config_digest"] = state.model->config().digest();
  header["step"] = state.step;
  header["run_digest"] = state.run_digest;
  header["run_seed"] = state.run_seed;
  const auto rs = state.rng.state();
  header["rng_state"] = {rs[0], rs[1], rs[2], rs[3]};
  if (std::isfinite(state.best_val_loss))
    header["best_val_loss"] = state.best_val_loss;
  else
    header["best_val_loss"] = nullptr;
  nlohmann::json params = nlohmann::json::array();
  for (std::size_t i = 0; i < store.values.size(); ++i)
    params.push_back({{"name", store.names[i]}, {"shape", store.values[i].shape()}});
  header["params"] = params;

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint " + path);
  const std::string hs = header.dump();
  const uint64_t len = hs.size();
  os.write("AVSEPCK1", 8);
  os.write(reinterpret_cast<const char*>(&len), 8);
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  auto dump = [&](const std::vector<Tensor>& ts) {
    for (const auto& t : ts)
      os.write(reinterpret_cast<const char*>(t.data()),
               static_cast<std::streamsize>(t.numel() * sizeof(double)));
  };
  dump(store.values);
  dump(state.adam_m);
  dump(state.adam_v);
  if (!os) throw IoError("failed while writing checkpoint " + path);
}

inline TrainState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != "AVSEPCK1")
    throw ParseError("not an avsep checkpoint: " + path);
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 8);
  std::string hs(len, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(len));
  if (!in) throw ParseError("truncated checkpoint header: " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("corrupt checkpoint header: ") + e.what());
  }
  if (header.value("format", "") != "avsep-checkpoint-v1")
    throw IncompatibleCheckpoint("unknown checkpoint format in " + path);

  const ModelConfig cfg = ModelConfig::from_json(header.at("config"));
  if (cfg.digest() != header.at("config_digest").get<std::string>())
    throw IncompatibleCheckpoint("config digest mismatch in " + path);

  TrainState state = TrainState::create(cfg, 0);
  auto& store = state.model->params();
  const auto& params = header.at("params");
  if (params.size() != store.values.size())
    throw IncompatibleCheckpoint("parameter count mismatch in " + path);
  for (std::size_t i = 0; i < store.values.size(); ++i) {
    if (params[i].at("name").get<std::string>() != store.names[i])
      throw IncompatibleCheckpoint("parameter name mismatch at index " +
                                   std::to_string(i));
    const auto shape = params[i].at("shape").get<std::vector<long>>();
    if (shape != store.values[i].shape())
      throw IncompatibleCheckpoint("parameter shape mismatch for " + store.names[i]);
  }
  auto slurp = [&](std::vector<Tensor>& ts) {
    for (auto& t : ts) {
      in.read(reinterpret_cast<char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
  };
  slurp(store.values);
  slurp(state.adam_m);
  slurp(state.adam_v);
  if (!in) throw ParseError("truncated checkpoint payload: " + path);

  state.step = header.at("step").get<long>();
  state.run_digest = header.value("run_digest", "");
  state.run_seed = header.value("run_seed", 0ULL);
  const auto rsj = header.at("rng_state");
  state.rng.set_state({rsj[0].get<uint64_t>(), rsj[1].get<uint64_t>(),
                       rsj[2].get<uint64_t>(), rsj[3].get<uint64_t>()});
  state.best_val_loss = header.at("best_val_loss").is_null()
                            ? std::numeric_limits<double>::infinity()
                            : header.at("best_val_loss").get<double>();
  return state;
}

// ---------------------------------------------------------------------------
// Gradient check on a reduced configuration
// ---------------------------------------------------------------------------

struct GradCheckReport {
  long n_checked = 0;
  double max_rel_err = 0.0;
  double mean_rel_err = 0.0;
  std::string worst_param;
  bool passed(double tol = 1e-3) const { return n_checked > 0 && max_rel_err < tol; }
};

// Builds a synthetic tuple matching the model's shapes.
inline TrainingTuple synthetic_tuple_for(const ModelConfig& cfg, uint64_t seed) {
  Rng rng(seed);
  TrainingTuple t;
  auto rand_spec = [&](uint64_t salt) {
    ComplexSpectrogram s =
        ComplexSpectrogram::zeros(cfg.freq_bins(), cfg.frames(), cfg.stft);
    Rng r(seed * 131 + salt);
    for (long i = 0; i < s.real.numel(); ++i) {
      s.real[i] = r.uniform(-1, 1);
      s.imag[i] = r.uniform(-1, 1);
    }
    return s;
  };
  auto rand_mask = [&](uint64_t salt) {
    ComplexMask m = ComplexMask::zeros(cfg.freq_bins(), cfg.frames(), cfg.mask_bound);
    Rng r(seed * 197 + salt);
    for (long i = 0; i < m.real.numel(); ++i) {
      m.real[i] = r.uniform(-1.5, 1.5);
      m.imag[i] = r.uniform(-1.5, 1.5);
    }
    return m;
  };
  auto rand_visuals = [&](uint64_t salt) {
    FaceTrackInput v;
    Rng r(seed * 239 + salt);
    v.mouth_rois = Tensor({cfg.n_time_steps, cfg.roi_size, cfg.roi_size});
    for (long i = 0; i < v.mouth_rois.numel(); ++i) v.mouth_rois[i] = r.uniform(0, 1);
    v.face_image = Tensor({3, cfg.face_size, cfg.face_size});
    for (long i = 0; i < v.face_image.numel(); ++i) v.face_image[i] = r.uniform(0, 1);
    return v;
  };
  t.X1 = rand_spec(1);
  t.X2 = rand_spec(2);
  for (int k = 0; k < 4; ++k)
    t.gt_masks[static_cast<std::size_t>(k)] = rand_mask(static_cast<uint64_t>(k));
  t.visuals_A1 = rand_visuals(10);
  t.visuals_A2 = rand_visuals(11);
  t.visuals_B = rand_visuals(12);
  t.seed = seed;
  return t;
}

// Compares analytic parameter gradients of the total loss against central
// finite differences on >= n_samples randomly chosen parameters.
inline GradCheckReport gradient_check(const ModelConfig& model_cfg,
                                      const LossWeights& weights, uint64_t seed,
                                      long n_samples = 220) {
  if (model_cfg.channel_scale > 0.1)
    throw InvalidInput("gradient_check wants channel_scale <= 0.1");
  SeparatorModel model(model_cfg);
  TrainingTuple tuple = synthetic_tuple_for(model_cfg, seed);

  nn::Grads grads(model.params());
  const LossBreakdown base = tuple_backward(model, tuple, weights, grads);
  (void)base;

  auto loss_at = [&]() {
    nn::Grads scratch(model.params());
    return tuple_backward(model, tuple, weights, scratch).total;
  };

  auto& store = model.params();
  Rng pick(seed * 7 + 3);
  GradCheckReport rep;
  double sum_err = 0.0;
  for (long s = 0; s < n_samples; ++s) {
    const std::size_t pi = pick.uniform_index(store.values.size());
    Tensor& p = store.values[pi];
    const long ei = static_cast<long>(pick.uniform_index(static_cast<uint64_t>(p.numel())));
    const double keep = p[ei];
    const double analytic = grads.g[pi][ei];
    double best = 1e300;
    for (double eps : {1e-4, 1e-5, 1.2e-6}) {
      p[ei] = keep + eps;
      const double lp = loss_at();
      p[ei] = keep - eps;
      const double lm = loss_at();
      p[ei] = keep;
      const double fd = (lp - lm) / (2.0 * eps);
      const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-4});
      best = std::min(best, std::abs(fd - analytic) / denom);
      if (best < 1e-4) break;
    }
    sum_err += best;
    if (best > rep.max_rel_err) {
      rep.max_rel_err = best;
      rep.worst_param = store.names[pi] + "[" + std::to_string(ei) + "]";
    }
    ++rep.n_checked;
  }
  rep.mean_rel_err = rep.n_checked ? sum_err / static_cast<double>(rep.n_checked) : 0.0;
  return rep;
}

}  // namespace avsep

#endif  // AVSEP_TRAINING_HPP_
