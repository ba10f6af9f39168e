// include/avsep/runner.hpp
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
// Training driver: seeded data workers over the manifest, step loop with
// JSONL logging, periodic checkpoints, and a held-out validation split.

#ifndef AVSEP_RUNNER_HPP_
#define AVSEP_RUNNER_HPP_

#include <chrono>
#include <fstream>
#include <functional>
#include <thread>

#include "avsep/data_engine.hpp"
#include "avsep/digest.hpp"
#include "avsep/manifest.hpp"
#include "avsep/training.hpp"

namespace avsep {

struct RunOptions {
  long steps = 100;
  uint64_t seed = 0;
  int workers = 1;
  std::string log_path;         // JSONL, one record per step
  std::string checkpoint_path;  // written at intervals and at the end
  std::string noise_dir;        // enhancement pool, when enabled
  bool log_timing = true;
  std::function<void(long, const LossBreakdown&)> on_step;  // optional
};

// Hold out ~10% of videos by hash of video_id; falls back to no validation
// split when fewer than two videos land on either side.
inline std::pair<Manifest, Manifest> split_manifest(const Manifest& all) {
  Manifest train = all, val = all;
  train.entries.clear();
  train.by_video.clear();
  val.entries.clear();
  val.by_video.clear();
  for (const auto& e : all.entries) {
    const bool held_out = fnv1a64(e.video_id.data(), e.video_id.size()) % 10 == 0;
    Manifest& dst = held_out ? val : train;
    dst.by_video[e.video_id].push_back(dst.entries.size());
    dst.entries.push_back(e);
  }
  if (train.by_video.size() < 2) return {all, Manifest{}};
  return {train, val};
}

inline uint64_t tuple_seed(uint64_t base, long step, long slot) {
  uint64_t h = 0xcbf29ce484222325ULL ^ base;
  h = (h ^ static_cast<uint64_t>(step)) * 0x100000001b3ULL;
  h = (h ^ static_cast<uint64_t>(slot)) * 0x100000001b3ULL;
  return h;
}

// Samples one batch with bounded worker concurrency; slot-indexed seeds keep
// the result independent of scheduling.
inline std::vector<TrainingTuple> sample_batch(
    const Manifest& manifest, const SamplerOptions& opts, uint64_t base_seed,
    long step, long batch_size, int workers, bool enhancement,
    const std::vector<Waveform>* noise_pool, double snr_lo, double snr_hi) {
  std::vector<TrainingTuple> batch(static_cast<std::size_t>(batch_size));
  auto fill = [&](long lo, long hi) {
    for (long slot = lo; slot < hi; ++slot) {
      const uint64_t seed = tuple_seed(base_seed, step, slot);
      TrainingTuple t = sample_training_tuple(manifest, seed, opts);
      if (enhancement && noise_pool && !noise_pool->empty()) {
        Rng r(seed ^ 0x9e3779b97f4a7c15ULL);
        const double snr = r.uniform(snr_lo, snr_hi);
        t = add_enhancement_noise(t, *noise_pool, snr, seed ^ 0x51aa7, opts);
      }
      batch[static_cast<std::size_t>(slot)] = std::move(t);
    }
  };
  const int n_workers = std::max(1, std::min<int>(workers, static_cast<int>(batch_size)));
  if (n_workers == 1) {
    fill(0, batch_size);
  } else {
    std::vector<std::thread> pool;
    const long per = (batch_size + n_workers - 1) / n_workers;
    for (int w = 0; w < n_workers; ++w) {
      const long lo = w * per;
      const long hi = std::min<long>(batch_size, lo + per);
      if (lo >= hi) break;
      pool.emplace_back(fill, lo, hi);
    }
    for (auto& t : pool) t.join();
  }
  return batch;
}

inline double validation_loss(TrainState& state, const Manifest& val,
                              const SamplerOptions& opts, const TrainConfig& tcfg,
                              uint64_t seed, int n_tuples = 4) {
  if (val.by_video.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (int i = 0; i < n_tuples; ++i) {
    TrainingTuple t = sample_training_tuple(val, seed + static_cast<uint64_t>(i), opts);
    nn::Grads scratch(state.model->params());
    total += tuple_backward(*state.model, t, tcfg.loss, scratch).total;
  }
  return total / n_tuples;
}

// Runs the loop; returns the last breakdown. state.step advances, so a
// loaded checkpoint resumes where it stopped.
inline LossBreakdown run_training(TrainState& state, const Manifest& manifest,
                                  const SamplerOptions& sampler_opts,
                                  TrainConfig tcfg, const RunOptions& run,
                                  const std::string& config_digest) {
  tcfg.workers = run.workers;
  auto [train_manifest, val_manifest] = split_manifest(manifest);

  std::vector<Waveform> noise_pool;
  if (tcfg.enhancement) {
    if (run.noise_dir.empty())
      throw ConfigError("enhancement training needs a noise directory");
    noise_pool = load_noise_pool(run.noise_dir, sampler_opts.segment_seconds);
    if (noise_pool.empty()) throw InvalidInput("noise pool is empty");
  }

  std::ofstream log;
  if (!run.log_path.empty()) {
    log.open(run.log_path, state.step > 0 ? std::ios::app : std::ios::out);
    if (!log) throw IoError("cannot open training log " + run.log_path);
  }

  LossBreakdown last;
  const auto t_start = std::chrono::steady_clock::now();
  auto wall_ms = [&] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - t_start)
        .count();
  };

  while (state.step < run.steps) {
    const long step = state.step + 1;
    auto batch = sample_batch(train_manifest, sampler_opts, run.seed, step,
                              tcfg.batch_size, run.workers, tcfg.enhancement,
                              &noise_pool, tcfg.enhancement_snr_lo,
                              tcfg.enhancement_snr_hi);
    last = train_step(state, batch, tcfg);

    if (log.is_open()) {
      nlohmann::json rec = {{"step", state.step}, {"losses", last.to_json()}};
      if (run.log_timing) rec["wall_ms"] = wall_ms();
      log << rec.dump() << "\n";
    }
    if (run.on_step) run.on_step(state.step, last);

    const bool at_interval =
        tcfg.checkpoint_interval > 0 && state.step % tcfg.checkpoint_interval == 0;
    if (at_interval || state.step == run.steps) {
      if (!state.model->params().all_finite())
        throw NumericalError("non-finite parameter at step " +
                             std::to_string(state.step));
      const double val = validation_loss(state, val_manifest, sampler_opts, tcfg,
                                         run.seed ^ 0x7a1ULL);
      if (!std::isnan(val)) state.best_val_loss = std::min(state.best_val_loss, val);
      if (!run.checkpoint_path.empty()) save_checkpoint(state, run.checkpoint_path);
    }
  }
  if (log.is_open()) log.close();
  (void)config_digest;
  return last;
}

}  // namespace avsep

#endif  // AVSEP_RUNNER_HPP_
