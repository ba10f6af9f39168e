// tests/test_inference.cpp

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "avsep/eval.hpp"
#include "avsep/fixture.hpp"
#include "avsep/inference.hpp"
#include "support/signals.hpp"
#include "support/tiny_model.hpp"

using namespace avsep;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

const std::string& fixture_dir() {
  static std::string dir = [] {
    const fs::path d = fs::temp_directory_path() / "avsep_fixture_infer";
    fs::remove_all(d);
    FixtureOptions opt;
    opt.n_speakers = 3;
    opt.clips_per_speaker = 2;
    opt.clip_seconds = 4.0;
    make_synthetic_fixture(d.string(), 777, opt);
    return d.string();
  }();
  return dir;
}

}  // namespace

TEST_CASE("window start arithmetic", "[inference][windows]") {
  const long rate = 16000;
  const long win = static_cast<long>(2.55 * rate);
  const long hop = static_cast<long>(1.275 * rate);

  SECTION("10.2 s clip gives 7 windows on the exact grid") {
    auto starts = window_starts(static_cast<long>(10.2 * rate), win, hop);
    REQUIRE(starts.size() == 7);
    REQUIRE(starts.front() == 0);
    REQUIRE(starts.back() + win == static_cast<long>(10.2 * rate));
  }

  SECTION("non-grid length appends a right-aligned final window") {
    const long len = static_cast<long>(10.5 * rate);
    auto starts = window_starts(len, win, hop);
    REQUIRE(starts.back() == len - win);
    REQUIRE(starts.size() == 8);
  }

  SECTION("exactly one window") {
    auto starts = window_starts(win, win, hop);
    REQUIRE(starts.size() == 1);
    REQUIRE(starts[0] == 0);
  }
}

TEST_CASE("blend weights partition unity on the regular grid", "[inference][blend]") {
  const long win = 1000, hop = 500;
  std::vector<Waveform> windows;
  std::vector<long> starts;
  const long total = 4000;
  for (long s = 0; s + win <= total; s += hop) {
    Waveform w;
    w.samples.assign(static_cast<std::size_t>(win), 1.0);
    windows.push_back(std::move(w));
    starts.push_back(s);
  }
  auto [blended, wsum] = blend_windows(windows, starts, total,
                                       WindowConfig::Blend::crossfade_hann);
  for (long i = 0; i < total; ++i) {
    REQUIRE(wsum[static_cast<std::size_t>(i)] == Approx(1.0).margin(1e-9));
    REQUIRE(blended.samples[static_cast<std::size_t>(i)] == Approx(1.0).margin(1e-9));
  }

  SECTION("overlap averaging also reconstructs constants") {
    auto [blended2, wsum2] = blend_windows(windows, starts, total,
                                           WindowConfig::Blend::overlap_average);
    for (long i = 0; i < total; ++i)
      REQUIRE(blended2.samples[static_cast<std::size_t>(i)] == Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("oracle-mask separation through the sliding window", "[inference][oracle]") {
  // two fixture-style sources mixed at 0 dB over a 4 s clip
  Waveform a = signals::speech_like(64000, 91);
  Waveform b = signals::speech_like(64000, 92);
  auto [mix, scale] = mix_waveforms(a, b, 0.0);
  Waveform b_scaled = b;
  for (auto& v : b_scaled.samples) v *= scale;

  OracleMaskPredictor predictor({a, b_scaled});
  WindowConfig wcfg;

  SECTION("recovered sources exceed 20 dB SDR for both blend modes and hops") {
    for (auto blend : {WindowConfig::Blend::crossfade_hann,
                       WindowConfig::Blend::overlap_average}) {
      for (double hop : {1.275, 0.85}) {
        WindowConfig w = wcfg;
        w.blend = blend;
        w.hop_seconds = hop;
        auto res = separate_clip(mix, {}, predictor, w);
        REQUIRE(res.sources.size() == 2);
        REQUIRE(res.sources[0].size() == mix.size());
        REQUIRE(res.sources[1].size() == mix.size());
        auto metrics = bss_eval({a, b_scaled}, res.sources);
        INFO("blend " << static_cast<int>(blend) << " hop " << hop << " sdr "
                      << metrics[0].sdr << "/" << metrics[1].sdr);
        REQUIRE(metrics[0].sdr >= 20.0);
        REQUIRE(metrics[1].sdr >= 20.0);
      }
    }
  }

  SECTION("clip shorter than one window rejected") {
    Waveform tooshort = signals::speech_like(30000, 93);
    REQUIRE_THROWS_AS(separate_clip(tooshort, {}, predictor, wcfg), ClipTooShort);
  }

  SECTION("single-window clip comes back at full length") {
    Waveform exact;
    exact.sample_rate = 16000;
    exact.samples.assign(40800, 0.0);
    Waveform ax = a, bx = b_scaled;
    ax.samples.resize(40800);
    bx.samples.resize(40800);
    for (std::size_t i = 0; i < 40800; ++i)
      exact.samples[i] = ax.samples[i] + bx.samples[i];
    OracleMaskPredictor p2({ax, bx});
    auto res = separate_clip(exact, {}, p2, wcfg);
    REQUIRE(res.window_starts.size() == 1);
    REQUIRE(res.sources[0].size() == 40800);
  }
}

TEST_CASE("identity predictor reproduces the mixture", "[inference][baseline]") {
  Waveform a = signals::speech_like(48000, 94);
  Waveform b = signals::speech_like(48000, 95);
  auto [mix, scale] = mix_waveforms(a, b, 0.0);
  IdentityPredictor pred(2);
  auto res = separate_clip(mix, {}, pred, {});
  // inside the interior, the reconstruction equals the mixture
  for (long i = 800; i < mix.size() - 800; i += 997)
    REQUIRE(res.sources[0].samples[static_cast<std::size_t>(i)] ==
            Approx(mix.samples[static_cast<std::size_t>(i)]).margin(1e-6));
}

TEST_CASE("model predictor runs the tiny model end to end", "[inference][model]") {
  ModelConfig cfg = tiny::config();
  // the tiny STFT uses hop 40 at 16 kHz: window = 1240 samples = 0.0775 s
  SeparatorModel model(cfg);
  const long win_samples = (cfg.frames() - 1) * cfg.stft.hop;
  WindowConfig wcfg;
  wcfg.window_seconds = static_cast<double>(win_samples) / 16000.0;
  wcfg.hop_seconds = wcfg.window_seconds / 2;

  Waveform mix = signals::speech_like(3 * win_samples, 96);

  // visual streams covering the clip at the model's frame rate
  const int fps = static_cast<int>(std::lround(
      cfg.n_time_steps / wcfg.window_seconds));
  const long frames = static_cast<long>(mix.duration_seconds() * fps) + 1;
  auto make_stream = [&](uint64_t seed) {
    SpeakerVisualStream s;
    Rng rng(seed);
    s.mouth_rois = Tensor({frames, cfg.roi_size, cfg.roi_size});
    for (long i = 0; i < s.mouth_rois.numel(); ++i) s.mouth_rois[i] = rng.uniform(0, 1);
    s.face_image = Tensor({3, cfg.face_size, cfg.face_size});
    for (long i = 0; i < s.face_image.numel(); ++i) s.face_image[i] = rng.uniform(0, 1);
    return s;
  };
  std::vector<SpeakerVisualStream> streams = {make_stream(1), make_stream(2)};

  ModelPredictor pred(model, streams, fps);
  auto res = separate_clip(mix, streams, pred, wcfg, cfg.stft, fps);
  REQUIRE(res.sources.size() == 2);
  REQUIRE(res.sources[0].size() == mix.size());
  for (const auto& s : res.sources)
    for (double v : s.samples) REQUIRE(std::isfinite(v));

  SECTION("deterministic output") {
    auto res2 = separate_clip(mix, streams, pred, wcfg, cfg.stft, fps);
    REQUIRE(res.sources[0].samples == res2.sources[0].samples);
  }

  SECTION("misaligned visuals rejected") {
    std::vector<SpeakerVisualStream> bad = streams;
    Tensor shorter({frames / 3, cfg.roi_size, cfg.roi_size});
    bad[0].mouth_rois = shorter;
    REQUIRE_THROWS_AS(separate_clip(mix, bad, pred, wcfg, cfg.stft, fps),
                      AlignmentError);
  }
}

TEST_CASE("best-permutation assignment", "[inference][perm]") {
  Waveform a = signals::speech_like(20000, 97);
  Waveform b = signals::speech_like(20000, 98);
  Waveform c = signals::speech_like(20000, 99);

  SECTION("in-order estimates give the identity") {
    auto perm = assign_best_permutation({a, b}, {a, b});
    REQUIRE(perm == std::vector<int>{0, 1});
  }

  SECTION("swapped estimates are detected") {
    auto perm = assign_best_permutation({b, a}, {a, b});
    REQUIRE(perm == std::vector<int>{1, 0});
  }

  SECTION("three-source case matches exhaustive search") {
    // estimates are noisy versions of shuffled references
    Rng rng(100);
    std::vector<Waveform> ests = {c, a, b};
    for (auto& e : ests)
      for (auto& v : e.samples) v += rng.normal(0.0, 0.01);
    auto perm = assign_best_permutation(ests, {a, b, c});
    REQUIRE(perm == std::vector<int>{2, 0, 1});
  }

  SECTION("count mismatch rejected") {
    REQUIRE_THROWS_AS(assign_best_permutation({a}, {a, b}), ShapeError);
  }
}

TEST_CASE("evaluation protocol produces a deterministic report", "[inference][eval]") {
  Manifest m = load_manifest(fixture_dir() + "/manifest.jsonl");

  EvalProtocol proto;
  proto.n_pairs = 3;
  proto.seed = 5;
  proto.estimator = EvalProtocol::Estimator::oracle_masks;

  EvalReport r1 = evaluate_separation(m, nullptr, proto);
  REQUIRE(r1.per_pair.size() == 3);
  REQUIRE(r1.mean_sdr >= 20.0);

  EvalReport r2 = evaluate_separation(m, nullptr, proto);
  REQUIRE(r1.to_json().dump() == r2.to_json().dump());

  SECTION("mixture baseline reports the comparison floor") {
    EvalProtocol base = proto;
    base.estimator = EvalProtocol::Estimator::mixture_baseline;
    EvalReport rb = evaluate_separation(m, nullptr, base);
    // estimate = mixture: SDR equals the mixture-vs-source floor
    for (const auto& p : rb.per_pair)
      for (const auto& s : p.sources)
        REQUIRE(s.sdr == Approx(p.mixture_sdr).margin(6.0));
    REQUIRE(rb.mean_sdr < r1.mean_sdr - 10.0);
  }
}
