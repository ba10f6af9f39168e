// tests/test_data_engine.cpp

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "avsep/data_engine.hpp"
#include "avsep/fixture.hpp"
#include "avsep/manifest.hpp"
#include "avsep/metrics.hpp"

using namespace avsep;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

// Shared fixture corpus, generated once per test process.
const std::string& fixture_dir() {
  static std::string dir = [] {
    const fs::path d = fs::temp_directory_path() / "avsep_fixture_small";
    fs::remove_all(d);
    FixtureOptions opt;
    opt.n_speakers = 3;
    opt.clips_per_speaker = 2;
    opt.noise_clips = 2;
    make_synthetic_fixture(d.string(), 1234, opt);
    return d.string();
  }();
  return dir;
}

std::string fixture_manifest() { return fixture_dir() + "/manifest.jsonl"; }

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("fixture generation is deterministic and well-formed", "[data][fixture]") {
  const fs::path d1 = fs::temp_directory_path() / "avsep_fix_det1";
  const fs::path d2 = fs::temp_directory_path() / "avsep_fix_det2";
  fs::remove_all(d1);
  fs::remove_all(d2);
  FixtureOptions opt;
  opt.n_speakers = 2;
  opt.clips_per_speaker = 2;
  make_synthetic_fixture(d1.string(), 99, opt);
  make_synthetic_fixture(d2.string(), 99, opt);

  // identical bytes for a sample of artifacts
  for (const char* rel :
       {"manifest.jsonl", "spk00/clip00/audio.wav", "spk01/clip01/audio.wav",
        "spk00/clip01/rois/f0010.pgm", "spk01/clip00/faces/f01.ppm"}) {
    REQUIRE(file_bytes((d1 / rel).string()) == file_bytes((d2 / rel).string()));
  }

  Manifest m = load_manifest((d1 / "manifest.jsonl").string());
  REQUIRE(m.entries.size() == 4);
  REQUIRE(m.by_video.size() == 2);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("fixture speaker/clip counts land in the manifest", "[data][fixture]") {
  Manifest m = load_manifest(fixture_manifest());
  REQUIRE(m.entries.size() == 6);
  REQUIRE(m.by_video.size() == 3);
  for (const auto& [vid, clips] : m.by_video) REQUIRE(clips.size() == 2);
}

TEST_CASE("manifest loader rejects malformed input", "[data][manifest]") {
  const fs::path dir = fs::temp_directory_path() / "avsep_manifest_bad";
  fs::create_directories(dir);

  SECTION("missing field named in the error") {
    const fs::path p = dir / "missing_field.jsonl";
    std::ofstream(p) << R"({"clip_id":"a","audio_path":"x.wav","face_dir":"f","video_id":"v"})"
                     << "\n";
    try {
      load_manifest(p.string());
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      REQUIRE(std::string(e.what()).find("roi_dir") != std::string::npos);
    }
  }

  SECTION("unknown field rejected") {
    const fs::path p = dir / "extra_field.jsonl";
    std::ofstream(p)
        << R"({"clip_id":"a","audio_path":"x.wav","roi_dir":"r","face_dir":"f","video_id":"v","bogus":"y"})"
        << "\n";
    REQUIRE_THROWS_AS(load_manifest(p.string()), ParseError);
  }

  SECTION("duplicate clip_id rejected") {
    // reuse real assets from the fixture so validation reaches the id check
    Manifest good = load_manifest(fixture_manifest());
    const auto& e = good.entries[0];
    const fs::path p = dir / "dup.jsonl";
    nlohmann::json j = {{"clip_id", "dup"},
                        {"audio_path", e.audio_path},
                        {"roi_dir", e.roi_dir},
                        {"face_dir", e.face_dir},
                        {"video_id", "v1"}};
    std::ofstream out(p);
    out << j.dump() << "\n" << j.dump() << "\n";
    out.close();
    REQUIRE_THROWS_AS(load_manifest(p.string()), DuplicateId);
  }

  SECTION("missing media listed") {
    const fs::path p = dir / "missing_media.jsonl";
    std::ofstream(p)
        << R"({"clip_id":"a","audio_path":"nope.wav","roi_dir":"nope_rois","face_dir":"nope_faces","video_id":"v"})"
        << "\n";
    try {
      load_manifest(p.string());
      FAIL("expected MissingAsset");
    } catch (const MissingAsset& e) {
      const std::string msg = e.what();
      REQUIRE(msg.find("nope.wav") != std::string::npos);
      REQUIRE(msg.find("nope_rois") != std::string::npos);
    }
  }

  SECTION("malformed JSON carries the line number") {
    const fs::path p = dir / "bad_json.jsonl";
    Manifest good = load_manifest(fixture_manifest());
    const auto& e = good.entries[0];
    nlohmann::json j = {{"clip_id", "ok"},
                        {"audio_path", e.audio_path},
                        {"roi_dir", e.roi_dir},
                        {"face_dir", e.face_dir},
                        {"video_id", "v1"}};
    std::ofstream out(p);
    out << j.dump() << "\n{not json\n";
    out.close();
    try {
      load_manifest(p.string());
      FAIL("expected ParseError");
    } catch (const ParseError& e2) {
      REQUIRE(std::string(e2.what()).find("line 2") != std::string::npos);
    }
  }
}

TEST_CASE("tuple sampling is deterministic and satisfies the mixing identity",
          "[data][sampler]") {
  Manifest m = load_manifest(fixture_manifest());

  TrainingTuple t1 = sample_training_tuple(m, 7);
  TrainingTuple t2 = sample_training_tuple(m, 7);

  REQUIRE(t1.clip_a1 == t2.clip_a1);
  REQUIRE(t1.clip_b == t2.clip_b);
  REQUIRE(t1.x1.samples == t2.x1.samples);
  REQUIRE(t1.x2.samples == t2.x2.samples);
  REQUIRE(t1.visuals_A1.mouth_rois.storage() == t2.visuals_A1.mouth_rois.storage());

  // x1 - sA1 - sB identically zero (sB stores its mixing scale)
  for (long i = 0; i < t1.x1.size(); ++i) {
    REQUIRE(t1.x1.samples[static_cast<std::size_t>(i)] ==
            t1.sA1.samples[static_cast<std::size_t>(i)] +
                t1.sB.samples[static_cast<std::size_t>(i)]);
    REQUIRE(t1.x2.samples[static_cast<std::size_t>(i)] ==
            t1.sA2.samples[static_cast<std::size_t>(i)] +
                t1.sB.samples[static_cast<std::size_t>(i)]);
  }

  // same-video constraint
  REQUIRE(t1.video_a != t1.video_b);

  // shapes per the 2.55 s configuration
  REQUIRE(t1.X1.freq_bins() == 257);
  REQUIRE(t1.X1.frames() == 256);
  REQUIRE(t1.visuals_A1.mouth_rois.shape() == std::vector<long>{64, 88, 88});
  REQUIRE(t1.visuals_A1.face_image.shape() == std::vector<long>{3, 224, 224});

  // masks satisfy the bound invariant
  for (const auto& mk : t1.gt_masks) {
    for (long i = 0; i < mk.real.numel(); ++i) {
      REQUIRE(std::abs(mk.real[i]) <= 5.0);
      REQUIRE(std::abs(mk.imag[i]) <= 5.0);
    }
  }

  // different seeds give different material
  TrainingTuple t3 = sample_training_tuple(m, 8);
  REQUIRE(t1.x1.samples != t3.x1.samples);
}

TEST_CASE("ground-truth masks separate the fixture sources above 20 dB",
          "[data][sampler][oracle]") {
  Manifest m = load_manifest(fixture_manifest());
  double sdr_sum = 0.0;
  int count = 0;
  for (uint64_t seed = 0; seed < 4; ++seed) {
    TrainingTuple t = sample_training_tuple(m, 100 + seed);
    ComplexSpectrogram recA = apply_mask(t.X1, t.gt_masks[0]);
    ComplexSpectrogram recB = apply_mask(t.X1, t.gt_masks[2]);
    Waveform wa = istft(recA, t.X1.config, t.x1.size());
    Waveform wb = istft(recB, t.X1.config, t.x1.size());
    auto metrics = bss_eval({t.sA1, t.sB}, {wa, wb});
    sdr_sum += metrics[0].sdr + metrics[1].sdr;
    count += 2;
  }
  REQUIRE(sdr_sum / count >= 20.0);
}

TEST_CASE("enhancement noise keeps the oracle pipeline above 15 dB",
          "[data][sampler][noise]") {
  Manifest m = load_manifest(fixture_manifest());
  auto pool = load_noise_pool(fixture_dir() + "/noise");
  REQUIRE(pool.size() == 2);

  TrainingTuple t = sample_training_tuple(m, 11);

  SECTION("infinite SNR sentinel leaves the tuple unchanged") {
    TrainingTuple same = add_enhancement_noise(
        t, pool, std::numeric_limits<double>::infinity(), 5);
    REQUIRE(same.x1.samples == t.x1.samples);
    REQUIRE_FALSE(same.noise1.has_value());
  }

  SECTION("0 dB equal-RMS noise gets scale 1") {
    Waveform fake = t.x1;
    for (std::size_t i = 0; i < fake.samples.size(); i += 2)
      fake.samples[i] = -fake.samples[i];
    auto [mixed, scale] = mix_waveforms(t.x1, fake, 0.0);
    REQUIRE(scale == Approx(1.0).margin(1e-12));
  }

  SECTION("masks recomputed against noisy mixtures still separate") {
    TrainingTuple noisy = add_enhancement_noise(t, pool, 2.0, 5);
    REQUIRE(noisy.noise1.has_value());
    REQUIRE(noisy.noise2.has_value());
    // mixture now includes the noise
    for (std::size_t i = 0; i < noisy.x1.samples.size(); ++i)
      REQUIRE(noisy.x1.samples[i] ==
              Approx(t.x1.samples[i] + noisy.noise1->samples[i]).margin(1e-12));

    ComplexSpectrogram recA = apply_mask(noisy.X1, noisy.gt_masks[0]);
    Waveform wa = istft(recA, noisy.X1.config, noisy.x1.size());
    auto metrics = bss_eval({noisy.sA1}, {wa});
    REQUIRE(metrics[0].sdr >= 15.0);
  }

  SECTION("empty pool rejected") {
    REQUIRE_THROWS_AS(add_enhancement_noise(t, {}, 0.0, 5), InvalidInput);
  }
}

TEST_CASE("corrupt_rois shifts and occludes", "[data][corrupt]") {
  Manifest m = load_manifest(fixture_manifest());
  TrainingTuple t = sample_training_tuple(m, 13);
  const FaceTrackInput& f = t.visuals_A1;

  SECTION("disabled spec is the identity") {
    CorruptionSpec spec;
    spec.enabled = false;
    FaceTrackInput out = corrupt_rois(f, spec);
    REQUIRE(out.mouth_rois.storage() == f.mouth_rois.storage());
  }

  SECTION("zero shift and occlusion is the identity") {
    CorruptionSpec spec;
    spec.enabled = true;
    FaceTrackInput out = corrupt_rois(f, spec);
    REQUIRE(out.mouth_rois.storage() == f.mouth_rois.storage());
  }

  SECTION("1 s shift at 25 fps moves frames by 25") {
    CorruptionSpec spec;
    spec.enabled = true;
    spec.time_shift = 1.0;
    FaceTrackInput out = corrupt_rois(f, spec);
    const long elems = 88 * 88;
    for (long tdx : {0L, 30L, 63L}) {
      const long from = (tdx - 25 + 64) % 64;
      for (long i = 0; i < elems; i += 97)
        REQUIRE(out.mouth_rois[tdx * elems + i] == f.mouth_rois[from * elems + i]);
    }
    REQUIRE(out.face_image.storage() == f.face_image.storage());
  }

  SECTION("full-segment occlusion flattens every frame to the mean") {
    CorruptionSpec spec;
    spec.enabled = true;
    spec.occlusion_duration = 64.0 / 25.0;  // whole segment
    spec.occlusion_start = 0;
    FaceTrackInput out = corrupt_rois(f, spec);
    const long elems = 88 * 88;
    for (long tdx = 1; tdx < 64; tdx += 9)
      for (long i = 0; i < elems; i += 131)
        REQUIRE(out.mouth_rois[tdx * elems + i] == out.mouth_rois[i]);
  }

  SECTION("spec outside the segment rejected") {
    CorruptionSpec spec;
    spec.enabled = true;
    spec.occlusion_duration = 5.0;
    REQUIRE_THROWS_AS(corrupt_rois(f, spec), InvalidInput);
  }
}
