// tests/test_cli.cpp

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "avsep/cli.hpp"

using namespace avsep;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
  std::vector<const char*> argv = {"avsep"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

long count_lines(const std::string& path) {
  std::ifstream in(path);
  long n = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++n;
  return n;
}

// Work area shared across the CLI scenarios: a small fixture plus a tiny
// trained checkpoint. Built once per test process.
struct CliWorkArea {
  fs::path root;
  std::string manifest;
  std::string checkpoint;
  std::string general_checkpoint;

  CliWorkArea() {
    root = fs::temp_directory_path() / "avsep_cli_area";
    fs::remove_all(root);
    fs::create_directories(root);

    REQUIRE(run({"--seed", "3", "fixture", "--out", (root / "fix").string(),
                 "--speakers", "3", "--clips", "2", "--noise-clips", "2"}) == 0);
    manifest = (root / "fix" / "manifest.jsonl").string();
    REQUIRE(fs::exists(manifest));

    // a very small but real training run
    REQUIRE(run({"--seed", "4", "--config", "desk", "--set",
                 "model.channel_scale=0.04", "--set", "train.batch_size=2",
                 "--set", "model.embed_dim=16", "--set", "train.learning_rate=0.001",
                 "train", "--manifest", manifest, "--out", (root / "train").string(),
                 "--steps", "3"}) == 0);
    checkpoint = (root / "train" / "checkpoint.ckpt").string();
    REQUIRE(fs::exists(checkpoint));

    REQUIRE(run({"--seed", "4", "--config", "desk", "--set",
                 "model.channel_scale=0.04", "--set", "train.batch_size=2",
                 "--set", "model.embed_dim=16", "--set",
                 "model.mode=general_single_speaker", "train", "--manifest",
                 manifest, "--out", (root / "train_gen").string(), "--steps",
                 "2"}) == 0);
    general_checkpoint = (root / "train_gen" / "checkpoint.ckpt").string();
  }
};

CliWorkArea& area() {
  static CliWorkArea a;
  return a;
}

}  // namespace

TEST_CASE("help exits 0 and lists every subcommand", "[cli]") {
  REQUIRE(run({"--help"}) == 0);
}

TEST_CASE("usage errors exit 2", "[cli]") {
  REQUIRE(run({"no-such-subcommand"}) == 2);
  REQUIRE(run({"train", "--bogus-flag"}) == 2);
  REQUIRE(run({}) == 2);
}

TEST_CASE("unknown config keys are rejected", "[cli]") {
  REQUIRE(run({"--set", "bogus.key=1", "fixture", "--out",
               (fs::temp_directory_path() / "avsep_cli_never").string()}) == 1);
}

TEST_CASE("training produces a checkpoint and one log record per step", "[cli][train]") {
  auto& a = area();
  REQUIRE(fs::exists(a.checkpoint));
  REQUIRE(count_lines((a.root / "train" / "log.jsonl").string()) == 3);

  // every log line is a JSON record with step and losses
  std::ifstream log((a.root / "train" / "log.jsonl").string());
  std::string line;
  long expect = 1;
  while (std::getline(log, line)) {
    auto j = nlohmann::json::parse(line);
    REQUIRE(j.at("step").get<long>() == expect++);
    REQUIRE(j.at("losses").contains("total"));
    REQUIRE(j.contains("wall_ms"));
  }

  // run config echoed with its digest
  auto echo = nlohmann::json::parse(slurp((a.root / "train" / "run_config.json").string()));
  REQUIRE(echo.contains("config_digest"));
  REQUIRE(echo.at("seed").get<uint64_t>() == 4);
}

TEST_CASE("sample writes the tuple preview", "[cli][sample]") {
  auto& a = area();
  const fs::path out = a.root / "sample";
  REQUIRE(run({"--seed", "9", "sample", "--manifest", a.manifest, "--out",
               out.string()}) == 0);
  for (const char* f : {"x1.wav", "x2.wav", "sA1.wav", "sA2.wav", "sB.wav", "tuple.json"})
    REQUIRE(fs::exists(out / f));
  auto meta = nlohmann::json::parse(slurp((out / "tuple.json").string()));
  REQUIRE(meta.at("video_a") != meta.at("video_b"));
}

TEST_CASE("separate writes per-speaker WAVs and a sidecar", "[cli][separate]") {
  auto& a = area();
  Manifest m = load_manifest(a.manifest);
  const auto& ea = m.entries[0];
  const auto& eb = m.entries[2];  // different video

  const fs::path out = a.root / "sep";
  auto args = std::vector<std::string>{
      "separate",      "--input",  ea.audio_path,   "--checkpoint", a.checkpoint,
      "--out-dir",     out.string(), "--rois-a",    ea.roi_dir,     "--faces-a",
      ea.face_dir,     "--rois-b", eb.roi_dir,      "--faces-b",    eb.face_dir};
  REQUIRE(run(args) == 0);
  REQUIRE(fs::exists(out / "audio.spk1.wav"));
  REQUIRE(fs::exists(out / "audio.spk2.wav"));
  auto sidecar = nlohmann::json::parse(slurp((out / "audio.json").string()));
  REQUIRE(sidecar.at("outputs").size() == 2);
  REQUIRE(sidecar.contains("config_digest"));
  REQUIRE(sidecar.at("blend") == "crossfade_hann");

  SECTION("re-running is byte-identical") {
    const std::string first = slurp((out / "audio.spk1.wav").string());
    REQUIRE(run(args) == 0);
    REQUIRE(slurp((out / "audio.spk1.wav").string()) == first);
  }
}

TEST_CASE("enhance produces a single stream with the general model", "[cli][enhance]") {
  auto& a = area();
  Manifest m = load_manifest(a.manifest);
  const auto& ea = m.entries[0];
  const fs::path out = a.root / "enh";
  REQUIRE(run({"enhance", "--input", ea.audio_path, "--checkpoint",
               a.general_checkpoint, "--out-dir", out.string(), "--rois", ea.roi_dir,
               "--faces", ea.face_dir}) == 0);
  REQUIRE(fs::exists(out / "audio.spk1.wav"));
  REQUIRE_FALSE(fs::exists(out / "audio.spk2.wav"));

  SECTION("dedicated checkpoint rejected for enhancement") {
    REQUIRE(run({"enhance", "--input", ea.audio_path, "--checkpoint", a.checkpoint,
                 "--out-dir", out.string(), "--rois", ea.roi_dir, "--faces",
                 ea.face_dir}) == 1);
  }
}

TEST_CASE("eval-sep with oracle masks clears 20 dB on fixtures", "[cli][eval]") {
  auto& a = area();
  const std::string report_path = (a.root / "eval_oracle.json").string();
  REQUIRE(run({"--seed", "6", "eval-sep", "--manifest", a.manifest, "--oracle-masks",
               "--pairs", "4", "--out", report_path}) == 0);
  auto report = nlohmann::json::parse(slurp(report_path));
  REQUIRE(report.at("aggregate").at("sdr").get<double>() >= 20.0);
  REQUIRE(report.at("per_pair").size() == 4);
  REQUIRE(report.at("seed").get<uint64_t>() == 6);

  SECTION("repeated run writes an identical report") {
    const std::string again = (a.root / "eval_oracle2.json").string();
    REQUIRE(run({"--seed", "6", "eval-sep", "--manifest", a.manifest,
                 "--oracle-masks", "--pairs", "4", "--out", again}) == 0);
    REQUIRE(slurp(again) == slurp(report_path));
  }

  SECTION("mixture baseline reports the floor") {
    const std::string base = (a.root / "eval_base.json").string();
    REQUIRE(run({"--seed", "6", "eval-sep", "--manifest", a.manifest,
                 "--mixture-baseline", "--pairs", "2", "--out", base}) == 0);
    auto rb = nlohmann::json::parse(slurp(base));
    REQUIRE(rb.at("aggregate").at("sdr").get<double>() <
            report.at("aggregate").at("sdr").get<double>());
  }
}

TEST_CASE("export-embeddings writes unit-norm rows deterministically", "[cli][export]") {
  auto& a = area();
  const std::string csv = (a.root / "emb.csv").string();
  REQUIRE(run({"export-embeddings", "--manifest", a.manifest, "--checkpoint",
               a.checkpoint, "--out", csv}) == 0);

  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);  // digest comment
  REQUIRE(line.find("config_digest=") != std::string::npos);
  std::getline(in, line);  // header
  REQUIRE(line.rfind("clip_id,video_id,modality", 0) == 0);
  long rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    // norm of the embedding columns
    std::vector<double> vals;
    std::size_t pos = 0;
    int field = 0;
    while (pos != std::string::npos) {
      auto next = line.find(',', pos);
      const std::string tok = line.substr(pos, next - pos);
      if (field >= 3) vals.push_back(std::stod(tok));
      pos = next == std::string::npos ? next : next + 1;
      ++field;
    }
    double n = 0;
    for (double v : vals) n += v * v;
    REQUIRE(std::abs(std::sqrt(n) - 1.0) < 1e-6);
  }
  REQUIRE(rows == 12);  // 6 clips, face + voice each

  SECTION("re-export is byte-identical") {
    const std::string csv2 = (a.root / "emb2.csv").string();
    REQUIRE(run({"export-embeddings", "--manifest", a.manifest, "--checkpoint",
                 a.checkpoint, "--out", csv2}) == 0);
    REQUIRE(slurp(csv2) == slurp(csv));
  }
}

TEST_CASE("eval-verify reports AUC and EER", "[cli][verify]") {
  auto& a = area();
  const std::string out = (a.root / "verify.json").string();
  REQUIRE(run({"eval-verify", "--manifest", a.manifest, "--checkpoint", a.checkpoint,
               "--out", out}) == 0);
  auto j = nlohmann::json::parse(slurp(out));
  REQUIRE(j.at("auc").get<double>() >= 0.0);
  REQUIRE(j.at("auc").get<double>() <= 1.0);
  REQUIRE(j.at("n_pairs").get<long>() == 36);
}

TEST_CASE("checkpoint resume through the CLI", "[cli][resume]") {
  auto& a = area();
  const fs::path out = a.root / "resume";
  REQUIRE(run({"--seed", "4", "--config", "desk", "--set",
               "model.channel_scale=0.04", "--set", "train.batch_size=2", "--set",
               "model.embed_dim=16", "--set", "train.learning_rate=0.001", "train",
               "--manifest", a.manifest, "--out", out.string(), "--steps", "5",
               "--resume", a.checkpoint}) == 0);
  // resumed from step 3, so only steps 4 and 5 append
  REQUIRE(count_lines((out / "log.jsonl").string()) == 2);
}
