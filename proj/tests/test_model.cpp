// tests/test_model.cpp

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "avsep/model.hpp"
#include "support/gradcheck.hpp"
#include "support/tiny_model.hpp"

using namespace avsep;
using Catch::Approx;

namespace {

FaceTrackInput random_visuals(const ModelConfig& cfg, uint64_t seed) {
  FaceTrackInput v;
  v.mouth_rois = gradcheck::random_tensor({cfg.n_time_steps, cfg.roi_size, cfg.roi_size},
                                          seed, 0.0, 1.0);
  v.face_image = gradcheck::random_tensor({3, cfg.face_size, cfg.face_size}, seed + 1,
                                          0.0, 1.0);
  return v;
}

ComplexSpectrogram random_spec(const ModelConfig& cfg, uint64_t seed) {
  ComplexSpectrogram s = ComplexSpectrogram::zeros(cfg.freq_bins(), cfg.frames(),
                                                   cfg.stft);
  Rng rng(seed);
  for (long i = 0; i < s.real.numel(); ++i) {
    s.real[i] = rng.uniform(-1, 1);
    s.imag[i] = rng.uniform(-1, 1);
  }
  return s;
}

}  // namespace

TEST_CASE("paper-scale visual encoders meet their shape contracts",
          "[model][shapes][slow]") {
  ModelConfig cfg;  // full scale, dedicated
  SeparatorModel model(cfg);

  nn::Tape tape;
  Tensor rois = gradcheck::random_tensor({64, 88, 88}, 1, 0.0, 1.0);
  Tensor lip = model.lip_forward(rois, tape);
  REQUIRE(lip.shape() == std::vector<long>{512, 64});

  Tensor img = gradcheck::random_tensor({3, 224, 224}, 2, 0.0, 1.0);
  Tensor face = model.face_forward(img, tape);
  REQUIRE(face.shape() == std::vector<long>{128});
  double n = 0.0;
  for (long i = 0; i < 128; ++i) n += face[i] * face[i];
  REQUIRE(std::sqrt(n) == Approx(1.0).margin(1e-6));

  Tensor sep = gradcheck::random_tensor({2, 256, 256}, 3, -1.0, 1.0);
  Tensor voice = model.vocal_forward(sep, tape);
  REQUIRE(voice.shape() == std::vector<long>{128});

  // audio path structure at paper scale
  REQUIRE(model.bottleneck_freq_extent() == 64);
  REQUIRE(model.n_freq_blocks() == 6);
  REQUIRE(model.encoder_channels().back() == 512);
}

TEST_CASE("channel_scale shrinks the lip feature width", "[model][shapes]") {
  ModelConfig cfg;
  cfg.channel_scale = 0.25;
  SeparatorModel model(cfg);
  nn::Tape tape;
  Tensor rois = gradcheck::random_tensor({64, 88, 88}, 4, 0.0, 1.0);
  Tensor lip = model.lip_forward(rois, tape);
  REQUIRE(lip.shape() == std::vector<long>{128, 64});
}

TEST_CASE("predict_masks obeys mode, shape, and bound contracts", "[model][masks]") {
  ModelConfig cfg = tiny::config();
  SeparatorModel model(cfg);
  ComplexSpectrogram mix = random_spec(cfg, 10);
  FaceTrackInput va = random_visuals(cfg, 11);
  FaceTrackInput vb = random_visuals(cfg, 13);

  SECTION("dedicated mode emits two bounded masks in one pass") {
    auto masks = model.predict_masks(mix, va, &vb);
    REQUIRE(masks.size() == 2);
    for (const auto& m : masks) {
      REQUIRE(m.real.shape() == mix.real.shape());
      for (long i = 0; i < m.real.numel(); ++i) {
        REQUIRE(std::abs(m.real[i]) <= cfg.mask_bound);
        REQUIRE(std::abs(m.imag[i]) <= cfg.mask_bound);
      }
    }
  }

  SECTION("missing second speaker rejected in dedicated mode") {
    REQUIRE_THROWS_AS(model.predict_masks(mix, va, nullptr), ConfigError);
  }

  SECTION("general mode emits one mask and rejects a second speaker") {
    ModelConfig gcfg = tiny::config(SeparatorMode::general_single_speaker);
    SeparatorModel gmodel(gcfg);
    auto masks = gmodel.predict_masks(mix, va, nullptr);
    REQUIRE(masks.size() == 1);
    REQUIRE_THROWS_AS(gmodel.predict_masks(mix, va, &vb), ConfigError);
  }

  SECTION("deterministic outputs for fixed params and inputs") {
    auto m1 = model.predict_masks(mix, va, &vb);
    auto m2 = model.predict_masks(mix, va, &vb);
    REQUIRE(m1[0].real.storage() == m2[0].real.storage());
    REQUIRE(m1[1].imag.storage() == m2[1].imag.storage());

    SeparatorModel model2(cfg);  // same init seed -> same params
    auto m3 = model2.predict_masks(mix, va, &vb);
    REQUIRE(m1[0].real.storage() == m3[0].real.storage());
  }
}

TEST_CASE("vocal encoder guards its input contract", "[model][vocal]") {
  ModelConfig cfg = tiny::config();
  SeparatorModel model(cfg);
  nn::Tape tape;

  SECTION("zero spectrogram stays finite") {
    Tensor zero({2, cfg.freq_bins() - 1, cfg.frames()});
    Tensor emb = model.vocal_forward(zero, tape);
    REQUIRE(emb.all_finite());
  }

  SECTION("uncropped input directed to crop") {
    Tensor uncropped({2, cfg.freq_bins(), cfg.frames()});
    try {
      model.vocal_forward(uncropped, tape);
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      REQUIRE(std::string(e.what()).find("crop") != std::string::npos);
    }
  }

  SECTION("embeddings differ across parameter initializations") {
    Tensor spec = gradcheck::random_tensor({2, cfg.freq_bins() - 1, cfg.frames()}, 20);
    Tensor e1 = model.vocal_forward(spec, tape);
    ModelConfig cfg2 = cfg;
    cfg2.init_seed = 99;
    SeparatorModel other(cfg2);
    Tensor e2 = other.vocal_forward(spec, tape);
    REQUIRE(e1.storage() != e2.storage());
  }
}

TEST_CASE("vocal embedding gradient matches finite differences", "[model][grad]") {
  ModelConfig cfg = tiny::config();
  SeparatorModel model(cfg);
  Tensor spec = gradcheck::random_tensor({2, cfg.freq_bins() - 1, cfg.frames()}, 30);
  Rng rng(31);
  Tensor proj({cfg.embed_dim});
  for (long i = 0; i < proj.numel(); ++i) proj[i] = rng.uniform(-1, 1);

  nn::Tape tape;
  Tensor emb = model.vocal_forward(spec, tape);
  nn::Grads grads(model.params());
  Tensor dspec = model.vocal_backward(proj, tape, grads);

  auto loss_at = [&](const Tensor& s) {
    nn::Tape t2;
    Tensor e = model.vocal_forward(s, t2);
    double acc = 0.0;
    for (long i = 0; i < e.numel(); ++i) acc += proj[i] * e[i];
    return acc;
  };

  Tensor probe = spec;
  double max_rel = 0.0;
  const long stride = std::max(1L, probe.numel() / 48);
  for (long i = 0; i < probe.numel(); i += stride) {
    const double keep = probe[i];
    const double eps = 1e-5;
    probe[i] = keep + eps;
    const double lp = loss_at(probe);
    probe[i] = keep - eps;
    const double lm = loss_at(probe);
    probe[i] = keep;
    const double fd = (lp - lm) / (2 * eps);
    max_rel = std::max(max_rel, gradcheck::rel_err(fd, dspec[i]));
  }
  REQUIRE(max_rel < 1e-3);
}

TEST_CASE("separator forward/backward round-trips gradients", "[model][grad]") {
  ModelConfig cfg = tiny::config();
  SeparatorModel model(cfg);

  Tensor spec = gradcheck::random_tensor({2, cfg.freq_bins(), cfg.frames()}, 40);
  const long vis_ch = cfg.visual_dim() * cfg.speakers_in_fusion();
  Tensor visual = gradcheck::random_tensor({vis_ch, 1, cfg.n_time_steps}, 41);

  Rng rng(42);
  nn::Tape tape;
  Tensor out = model.separator_forward(spec, visual, tape);
  REQUIRE(out.shape() == std::vector<long>{4, cfg.freq_bins(), cfg.frames()});
  Tensor proj(out.shape());
  for (long i = 0; i < proj.numel(); ++i) proj[i] = rng.uniform(-1, 1);

  nn::Grads grads(model.params());
  auto [dspec, dvis] = model.separator_backward(proj, tape, grads);
  REQUIRE(dspec.shape() == spec.shape());
  REQUIRE(dvis.shape() == visual.shape());

  auto loss_at = [&](const Tensor& s, const Tensor& v) {
    nn::Tape t2;
    Tensor y = model.separator_forward(s, v, t2);
    double acc = 0.0;
    for (long i = 0; i < y.numel(); ++i) acc += proj[i] * y[i];
    return acc;
  };

  double max_rel = 0.0;
  {
    Tensor probe = spec;
    const long stride = std::max(1L, probe.numel() / 32);
    for (long i = 0; i < probe.numel(); i += stride) {
      auto loss = [&] { return loss_at(probe, visual); };
      max_rel = std::max(max_rel, gradcheck::fd_rel_err(loss, &probe[i], dspec[i]));
    }
  }
  {
    Tensor probe = visual;
    const long stride = std::max(1L, probe.numel() / 32);
    for (long i = 0; i < probe.numel(); i += stride) {
      auto loss = [&] { return loss_at(spec, probe); };
      max_rel = std::max(max_rel, gradcheck::fd_rel_err(loss, &probe[i], dvis[i]));
    }
  }
  INFO("max rel err " << max_rel);
  REQUIRE(max_rel < 1e-3);

  // a sample of parameter gradients across the active sub-module
  auto& store = model.params();
  Rng pick(43);
  double max_rel_p = 0.0;
  auto loss = [&] { return loss_at(spec, visual); };
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t pi = pick.uniform_index(store.values.size());
    if (store.names[pi].rfind("unet.", 0) != 0) continue;  // only the active net
    Tensor& p = store.values[pi];
    const long ei = static_cast<long>(pick.uniform_index(static_cast<uint64_t>(p.numel())));
    max_rel_p = std::max(max_rel_p,
                         gradcheck::fd_rel_err(loss, &p[ei], grads.g[pi][ei], 1e-4));
  }
  INFO("max param rel err " << max_rel_p);
  REQUIRE(max_rel_p < 1e-3);
}

TEST_CASE("lip and face encoders pass end-to-end gradient checks", "[model][grad]") {
  ModelConfig cfg = tiny::config();
  SeparatorModel model(cfg);

  SECTION("lip") {
    Tensor rois = gradcheck::random_tensor({cfg.n_time_steps, cfg.roi_size, cfg.roi_size},
                                           50, 0.0, 1.0);
    Rng rng(51);
    nn::Tape tape;
    Tensor feat = model.lip_forward(rois, tape);
    Tensor proj(feat.shape());
    for (long i = 0; i < proj.numel(); ++i) proj[i] = rng.uniform(-1, 1);
    nn::Grads grads(model.params());
    Tensor dx = model.lip_backward(proj, tape, grads);

    auto loss_at = [&](const Tensor& x) {
      nn::Tape t2;
      Tensor y = model.lip_forward(x, t2);
      double acc = 0.0;
      for (long i = 0; i < y.numel(); ++i) acc += proj[i] * y[i];
      return acc;
    };
    Tensor probe = rois;
    double max_rel = 0.0;
    const long stride = std::max(1L, probe.numel() / 24);
    for (long i = 0; i < probe.numel(); i += stride) {
      const double keep = probe[i];
      const double eps = 1e-5;
      probe[i] = keep + eps;
      const double lp = loss_at(probe);
      probe[i] = keep - eps;
      const double lm = loss_at(probe);
      probe[i] = keep;
      max_rel = std::max(max_rel, gradcheck::rel_err((lp - lm) / (2 * eps), dx[i]));
    }
    REQUIRE(max_rel < 1e-3);
  }

  SECTION("face") {
    Tensor img = gradcheck::random_tensor({3, cfg.face_size, cfg.face_size}, 52, 0.0, 1.0);
    Rng rng(53);
    nn::Tape tape;
    Tensor emb = model.face_forward(img, tape);
    REQUIRE(emb.shape() == std::vector<long>{cfg.embed_dim});
    Tensor proj(emb.shape());
    for (long i = 0; i < proj.numel(); ++i) proj[i] = rng.uniform(-1, 1);
    nn::Grads grads(model.params());
    Tensor dx = model.face_backward(proj, tape, grads);

    auto loss_at = [&](const Tensor& x) {
      nn::Tape t2;
      Tensor y = model.face_forward(x, t2);
      double acc = 0.0;
      for (long i = 0; i < y.numel(); ++i) acc += proj[i] * y[i];
      return acc;
    };
    Tensor probe = img;
    double max_rel = 0.0;
    const long stride = std::max(1L, probe.numel() / 24);
    for (long i = 0; i < probe.numel(); i += stride) {
      const double keep = probe[i];
      const double eps = 1e-5;
      probe[i] = keep + eps;
      const double lp = loss_at(probe);
      probe[i] = keep - eps;
      const double lm = loss_at(probe);
      probe[i] = keep;
      max_rel = std::max(max_rel, gradcheck::rel_err((lp - lm) / (2 * eps), dx[i]));
    }
    REQUIRE(max_rel < 1e-3);
  }
}

TEST_CASE("visual assembly and its gradient split agree", "[model][visual]") {
  ModelConfig cfg = tiny::config();
  SeparatorModel model(cfg);
  Tensor lip = gradcheck::random_tensor({cfg.v_l(), cfg.n_time_steps}, 60);
  Tensor face = gradcheck::random_tensor({cfg.v_f()}, 61);

  Tensor vis = model.assemble_visual(&lip, &face);
  REQUIRE(vis.shape() == std::vector<long>{cfg.v_l() + cfg.v_f(), 1, cfg.n_time_steps});

  // face rows are the embedding replicated along time
  for (long t = 0; t < cfg.n_time_steps; ++t)
    REQUIRE(vis.at({cfg.v_l() + 3, 0, t}) == face[3]);

  Tensor gvis = gradcheck::random_tensor(vis.shape(), 62);
  auto [glip, gface] = model.visual_grad_to_parts(gvis);
  REQUIRE(glip.shape() == lip.shape());
  REQUIRE(gface.shape() == face.shape());
  // tiled-face gradient sums over time
  double acc = 0.0;
  for (long t = 0; t < cfg.n_time_steps; ++t)
    acc += gvis.at({cfg.v_l() + 3, 0, t});
  REQUIRE(gface[3] == Approx(acc).margin(1e-12));
}
