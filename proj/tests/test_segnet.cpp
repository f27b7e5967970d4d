#include <filesystem>

#include "doctest.h"
#include "udaseg/metrics.hpp"
#include "udaseg/phantom.hpp"
#include "udaseg/preprocess.hpp"
#include "udaseg/segnet.hpp"

using namespace udaseg;
namespace fs = std::filesystem;
using T = Tensor<float>;

namespace {

SegNetConfig tiny3d() {
  SegNetConfig c;
  c.dim = 3;
  c.patch = {8, 24, 24};
  c.n_downsamplings = 2;
  c.base_channels = 8;
  c.channel_cap = 32;
  c.strides = {{2, 2, 2}, {2, 2, 2}};
  c.ds_heads = 2;
  return c;
}

std::vector<SegCase> phantom_cases(int n, const char* tag) {
  PhantomSpec spec;
  spec.grid = {12, 32, 32};
  spec.vs_radius_min_mm = 3.0;
  spec.vs_radius_max_mm = 3.5;
  spec.cochlea_radius_min_mm = 1.5;
  spec.cochlea_radius_max_mm = 2.2;
  spec.seed = 31;
  std::vector<SegCase> cases;
  for (int i = 0; i < n; ++i) {
    PhantomCase pc = generate_case(spec, static_cast<uint64_t>(i));
    SegCase sc;
    sc.case_id = std::string(tag) + std::to_string(i);
    sc.vol = minmax_normalize(pc.volume_a, 0.f, 1.f);
    sc.vol.case_id = sc.case_id;
    sc.lab = pc.labels;
    cases.push_back(std::move(sc));
  }
  return cases;
}

}  // namespace

TEST_CASE("default 3d plan: exact stage sizes, channel ladder, bottleneck 5x4x3") {
  SegPlan plan = plan_unet(SegNetConfig::default3d());
  REQUIRE(plan.stage_sizes.size() == 7);
  std::vector<std::array<int64_t, 3>> expect{{40, 256, 192}, {40, 128, 96}, {20, 64, 48},
                                             {10, 32, 24},   {5, 16, 12},  {5, 8, 6},
                                             {5, 4, 3}};
  for (size_t i = 0; i < 7; ++i) CHECK(plan.stage_sizes[i] == expect[i]);
  CHECK(plan.stage_channels == std::vector<int64_t>{32, 64, 128, 256, 320, 320, 320});
  CHECK(plan.bottleneck() == std::array<int64_t, 3>{5, 4, 3});
}

TEST_CASE("2d default plan stays single-slice") {
  SegPlan plan = plan_unet(SegNetConfig::default2d());
  for (const auto& s : plan.stage_sizes) CHECK(s[0] == 1);
  CHECK(plan.stage_sizes.back() == std::array<int64_t, 3>{1, 4, 3});
}

TEST_CASE("invalid stride schedule names the axis and level") {
  SegNetConfig c = tiny3d();
  c.patch = {6, 24, 24};  // 6 -> 3 -> not divisible by 2
  CHECK_THROWS_WITH_AS(validate(c), doctest::Contains("axis z"), ConfigError);
  SegNetConfig c2 = tiny3d();
  c2.strides = {{2, 2, 2}};  // wrong count
  CHECK_THROWS_AS(validate(c2), ConfigError);
}

TEST_CASE("deep supervision weights: 2^-k normalised over the active heads") {
  auto w1 = deep_supervision_weights(1);
  CHECK(w1[0] == doctest::Approx(1.0));
  auto w2 = deep_supervision_weights(2);
  CHECK(w2[0] == doctest::Approx(2.0 / 3));
  CHECK(w2[1] == doctest::Approx(1.0 / 3));
  auto w3 = deep_supervision_weights(3);
  CHECK(w3[0] == doctest::Approx(4.0 / 7));
  CHECK(w3[1] == doctest::Approx(2.0 / 7));
  CHECK(w3[2] == doctest::Approx(1.0 / 7));
  // Equal per-head losses L leave the total at L.
  double L = 0.42;
  CHECK(w3[0] * L + w3[1] * L + w3[2] * L == doctest::Approx(L));
  // Hand arithmetic: losses 0.3 / 0.6 / 0.9.
  CHECK(w3[0] * 0.3 + w3[1] * 0.6 + w3[2] * 0.9 == doctest::Approx(3.3 / 7));
}

TEST_CASE("forward emits one logits head per supervised resolution") {
  auto model = build_unet(tiny3d(), 5);
  T x({1, 1, 8, 24, 24});
  x.fill(0.3f);
  SegNet<float>::Apply ap;
  auto logits = model->forward(x, ap);
  REQUIRE(logits.size() == 2);
  CHECK(logits[0].shape() == std::vector<int64_t>{1, 3, 8, 24, 24});
  CHECK(logits[1].shape() == std::vector<int64_t>{1, 3, 4, 12, 12});
}

TEST_CASE("foreground oversampling 1.0 puts foreground in every patch") {
  auto cases = phantom_cases(2, "fg");
  Rng rng(3);
  SegBatch b = sample_training_batch(cases, {8, 16, 16}, 8, 1.0, rng);
  for (int i = 0; i < 8; ++i) {
    bool any_fg = false;
    for (int64_t v = 0; v < 8 * 16 * 16 && !any_fg; ++v)
      any_fg = b.labels[i * 8 * 16 * 16 + v] != 0;
    CHECK(any_fg);
  }
}

TEST_CASE("oversampling 0.0 gives uniform centers (chi-square, alpha=0.01)") {
  // One case with an 8x8x8 volume; bin centers into 4x4x4 cells of size 2.
  SegCase c;
  c.case_id = "u";
  c.vol.data = T({8, 8, 8});
  c.vol.spacing = {1, 1, 1};
  c.lab.data = Tensor<uint8_t>({8, 8, 8});
  std::vector<SegCase> cases{std::move(c)};
  Rng rng(11);
  std::array<int, 64> counts{};
  const int draws = 10000;
  for (int i = 0; i < draws; i += 10) {
    SegBatch b = sample_training_batch(cases, {2, 2, 2}, 10, 0.0, rng);
    for (const auto& ctr : b.centers) {
      int bin = static_cast<int>((ctr[0] / 2) * 16 + (ctr[1] / 2) * 4 + (ctr[2] / 2));
      counts[bin]++;
    }
  }
  double expected = draws / 64.0;
  double stat = 0;
  for (int i = 0; i < 64; ++i) {
    double d = counts[i] - expected;
    stat += d * d / expected;
  }
  CHECK(stat < 92.0100236);  // chi2(0.99, 63)
}

TEST_CASE("batch sampling is deterministic in the rng seed") {
  auto cases = phantom_cases(2, "det");
  Rng r1(9), r2(9);
  SegBatch b1 = sample_training_batch(cases, {4, 8, 8}, 4, 0.33, r1);
  SegBatch b2 = sample_training_batch(cases, {4, 8, 8}, 4, 0.33, r2);
  CHECK(b1.centers == b2.centers);
  for (int64_t i = 0; i < b1.patches.numel(); ++i) CHECK(b1.patches[i] == b2.patches[i]);
}

TEST_CASE("sliding window on a single-tile volume equals one forward softmax") {
  auto model = build_unet(tiny3d(), 17);
  Volume v;
  v.data = T({8, 24, 24});
  Rng rng(19);
  for (int64_t i = 0; i < v.data.numel(); ++i) v.data[i] = static_cast<float>(rng.uniform(0, 1));
  v.spacing = {1, 1, 1};
  v.case_id = "single";
  SoftPrediction pred = sliding_window_infer(*model, v);
  validate_soft_prediction(pred);

  T batch({1, 1, 8, 24, 24});
  std::copy_n(v.data.data(), v.data.numel(), batch.data());
  SegNet<float>::Apply ap;
  T probs = nn::softmax(model->forward(batch, ap)[0]);
  for (int64_t i = 0; i < probs.numel(); ++i)
    CHECK(std::abs(pred.probs[i] - probs[i]) < 1e-6f);
}

TEST_CASE("sliding window on constant input is uniform in the interior") {
  // A shallow 2-d net keeps the receptive field (~17 voxels) well below the
  // patch, so voxels farther than the receptive field from every covering
  // tile's border must all see the same constant-input response, whatever
  // mixture of Gaussian tile weights lands on them.
  SegNetConfig cfg;
  cfg.dim = 2;
  cfg.patch = {1, 96, 96};
  cfg.n_downsamplings = 1;
  cfg.base_channels = 4;
  cfg.strides = {{1, 2, 2}};
  cfg.ds_heads = 1;
  auto model = build_unet(cfg, 23);
  Volume v;
  v.data = T({1, 144, 144});
  v.data.fill(0.5f);
  v.spacing = {1, 1, 1};
  SoftPrediction pred = sliding_window_infer(*model, v);
  validate_soft_prediction(pred);
  // Tiles start at 0 and 48 per in-plane axis; [20,44] is interior to the
  // first tile only, [60,80] is interior to both.
  const int64_t nvox = 144 * 144;
  float ref = pred.probs[0 * nvox + 30 * 144 + 30];
  auto coords = [] {
    std::vector<int64_t> c;
    for (int64_t i = 20; i <= 44; i += 4) c.push_back(i);
    for (int64_t i = 60; i <= 80; i += 4) c.push_back(i);
    return c;
  }();
  for (int64_t y : coords)
    for (int64_t x : coords)
      CHECK(std::abs(pred.probs[0 * nvox + y * 144 + x] - ref) < 1e-4f);
}

TEST_CASE("overfit check: one case, reduced net, training dice >= 0.95") {
  auto cases = phantom_cases(1, "fit");
  std::vector<int> folds{1};  // no case in fold 0: trains on everything
  SegTrainConfig tc;
  tc.epochs = 50;
  tc.steps_per_epoch = 16;
  tc.batch_size = 2;
  tc.lr = 0.02;
  tc.fg_oversample = 0.8;
  tc.val_interval = 1000;
  SegNetConfig nc = tiny3d();
  SegTrainResult r = train_segmentation(cases, folds, 0, nc, tc, 41);
  SoftPrediction pred = sliding_window_infer(*r.model, cases[0].vol);
  LabelMap lab = argmax_labels(pred);
  lab.spacing = cases[0].lab.spacing;
  double dice = dice_score(lab, cases[0].lab, LabelMap::kVS);
  CHECK(dice >= 0.95);
}

TEST_CASE("training is deterministic and validates with sliding-window inference") {
  auto cases = phantom_cases(3, "d");
  std::vector<int> folds{0, 1, 1};
  SegTrainConfig tc;
  tc.epochs = 2;
  tc.steps_per_epoch = 3;
  tc.batch_size = 1;
  SegNetConfig nc = tiny3d();
  SegTrainResult r1 = train_segmentation(cases, folds, 0, nc, tc, 7);
  SegTrainResult r2 = train_segmentation(cases, folds, 0, nc, tc, 7);
  REQUIRE(r1.history.size() == r2.history.size());
  for (size_t i = 0; i < r1.history.size(); ++i) {
    CHECK(r1.history[i].train_loss == r2.history[i].train_loss);
    CHECK(r1.history[i].val_dice_vs == r2.history[i].val_dice_vs);
  }
  CHECK(r1.best_epoch >= 0);

  Checkpoint ck = segmentation_checkpoint(r1, tc, 0);
  CHECK(ck.meta.at("validation_mode") == "sliding_window");
  fs::path dir = fs::temp_directory_path() / "udaseg_segnet_test";
  fs::create_directories(dir);
  std::string path = (dir / "seg.bin").string();
  save_checkpoint(ck, path);
  auto loaded = load_seg_model(load_checkpoint(path), true);
  SoftPrediction p1 = sliding_window_infer(*loaded, cases[0].vol);
  validate_soft_prediction(p1);

  // The stored best parameters reproduce the recorded best validation Dice.
  LabelMap pred = argmax_labels(sliding_window_infer(*loaded, cases[0].vol));
  pred.spacing = cases[0].lab.spacing;
  double vs = dice_score(pred, cases[0].lab, 1);
  double co = dice_score(pred, cases[0].lab, 2);
  CHECK(0.5 * (vs + co) == doctest::Approx(r1.best_val_dice).epsilon(1e-6));
}

TEST_CASE("divergent configurations are rejected before training") {
  auto cases = phantom_cases(1, "v");
  std::vector<int> folds{1};
  SegTrainConfig tc;
  tc.epochs = 0;
  CHECK_THROWS_AS(train_segmentation(cases, folds, 0, tiny3d(), tc, 1), ConfigError);
  SegTrainConfig tc2;
  std::vector<int> empty_folds{0};  // everything in the validation fold
  CHECK_THROWS_AS(train_segmentation(cases, empty_folds, 0, tiny3d(), tc2, 1), DataError);
}
