#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "udaseg/gan.hpp"
#include "udaseg/nifti.hpp"
#include "udaseg/nn/optim.hpp"
#include "udaseg/phantom.hpp"
#include "udaseg/preprocess.hpp"
#include "udaseg/rng.hpp"

using namespace udaseg;
namespace fs = std::filesystem;
using T = Tensor<float>;

namespace {

GeneratorConfig tiny_gen() {
  GeneratorConfig g;
  g.base_channels = 4;
  return g;
}

DiscriminatorConfig tiny_disc() {
  DiscriminatorConfig d;
  d.base_channels = 8;
  return d;
}

T random_batch(std::vector<int64_t> shape, uint64_t seed) {
  T t(std::move(shape));
  Rng rng(seed);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

Tensor<uint8_t> random_labels(std::vector<int64_t> shape, uint64_t seed) {
  Tensor<uint8_t> t(std::move(shape));
  Rng rng(seed);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<uint8_t>(rng.uniform_int(3));
  return t;
}

std::vector<float> snapshot(const std::vector<nn::Param<float>*>& params) {
  std::vector<float> out;
  for (auto* p : params)
    out.insert(out.end(), p->value.data(), p->value.data() + p->value.numel());
  return out;
}

// Tiny on-disk phantom cohort for the end-to-end training tests.
struct Cohort {
  fs::path dir;
  Dataset a, b;
};

Cohort make_cohort(const std::string& tag, int na, int nb) {
  Cohort c;
  c.dir = fs::temp_directory_path() / ("udaseg_gan_" + tag);
  fs::remove_all(c.dir);
  PhantomSpec spec;
  spec.grid = {12, 24, 24};
  spec.vs_radius_min_mm = 3.0;
  spec.vs_radius_max_mm = 3.5;
  spec.cochlea_radius_min_mm = 1.5;
  spec.cochlea_radius_max_mm = 2.0;
  spec.seed = 5;
  PhantomDatasets ds = generate_dataset(spec, na, nb, 1, c.dir.string());
  c.a = ds.domain_a;
  c.b = ds.domain_b;
  return c;
}

ConversionTrainConfig tiny_train() {
  ConversionTrainConfig cfg;
  cfg.epochs = 2;
  cfg.seg_start_epoch = 1;
  cfg.batch_size = 2;
  cfg.steps_per_epoch = 3;
  cfg.lr = 1e-3;
  return cfg;
}

}  // namespace

TEST_CASE("segmenter heads share the generator encoder parameters by identity") {
  auto model = build_conversion_model(tiny_gen(), tiny_disc(), 1);
  auto enc_ab = model->encoder_params(ConvertDirection::AtoB);
  auto seg_a = model->segmenter_params(ConvertDirection::AtoB);
  // Every encoder parameter object of G_AB appears (same address) in the set
  // the segmenter head trains through.
  for (auto* p : enc_ab)
    CHECK(std::find(seg_a.begin(), seg_a.end(), p) != seg_a.end());
  // And the discriminators share nothing with the generators.
  auto disc = model->discriminator_params();
  for (auto* p : model->generator_params())
    CHECK(std::find(disc.begin(), disc.end(), p) == disc.end());
}

TEST_CASE("generator, segmenter, and discriminator shape contracts") {
  auto model = build_conversion_model(tiny_gen(), tiny_disc(), 2);
  T x = random_batch({1, 1, 1, 64, 64}, 3);
  ConversionModel<float>::GenApply ap;
  T y = model->generate(ConvertDirection::AtoB, x, ap);
  CHECK(y.shape() == std::vector<int64_t>{1, 1, 1, 64, 64});
  for (int64_t i = 0; i < y.numel(); ++i) {
    CHECK(y[i] <= 1.f);
    CHECK(y[i] >= -1.f);
  }
  nn::Tape<float> st;
  T seg = model->segmenter(ConvertDirection::AtoB).forward(ap.feats, st)[0];
  CHECK(seg.shape() == std::vector<int64_t>{1, 3, 1, 64, 64});

  // PatchGAN: 64 -> 32 -> 16 -> 8 through three stride-2 blocks, then the
  // stride-1 score conv gives a 7x7 grid (never a scalar).
  nn::Tape<float> dt;
  T score = model->discriminator(ConvertDirection::AtoB).forward(x, dt);
  CHECK(score.shape() == std::vector<int64_t>{1, 1, 1, 7, 7});
}

TEST_CASE("residual generator with scale zero is the identity map") {
  GeneratorConfig g = tiny_gen();
  g.residual = true;
  g.residual_scale = 0.0;
  auto model = build_conversion_model(g, tiny_disc(), 4);
  T x = random_batch({1, 1, 1, 32, 32}, 5);
  ConversionModel<float>::GenApply ap;
  T y = model->generate(ConvertDirection::AtoB, x, ap);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);

  Volume v;
  v.data = T({3, 20, 20});
  Rng rng(6);
  for (int64_t i = 0; i < v.data.numel(); ++i) v.data[i] = static_cast<float>(rng.uniform(-1, 1));
  v.spacing = {1, 1, 1};
  Volume out = convert_volume(*model, v, ConvertDirection::AtoB);
  CHECK(out.data.shape() == v.data.shape());
  for (int64_t i = 0; i < v.data.numel(); ++i) CHECK(out.data[i] == v.data[i]);
  CHECK(out.spacing == v.spacing);
}

TEST_CASE("composite loss equals the weighted sum of the logged breakdown") {
  auto model = build_conversion_model(tiny_gen(), tiny_disc(), 7);
  T a = random_batch({2, 1, 1, 24, 24}, 8);
  T b = random_batch({2, 1, 1, 24, 24}, 9);
  Tensor<uint8_t> la = random_labels({2, 1, 24, 24}, 10);
  LossWeights w;
  nn::zero_grads(model->generator_params());
  ConversionStepResult r = conversion_generator_step(*model, a, la, b, w, true, true);
  auto term = [&](const std::string& name) {
    for (const auto& [t, v] : r.terms)
      if (t == name) return v;
    FAIL("missing term ", name);
    return 0.0;
  };
  double total = w.adv * term("adv") + w.cyc * term("cyc") + w.id * term("id") +
                 w.seg * term("seg");
  CHECK(std::abs(total - r.total) < 1e-6);
  // Group sums match their sub-terms.
  CHECK(term("adv") == doctest::Approx(term("adv_g_ab") + term("adv_g_ba")));
  CHECK(term("cyc") ==
        doctest::Approx(term("cyc_a") + term("cyc_b") + term("kcyc_a") + term("kcyc_b")));
  CHECK(term("id") == doctest::Approx(term("id_a") + term("id_b")));
  CHECK(term("seg") == doctest::Approx(term("seg_real_a") + term("seg_fake_b")));
}

TEST_CASE("gating: the fake-hrT2 segmentation term contributes zero gradient when off") {
  // Twin run, S_A disabled for the comparison: w_seg=100 with the gate closed
  // must produce bitwise-identical parameters to w_seg=0.
  T a = random_batch({2, 1, 1, 24, 24}, 21);
  T b = random_batch({2, 1, 1, 24, 24}, 22);
  Tensor<uint8_t> la = random_labels({2, 1, 24, 24}, 23);

  auto run_step = [&](double w_seg, bool seg_b_on) {
    auto model = build_conversion_model(tiny_gen(), tiny_disc(), 99);
    nn::Adam<float> opt(model->generator_params(), 1e-3);
    LossWeights w;
    w.seg = w_seg;
    nn::zero_grads(model->generator_params());
    conversion_generator_step(*model, a, la, b, w, /*seg_a_on=*/false, seg_b_on);
    opt.step();
    return snapshot(model->generator_params());
  };
  // Gate closed (epoch < seg_start_epoch): seg_b_on = false.
  auto gated = run_step(100.0, false);
  auto zeroed = run_step(0.0, false);
  REQUIRE(gated.size() == zeroed.size());
  for (size_t i = 0; i < gated.size(); ++i) CHECK(gated[i] == zeroed[i]);

  // Gate open: the term must change the trajectory.
  auto open = run_step(100.0, true);
  bool any_diff = false;
  for (size_t i = 0; i < open.size() && !any_diff; ++i) any_diff = open[i] != gated[i];
  CHECK(any_diff);
}

TEST_CASE("gradient routing between generators and discriminators") {
  auto model = build_conversion_model(tiny_gen(), tiny_disc(), 31);
  T a = random_batch({1, 1, 1, 24, 24}, 32);
  T b = random_batch({1, 1, 1, 24, 24}, 33);
  Tensor<uint8_t> la = random_labels({1, 1, 24, 24}, 34);

  // Generator step must leave every discriminator gradient at zero.
  nn::zero_grads(model->generator_params());
  nn::zero_grads(model->discriminator_params());
  ConversionStepResult g = conversion_generator_step(*model, a, la, b, LossWeights{}, true, true);
  for (auto* p : model->discriminator_params())
    for (int64_t i = 0; i < p->grad.numel(); ++i) CHECK(p->grad[i] == 0.f);

  // Discriminator step must leave generator parameters untouched.
  auto before = snapshot(model->generator_params());
  nn::zero_grads(model->discriminator_params());
  conversion_discriminator_step(*model, ConvertDirection::AtoB, b, g.fake_b, 0.5);
  conversion_discriminator_step(*model, ConvertDirection::BtoA, a, g.fake_a, 0.5);
  nn::Adam<float> d_opt(model->discriminator_params(), 1e-3);
  d_opt.step();
  auto after = snapshot(model->generator_params());
  for (size_t i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);
}

TEST_CASE("encoder mutation through the segmenter path changes generator output") {
  auto model = build_conversion_model(tiny_gen(), tiny_disc(), 41);
  T a = random_batch({1, 1, 1, 24, 24}, 42);
  Tensor<uint8_t> la = random_labels({1, 1, 24, 24}, 43);
  T b = random_batch({1, 1, 1, 24, 24}, 44);

  ConversionModel<float>::GenApply ap0;
  T out_before = model->generate(ConvertDirection::AtoB, a, ap0);

  // Only the segmentation term is active.
  LossWeights w;
  w.adv = w.cyc = w.id = 0;
  w.seg = 100;
  nn::Adam<float> opt(model->generator_params(), 1e-2);
  nn::zero_grads(model->generator_params());
  conversion_generator_step(*model, a, la, b, w, true, false);
  opt.step();

  ConversionModel<float>::GenApply ap1;
  T out_after = model->generate(ConvertDirection::AtoB, a, ap1);
  bool any_diff = false;
  for (int64_t i = 0; i < out_before.numel() && !any_diff; ++i)
    any_diff = out_before[i] != out_after[i];
  CHECK(any_diff);
}

TEST_CASE("train_conversion is deterministic and records the gating in history") {
  Cohort c = make_cohort("det", 2, 2);
  ConversionTrainConfig cfg = tiny_train();
  auto r1 = train_conversion(c.a, c.b, tiny_gen(), tiny_disc(), cfg, 77);
  auto r2 = train_conversion(c.a, c.b, tiny_gen(), tiny_disc(), cfg, 77);
  REQUIRE(r1.history.steps.size() == r2.history.steps.size());
  for (size_t i = 0; i < r1.history.steps.size(); ++i) {
    CHECK(r1.history.steps[i].term == r2.history.steps[i].term);
    CHECK(r1.history.steps[i].value == r2.history.steps[i].value);
  }
  // seg_fake_b appears only at epochs >= seg_start_epoch (= 1).
  for (const auto& rec : r1.history.steps) {
    if (rec.term == "seg_fake_b") CHECK(rec.epoch >= cfg.seg_start_epoch);
    if (rec.epoch == 0) CHECK(rec.term != "seg_fake_b");
  }
  bool found = false;
  for (const auto& rec : r1.history.steps)
    if (rec.term == "seg_fake_b" && rec.epoch == 1) found = true;
  CHECK(found);

  // Checkpoint round trip preserves conversion behaviour exactly.
  Checkpoint ck = conversion_checkpoint(*r1.model, cfg, cfg.epochs);
  fs::path ck_path = c.dir / "ck.bin";
  save_checkpoint(ck, ck_path.string());
  auto loaded = load_conversion_model(load_checkpoint(ck_path.string()));
  Volume v = minmax_normalize(load_volume(c.a.cases[0].volume_path), -1.f, 1.f);
  Volume o1 = convert_volume(*r1.model, v, ConvertDirection::AtoB);
  Volume o2 = convert_volume(*loaded, v, ConvertDirection::AtoB);
  for (int64_t i = 0; i < o1.data.numel(); ++i) CHECK(o1.data[i] == o2.data[i]);
  CHECK(o1.data.shape() == v.data.shape());
}

TEST_CASE("train_conversion validates the data regime") {
  Cohort c = make_cohort("reg", 2, 2);
  ConversionTrainConfig cfg = tiny_train();
  Dataset empty;
  empty.name = "empty";
  CHECK_THROWS_AS(train_conversion(empty, c.b, tiny_gen(), tiny_disc(), cfg, 1), DataError);
  // Domain-B cases must be unlabelled; feed the labelled A set as B.
  CHECK_THROWS_AS(train_conversion(c.a, c.a, tiny_gen(), tiny_disc(), cfg, 1), DataError);
  ConversionTrainConfig bad = cfg;
  bad.seg_start_epoch = bad.epochs;  // violates seg_start_epoch < epochs
  CHECK_THROWS_AS(train_conversion(c.a, c.b, tiny_gen(), tiny_disc(), bad, 1), ConfigError);
}
