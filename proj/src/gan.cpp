#include "udaseg/gan.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "udaseg/nifti.hpp"
#include "udaseg/nn/optim.hpp"
#include "udaseg/preprocess.hpp"

namespace udaseg {

using nn::Tape;
using T = Tensor<float>;
using Model = ConversionModel<float>;

void validate(const GeneratorConfig& g) {
  if (g.levels != 3) throw ConfigError("generator levels are fixed at 3");
  if (g.base_channels < 1) throw ConfigError("generator base_channels must be >= 1");
  if (!std::isfinite(g.residual_scale)) throw ConfigError("generator residual_scale must be finite");
}

void validate(const ConversionTrainConfig& c) {
  if (c.epochs < 1) throw ConfigError("conversion epochs must be >= 1");
  if (!(c.seg_start_epoch < c.epochs))
    throw ConfigError("seg_start_epoch must be < epochs");
  if (c.batch_size < 1) throw ConfigError("conversion batch_size must be >= 1");
  if (!(c.lr > 0)) throw ConfigError("conversion lr must be > 0");
  if (!(c.lr_decay > 0 && c.lr_decay <= 1)) throw ConfigError("lr_decay must be in (0, 1]");
  if (c.weights.adv < 0 || c.weights.cyc < 0 || c.weights.id < 0 || c.weights.seg < 0)
    throw ConfigError("loss weights must be >= 0");
}

std::unique_ptr<Model> build_conversion_model(const GeneratorConfig& g,
                                              const DiscriminatorConfig& d, uint64_t init_seed) {
  validate(g);
  return std::make_unique<Model>(g, d, LabelMap::kClasses, init_seed);
}

namespace {

constexpr auto kAtoB = ConvertDirection::AtoB;
constexpr auto kBtoA = ConvertDirection::BtoA;

// All slices of one domain, padded to a common in-plane size.
struct SlicePool {
  std::vector<T> images;             // each [H, W]
  std::vector<Tensor<uint8_t>> labels;  // empty when the domain is unlabelled
  int64_t h = 0, w = 0;
};

int64_t round_up(int64_t v, int64_t m) { return (v + m - 1) / m * m; }

SlicePool build_pool(const Dataset& ds, bool with_labels, int64_t h, int64_t w) {
  SlicePool pool;
  pool.h = h;
  pool.w = w;
  for (const auto& c : ds.cases) {
    Volume v = minmax_normalize(load_volume(c.volume_path), -1.f, 1.f);
    LabelMap l;
    if (with_labels) {
      if (!c.label_path) throw DataError("case '" + c.case_id + "': labels required for stage-1 domain A");
      l = load_labelmap(*c.label_path);
      if (!l.data.same_shape(v.data))
        throw DataError("case '" + c.case_id + "': label shape differs from volume");
    }
    for (int64_t z = 0; z < v.nz(); ++z) {
      T img({h, w});
      for (int64_t y = 0; y < v.ny(); ++y)
        for (int64_t x = 0; x < v.nx(); ++x) img[y * w + x] = v.at(z, y, x);
      pool.images.push_back(std::move(img));
      if (with_labels) {
        Tensor<uint8_t> lab({h, w});
        for (int64_t y = 0; y < l.ny(); ++y)
          for (int64_t x = 0; x < l.nx(); ++x) lab[y * w + x] = l.at(z, y, x);
        pool.labels.push_back(std::move(lab));
      }
    }
  }
  return pool;
}

T gather_batch(const SlicePool& pool, const std::vector<int64_t>& idx) {
  T batch({static_cast<int64_t>(idx.size()), 1, 1, pool.h, pool.w});
  int64_t plane = pool.h * pool.w;
  for (size_t i = 0; i < idx.size(); ++i)
    std::copy_n(pool.images[idx[i]].data(), plane, batch.data() + static_cast<int64_t>(i) * plane);
  return batch;
}

Tensor<uint8_t> gather_labels(const SlicePool& pool, const std::vector<int64_t>& idx) {
  Tensor<uint8_t> batch({static_cast<int64_t>(idx.size()), 1, pool.h, pool.w});
  int64_t plane = pool.h * pool.w;
  for (size_t i = 0; i < idx.size(); ++i)
    std::copy_n(pool.labels[idx[i]].data(), plane, batch.data() + static_cast<int64_t>(i) * plane);
  return batch;
}

}  // namespace

ConversionStepResult conversion_generator_step(Model& m, const T& a, const Tensor<uint8_t>& la,
                                               const T& b, const LossWeights& w, bool seg_a_on,
                                               bool seg_b_on) {
  using namespace nn;
  ConversionStepResult out;

  // Forward graph. The segmenter heads read the same encoder features as the
  // generator decoders.
  Model::GenApply ap_ab_a, ap_ba_fb, ap_ba_b, ap_ab_fa, ap_ab_b, ap_ba_a;
  T fake_b = m.generate(kAtoB, a, ap_ab_a);
  T rec_a = m.generate(kBtoA, fake_b, ap_ba_fb);
  T fake_a = m.generate(kBtoA, b, ap_ba_b);
  T rec_b = m.generate(kAtoB, fake_a, ap_ab_fa);
  T id_b = m.generate(kAtoB, b, ap_ab_b);
  T id_a = m.generate(kBtoA, a, ap_ba_a);

  Tape<float> seg_a_tape, seg_b_tape;
  T seg_a_logits, seg_b_logits;
  if (seg_a_on) seg_a_logits = m.segmenter(kAtoB).forward(ap_ab_a.feats, seg_a_tape)[0];
  if (seg_b_on) seg_b_logits = m.segmenter(kBtoA).forward(ap_ba_fb.feats, seg_b_tape)[0];

  Tape<float> db_tape, da_tape;
  T score_fb = m.discriminator(kAtoB).forward(fake_b, db_tape);
  T score_fa = m.discriminator(kBtoA).forward(fake_a, da_tape);

  auto adv_ab = lsgan_loss(score_fb, true);
  auto adv_ba = lsgan_loss(score_fa, true);
  auto cyc_a = l1_loss(rec_a, a);
  auto cyc_b = l1_loss(rec_b, b);
  auto kcyc_a = kspace_loss(rec_a, a);
  auto kcyc_b = kspace_loss(rec_b, b);
  auto idt_b = l1_loss(id_b, b);
  auto idt_a = l1_loss(id_a, a);
  DiceCeResult<float> sega, segb;
  if (seg_a_on) sega = dice_ce_loss(seg_a_logits, la);
  if (seg_b_on) segb = dice_ce_loss(seg_b_logits, la);

  // Backward. Discriminators route gradients only (their parameters are not
  // touched during the generator step).
  T g_fake_b = [&] {
    T g = adv_ab.grad;
    g.array() *= static_cast<float>(w.adv);
    return m.discriminator(kAtoB).backward(g, db_tape, /*accum=*/false);
  }();
  T g_fake_a = [&] {
    T g = adv_ba.grad;
    g.array() *= static_cast<float>(w.adv);
    return m.discriminator(kBtoA).backward(g, da_tape, false);
  }();

  std::vector<T> seg_a_fgrads, seg_b_fgrads;
  if (seg_a_on) {
    T g = sega.grad;
    g.array() *= static_cast<float>(w.seg);
    seg_a_fgrads = m.segmenter(kAtoB).backward({g}, seg_a_tape, true);
  }
  if (seg_b_on) {
    T g = segb.grad;
    g.array() *= static_cast<float>(w.seg);
    seg_b_fgrads = m.segmenter(kBtoA).backward({g}, seg_b_tape, true);
  }

  {  // A -> B -> A cycle
    T g_rec_a = cyc_a.grad;
    g_rec_a.array() = static_cast<float>(w.cyc) * (cyc_a.grad.array() + kcyc_a.grad.array());
    T g = m.generate_backward(kBtoA, g_rec_a, ap_ba_fb, true, seg_b_on ? &seg_b_fgrads : nullptr);
    g_fake_b.array() += g.array();
    m.generate_backward(kAtoB, g_fake_b, ap_ab_a, true, seg_a_on ? &seg_a_fgrads : nullptr);
  }
  {  // B -> A -> B cycle
    T g_rec_b = cyc_b.grad;
    g_rec_b.array() = static_cast<float>(w.cyc) * (cyc_b.grad.array() + kcyc_b.grad.array());
    T g = m.generate_backward(kAtoB, g_rec_b, ap_ab_fa, true, nullptr);
    g_fake_a.array() += g.array();
    m.generate_backward(kBtoA, g_fake_a, ap_ba_b, true, nullptr);
  }
  {  // identity terms
    T g = idt_b.grad;
    g.array() *= static_cast<float>(w.id);
    m.generate_backward(kAtoB, g, ap_ab_b, true, nullptr);
    g = idt_a.grad;
    g.array() *= static_cast<float>(w.id);
    m.generate_backward(kBtoA, g, ap_ba_a, true, nullptr);
  }

  double adv = adv_ab.value + adv_ba.value;
  double cyc = cyc_a.value + cyc_b.value + kcyc_a.value + kcyc_b.value;
  double id = idt_a.value + idt_b.value;
  double seg = (seg_a_on ? sega.total : 0.0) + (seg_b_on ? segb.total : 0.0);
  out.total = w.adv * adv + w.cyc * cyc + w.id * id + w.seg * seg;

  out.terms = {{"adv_g_ab", adv_ab.value}, {"adv_g_ba", adv_ba.value},
               {"cyc_a", cyc_a.value},     {"cyc_b", cyc_b.value},
               {"kcyc_a", kcyc_a.value},   {"kcyc_b", kcyc_b.value},
               {"id_a", idt_a.value},      {"id_b", idt_b.value}};
  if (seg_a_on) out.terms.emplace_back("seg_real_a", sega.total);
  if (seg_b_on) out.terms.emplace_back("seg_fake_b", segb.total);
  out.terms.emplace_back("adv", adv);
  out.terms.emplace_back("cyc", cyc);
  out.terms.emplace_back("id", id);
  out.terms.emplace_back("seg", seg);
  out.terms.emplace_back("total_g", out.total);
  out.fake_a = std::move(fake_a);
  out.fake_b = std::move(fake_b);
  return out;
}

double conversion_discriminator_step(Model& m, ConvertDirection fake_dir, const T& real,
                                     const T& fake, double scale) {
  using namespace nn;
  nn::Sequential<float>& d = m.discriminator(fake_dir);
  Tape<float> tr, tf;
  T sr = d.forward(real, tr);
  T sf = d.forward(fake, tf);
  auto lr = lsgan_loss(sr, true);
  auto lf = lsgan_loss(sf, false);
  T g = lf.grad;
  g.array() *= static_cast<float>(scale);
  d.backward(g, tf, true);
  g = lr.grad;
  g.array() *= static_cast<float>(scale);
  d.backward(g, tr, true);
  return scale * (lr.value + lf.value);
}

ConversionTrainResult train_conversion(const Dataset& dataset_a, const Dataset& dataset_b,
                                       const GeneratorConfig& gcfg,
                                       const DiscriminatorConfig& dcfg,
                                       const ConversionTrainConfig& cfg, uint64_t seed) {
  validate(gcfg);
  validate(cfg);
  if (gcfg.residual)
    throw ConfigError("residual generator mode is inference-only; train with residual=false");
  if (dataset_a.cases.empty() || dataset_b.cases.empty())
    throw DataError("train_conversion: both datasets must be nonempty");
  for (const auto& c : dataset_a.cases)
    if (c.label_kind != LabelKind::truth)
      throw DataError("train_conversion: domain-A case '" + c.case_id + "' lacks true labels");
  for (const auto& c : dataset_b.cases)
    if (c.label_kind != LabelKind::none)
      throw DataError("train_conversion: domain-B case '" + c.case_id + "' must be unlabelled");

  // Common padded slice geometry across both domains.
  int64_t h = 0, w = 0;
  for (const auto* ds : {&dataset_a, &dataset_b})
    for (const auto& c : ds->cases) {
      Volume v = load_volume(c.volume_path);
      h = std::max(h, v.ny());
      w = std::max(w, v.nx());
    }
  auto model = build_conversion_model(gcfg, dcfg, mix_seed(seed, 0x6d6f64));
  h = round_up(h, model->size_multiple());
  w = round_up(w, model->size_multiple());
  SlicePool pool_a = build_pool(dataset_a, true, h, w);
  SlicePool pool_b = build_pool(dataset_b, false, h, w);

  nn::Adam<float> g_opt(model->generator_params(), cfg.lr);
  nn::Adam<float> d_opt(model->discriminator_params(), cfg.lr);
  Rng sampler = Rng(seed).fork(0x73616d70);

  int64_t max_slices = std::max(pool_a.images.size(), pool_b.images.size());
  int steps = cfg.steps_per_epoch > 0
                  ? cfg.steps_per_epoch
                  : static_cast<int>((max_slices + cfg.batch_size - 1) / cfg.batch_size);

  ConversionHistory hist;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = cfg.lr * std::pow(cfg.lr_decay, epoch);
    g_opt.set_lr(lr);
    d_opt.set_lr(lr);
    bool seg_a_on = cfg.seg_on_real_a && cfg.weights.seg > 0;
    // Segmentation loss on the fake-hrT2 path starts after seg_start_epoch.
    bool seg_b_on = cfg.weights.seg > 0 && epoch >= cfg.seg_start_epoch;

    std::map<std::string, std::pair<double, int>> sums;
    for (int step = 0; step < steps; ++step) {
      std::vector<int64_t> ia(cfg.batch_size), ib(cfg.batch_size);
      for (auto& i : ia) i = sampler.uniform_int(static_cast<int64_t>(pool_a.images.size()));
      for (auto& i : ib) i = sampler.uniform_int(static_cast<int64_t>(pool_b.images.size()));
      T a = gather_batch(pool_a, ia);
      Tensor<uint8_t> la = gather_labels(pool_a, ia);
      T b = gather_batch(pool_b, ib);

      nn::zero_grads(model->generator_params());
      ConversionStepResult g =
          conversion_generator_step(*model, a, la, b, cfg.weights, seg_a_on, seg_b_on);
      if (!std::isfinite(g.total))
        throw DivergenceError("non-finite generator loss at epoch " + std::to_string(epoch) +
                              ", step " + std::to_string(step));
      g_opt.step();

      nn::zero_grads(model->discriminator_params());
      double d_b = conversion_discriminator_step(*model, kAtoB, b, g.fake_b, cfg.d_loss_scale);
      double d_a = conversion_discriminator_step(*model, kBtoA, a, g.fake_a, cfg.d_loss_scale);
      if (!std::isfinite(d_a) || !std::isfinite(d_b))
        throw DivergenceError("non-finite discriminator loss at epoch " + std::to_string(epoch) +
                              ", step " + std::to_string(step));
      d_opt.step();

      g.terms.emplace_back("d_a", d_a);
      g.terms.emplace_back("d_b", d_b);
      for (const auto& [term, value] : g.terms) {
        hist.steps.push_back({epoch, step, term, value});
        auto& s = sums[term];
        s.first += value;
        s.second += 1;
      }
    }
    for (const auto& [term, s] : sums)
      hist.epoch_means.push_back({epoch, -1, term, s.first / s.second});
    hist.epoch_means.push_back({epoch, -1, "lr", lr});
  }

  ConversionTrainResult result;
  result.model = std::move(model);
  result.history = std::move(hist);
  return result;
}

void write_loss_csv(const std::vector<LossRecord>& records, const std::string& path,
                    bool with_step_column) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << (with_step_column ? "epoch,step,term,value\n" : "epoch,term,value\n");
  char buf[64];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.value);
    if (with_step_column)
      out << r.epoch << ',' << r.step << ',' << r.term << ',' << buf << '\n';
    else
      out << r.epoch << ',' << r.term << ',' << buf << '\n';
  }
}

Checkpoint conversion_checkpoint(Model& model, const ConversionTrainConfig& cfg, int epoch) {
  Checkpoint ck;
  const auto& g = model.generator_config();
  const auto& d = model.discriminator_config();
  ck.meta["kind"] = "conversion";
  ck.meta["epoch"] = epoch;
  ck.meta["generator"] = {{"levels", g.levels},
                          {"base_channels", g.base_channels},
                          {"leaky_slope", g.leaky_slope},
                          {"residual", g.residual},
                          {"residual_scale", g.residual_scale}};
  ck.meta["discriminator"] = {{"layers", d.layers}, {"base_channels", d.base_channels}};
  ck.meta["train"] = {{"epochs", cfg.epochs},
                      {"lr", cfg.lr},
                      {"lr_decay", cfg.lr_decay},
                      {"seg_start_epoch", cfg.seg_start_epoch},
                      {"batch_size", cfg.batch_size},
                      {"weights", {cfg.weights.adv, cfg.weights.cyc, cfg.weights.id, cfg.weights.seg}}};
  ck.meta["intensity_range"] = {-1.0, 1.0};
  for (auto* p : model.all_params()) ck.tensors.emplace_back(p->name, p->value);
  return ck;
}

std::unique_ptr<Model> load_conversion_model(const Checkpoint& ck) {
  if (ck.meta.value("kind", "") != std::string("conversion"))
    throw DataError("checkpoint is not a conversion checkpoint");
  GeneratorConfig g;
  const auto& jg = ck.meta.at("generator");
  g.levels = jg.at("levels").get<int>();
  g.base_channels = jg.at("base_channels").get<int64_t>();
  g.leaky_slope = jg.at("leaky_slope").get<double>();
  g.residual = jg.at("residual").get<bool>();
  g.residual_scale = jg.at("residual_scale").get<double>();
  DiscriminatorConfig d;
  d.layers = ck.meta.at("discriminator").at("layers").get<int>();
  d.base_channels = ck.meta.at("discriminator").at("base_channels").get<int64_t>();
  auto model = std::make_unique<Model>(g, d, LabelMap::kClasses, 0);
  for (auto* p : model->all_params()) {
    const Tensor<float>* t = ck.find(p->name);
    if (!t) throw DataError("conversion checkpoint: missing tensor '" + p->name + "'");
    if (t->shape() != p->value.shape())
      throw DataError("conversion checkpoint: shape mismatch for '" + p->name + "'");
    p->value = *t;
  }
  return model;
}

Volume convert_volume(Model& model, const Volume& v, ConvertDirection dir) {
  const int64_t mult = model.size_multiple();
  const int64_t h = round_up(v.ny(), mult), w = round_up(v.nx(), mult);
  Volume out = v;
  const int64_t chunk = 8;
  for (int64_t z0 = 0; z0 < v.nz(); z0 += chunk) {
    int64_t n = std::min(chunk, v.nz() - z0);
    T batch({n, 1, 1, h, w});
    for (int64_t i = 0; i < n; ++i)
      for (int64_t y = 0; y < v.ny(); ++y)
        for (int64_t x = 0; x < v.nx(); ++x)
          batch[(i * h + y) * w + x] = v.at(z0 + i, y, x);
    Model::GenApply ap;
    T conv = model.generate(dir, batch, ap);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t y = 0; y < v.ny(); ++y)
        for (int64_t x = 0; x < v.nx(); ++x)
          out.at(z0 + i, y, x) = conv[(i * h + y) * w + x];
  }
  return out;
}

}  // namespace udaseg
