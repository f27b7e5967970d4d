#include "udaseg/segnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "udaseg/nn/optim.hpp"
#include "udaseg/preprocess.hpp"

namespace udaseg {

using T = Tensor<float>;

SegNetConfig SegNetConfig::default3d() {
  SegNetConfig c;
  c.dim = 3;
  c.patch = {40, 256, 192};
  c.n_downsamplings = 6;
  c.strides = {{1, 2, 2}, {2, 2, 2}, {2, 2, 2}, {2, 2, 2}, {1, 2, 2}, {1, 2, 2}};
  return c;
}

SegNetConfig SegNetConfig::default2d() {
  SegNetConfig c;
  c.dim = 2;
  c.patch = {1, 256, 192};
  c.n_downsamplings = 6;
  c.strides.assign(6, {1, 2, 2});
  return c;
}

void validate(const SegNetConfig& c) {
  if (c.dim != 2 && c.dim != 3) throw ConfigError("segmentation net dim must be 2 or 3");
  if (c.dim == 2 && c.patch[0] != 1) throw ConfigError("2d net patch must have z-size 1");
  for (int a = 0; a < 3; ++a)
    if (c.patch[a] < 1) throw ConfigError("patch sizes must be >= 1");
  if (c.n_downsamplings < 1) throw ConfigError("n_downsamplings must be >= 1");
  if (c.base_channels < 1 || c.channel_cap < c.base_channels)
    throw ConfigError("invalid channel configuration");
  if (c.strides.size() != static_cast<size_t>(c.n_downsamplings))
    throw ConfigError("stride schedule must list one stride triple per downsampling");
  if (c.dim == 2)
    for (const auto& s : c.strides)
      if (s[0] != 1) throw ConfigError("2d net strides must keep z at 1");
  if (c.ds_heads < 1) throw ConfigError("ds_heads must be >= 1");
  if (c.n_classes < 2) throw ConfigError("n_classes must be >= 2");
  plan_unet(c);  // throws on an inconsistent schedule
}

void validate(const SegTrainConfig& c) {
  if (c.epochs < 1) throw ConfigError("segmentation epochs must be >= 1");
  if (!(c.lr > 0)) throw ConfigError("segmentation lr must be > 0");
  if (c.batch_size < 1 || c.steps_per_epoch < 1)
    throw ConfigError("batch_size and steps_per_epoch must be >= 1");
  if (c.fg_oversample < 0 || c.fg_oversample > 1)
    throw ConfigError("fg_oversample must be in [0, 1]");
  if (c.val_interval < 1) throw ConfigError("val_interval must be >= 1");
}

SegPlan plan_unet(const SegNetConfig& cfg) {
  nn::UNetArch arch = SegNet<float>::make_arch(cfg);
  SegPlan plan;
  auto sizes = nn::propagate_shapes(arch, {cfg.patch[0], cfg.patch[1], cfg.patch[2]});
  for (const auto& s : sizes) plan.stage_sizes.push_back({s[0], s[1], s[2]});
  plan.stage_channels = arch.channels;
  return plan;
}

std::string SegPlan::describe() const {
  std::ostringstream os;
  os << "stage  size(z,y,x)      channels\n";
  for (size_t i = 0; i < stage_sizes.size(); ++i) {
    os << "  " << i << "    " << stage_sizes[i][0] << "x" << stage_sizes[i][1] << "x"
       << stage_sizes[i][2] << "  \t" << stage_channels[i] << "\n";
  }
  auto b = bottleneck();
  os << "bottleneck: " << b[0] << "x" << b[1] << "x" << b[2] << "\n";
  return os.str();
}

std::unique_ptr<SegNet<float>> build_unet(const SegNetConfig& cfg, uint64_t init_seed) {
  validate(cfg);
  return std::make_unique<SegNet<float>>(cfg, init_seed);
}

std::vector<double> deep_supervision_weights(size_t n_heads) {
  std::vector<double> w(n_heads);
  double sum = 0;
  for (size_t k = 0; k < n_heads; ++k) {
    w[k] = std::pow(2.0, -static_cast<double>(k));
    sum += w[k];
  }
  for (auto& v : w) v /= sum;
  return w;
}

void validate_soft_prediction(const SoftPrediction& p) {
  if (p.probs.ndim() != 4) throw DataError("soft prediction must have 4 axes");
  const int64_t k = p.probs.dim(0);
  const int64_t n = p.probs.numel() / k;
  for (int64_t v = 0; v < n; ++v) {
    float s = 0;
    for (int64_t c = 0; c < k; ++c) {
      float pv = p.probs[c * n + v];
      if (pv < -1e-5f || pv > 1.f + 1e-5f) throw DataError("probability outside [0,1]");
      s += pv;
    }
    if (std::abs(s - 1.f) > 1e-4f)
      throw DataError("probabilities do not sum to 1 (sum=" + std::to_string(s) + ")");
  }
}

LabelMap argmax_labels(const SoftPrediction& p) {
  const int64_t k = p.probs.dim(0);
  const int64_t n = p.probs.numel() / k;
  LabelMap l;
  l.data = Tensor<uint8_t>({p.probs.dim(1), p.probs.dim(2), p.probs.dim(3)});
  l.spacing = p.spacing;
  l.affine = p.affine;
  l.case_id = p.case_id;
  for (int64_t v = 0; v < n; ++v) {
    int best = 0;
    float bp = p.probs[v];
    for (int64_t c = 1; c < k; ++c)
      if (p.probs[c * n + v] > bp) {  // strict: ties stay with the lower id
        bp = p.probs[c * n + v];
        best = static_cast<int>(c);
      }
    l.data[v] = static_cast<uint8_t>(best);
  }
  return l;
}

SegBatch sample_training_batch(const std::vector<SegCase>& cases,
                               const std::array<int64_t, 3>& patch, int batch_size,
                               double fg_oversample, Rng& rng) {
  if (cases.empty()) throw DataError("sample_training_batch: no cases");
  SegBatch batch;
  batch.patches = T({batch_size, 1, patch[0], patch[1], patch[2]});
  batch.labels = Tensor<uint8_t>({batch_size, patch[0], patch[1], patch[2]});
  int64_t pvox = patch[0] * patch[1] * patch[2];
  for (int b = 0; b < batch_size; ++b) {
    const SegCase& c = cases[rng.uniform_int(static_cast<int64_t>(cases.size()))];
    std::array<int64_t, 3> center;
    bool use_fg = rng.uniform() < fg_oversample;
    // Collect foreground lazily per case would be cheaper, but volumes are
    // desk-scale; scan on demand only when oversampling fires.
    int64_t n = c.lab.data.numel();
    if (use_fg) {
      int64_t fg_count = 0;
      for (int64_t i = 0; i < n; ++i)
        if (c.lab.data[i] != 0) ++fg_count;
      if (fg_count > 0) {
        int64_t pick = rng.uniform_int(fg_count);
        int64_t idx = -1;
        for (int64_t i = 0; i < n; ++i)
          if (c.lab.data[i] != 0 && pick-- == 0) {
            idx = i;
            break;
          }
        center = {idx / (c.lab.ny() * c.lab.nx()), (idx / c.lab.nx()) % c.lab.ny(),
                  idx % c.lab.nx()};
      } else {
        use_fg = false;  // empty foreground falls back to uniform
      }
    }
    if (!use_fg) {
      center = {rng.uniform_int(c.vol.nz()), rng.uniform_int(c.vol.ny()),
                rng.uniform_int(c.vol.nx())};
    }
    T p = extract_patch(c.vol.data, center, patch);
    Tensor<uint8_t> l = extract_patch(c.lab.data, center, patch);
    std::copy_n(p.data(), pvox, batch.patches.data() + b * pvox);
    std::copy_n(l.data(), pvox, batch.labels.data() + b * pvox);
    batch.centers.push_back(center);
  }
  return batch;
}

namespace {

// Nearest-neighbour label downsampling by integer stride (index mapping
// i -> i * stride), matching each deep-supervision head's resolution.
Tensor<uint8_t> downsample_labels(const Tensor<uint8_t>& lab, const std::array<int64_t, 3>& cum) {
  const int64_t n = lab.dim(0);
  std::array<int64_t, 3> in{lab.dim(1), lab.dim(2), lab.dim(3)};
  std::array<int64_t, 3> out{in[0] / cum[0], in[1] / cum[1], in[2] / cum[2]};
  Tensor<uint8_t> d({n, out[0], out[1], out[2]});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t z = 0; z < out[0]; ++z)
      for (int64_t y = 0; y < out[1]; ++y)
        for (int64_t x = 0; x < out[2]; ++x)
          d[((i * out[0] + z) * out[1] + y) * out[2] + x] =
              lab[((i * in[0] + z * cum[0]) * in[1] + y * cum[1]) * in[2] + x * cum[2]];
  return d;
}

struct DsLoss {
  double total = 0, dice = 0, ce = 0;  // dice/ce of the full-resolution head
  std::vector<T> grads;
};

DsLoss deep_supervision_loss(const std::vector<T>& logits, const Tensor<uint8_t>& labels,
                             const std::vector<std::array<int64_t, 3>>& strides) {
  DsLoss out;
  auto w = deep_supervision_weights(logits.size());
  std::array<int64_t, 3> cum{1, 1, 1};
  for (size_t h = 0; h < logits.size(); ++h) {
    if (h > 0)
      for (int a = 0; a < 3; ++a) cum[a] *= strides[h - 1][a];
    Tensor<uint8_t> lab = h == 0 ? labels : downsample_labels(labels, cum);
    auto r = nn::dice_ce_loss(logits[h], lab);
    if (h == 0) {
      out.dice = r.dice;
      out.ce = r.ce;
    }
    out.total += w[h] * r.total;
    r.grad.array() *= static_cast<float>(w[h]);
    out.grads.push_back(std::move(r.grad));
  }
  return out;
}

struct TileGrid {
  std::vector<int64_t> starts[3];
};

std::vector<int64_t> tile_starts(int64_t size, int64_t patch) {
  if (size <= patch) return {0};
  int64_t step = std::max<int64_t>(1, patch / 2);
  int64_t n = (size - patch + step - 1) / step + 1;
  std::vector<int64_t> starts;
  for (int64_t i = 0; i < n; ++i) {
    int64_t s = n == 1 ? 0
                       : static_cast<int64_t>(std::llround(static_cast<double>(i) *
                                                           (size - patch) / (n - 1)));
    if (starts.empty() || s != starts.back()) starts.push_back(s);
  }
  return starts;
}

std::vector<float> gaussian_window(const std::array<int64_t, 3>& patch) {
  std::array<std::vector<float>, 3> axis;
  for (int a = 0; a < 3; ++a) {
    axis[a].resize(static_cast<size_t>(patch[a]));
    double sigma = std::max(1e-3, static_cast<double>(patch[a]) / 8.0);
    double c = (patch[a] - 1) / 2.0;
    for (int64_t i = 0; i < patch[a]; ++i)
      axis[a][i] = static_cast<float>(std::exp(-0.5 * std::pow((i - c) / sigma, 2)));
  }
  std::vector<float> w(static_cast<size_t>(patch[0] * patch[1] * patch[2]));
  int64_t idx = 0;
  for (int64_t z = 0; z < patch[0]; ++z)
    for (int64_t y = 0; y < patch[1]; ++y)
      for (int64_t x = 0; x < patch[2]; ++x)
        w[idx++] = std::max(1e-8f, axis[0][z] * axis[1][y] * axis[2][x]);
  return w;
}

}  // namespace

SoftPrediction sliding_window_infer(SegNet<float>& model, const Volume& v) {
  const auto& cfg = model.config();
  const std::array<int64_t, 3> patch = cfg.patch;
  const int64_t k = cfg.n_classes;
  std::array<int64_t, 3> vs{v.nz(), v.ny(), v.nx()};
  std::array<int64_t, 3> padded;
  for (int a = 0; a < 3; ++a) padded[a] = std::max(vs[a], patch[a]);

  T pad_vol({padded[0], padded[1], padded[2]});
  for (int64_t z = 0; z < vs[0]; ++z)
    for (int64_t y = 0; y < vs[1]; ++y)
      for (int64_t x = 0; x < vs[2]; ++x)
        pad_vol[(z * padded[1] + y) * padded[2] + x] = v.at(z, y, x);

  std::array<std::vector<int64_t>, 3> starts;
  for (int a = 0; a < 3; ++a) starts[a] = tile_starts(padded[a], patch[a]);
  std::vector<float> window = gaussian_window(patch);

  T acc({k, padded[0], padded[1], padded[2]});
  T wsum({padded[0], padded[1], padded[2]});
  const int64_t pvox = patch[0] * patch[1] * patch[2];

  std::vector<std::array<int64_t, 3>> tiles;
  for (int64_t sz : starts[0])
    for (int64_t sy : starts[1])
      for (int64_t sx : starts[2]) tiles.push_back({sz, sy, sx});

  const int64_t chunk = 4;
  for (size_t t0 = 0; t0 < tiles.size(); t0 += chunk) {
    int64_t n = std::min<int64_t>(chunk, static_cast<int64_t>(tiles.size() - t0));
    T batch({n, 1, patch[0], patch[1], patch[2]});
    for (int64_t i = 0; i < n; ++i) {
      const auto& s = tiles[t0 + i];
      for (int64_t z = 0; z < patch[0]; ++z)
        for (int64_t y = 0; y < patch[1]; ++y)
          std::copy_n(
              pad_vol.data() + ((s[0] + z) * padded[1] + (s[1] + y)) * padded[2] + s[2], patch[2],
              batch.data() + ((i * patch[0] + z) * patch[1] + y) * patch[2]);
    }
    typename SegNet<float>::Apply ap;
    T logits = model.forward(batch, ap)[0];
    T probs = nn::softmax(logits);
    for (int64_t i = 0; i < n; ++i) {
      const auto& s = tiles[t0 + i];
      for (int64_t c = 0; c < k; ++c)
        for (int64_t z = 0; z < patch[0]; ++z)
          for (int64_t y = 0; y < patch[1]; ++y)
            for (int64_t x = 0; x < patch[2]; ++x) {
              int64_t pi = ((z * patch[1]) + y) * patch[2] + x;
              acc[((c * padded[0] + s[0] + z) * padded[1] + s[1] + y) * padded[2] + s[2] + x] +=
                  probs[((i * k + c) * patch[0] * patch[1] * patch[2]) + pi] * window[pi];
            }
      for (int64_t z = 0; z < patch[0]; ++z)
        for (int64_t y = 0; y < patch[1]; ++y)
          for (int64_t x = 0; x < patch[2]; ++x) {
            int64_t pi = ((z * patch[1]) + y) * patch[2] + x;
            wsum[((s[0] + z) * padded[1] + s[1] + y) * padded[2] + s[2] + x] += window[pi];
          }
    }
  }

  SoftPrediction pred;
  pred.probs = T({k, vs[0], vs[1], vs[2]});
  pred.case_id = v.case_id;
  pred.spacing = v.spacing;
  pred.affine = v.affine;
  const int64_t nvox = vs[0] * vs[1] * vs[2];
  for (int64_t z = 0; z < vs[0]; ++z)
    for (int64_t y = 0; y < vs[1]; ++y)
      for (int64_t x = 0; x < vs[2]; ++x) {
        int64_t src = (z * padded[1] + y) * padded[2] + x;
        int64_t dst = (z * vs[1] + y) * vs[2] + x;
        float total = 0;
        for (int64_t c = 0; c < k; ++c) {
          float p = acc[c * padded[0] * padded[1] * padded[2] + src] / wsum[src];
          pred.probs[c * nvox + dst] = p;
          total += p;
        }
        for (int64_t c = 0; c < k; ++c) pred.probs[c * nvox + dst] /= total;
      }
  return pred;
}

namespace {

// Validation Dice on held-out cases, always through sliding-window inference
// (never patch-wise); the flag records that contract in the checkpoint.
std::pair<double, double> validation_dice(SegNet<float>& model,
                                          const std::vector<const SegCase*>& val) {
  double dice_vs = 0, dice_co = 0;
  for (const SegCase* c : val) {
    SoftPrediction p = sliding_window_infer(model, c->vol);
    LabelMap pred = argmax_labels(p);
    for (int cls = 1; cls <= 2; ++cls) {
      int64_t inter = 0, np = 0, ng = 0;
      for (int64_t i = 0; i < pred.data.numel(); ++i) {
        bool a = pred.data[i] == cls, b = c->lab.data[i] == cls;
        inter += (a && b);
        np += a;
        ng += b;
      }
      double d = (np + ng) == 0 ? 1.0 : 2.0 * inter / static_cast<double>(np + ng);
      (cls == 1 ? dice_vs : dice_co) += d;
    }
  }
  return {dice_vs / val.size(), dice_co / val.size()};
}

}  // namespace

SegTrainResult train_segmentation(const std::vector<SegCase>& cases,
                                  const std::vector<int>& fold_of_case, int fold,
                                  const SegNetConfig& netcfg, const SegTrainConfig& cfg,
                                  uint64_t seed) {
  validate(netcfg);
  validate(cfg);
  if (cases.size() != fold_of_case.size())
    throw DataError("train_segmentation: fold assignment size mismatch");
  std::vector<SegCase> train;
  std::vector<const SegCase*> val;
  for (size_t i = 0; i < cases.size(); ++i) {
    if (fold_of_case[i] == fold)
      val.push_back(&cases[i]);
    else
      train.push_back(cases[i]);
  }
  if (train.empty()) throw DataError("train_segmentation: empty training split for fold " +
                                     std::to_string(fold));

  auto model = build_unet(netcfg, mix_seed(seed, 0x736567));
  nn::SgdMomentum<float> opt(model->params(), cfg.lr, cfg.momentum, cfg.nesterov);
  Rng rng = Rng(seed).fork(0x626174);

  std::vector<std::array<int64_t, 3>> strides(netcfg.strides.begin(), netcfg.strides.end());
  SegTrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.set_lr(nn::poly_lr(cfg.lr, epoch, cfg.epochs, cfg.poly_power));
    double loss_sum = 0;
    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      SegBatch batch =
          sample_training_batch(train, netcfg.patch, cfg.batch_size, cfg.fg_oversample, rng);
      nn::zero_grads(model->params());
      typename SegNet<float>::Apply ap;
      std::vector<T> logits = model->forward(batch.patches, ap);
      double loss;
      if (cfg.deep_supervision && logits.size() > 1) {
        DsLoss dl = deep_supervision_loss(logits, batch.labels, strides);
        model->backward(dl.grads, ap);
        loss = dl.total;
      } else {
        auto r = nn::dice_ce_loss(logits[0], batch.labels);
        std::vector<T> grads(logits.size());
        grads[0] = std::move(r.grad);
        model->backward(grads, ap);
        loss = r.total;
      }
      if (!std::isfinite(loss))
        throw DivergenceError("non-finite segmentation loss at epoch " + std::to_string(epoch) +
                              ", step " + std::to_string(step) + ", fold " + std::to_string(fold));
      opt.step();
      loss_sum += loss;
    }

    SegEpochRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / cfg.steps_per_epoch;
    bool do_val =
        !val.empty() && (epoch % cfg.val_interval == 0 || epoch == cfg.epochs - 1);
    if (do_val) {
      auto [vs, co] = validation_dice(*model, val);
      row.has_val = true;
      row.val_dice_vs = vs;
      row.val_dice_cochlea = co;
      double mean = 0.5 * (vs + co);
      if (mean > result.best_val_dice) {
        result.best_val_dice = mean;
        result.best_epoch = epoch;
        result.best_params.clear();
        for (auto* p : model->params()) result.best_params.emplace_back(p->name, p->value);
      }
    }
    result.history.push_back(row);
  }
  if (result.best_epoch < 0) {  // no validation cases: final weights are best
    result.best_epoch = cfg.epochs - 1;
    for (auto* p : model->params()) result.best_params.emplace_back(p->name, p->value);
  }
  result.model = std::move(model);
  return result;
}

void write_seg_history_csv(const std::vector<SegEpochRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "epoch,train_loss,val_dice_vs,val_dice_cochlea\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.train_loss);
    out << r.epoch << ',' << buf;
    if (r.has_val) {
      std::snprintf(buf, sizeof(buf), "%.17g", r.val_dice_vs);
      out << ',' << buf;
      std::snprintf(buf, sizeof(buf), "%.17g", r.val_dice_cochlea);
      out << ',' << buf << '\n';
    } else {
      out << ",,\n";
    }
  }
}

Checkpoint segmentation_checkpoint(SegTrainResult& result, const SegTrainConfig& cfg, int fold) {
  Checkpoint ck;
  const SegNetConfig& nc = result.model->config();
  ck.meta["kind"] = "segmentation";
  ck.meta["fold"] = fold;
  ck.meta["best_epoch"] = result.best_epoch;
  ck.meta["best_val_dice"] = result.best_val_dice;
  ck.meta["validation_mode"] = "sliding_window";
  ck.meta["net"] = {{"dim", nc.dim},
                    {"patch", nc.patch},
                    {"n_downsamplings", nc.n_downsamplings},
                    {"base_channels", nc.base_channels},
                    {"channel_cap", nc.channel_cap},
                    {"strides", nc.strides},
                    {"leaky_slope", nc.leaky_slope},
                    {"ds_heads", nc.ds_heads},
                    {"n_classes", nc.n_classes}};
  ck.meta["train"] = {{"epochs", cfg.epochs},       {"lr", cfg.lr},
                      {"momentum", cfg.momentum},   {"nesterov", cfg.nesterov},
                      {"poly_power", cfg.poly_power}, {"batch_size", cfg.batch_size},
                      {"steps_per_epoch", cfg.steps_per_epoch},
                      {"fg_oversample", cfg.fg_oversample}};
  for (const auto& [name, t] : result.best_params) ck.tensors.emplace_back("best/" + name, t);
  for (auto* p : result.model->params()) ck.tensors.emplace_back("final/" + p->name, p->value);
  return ck;
}

SegNetConfig seg_config_from_checkpoint(const Checkpoint& ck) {
  const auto& jn = ck.meta.at("net");
  SegNetConfig nc;
  nc.dim = jn.at("dim").get<int>();
  nc.patch = jn.at("patch").get<std::array<int64_t, 3>>();
  nc.n_downsamplings = jn.at("n_downsamplings").get<int>();
  nc.base_channels = jn.at("base_channels").get<int64_t>();
  nc.channel_cap = jn.at("channel_cap").get<int64_t>();
  nc.strides = jn.at("strides").get<std::vector<std::array<int64_t, 3>>>();
  nc.leaky_slope = jn.at("leaky_slope").get<double>();
  nc.ds_heads = jn.at("ds_heads").get<int>();
  nc.n_classes = jn.at("n_classes").get<int>();
  return nc;
}

std::unique_ptr<SegNet<float>> load_seg_model(const Checkpoint& ck, bool use_best) {
  if (ck.meta.value("kind", "") != std::string("segmentation"))
    throw DataError("checkpoint is not a segmentation checkpoint");
  auto model = std::make_unique<SegNet<float>>(seg_config_from_checkpoint(ck), 0);
  std::string prefix = use_best ? "best/" : "final/";
  for (auto* p : model->params()) {
    const Tensor<float>* t = ck.find(prefix + p->name);
    if (!t) throw DataError("segmentation checkpoint: missing tensor '" + prefix + p->name + "'");
    if (t->shape() != p->value.shape())
      throw DataError("segmentation checkpoint: shape mismatch for '" + p->name + "'");
    p->value = *t;
  }
  return model;
}

}  // namespace udaseg
