#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "udaseg/checkpoint.hpp"
#include "udaseg/manifest.hpp"
#include "udaseg/nn/losses.hpp"
#include "udaseg/nn/unet.hpp"
#include "udaseg/volume.hpp"

namespace udaseg {

// 3-level U-Net generator; output is tanh over the [-1, 1] normalised range.
// In residual mode the output is x + residual_scale * tanh(f(x)), which gives
// an exact identity mapping at residual_scale = 0 (inference-only variant).
struct GeneratorConfig {
  int levels = 3;
  int64_t base_channels = 32;
  double leaky_slope = 0.2;
  bool residual = false;
  double residual_scale = 1.0;
};

// PatchGAN: `layers` stride-2 conv blocks plus a final score conv; the output
// is a 2-d grid of patch scores, never a scalar.
struct DiscriminatorConfig {
  int layers = 3;
  int64_t base_channels = 64;
};

// Composite-loss weights; defaults are the fixed 1:10:5:100 weighting.
struct LossWeights {
  double adv = 1.0;
  double cyc = 10.0;
  double id = 5.0;
  double seg = 100.0;
};

struct ConversionTrainConfig {
  int epochs = 50;
  double lr = 1e-4;
  double lr_decay = 0.95;  // multiplicative, per epoch
  int seg_start_epoch = 5;
  int batch_size = 4;
  int steps_per_epoch = 0;  // 0: one pass over the larger slice pool
  bool seg_on_real_a = true;
  double d_loss_scale = 0.5;
  LossWeights weights;
};

void validate(const GeneratorConfig& g);
void validate(const ConversionTrainConfig& c);

enum class ConvertDirection { AtoB, BtoA };

// CycleGAN with segmenter heads sharing the generator encoders. The heads
// consume the same encoder feature maps (and hence the same parameter
// objects) as the generator decoders.
template <typename S>
class ConversionModel {
 public:
  ConversionModel(const GeneratorConfig& gcfg, const DiscriminatorConfig& dcfg, int n_classes,
                  uint64_t init_seed)
      : gcfg_(gcfg),
        dcfg_(dcfg),
        enc_ab_("g_ab.enc", gen_arch(gcfg)),
        enc_ba_("g_ba.enc", gen_arch(gcfg)),
        dec_ab_("g_ab.dec", gen_arch(gcfg), 1, 1, /*final_tanh=*/true),
        dec_ba_("g_ba.dec", gen_arch(gcfg), 1, 1, true),
        seg_a_("seg_a", gen_arch(gcfg), n_classes, 1, false),
        seg_b_("seg_b", gen_arch(gcfg), n_classes, 1, false) {
    build_discriminator(d_a_, "d_a", dcfg);
    build_discriminator(d_b_, "d_b", dcfg);
    Rng rng(init_seed);
    enc_ab_.init(rng);
    dec_ab_.init(rng);
    enc_ba_.init(rng);
    dec_ba_.init(rng);
    seg_a_.init(rng);
    seg_b_.init(rng);
    d_a_.init(rng);
    d_b_.init(rng);
  }

  static nn::UNetArch gen_arch(const GeneratorConfig& g) {
    nn::UNetArch a;
    a.in_channels = 1;
    a.kernel = {1, 3, 3};
    a.leaky_slope = g.leaky_slope;
    for (int i = 0; i < g.levels; ++i) a.channels.push_back(g.base_channels << i);
    for (int i = 0; i + 1 < g.levels; ++i) a.strides.push_back({1, 2, 2});
    return a;
  }

  // Slice sizes must be divisible by this for the generators to round-trip.
  int64_t size_multiple() const { return int64_t(1) << (gcfg_.levels - 1); }

  const GeneratorConfig& generator_config() const { return gcfg_; }
  const DiscriminatorConfig& discriminator_config() const { return dcfg_; }

  nn::UNetEncoder<S>& encoder(ConvertDirection d) {
    return d == ConvertDirection::AtoB ? enc_ab_ : enc_ba_;
  }
  nn::UNetDecoder<S>& decoder(ConvertDirection d) {
    return d == ConvertDirection::AtoB ? dec_ab_ : dec_ba_;
  }
  nn::UNetDecoder<S>& segmenter(ConvertDirection d) {
    return d == ConvertDirection::AtoB ? seg_a_ : seg_b_;
  }
  nn::Sequential<S>& discriminator(ConvertDirection d) {
    // D_B judges domain-B images (outputs of A->B), and vice versa.
    return d == ConvertDirection::AtoB ? d_b_ : d_a_;
  }

  struct GenApply {
    nn::Tape<S> enc_tape, dec_tape;
    std::vector<Tensor<S>> feats;
    Tensor<S> input;
  };

  Tensor<S> generate(ConvertDirection d, const Tensor<S>& x, GenApply& ap) {
    ap.input = x;
    ap.feats = encoder(d).forward(x, ap.enc_tape);
    Tensor<S> y = decoder(d).forward(ap.feats, ap.dec_tape)[0];
    if (gcfg_.residual) {
      Tensor<S> out = ap.input;
      out.array() += static_cast<S>(gcfg_.residual_scale) * y.array();
      return out;
    }
    return y;
  }

  // extra_feat_grads: additional gradient w.r.t. the shared encoder features
  // (from a segmenter head applied to the same application).
  Tensor<S> generate_backward(ConvertDirection d, const Tensor<S>& gy, GenApply& ap, bool accum,
                              std::vector<Tensor<S>>* extra_feat_grads = nullptr) {
    Tensor<S> gl = gy;
    if (gcfg_.residual) gl.array() *= static_cast<S>(gcfg_.residual_scale);
    auto gfeats = decoder(d).backward({gl}, ap.dec_tape, accum);
    if (extra_feat_grads)
      for (size_t i = 0; i < gfeats.size(); ++i)
        if ((*extra_feat_grads)[i].numel() > 0)
          gfeats[i].array() += (*extra_feat_grads)[i].array();
    Tensor<S> gx = encoder(d).backward(std::move(gfeats), ap.enc_tape, accum);
    if (gcfg_.residual) gx.array() += gy.array();
    return gx;
  }

  std::vector<nn::Param<S>*> generator_params() {
    std::vector<nn::Param<S>*> p;
    enc_ab_.collect_params(p);
    dec_ab_.collect_params(p);
    enc_ba_.collect_params(p);
    dec_ba_.collect_params(p);
    seg_a_.collect_params(p);
    seg_b_.collect_params(p);
    return p;
  }

  std::vector<nn::Param<S>*> discriminator_params() {
    std::vector<nn::Param<S>*> p;
    d_a_.collect_params(p);
    d_b_.collect_params(p);
    return p;
  }

  std::vector<nn::Param<S>*> encoder_params(ConvertDirection d) {
    std::vector<nn::Param<S>*> p;
    encoder(d).collect_params(p);
    return p;
  }

  // Parameter set a segmenter head's training touches: its own decoder plus
  // the shared encoder (by identity, not by copy).
  std::vector<nn::Param<S>*> segmenter_params(ConvertDirection d) {
    std::vector<nn::Param<S>*> p;
    encoder(d).collect_params(p);
    segmenter(d).collect_params(p);
    return p;
  }

  std::vector<nn::Param<S>*> all_params() {
    auto p = generator_params();
    auto q = discriminator_params();
    p.insert(p.end(), q.begin(), q.end());
    return p;
  }

 private:
  void build_discriminator(nn::Sequential<S>& d, const std::string& name,
                           const DiscriminatorConfig& cfg) {
    using namespace nn;
    Triple k{1, 4, 4}, s2{1, 2, 2}, s1{1, 1, 1}, pad{0, 1, 1};
    int64_t prev = 1;
    for (int i = 0; i < cfg.layers; ++i) {
      int64_t c = cfg.base_channels << i;
      d.template add<Conv<S>>(name + ".conv" + std::to_string(i), prev, c, k, s2, pad);
      if (i > 0) d.template add<InstanceNorm<S>>(name + ".norm" + std::to_string(i), c);
      d.template add<LeakyReLU<S>>(0.2);
      prev = c;
    }
    d.template add<Conv<S>>(name + ".score", prev, 1, k, s1, pad);
  }

  GeneratorConfig gcfg_;
  DiscriminatorConfig dcfg_;
  nn::UNetEncoder<S> enc_ab_, enc_ba_;
  nn::UNetDecoder<S> dec_ab_, dec_ba_;
  nn::UNetDecoder<S> seg_a_, seg_b_;
  nn::Sequential<S> d_a_, d_b_;
};

std::unique_ptr<ConversionModel<float>> build_conversion_model(const GeneratorConfig& g,
                                                               const DiscriminatorConfig& d,
                                                               uint64_t init_seed);

// One composite-loss step over a slice batch: forward through both cycles,
// the identity paths, the discriminators (gradient routing only) and the
// segmenter heads; accumulates generator+segmenter gradients. The caller owns
// zeroing gradients and stepping the optimizer.
struct ConversionStepResult {
  std::vector<std::pair<std::string, double>> terms;
  double total = 0;
  Tensor<float> fake_a, fake_b;  // constants for the discriminator step
};

ConversionStepResult conversion_generator_step(ConversionModel<float>& m,
                                               const Tensor<float>& real_a,
                                               const Tensor<uint8_t>& labels_a,
                                               const Tensor<float>& real_b, const LossWeights& w,
                                               bool seg_a_on, bool seg_b_on);

// Real-vs-fake update for one discriminator; fake enters as a constant.
double conversion_discriminator_step(ConversionModel<float>& m, ConvertDirection fake_dir,
                                     const Tensor<float>& real, const Tensor<float>& fake,
                                     double scale);

// One logged loss-term value.
struct LossRecord {
  int epoch = 0;
  int step = -1;  // -1 for per-epoch means
  std::string term;
  double value = 0;
};

struct ConversionHistory {
  std::vector<LossRecord> epoch_means;
  std::vector<LossRecord> steps;
};

void write_loss_csv(const std::vector<LossRecord>& records, const std::string& path,
                    bool with_step_column);

struct ConversionTrainResult {
  std::unique_ptr<ConversionModel<float>> model;
  ConversionHistory history;
};

// Stage 1 training. dataset_a must be fully labelled, dataset_b unlabelled.
ConversionTrainResult train_conversion(const Dataset& dataset_a, const Dataset& dataset_b,
                                       const GeneratorConfig& gcfg,
                                       const DiscriminatorConfig& dcfg,
                                       const ConversionTrainConfig& cfg, uint64_t seed);

Checkpoint conversion_checkpoint(ConversionModel<float>& model, const ConversionTrainConfig& cfg,
                                 int epoch);
std::unique_ptr<ConversionModel<float>> load_conversion_model(const Checkpoint& ck);

// Slice-wise conversion of a [-1, 1] normalised volume; spacing and affine
// are copied from the input.
Volume convert_volume(ConversionModel<float>& model, const Volume& v, ConvertDirection dir);

}  // namespace udaseg
