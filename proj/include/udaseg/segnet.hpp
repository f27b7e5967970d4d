#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "udaseg/checkpoint.hpp"
#include "udaseg/manifest.hpp"
#include "udaseg/nn/losses.hpp"
#include "udaseg/nn/unet.hpp"
#include "udaseg/rng.hpp"
#include "udaseg/volume.hpp"

namespace udaseg {

// Patch-based U-Net configuration. 2-d networks travel as z-size-1 patches
// with in-plane strides; everything else is shared with the 3-d path.
struct SegNetConfig {
  int dim = 3;                             // 2 or 3
  std::array<int64_t, 3> patch{40, 256, 192};
  int n_downsamplings = 6;
  int64_t base_channels = 32;
  int64_t channel_cap = 320;
  std::vector<std::array<int64_t, 3>> strides;  // defaulted per dim when empty
  double leaky_slope = 0.01;
  int ds_heads = 3;
  int n_classes = 3;

  static SegNetConfig default3d();
  static SegNetConfig default2d();
};

struct SegTrainConfig {
  int epochs = 200;
  double lr = 0.01;
  double momentum = 0.99;
  bool nesterov = true;
  double poly_power = 0.9;
  int batch_size = 2;
  int steps_per_epoch = 250;
  double fg_oversample = 0.33;
  int val_interval = 1;
  bool deep_supervision = true;
};

void validate(const SegNetConfig& c);
void validate(const SegTrainConfig& c);

// Resolved architecture summary: per-stage spatial sizes and channels.
struct SegPlan {
  std::vector<std::array<int64_t, 3>> stage_sizes;
  std::vector<int64_t> stage_channels;
  std::array<int64_t, 3> bottleneck() const { return stage_sizes.back(); }
  std::string describe() const;
};

SegPlan plan_unet(const SegNetConfig& cfg);

template <typename S>
class SegNet {
 public:
  SegNet(const SegNetConfig& cfg, uint64_t init_seed)
      : cfg_(cfg), enc_("enc", make_arch(cfg)), dec_("dec", make_arch(cfg), cfg.n_classes,
                                                     cfg.ds_heads, /*final_tanh=*/false) {
    Rng rng(init_seed);
    enc_.init(rng);
    dec_.init(rng);
  }

  static nn::UNetArch make_arch(const SegNetConfig& cfg) {
    nn::UNetArch a;
    a.in_channels = 1;
    a.kernel = cfg.dim == 2 ? nn::Triple{1, 3, 3} : nn::Triple{3, 3, 3};
    a.leaky_slope = cfg.leaky_slope;
    for (int i = 0; i <= cfg.n_downsamplings; ++i)
      a.channels.push_back(std::min(cfg.base_channels << i, cfg.channel_cap));
    for (int i = 0; i < cfg.n_downsamplings; ++i)
      a.strides.push_back(cfg.strides[static_cast<size_t>(i)]);
    return a;
  }

  const SegNetConfig& config() const { return cfg_; }
  size_t heads() const { return dec_.heads(); }

  struct Apply {
    nn::Tape<S> enc_tape, dec_tape;
    std::vector<Tensor<S>> feats;
  };

  std::vector<Tensor<S>> forward(const Tensor<S>& x, Apply& ap) {
    ap.feats = enc_.forward(x, ap.enc_tape);
    return dec_.forward(ap.feats, ap.dec_tape);
  }

  void backward(const std::vector<Tensor<S>>& glogits, Apply& ap) {
    auto gfeats = dec_.backward(glogits, ap.dec_tape, true);
    enc_.backward(std::move(gfeats), ap.enc_tape, true);
  }

  std::vector<nn::Param<S>*> params() {
    std::vector<nn::Param<S>*> p;
    enc_.collect_params(p);
    dec_.collect_params(p);
    return p;
  }

 private:
  SegNetConfig cfg_;
  nn::UNetEncoder<S> enc_;
  nn::UNetDecoder<S> dec_;
};

std::unique_ptr<SegNet<float>> build_unet(const SegNetConfig& cfg, uint64_t init_seed);

// Deep-supervision weights: proportional to 2^-k over the finest n heads,
// normalised to sum to 1.
std::vector<double> deep_supervision_weights(size_t n_heads);

// Per-voxel class-probability field.
struct SoftPrediction {
  Tensor<float> probs;  // [K, Z, Y, X]
  std::string case_id;
  std::string provenance;
  Spacing spacing;
  Affine affine;
};

void validate_soft_prediction(const SoftPrediction& p);

// Argmax with ties broken toward the lower class id.
LabelMap argmax_labels(const SoftPrediction& p);

// In-memory training case.
struct SegCase {
  std::string case_id;
  Volume vol;    // already normalised to [0, 1]
  LabelMap lab;  // empty data when unlabelled
};

struct SegBatch {
  Tensor<float> patches;   // [B, 1, pz, py, px]
  Tensor<uint8_t> labels;  // [B, pz, py, px]
  std::vector<std::array<int64_t, 3>> centers;
};

SegBatch sample_training_batch(const std::vector<SegCase>& cases,
                               const std::array<int64_t, 3>& patch, int batch_size,
                               double fg_oversample, Rng& rng);

struct SegEpochRow {
  int epoch = 0;
  double train_loss = 0;
  bool has_val = false;
  double val_dice_vs = 0;
  double val_dice_cochlea = 0;
};

struct SegTrainResult {
  std::unique_ptr<SegNet<float>> model;  // final parameters
  std::vector<std::pair<std::string, Tensor<float>>> best_params;
  int best_epoch = -1;
  double best_val_dice = -1;
  std::vector<SegEpochRow> history;
};

// Trains on the cases whose fold assignment differs from `fold`; validates on
// the held-out fold with sliding-window inference.
SegTrainResult train_segmentation(const std::vector<SegCase>& cases,
                                  const std::vector<int>& fold_of_case, int fold,
                                  const SegNetConfig& netcfg, const SegTrainConfig& cfg,
                                  uint64_t seed);

// Tiled soft inference: patch-sized tiles at 50% overlap blended with a
// Gaussian importance window (sigma = patch/8 per axis).
SoftPrediction sliding_window_infer(SegNet<float>& model, const Volume& v);

void write_seg_history_csv(const std::vector<SegEpochRow>& rows, const std::string& path);

Checkpoint segmentation_checkpoint(SegTrainResult& result, const SegTrainConfig& cfg, int fold);
std::unique_ptr<SegNet<float>> load_seg_model(const Checkpoint& ck, bool use_best = true);
SegNetConfig seg_config_from_checkpoint(const Checkpoint& ck);

}  // namespace udaseg
