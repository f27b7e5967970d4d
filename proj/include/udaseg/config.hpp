#pragma once

#include <optional>
#include <string>

#include "json.hpp"
#include "udaseg/gan.hpp"
#include "udaseg/phantom.hpp"
#include "udaseg/segnet.hpp"

namespace udaseg {

// Whole-pipeline configuration. Defaults are the validated hyperparameters:
// loss weights 1:10:5:100, Adam 1e-4 for 50 epochs with multiplicative decay,
// segmentation-loss gating at epoch 5, SGD 0.01 for 200 epochs, patch
// 40x256x192 with 6 downsamplings and 32 base kernels, 2+3 fold ensembling.
struct PipelineConfig {
  std::string output_root = ".";
  int jobs = 0;  // 0: use all hardware threads for the GEMM backend
  uint64_t seed = 12345;

  struct DataCfg {
    double norm_lo = 0.0, norm_hi = 1.0;  // segmentation-stage range
    std::optional<std::array<double, 3>> spacing;  // resample target; absent = native
  } data;

  struct PhantomCfg {
    PhantomSpec spec;
    int cases_a = 10;
    int cases_b = 10;
  } phantom;

  struct ConversionCfg {
    GeneratorConfig generator;
    DiscriminatorConfig discriminator;
    ConversionTrainConfig train;
  } conversion;

  struct SegmentationCfg {
    SegNetConfig net3d = SegNetConfig::default3d();
    SegNetConfig net2d = SegNetConfig::default2d();
    SegTrainConfig train3d;
    SegTrainConfig train2d;
    int stage2_folds = 5;
  } segmentation;

  struct SelfTrainingCfg {
    int k = 5;
    int n_2d = 2;
    int n_3d = 3;
    double confidence_threshold = 0.0;  // 0 disables filtering (default)
  } self_training;

  struct MetricsCfg {
    std::vector<int> classes{1, 2};
  } metrics;
};

// Strict parse: unknown keys are rejected with their full path; all values
// validated before any stage runs.
PipelineConfig parse_config(const nlohmann::json& j);
PipelineConfig load_config(const std::string& path);

// Serialises every effective setting; parse(dump(c)) == c.
nlohmann::json dump_config(const PipelineConfig& c);

void validate_config(const PipelineConfig& c);

// CRC-32 of the canonical serialised form, used in run manifests.
uint32_t config_hash(const PipelineConfig& c);

}  // namespace udaseg
