#pragma once

#include <optional>
#include <string>
#include <vector>

#include "udaseg/manifest.hpp"
#include "udaseg/volume.hpp"

namespace udaseg {

// Dice = 2|A n B| / (|A| + |B|) on the binarised class; both-empty masks
// score 1 (perfect agreement).
double dice_score(const LabelMap& pred, const LabelMap& gt, int class_id);

// Average symmetric surface distance in millimetres. Surface voxels are
// foreground voxels with at least one six-connected background neighbour (the
// volume border counts as background). Undefined (nullopt) when exactly one
// mask is empty; 0 when both are empty.
std::optional<double> assd(const LabelMap& pred, const LabelMap& gt, int class_id,
                           const Spacing& spacing);

// Exact squared Euclidean distance (mm^2) to the nearest seed voxel centre,
// Felzenszwalb-Huttenlocher transform with per-axis spacing.
Tensor<double> distance_transform_sq(const Tensor<uint8_t>& seeds, const Spacing& spacing);

// Surface voxel mask per the ASSD definition above.
Tensor<uint8_t> surface_voxels(const LabelMap& mask, int class_id);

struct CaseMetrics {
  std::string case_id;
  int class_id = 0;
  double dice = 0;
  std::optional<double> assd_mm;
};

struct ClassAggregate {
  int class_id = 0;
  int n = 0;
  double dice_mean = 0, dice_std = 0;
  int assd_n = 0;          // cases with defined ASSD
  int assd_undefined = 0;  // excluded single-empty-mask cases
  double assd_mean = 0, assd_std = 0;
};

struct MetricsReport {
  std::vector<CaseMetrics> per_case;
  std::vector<ClassAggregate> aggregates;
  std::string prediction_source, ground_truth_source;
};

// Per-case metrics plus mean and sample (n-1) standard deviation per class.
// Ground-truth labels must be true labels (pseudo-labels are never accepted
// as ground truth here).
MetricsReport evaluate_dataset(const Dataset& preds, const Dataset& gts,
                               const std::vector<int>& classes);

void write_metrics_csv(const MetricsReport& report, const std::string& path);
std::string format_metrics_table(const MetricsReport& report);

}  // namespace udaseg
