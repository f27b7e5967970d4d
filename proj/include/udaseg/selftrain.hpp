#pragma once

#include <map>
#include <string>
#include <vector>

#include "udaseg/manifest.hpp"
#include "udaseg/segnet.hpp"

namespace udaseg {

// Deterministic k-fold partition: shuffle by seed, assign round-robin.
struct FoldAssignment {
  int k = 5;
  uint64_t seed = 0;
  std::map<std::string, int> fold_of;

  std::vector<int> folds_for(const Dataset& d) const;
};

FoldAssignment make_folds(const Dataset& dataset, int k, uint64_t seed);

struct EnsembleMember {
  std::string checkpoint_path;
  int dim = 3;
  int fold = 0;
  double val_dice = 0;
};

struct EnsembleSpec {
  std::vector<EnsembleMember> members;
  int n_2d = 2;
  int n_3d = 3;
};

void save_ensemble_spec(const EnsembleSpec& spec, const std::string& path);
EnsembleSpec load_ensemble_spec(const std::string& path);

struct FoldScore {
  int dim = 3;
  int fold = 0;
  double score = 0;  // mean foreground validation Dice at the best epoch
  std::string checkpoint_path;
};

// Top-n_2d 2-d folds and top-n_3d 3-d folds by score; ties toward the lower
// fold index.
EnsembleSpec select_folds(const std::vector<FoldScore>& scores, int n_2d, int n_3d);

// Concatenation preserving per-case label provenance; ids must be disjoint
// and every case labelled (true or pseudo).
Dataset combine_datasets(const Dataset& synth_with_true, const Dataset& real_with_pseudo);

// Voxelwise uniform mean of member predictions.
SoftPrediction average_predictions(const std::vector<SoftPrediction>& members);

// Runs every member (after [0, 1] min-max normalisation) and averages.
SoftPrediction ensemble_predict(std::vector<SegNet<float>*>& models, const Volume& v,
                                const std::string& provenance);

// Ensemble-mean -> argmax pseudo-labels for every unlabelled real case; no
// case is dropped or filtered. Labels and the pseudo-labelled manifest are
// written under out_dir.
Dataset infer_pseudo_labels(std::vector<SegNet<float>*>& models, const Dataset& dataset_b_real,
                            const std::string& out_dir);

}  // namespace udaseg
