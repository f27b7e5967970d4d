#include "udaseg/selftrain.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "udaseg/nifti.hpp"
#include "udaseg/preprocess.hpp"
#include "udaseg/rng.hpp"

namespace udaseg {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<int> FoldAssignment::folds_for(const Dataset& d) const {
  std::vector<int> out;
  out.reserve(d.cases.size());
  for (const auto& c : d.cases) {
    auto it = fold_of.find(c.case_id);
    if (it == fold_of.end())
      throw DataError("fold assignment missing case '" + c.case_id + "'");
    out.push_back(it->second);
  }
  return out;
}

FoldAssignment make_folds(const Dataset& dataset, int k, uint64_t seed) {
  const int64_t n = static_cast<int64_t>(dataset.cases.size());
  if (k < 1) throw ConfigError("make_folds: k must be >= 1");
  if (n < k)
    throw DataError("make_folds: k=" + std::to_string(k) + " exceeds dataset size " +
                    std::to_string(n));
  std::vector<int64_t> order(n);
  for (int64_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng(seed).fork(0x666f6c64);
  for (int64_t i = n - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_int(i + 1)]);
  FoldAssignment fa;
  fa.k = k;
  fa.seed = seed;
  for (int64_t i = 0; i < n; ++i)
    fa.fold_of[dataset.cases[order[i]].case_id] = static_cast<int>(i % k);
  return fa;
}

void save_ensemble_spec(const EnsembleSpec& spec, const std::string& path) {
  json j;
  j["n_2d"] = spec.n_2d;
  j["n_3d"] = spec.n_3d;
  j["members"] = json::array();
  fs::path base = fs::path(path).parent_path();
  for (const auto& m : spec.members)
    j["members"].push_back({{"checkpoint", fs::relative(m.checkpoint_path, base).generic_string()},
                            {"dim", m.dim},
                            {"fold", m.fold},
                            {"val_dice", m.val_dice}});
  std::ofstream out(path);
  if (!out) throw DataError("cannot write ensemble spec '" + path + "'");
  out << j.dump(2) << "\n";
}

EnsembleSpec load_ensemble_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ensemble spec '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("ensemble spec '" + path + "': " + e.what());
  }
  EnsembleSpec spec;
  spec.n_2d = j.value("n_2d", 2);
  spec.n_3d = j.value("n_3d", 3);
  fs::path base = fs::path(path).parent_path();
  for (const auto& jm : j.at("members")) {
    EnsembleMember m;
    m.checkpoint_path = (base / jm.at("checkpoint").get<std::string>()).string();
    m.dim = jm.at("dim").get<int>();
    m.fold = jm.at("fold").get<int>();
    m.val_dice = jm.value("val_dice", 0.0);
    spec.members.push_back(std::move(m));
  }
  if (spec.members.empty()) throw DataError("ensemble spec '" + path + "' has no members");
  return spec;
}

EnsembleSpec select_folds(const std::vector<FoldScore>& scores, int n_2d, int n_3d) {
  EnsembleSpec spec;
  spec.n_2d = n_2d;
  spec.n_3d = n_3d;
  for (int dim : {2, 3}) {
    int want = dim == 2 ? n_2d : n_3d;
    if (want == 0) continue;
    std::vector<FoldScore> cand;
    for (const auto& s : scores)
      if (s.dim == dim) cand.push_back(s);
    if (static_cast<int>(cand.size()) < want)
      throw DataError("select_folds: need " + std::to_string(want) + " " + std::to_string(dim) +
                      "d folds, have " + std::to_string(cand.size()));
    std::sort(cand.begin(), cand.end(), [](const FoldScore& a, const FoldScore& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.fold < b.fold;
    });
    for (int i = 0; i < want; ++i)
      spec.members.push_back(
          {cand[i].checkpoint_path, cand[i].dim, cand[i].fold, cand[i].score});
  }
  return spec;
}

Dataset combine_datasets(const Dataset& synth_with_true, const Dataset& real_with_pseudo) {
  for (const auto& c : synth_with_true.cases)
    if (c.label_kind == LabelKind::none)
      throw DataError("combine_datasets: unlabelled case '" + c.case_id + "' in synthetic set");
  for (const auto& c : real_with_pseudo.cases)
    if (c.label_kind == LabelKind::none)
      throw DataError("combine_datasets: unlabelled case '" + c.case_id + "' in real set");
  Dataset out;
  out.name = synth_with_true.name + "+" + real_with_pseudo.name;
  out.purpose = DatasetPurpose::training;
  out.cases = synth_with_true.cases;
  out.cases.insert(out.cases.end(), real_with_pseudo.cases.begin(), real_with_pseudo.cases.end());
  validate_dataset(out);  // rejects duplicate ids
  return out;
}

SoftPrediction average_predictions(const std::vector<SoftPrediction>& members) {
  if (members.empty()) throw DataError("average_predictions: no members");
  SoftPrediction out = members[0];
  for (size_t i = 1; i < members.size(); ++i) {
    if (!members[i].probs.same_shape(out.probs))
      throw DataError("average_predictions: member '" + members[i].case_id +
                      "' has mismatched shape");
    out.probs.array() += members[i].probs.array();
  }
  out.probs.array() /= static_cast<float>(members.size());
  return out;
}

SoftPrediction ensemble_predict(std::vector<SegNet<float>*>& models, const Volume& v,
                                const std::string& provenance) {
  if (models.empty()) throw DataError("ensemble_predict: no models");
  Volume norm = minmax_normalize(v, 0.f, 1.f);
  std::vector<SoftPrediction> preds;
  for (auto* m : models) preds.push_back(sliding_window_infer(*m, norm));
  SoftPrediction mean = average_predictions(preds);
  mean.case_id = v.case_id;
  mean.provenance = provenance;
  return mean;
}

Dataset infer_pseudo_labels(std::vector<SegNet<float>*>& models, const Dataset& dataset_b_real,
                            const std::string& out_dir) {
  fs::create_directories(out_dir);
  Dataset out;
  out.name = dataset_b_real.name + "_pseudo";
  out.purpose = DatasetPurpose::training;
  for (const auto& c : dataset_b_real.cases) {
    if (c.label_kind != LabelKind::none)
      throw DataError("infer_pseudo_labels: case '" + c.case_id + "' is already labelled");
    Volume v;
    try {
      v = load_volume(c.volume_path);
    } catch (const DataError& e) {
      throw DataError("pseudo-label inference failed for case '" + c.case_id + "': " + e.what());
    }
    SoftPrediction mean = ensemble_predict(models, v, "pseudo_label_ensemble");
    LabelMap lab = argmax_labels(mean);
    std::string lab_path = (fs::path(out_dir) / (c.case_id + "_pseudo.nii.gz")).string();
    save_labelmap(lab, lab_path);
    CaseManifest m = c;
    m.label_path = lab_path;
    m.label_kind = LabelKind::pseudo;
    out.cases.push_back(std::move(m));
  }
  validate_dataset(out);
  save_dataset(out, (fs::path(out_dir) / "manifest.json").string());
  return out;
}

}  // namespace udaseg
