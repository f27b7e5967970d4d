#include <algorithm>
#include <filesystem>

#include "doctest.h"
#include "udaseg/nifti.hpp"
#include "udaseg/phantom.hpp"
#include "udaseg/preprocess.hpp"
#include "udaseg/selftrain.hpp"

using namespace udaseg;
namespace fs = std::filesystem;

namespace {

Dataset fake_dataset(const std::string& name, int n, Domain domain, LabelKind kind,
                     const std::string& prefix) {
  Dataset d;
  d.name = name;
  for (int i = 0; i < n; ++i) {
    CaseManifest c;
    c.case_id = prefix + std::to_string(i);
    c.domain = domain;
    c.volume_path = "v" + std::to_string(i) + ".nii";
    if (kind != LabelKind::none) {
      c.label_path = "l" + std::to_string(i) + ".nii";
      c.label_kind = kind;
    }
    d.cases.push_back(std::move(c));
  }
  return d;
}

SoftPrediction single_voxel_pred(std::vector<float> probs) {
  SoftPrediction p;
  p.probs = Tensor<float>({3, 1, 1, 1});
  for (int c = 0; c < 3; ++c) p.probs[c] = probs[static_cast<size_t>(c)];
  p.spacing = {1, 1, 1};
  return p;
}

}  // namespace

TEST_CASE("make_folds partitions deterministically with balanced sizes") {
  Dataset d = fake_dataset("d", 10, Domain::hrT2_synth, LabelKind::truth, "c");
  FoldAssignment f1 = make_folds(d, 5, 3);
  FoldAssignment f2 = make_folds(d, 5, 3);
  CHECK(f1.fold_of == f2.fold_of);
  std::vector<int> sizes(5, 0);
  for (const auto& [_, f] : f1.fold_of) sizes[static_cast<size_t>(f)]++;
  for (int s : sizes) CHECK(s == 2);

  Dataset d7 = fake_dataset("d7", 7, Domain::hrT2_synth, LabelKind::truth, "c");
  FoldAssignment f7 = make_folds(d7, 5, 3);
  std::vector<int> sizes7(5, 0);
  for (const auto& [_, f] : f7.fold_of) sizes7[static_cast<size_t>(f)]++;
  std::sort(sizes7.begin(), sizes7.end(), std::greater<>());
  CHECK(sizes7 == std::vector<int>{2, 2, 1, 1, 1});

  CHECK_THROWS_AS(make_folds(d7, 8, 1), DataError);

  FoldAssignment other = make_folds(d, 5, 4);
  CHECK(other.fold_of != f1.fold_of);
}

TEST_CASE("select_folds takes the top scores per dimensionality") {
  std::vector<FoldScore> scores;
  std::vector<double> dice2d{0.7, 0.9, 0.8, 0.6, 0.85};
  for (int f = 0; f < 5; ++f) scores.push_back({2, f, dice2d[static_cast<size_t>(f)], "p2" + std::to_string(f)});
  for (int f = 0; f < 5; ++f) scores.push_back({3, f, 0.5 + 0.01 * f, "p3" + std::to_string(f)});

  EnsembleSpec spec = select_folds(scores, 2, 3);
  REQUIRE(spec.members.size() == 5);
  CHECK(spec.members[0].dim == 2);
  CHECK(spec.members[0].fold == 1);  // 0.9
  CHECK(spec.members[1].fold == 4);  // 0.85
  CHECK(spec.members[2].dim == 3);
  CHECK(spec.members[2].fold == 4);
  CHECK(spec.members[3].fold == 3);
  CHECK(spec.members[4].fold == 2);

  // Stable under reordering of the incoming score table.
  std::vector<FoldScore> shuffled = scores;
  std::rotate(shuffled.begin(), shuffled.begin() + 4, shuffled.end());
  EnsembleSpec spec2 = select_folds(shuffled, 2, 3);
  for (size_t i = 0; i < spec.members.size(); ++i) {
    CHECK(spec.members[i].dim == spec2.members[i].dim);
    CHECK(spec.members[i].fold == spec2.members[i].fold);
  }

  // All-equal scores: lowest fold indices win.
  std::vector<FoldScore> equal;
  for (int f = 0; f < 5; ++f) equal.push_back({2, f, 0.5, "p"});
  EnsembleSpec spec3 = select_folds(equal, 2, 0);
  CHECK(spec3.members[0].fold == 0);
  CHECK(spec3.members[1].fold == 1);

  // n equal to available selects everything.
  EnsembleSpec spec4 = select_folds(equal, 5, 0);
  CHECK(spec4.members.size() == 5);

  CHECK_THROWS_AS(select_folds(equal, 6, 0), DataError);
}

TEST_CASE("combine_datasets: 105 generated + 98 pseudo-labelled = 203 combined") {
  Dataset synth = fake_dataset("synth", 105, Domain::hrT2_synth, LabelKind::truth, "A");
  Dataset real = fake_dataset("real", 98, Domain::hrT2_real, LabelKind::pseudo, "B");
  Dataset combined = combine_datasets(synth, real);
  CHECK(combined.cases.size() == 203);
  int pseudo = 0;
  for (const auto& c : combined.cases) pseudo += c.label_kind == LabelKind::pseudo;
  CHECK(pseudo == 98);

  Dataset empty;
  empty.name = "none";
  Dataset only_synth = combine_datasets(synth, empty);
  CHECK(only_synth.cases.size() == 105);

  Dataset dup = fake_dataset("dup", 3, Domain::hrT2_real, LabelKind::pseudo, "A");
  CHECK_THROWS_AS(combine_datasets(synth, dup), DataError);

  Dataset unlabeled = fake_dataset("u", 2, Domain::hrT2_real, LabelKind::none, "U");
  CHECK_THROWS_AS(combine_datasets(synth, unlabeled), DataError);
}

TEST_CASE("prediction averaging: idempotence, permutation invariance, hand arithmetic") {
  SoftPrediction a = single_voxel_pred({0.3f, 0.6f, 0.1f});
  SoftPrediction b = single_voxel_pred({0.9f, 0.05f, 0.05f});

  // Identical members reproduce the member exactly.
  SoftPrediction same = average_predictions({a, a, a});
  for (int c = 0; c < 3; ++c) CHECK(same.probs[c] == a.probs[c]);

  // Two members: exact (p+q)/2.
  SoftPrediction half = average_predictions({a, b});
  for (int c = 0; c < 3; ++c) CHECK(half.probs[c] == (a.probs[c] + b.probs[c]) / 2.f);

  // Permutation invariance.
  SoftPrediction p1 = average_predictions({a, a, b});
  SoftPrediction p2 = average_predictions({b, a, a});
  for (int c = 0; c < 3; ++c) CHECK(p1.probs[c] == p2.probs[c]);

  // Two members vote class 1 with 0.6, one votes class 0 with 0.9:
  // mean = (0.5, 0.41667, 0.08333) -> argmax class 0.
  CHECK(p1.probs[0] == doctest::Approx(0.5));
  CHECK(p1.probs[1] == doctest::Approx(0.416666667));
  CHECK(p1.probs[2] == doctest::Approx(0.083333333));
  LabelMap lab = argmax_labels(p1);
  CHECK(lab.data[0] == 0);
}

TEST_CASE("argmax breaks ties toward the lower class id") {
  SoftPrediction tie = single_voxel_pred({0.4f, 0.4f, 0.2f});
  CHECK(argmax_labels(tie).data[0] == 0);
  SoftPrediction tie12 = single_voxel_pred({0.2f, 0.4f, 0.4f});
  CHECK(argmax_labels(tie12).data[0] == 1);
}

TEST_CASE("all-background prediction still yields a written, included pseudo-label") {
  SoftPrediction bg;
  bg.probs = Tensor<float>({3, 2, 2, 2});
  for (int64_t v = 0; v < 8; ++v) {
    bg.probs[v] = 0.98f;
    bg.probs[8 + v] = 0.01f;
    bg.probs[16 + v] = 0.01f;
  }
  bg.spacing = {1, 1, 1};
  LabelMap lab = argmax_labels(bg);
  for (int64_t i = 0; i < 8; ++i) CHECK(lab.data[i] == 0);
}

TEST_CASE("infer_pseudo_labels labels every case and keeps provenance") {
  fs::path dir = fs::temp_directory_path() / "udaseg_selftrain_test";
  fs::remove_all(dir);
  PhantomSpec spec;
  spec.grid = {12, 32, 32};
  spec.vs_radius_min_mm = 3.0;
  spec.vs_radius_max_mm = 3.5;
  spec.cochlea_radius_min_mm = 1.5;
  spec.cochlea_radius_max_mm = 2.2;
  spec.seed = 77;
  PhantomDatasets ds = generate_dataset(spec, 1, 3, 5, dir.string());

  SegNetConfig nc;
  nc.dim = 3;
  nc.patch = {8, 24, 24};
  nc.n_downsamplings = 2;
  nc.base_channels = 4;
  nc.channel_cap = 16;
  nc.strides = {{2, 2, 2}, {2, 2, 2}};
  nc.ds_heads = 1;
  auto m1 = build_unet(nc, 1);
  auto m2 = build_unet(nc, 2);
  std::vector<SegNet<float>*> models{m1.get(), m2.get()};

  Dataset real = load_dataset((dir / "domainB" / "manifest.json").string());
  Dataset pseudo = infer_pseudo_labels(models, real, (dir / "pseudo").string());
  REQUIRE(pseudo.cases.size() == real.cases.size());
  for (const auto& c : pseudo.cases) {
    CHECK(c.label_kind == LabelKind::pseudo);
    CHECK(fs::exists(*c.label_path));
    LabelMap l = load_labelmap(*c.label_path);
    CHECK(l.data.shape() == std::vector<int64_t>{12, 32, 32});
  }
  // Reloadable as a training dataset (pseudo on real hrT2 is legal).
  Dataset reloaded = load_dataset((dir / "pseudo" / "manifest.json").string());
  CHECK(reloaded.cases.size() == 3);

  // Single-model "ensemble" equals that model's argmax.
  std::vector<SegNet<float>*> one{m1.get()};
  Volume v = load_volume(real.cases[0].volume_path);
  SoftPrediction ens = ensemble_predict(one, v, "t");
  Volume norm = minmax_normalize(v, 0.f, 1.f);
  SoftPrediction direct = sliding_window_infer(*m1, norm);
  for (int64_t i = 0; i < ens.probs.numel(); ++i) CHECK(ens.probs[i] == direct.probs[i]);

  // Already-labelled cases are rejected.
  CHECK_THROWS_AS(infer_pseudo_labels(models, pseudo, (dir / "p2").string()), DataError);
}

TEST_CASE("ensemble spec round trips through JSON") {
  fs::path dir = fs::temp_directory_path() / "udaseg_spec_test";
  fs::create_directories(dir / "folds");
  EnsembleSpec spec;
  spec.n_2d = 1;
  spec.n_3d = 2;
  spec.members = {{(dir / "folds" / "a.bin").string(), 2, 0, 0.8},
                  {(dir / "folds" / "b.bin").string(), 3, 2, 0.9}};
  std::string path = (dir / "spec.json").string();
  save_ensemble_spec(spec, path);
  EnsembleSpec r = load_ensemble_spec(path);
  REQUIRE(r.members.size() == 2);
  CHECK(r.members[0].dim == 2);
  CHECK(r.members[1].fold == 2);
  CHECK(fs::path(r.members[1].checkpoint_path).filename() == "b.bin");
}
