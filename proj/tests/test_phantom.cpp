#include <filesystem>

#include "doctest.h"
#include "oracles.hpp"
#include "udaseg/phantom.hpp"

using namespace udaseg;
namespace fs = std::filesystem;

namespace {

PhantomSpec desk_spec() {
  PhantomSpec s;
  s.grid = {16, 48, 48};
  s.vs_radius_min_mm = 3.0;
  s.vs_radius_max_mm = 5.5;
  s.cochlea_radius_min_mm = 1.5;
  s.cochlea_radius_max_mm = 2.5;
  s.seed = 7;
  return s;
}

}  // namespace

TEST_CASE("generate_case is deterministic in (spec, case_seed)") {
  PhantomSpec s = desk_spec();
  PhantomCase a = generate_case(s, 3);
  PhantomCase b = generate_case(s, 3);
  REQUIRE(a.volume_a.data.numel() == b.volume_a.data.numel());
  for (int64_t i = 0; i < a.volume_a.data.numel(); ++i) {
    CHECK(a.volume_a.data[i] == b.volume_a.data[i]);
    CHECK(a.volume_b.data[i] == b.volume_b.data[i]);
    CHECK(a.labels.data[i] == b.labels.data[i]);
  }
  PhantomCase c = generate_case(s, 4);
  bool any_diff = false;
  for (int64_t i = 0; i < a.labels.data.numel() && !any_diff; ++i)
    any_diff = a.labels.data[i] != c.labels.data[i];
  CHECK(any_diff);
}

TEST_CASE("labels carry one VS component and exactly two cochlea components") {
  PhantomSpec s = desk_spec();
  for (uint64_t seed = 0; seed < 6; ++seed) {
    PhantomCase pc = generate_case(s, seed);
    int64_t vs_count = 0;
    for (int64_t i = 0; i < pc.labels.data.numel(); ++i)
      vs_count += pc.labels.data[i] == LabelMap::kVS;
    CHECK(vs_count > 0);
    CHECK(oracles::component_count(pc.labels, LabelMap::kCochlea) == 2);
  }
}

TEST_CASE("VS voxels in volume A track the configured VS mean") {
  PhantomSpec s = desk_spec();
  PhantomCase pc = generate_case(s, 1);
  double sum = 0;
  int64_t n = 0;
  for (int64_t i = 0; i < pc.labels.data.numel(); ++i)
    if (pc.labels.data[i] == LabelMap::kVS) {
      sum += pc.volume_a.data[i];
      ++n;
    }
  REQUIRE(n > 0);
  double mean = sum / n;
  double sigma = std::sqrt(s.domain_a.vs.stddev * s.domain_a.vs.stddev +
                           s.domain_a.noise_sigma * s.domain_a.noise_sigma);
  CHECK(std::abs(mean - s.domain_a.vs.mean) < 2 * sigma / std::sqrt(static_cast<double>(n)) + 1e-9);
}

TEST_CASE("the domain gap is real: VS means differ between contrasts") {
  PhantomSpec s = desk_spec();
  PhantomCase pc = generate_case(s, 2);
  double sum_a = 0, sum_b = 0;
  int64_t n = 0;
  for (int64_t i = 0; i < pc.labels.data.numel(); ++i)
    if (pc.labels.data[i] == LabelMap::kVS) {
      sum_a += pc.volume_a.data[i];
      sum_b += pc.volume_b.data[i];
      ++n;
    }
  double margin = std::abs(s.domain_a.vs.mean - s.domain_b.vs.mean) / 2;
  CHECK(std::abs(sum_a / n - sum_b / n) > margin);
}

TEST_CASE("spec validation rejects impossible geometry at parse time") {
  PhantomSpec s = desk_spec();
  s.vs_radius_min_mm = -1;
  CHECK_THROWS_AS(validate(s), ConfigError);
  s = desk_spec();
  s.vs_radius_max_mm = 100;  // cannot fit with 2-voxel margin
  CHECK_THROWS_AS(validate(s), ConfigError);
  s = desk_spec();
  s.domain_a.head.mean = s.domain_a.vs.mean;
  CHECK_THROWS_AS(validate(s), ConfigError);
}

TEST_CASE("generate_dataset writes the three cohorts with the right regimes") {
  fs::path dir = fs::temp_directory_path() / "udaseg_phantom_test";
  fs::remove_all(dir);
  PhantomSpec s = desk_spec();
  PhantomDatasets ds = generate_dataset(s, 3, 2, 11, dir.string());
  CHECK(ds.domain_a.cases.size() == 3);
  CHECK(ds.domain_b.cases.size() == 2);
  CHECK(ds.hidden_labels.cases.size() == 2);
  for (const auto& c : ds.domain_a.cases) {
    CHECK(c.domain == Domain::ceT1);
    CHECK(c.label_kind == LabelKind::truth);
  }
  for (const auto& c : ds.domain_b.cases) {
    CHECK(c.domain == Domain::hrT2_real);
    CHECK(c.label_kind == LabelKind::none);
  }
  CHECK(ds.hidden_labels.purpose == DatasetPurpose::evaluation);
  // Unpaired regime: no case id appears in both cohorts.
  for (const auto& a : ds.domain_a.cases)
    for (const auto& b : ds.domain_b.cases) CHECK(a.case_id != b.case_id);

  // Manifests reload and the anatomy of A000 differs from B000 (disjoint seeds).
  Dataset a = load_dataset((dir / "domainA" / "manifest.json").string());
  CHECK(a.cases.size() == 3);
  Dataset hidden = load_dataset((dir / "hidden" / "manifest.json").string());
  CHECK(hidden.purpose == DatasetPurpose::evaluation);
}

TEST_CASE("hidden truth on real hrT2 is rejected in training manifests") {
  Dataset d;
  d.name = "bad";
  d.purpose = DatasetPurpose::training;
  d.cases.push_back({"x", Domain::hrT2_real, "v.nii", std::string("l.nii"), LabelKind::truth,
                     std::nullopt});
  CHECK_THROWS_AS(validate_dataset(d), DataError);
  d.purpose = DatasetPurpose::evaluation;
  CHECK_NOTHROW(validate_dataset(d));
}
