#include <filesystem>

#include "doctest.h"
#include "udaseg/nifti.hpp"
#include "udaseg/preprocess.hpp"
#include "udaseg/rng.hpp"

using namespace udaseg;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  fs::path p = fs::temp_directory_path() / "udaseg_core_test";
  fs::create_directories(p);
  return p;
}

Volume make_volume(std::vector<int64_t> shape, Spacing sp, uint64_t seed) {
  Volume v;
  v.data = Tensor<float>(shape);
  Rng rng(seed);
  for (int64_t i = 0; i < v.data.numel(); ++i) v.data[i] = static_cast<float>(rng.uniform(-3, 7));
  v.spacing = sp;
  v.affine = affine_from_spacing(sp);
  v.case_id = "t";
  return v;
}

}  // namespace

TEST_CASE("nifti volume round trip preserves data and spacing") {
  auto dir = temp_dir();
  Volume v = make_volume({5, 7, 9}, {1.5, 0.5, 0.5}, 42);
  for (const char* name : {"v.nii", "v.nii.gz"}) {
    std::string path = (dir / name).string();
    save_volume(v, path);
    Volume r = load_volume(path);
    REQUIRE(r.data.shape() == v.data.shape());
    double maxd = 0;
    for (int64_t i = 0; i < v.data.numel(); ++i)
      maxd = std::max<double>(maxd, std::abs(r.data[i] - v.data[i]));
    CHECK(maxd < 1e-6);
    CHECK(r.spacing.z == doctest::Approx(1.5));
    CHECK(r.spacing.y == doctest::Approx(0.5));
    CHECK(r.spacing.x == doctest::Approx(0.5));
  }
}

TEST_CASE("nifti label round trip is exact") {
  auto dir = temp_dir();
  LabelMap l;
  l.data = Tensor<uint8_t>({4, 5, 6});
  Rng rng(7);
  for (int64_t i = 0; i < l.data.numel(); ++i)
    l.data[i] = static_cast<uint8_t>(rng.uniform_int(3));
  l.spacing = {2.0, 1.0, 1.0};
  std::string path = (dir / "l.nii.gz").string();
  save_labelmap(l, path);
  LabelMap r = load_labelmap(path);
  REQUIRE(r.data.shape() == l.data.shape());
  for (int64_t i = 0; i < l.data.numel(); ++i) CHECK(r.data[i] == l.data[i]);
}

TEST_CASE("loading a 4-d file as a volume reports the axis count") {
  auto dir = temp_dir();
  Tensor<float> probs({3, 4, 5, 6});
  probs.fill(0.25f);
  std::string path = (dir / "p4.nii.gz").string();
  save_prob_field(probs, {1, 1, 1}, Affine{}, path);
  CHECK_THROWS_WITH_AS(load_volume(path), doctest::Contains("expected 3 axes"), DataError);
}

TEST_CASE("missing file and unwritable path error") {
  CHECK_THROWS_AS(load_volume("/nonexistent/nope.nii"), DataError);
  Volume v = make_volume({2, 2, 2}, {1, 1, 1}, 1);
  CHECK_THROWS_AS(save_volume(v, "/nonexistent_dir_xyz/out.nii"), DataError);
}

TEST_CASE("minmax_normalize endpoints, degenerate input, and hand example") {
  Volume v = make_volume({1, 1, 3}, {1, 1, 1}, 0);
  v.data[0] = 0.f;
  v.data[1] = 0.5f;
  v.data[2] = 1.f;
  Volume n = minmax_normalize(v, -1.f, 1.f);
  CHECK(n.data[0] == doctest::Approx(-1));
  CHECK(n.data[1] == doctest::Approx(0));
  CHECK(n.data[2] == doctest::Approx(1));

  v.data.fill(7.f);
  Volume c = minmax_normalize(v, -1.f, 1.f);
  for (int64_t i = 0; i < 3; ++i) CHECK(c.data[i] == doctest::Approx(0));

  v.data[0] = 2.f;
  v.data[1] = 4.f;
  v.data[2] = 10.f;
  Volume h = minmax_normalize(v, 0.f, 1.f);  // (x-2)/8
  CHECK(h.data[0] == doctest::Approx(0));
  CHECK(h.data[1] == doctest::Approx(0.25));
  CHECK(h.data[2] == doctest::Approx(1));

  CHECK_THROWS_AS(minmax_normalize(v, 1.f, 1.f), DataError);
}

TEST_CASE("minmax_normalize is idempotent and rank-preserving") {
  Volume v = make_volume({4, 6, 5}, {1, 1, 1}, 99);
  Volume n1 = minmax_normalize(v, 0.f, 1.f);
  Volume n2 = minmax_normalize(n1, 0.f, 1.f);
  for (int64_t i = 0; i < v.data.numel(); ++i) CHECK(std::abs(n1.data[i] - n2.data[i]) < 1e-6f);
  for (int64_t i = 1; i < v.data.numel(); ++i) {
    bool before = v.data[i - 1] < v.data[i];
    bool after = n1.data[i - 1] < n1.data[i];
    CHECK(before == after);
  }
}

TEST_CASE("resample identity and constants") {
  Volume v = make_volume({4, 6, 5}, {1.5, 0.5, 0.75}, 3);
  Volume same = resample(v, v.spacing);
  REQUIRE(same.data.shape() == v.data.shape());
  for (int64_t i = 0; i < v.data.numel(); ++i) CHECK(same.data[i] == v.data[i]);

  v.data.fill(3.5f);
  Volume r = resample(v, {1.0, 1.0, 1.0});
  for (int64_t i = 0; i < r.data.numel(); ++i) CHECK(r.data[i] == doctest::Approx(3.5));
}

TEST_CASE("resample 2x upsampling matches the analytic ramp at interior voxels") {
  Volume v;
  v.data = Tensor<float>({1, 1, 16});
  for (int64_t x = 0; x < 16; ++x) v.data[x] = static_cast<float>(x);
  v.spacing = {1, 1, 1};
  Volume up = resample(v, {1, 1, 0.5});
  REQUIRE(up.nx() == 32);
  // Output voxel x sits at source coordinate (x + 0.5) * 0.5 - 0.5.
  for (int64_t x = 2; x < 30; ++x) {
    double src = (x + 0.5) * 0.5 - 0.5;
    CHECK(std::abs(up.data[x] - src) < 1e-6);
  }
}

TEST_CASE("resample_labels nearest neighbour keeps the class set and identity") {
  LabelMap l;
  l.data = Tensor<uint8_t>({4, 4, 4});
  for (int64_t i = 0; i < l.data.numel(); ++i) l.data[i] = static_cast<uint8_t>(i % 3);
  l.spacing = {1, 1, 1};
  LabelMap r = resample_labels(l, {0.5, 0.5, 0.5});
  CHECK(r.nz() == 8);
  for (int64_t i = 0; i < r.data.numel(); ++i) CHECK(r.data[i] <= 2);
  LabelMap same = resample_labels(l, l.spacing);
  for (int64_t i = 0; i < l.data.numel(); ++i) CHECK(same.data[i] == l.data[i]);
}

TEST_CASE("patch extraction: interior, corner padding, and paste round trip") {
  Volume v = make_volume({6, 8, 10}, {1, 1, 1}, 5);
  auto patch = extract_patch(v.data, {3, 4, 5}, {2, 4, 4});
  for (int64_t z = 0; z < 2; ++z)
    for (int64_t y = 0; y < 4; ++y)
      for (int64_t x = 0; x < 4; ++x)
        CHECK(patch[(z * 4 + y) * 4 + x] == v.at(3 - 1 + z, 4 - 2 + y, 5 - 2 + x));

  // Patch centred at the volume corner: out-of-bounds (negative) sources must
  // be zero-padded.
  auto corner = extract_patch(v.data, {0, 0, 0}, {4, 4, 4});
  for (int64_t z = 0; z < 4; ++z)
    for (int64_t y = 0; y < 4; ++y)
      for (int64_t x = 0; x < 4; ++x) {
        float expected = (z >= 2 && y >= 2 && x >= 2) ? v.at(z - 2, y - 2, x - 2) : 0.f;
        CHECK(corner[(z * 4 + y) * 4 + x] == expected);
      }

  Tensor<float> canvas({6, 8, 10});
  paste_patch(canvas, patch, {3, 4, 5});
  auto again = extract_patch(canvas, {3, 4, 5}, {2, 4, 4});
  for (int64_t i = 0; i < patch.numel(); ++i) CHECK(again[i] == patch[i]);

  CHECK_THROWS_AS(extract_patch(v.data, {0, 0, 0}, {0, 1, 1}), DataError);
}

TEST_CASE("axial slices and restack") {
  Volume v = make_volume({3, 4, 5}, {1, 1, 1}, 11);
  auto slices = axial_slices(v);
  REQUIRE(slices.size() == 3);
  CHECK(slices[0].dim(0) == 4);
  CHECK(slices[0].dim(1) == 5);
  Volume r = restack_slices(slices, v);
  for (int64_t i = 0; i < v.data.numel(); ++i) CHECK(r.data[i] == v.data[i]);

  Volume single = make_volume({1, 4, 5}, {1, 1, 1}, 12);
  CHECK(axial_slices(single).size() == 1);
}

TEST_CASE("volume validation rejects non-finite data and bad spacing") {
  Volume v = make_volume({2, 2, 2}, {1, 1, 1}, 1);
  v.data[3] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(validate_volume(v, "test"), DataError);
  Volume w = make_volume({2, 2, 2}, {0, 1, 1}, 1);
  CHECK_THROWS_AS(validate_volume(w, "test"), DataError);
}
