#pragma once

#include <array>
#include <string>

#include "udaseg/manifest.hpp"
#include "udaseg/volume.hpp"

namespace udaseg {

struct TissueStats {
  double mean = 0, stddev = 0;
};

// Per-domain rendering: one intensity distribution per tissue class plus a
// global additive noise level.
struct DomainAppearance {
  TissueStats background{0.05, 0.02};
  TissueStats head{0.35, 0.03};
  TissueStats vs{0.95, 0.04};
  TissueStats cochlea{0.75, 0.04};
  double noise_sigma = 0.02;
};

// Two-contrast head phantom: a head ellipsoid, one VS ellipsoid near a fixed
// canal locus, two bilateral cochlea spheres. Domain A renders VS
// hyperintense; domain B uses a different mapping plus stronger noise.
struct PhantomSpec {
  std::array<int64_t, 3> grid{32, 96, 96};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  double vs_radius_min_mm = 4.0, vs_radius_max_mm = 9.0;
  double cochlea_radius_min_mm = 2.0, cochlea_radius_max_mm = 3.5;
  DomainAppearance domain_a;
  DomainAppearance domain_b{.background = {0.05, 0.02},
                            .head = {0.60, 0.04},
                            .vs = {0.22, 0.04},
                            .cochlea = {0.88, 0.04},
                            .noise_sigma = 0.05};
  uint64_t seed = 0;
};

void validate(const PhantomSpec& spec);

struct PhantomCase {
  Volume volume_a;  // contrast A (ceT1-like)
  Volume volume_b;  // contrast B (hrT2-like), same anatomy
  LabelMap labels;  // 1 = VS, 2 = cochlea
};

// Deterministic in (spec, case_seed): same inputs give bitwise-identical
// output. Throws DataError naming the violated constraint when the lesion
// cannot be placed.
PhantomCase generate_case(const PhantomSpec& spec, uint64_t case_seed);

struct PhantomDatasets {
  Dataset domain_a;       // annotated ceT1-like cases
  Dataset domain_b;       // unannotated hrT2-like cases
  Dataset hidden_labels;  // B ground truth, evaluation-only
};

// Writes domainA/, domainB/ and hidden/ (volumes, labels, manifests) under
// out_dir. A and B cases come from disjoint case seeds (unpaired regime).
PhantomDatasets generate_dataset(const PhantomSpec& spec, int n_annotated_a, int n_unannotated_b,
                                 uint64_t seed, const std::string& out_dir);

}  // namespace udaseg
