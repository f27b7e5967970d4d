#include "udaseg/phantom.hpp"

#include <cmath>
#include <filesystem>

#include "udaseg/nifti.hpp"
#include "udaseg/rng.hpp"

namespace udaseg {

namespace fs = std::filesystem;

void validate(const PhantomSpec& spec) {
  for (int a = 0; a < 3; ++a) {
    if (spec.grid[a] < 8) throw ConfigError("phantom grid axis must be >= 8 voxels");
    if (!(spec.spacing[a] > 0)) throw ConfigError("phantom spacing must be strictly positive");
  }
  auto check_range = [](double lo, double hi, const char* what) {
    if (!(lo > 0) || !(hi >= lo))
      throw ConfigError(std::string("phantom ") + what + " radius range must be 0 < min <= max");
  };
  check_range(spec.vs_radius_min_mm, spec.vs_radius_max_mm, "VS");
  check_range(spec.cochlea_radius_min_mm, spec.cochlea_radius_max_mm, "cochlea");
  // Lesion must fit with >= 2 voxels of margin on the tightest axis.
  for (int a = 0; a < 3; ++a) {
    double extent = spec.grid[a] * spec.spacing[a];
    double margin = 2 * spec.spacing[a];
    if (spec.vs_radius_max_mm * 2 + 2 * margin >= extent)
      throw ConfigError("phantom VS radius range too large for grid axis " + std::to_string(a));
  }
  for (const auto* d : {&spec.domain_a, &spec.domain_b}) {
    const double m[4] = {d->background.mean, d->head.mean, d->vs.mean, d->cochlea.mean};
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j)
        if (std::abs(m[i] - m[j]) < 1e-6)
          throw ConfigError("phantom intensity table: tissue means must be distinct per domain");
    if (d->noise_sigma < 0) throw ConfigError("phantom noise sigma must be >= 0");
  }
}

namespace {

struct Vec3 {
  double z = 0, y = 0, x = 0;
};

struct Ellipsoid {
  Vec3 center;         // mm
  Vec3 radii;          // mm
  double rot[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};  // world -> body

  bool contains(const Vec3& p) const {
    double d[3] = {p.z - center.z, p.y - center.y, p.x - center.x};
    double b[3];
    for (int i = 0; i < 3; ++i)
      b[i] = rot[i][0] * d[0] + rot[i][1] * d[1] + rot[i][2] * d[2];
    double q = b[0] * b[0] / (radii.z * radii.z) + b[1] * b[1] / (radii.y * radii.y) +
               b[2] * b[2] / (radii.x * radii.x);
    return q <= 1.0;
  }
};

void set_rotation(Ellipsoid& e, double az, double ay, double ax) {
  double cz = std::cos(az), sz = std::sin(az);
  double cy = std::cos(ay), sy = std::sin(ay);
  double cx = std::cos(ax), sx = std::sin(ax);
  // composed elementary rotations; exact form is irrelevant, determinism is.
  double rz[3][3] = {{1, 0, 0}, {0, cz, -sz}, {0, sz, cz}};
  double ry[3][3] = {{cy, 0, sy}, {0, 1, 0}, {-sy, 0, cy}};
  double rx[3][3] = {{cx, -sx, 0}, {sx, cx, 0}, {0, 0, 1}};
  double tmp[3][3] = {};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) tmp[i][j] += ry[i][k] * rz[k][j];
  double out[3][3] = {};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) out[i][j] += rx[i][k] * tmp[k][j];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) e.rot[i][j] = out[i][j];
}

struct Anatomy {
  Ellipsoid head, vs, cochlea_left, cochlea_right;
};

Anatomy sample_anatomy(const PhantomSpec& spec, Rng& geo) {
  const double ez = spec.grid[0] * spec.spacing[0];
  const double ey = spec.grid[1] * spec.spacing[1];
  const double ex = spec.grid[2] * spec.spacing[2];
  Anatomy an;
  an.head.center = {0.5 * ez, 0.5 * ey, 0.5 * ex};
  an.head.radii = {0.42 * ez, 0.44 * ey, 0.44 * ex};

  auto fits = [&](const Ellipsoid& e) {
    double maxr = std::max({e.radii.z, e.radii.y, e.radii.x});
    double lo_z = 2 * spec.spacing[0], lo_y = 2 * spec.spacing[1], lo_x = 2 * spec.spacing[2];
    return e.center.z - maxr >= lo_z && e.center.z + maxr <= ez - lo_z &&
           e.center.y - maxr >= lo_y && e.center.y + maxr <= ey - lo_y &&
           e.center.x - maxr >= lo_x && e.center.x + maxr <= ex - lo_x;
  };

  // VS near the fixed canal locus on the right side of the head.
  const int kMaxTries = 32;
  bool placed = false;
  for (int t = 0; t < kMaxTries && !placed; ++t) {
    Ellipsoid vs;
    vs.center = {0.5 * ez + geo.uniform(-0.04, 0.04) * ez,
                 0.52 * ey + geo.uniform(-0.04, 0.04) * ey,
                 0.68 * ex + geo.uniform(-0.04, 0.04) * ex};
    vs.radii = {geo.uniform(spec.vs_radius_min_mm, spec.vs_radius_max_mm),
                geo.uniform(spec.vs_radius_min_mm, spec.vs_radius_max_mm),
                geo.uniform(spec.vs_radius_min_mm, spec.vs_radius_max_mm)};
    set_rotation(vs, geo.uniform(0, M_PI), geo.uniform(0, M_PI), geo.uniform(0, M_PI));
    if (fits(vs)) {
      an.vs = vs;
      placed = true;
    }
  }
  if (!placed)
    throw DataError("phantom: VS ellipsoid placement failed after " + std::to_string(kMaxTries) +
                    " attempts (radius range too large for grid margin of 2 voxels)");

  placed = false;
  for (int t = 0; t < kMaxTries && !placed; ++t) {
    double r1 = geo.uniform(spec.cochlea_radius_min_mm, spec.cochlea_radius_max_mm);
    double r2 = geo.uniform(spec.cochlea_radius_min_mm, spec.cochlea_radius_max_mm);
    Ellipsoid cl, cr;
    cl.center = {0.5 * ez + geo.uniform(-0.02, 0.02) * ez,
                 0.46 * ey + geo.uniform(-0.02, 0.02) * ey,
                 0.26 * ex + geo.uniform(-0.02, 0.02) * ex};
    cl.radii = {r1, r1, r1};
    cr.center = {0.5 * ez + geo.uniform(-0.02, 0.02) * ez,
                 0.46 * ey + geo.uniform(-0.02, 0.02) * ey,
                 0.74 * ex + geo.uniform(-0.02, 0.02) * ex};
    cr.radii = {r2, r2, r2};
    if (fits(cl) && fits(cr)) {
      an.cochlea_left = cl;
      an.cochlea_right = cr;
      placed = true;
    }
  }
  if (!placed)
    throw DataError("phantom: cochlea placement failed after " + std::to_string(kMaxTries) +
                    " attempts (radius range too large for grid margin of 2 voxels)");
  return an;
}

Volume render(const Tensor<uint8_t>& tissue, const PhantomSpec& spec,
              const DomainAppearance& app, Rng& rng) {
  Volume v;
  v.data = Tensor<float>({spec.grid[0], spec.grid[1], spec.grid[2]});
  v.spacing = {spec.spacing[0], spec.spacing[1], spec.spacing[2]};
  v.affine = affine_from_spacing(v.spacing);
  const TissueStats* stats[4] = {&app.background, &app.head, &app.vs, &app.cochlea};
  for (int64_t i = 0; i < v.data.numel(); ++i) {
    const TissueStats& t = *stats[tissue[i]];
    v.data[i] = static_cast<float>(rng.normal(t.mean, t.stddev) + rng.normal(0, app.noise_sigma));
  }
  return v;
}

}  // namespace

PhantomCase generate_case(const PhantomSpec& spec, uint64_t case_seed) {
  validate(spec);
  Rng base(mix_seed(spec.seed, case_seed));
  Rng geo = base.fork(0x67656f);
  Rng rng_a = base.fork(0x696e41);
  Rng rng_b = base.fork(0x696e42);

  Anatomy an = sample_anatomy(spec, geo);

  PhantomCase out;
  out.labels.data = Tensor<uint8_t>({spec.grid[0], spec.grid[1], spec.grid[2]});
  out.labels.spacing = {spec.spacing[0], spec.spacing[1], spec.spacing[2]};
  out.labels.affine = affine_from_spacing(out.labels.spacing);
  Tensor<uint8_t> tissue({spec.grid[0], spec.grid[1], spec.grid[2]});
  int64_t idx = 0;
  for (int64_t z = 0; z < spec.grid[0]; ++z)
    for (int64_t y = 0; y < spec.grid[1]; ++y)
      for (int64_t x = 0; x < spec.grid[2]; ++x, ++idx) {
        Vec3 p{(z + 0.5) * spec.spacing[0], (y + 0.5) * spec.spacing[1],
               (x + 0.5) * spec.spacing[2]};
        // Cochlea wins over VS where the tumour abuts it; head below both.
        if (an.cochlea_left.contains(p) || an.cochlea_right.contains(p)) {
          out.labels.data[idx] = LabelMap::kCochlea;
          tissue[idx] = 3;
        } else if (an.vs.contains(p)) {
          out.labels.data[idx] = LabelMap::kVS;
          tissue[idx] = 2;
        } else if (an.head.contains(p)) {
          tissue[idx] = 1;
        } else {
          tissue[idx] = 0;
        }
      }
  out.volume_a = render(tissue, spec, spec.domain_a, rng_a);
  out.volume_b = render(tissue, spec, spec.domain_b, rng_b);
  return out;
}

PhantomDatasets generate_dataset(const PhantomSpec& spec, int n_annotated_a, int n_unannotated_b,
                                 uint64_t seed, const std::string& out_dir) {
  validate(spec);
  if (n_annotated_a < 1 || n_unannotated_b < 1)
    throw ConfigError("generate_dataset: case counts must be >= 1");
  PhantomSpec eff = spec;
  eff.seed = mix_seed(spec.seed, seed);

  fs::create_directories(fs::path(out_dir) / "domainA");
  fs::create_directories(fs::path(out_dir) / "domainB");
  fs::create_directories(fs::path(out_dir) / "hidden");

  PhantomDatasets ds;
  ds.domain_a.name = "domainA";
  ds.domain_b.name = "domainB";
  ds.hidden_labels.name = "hidden";
  ds.hidden_labels.purpose = DatasetPurpose::evaluation;

  char id[16];
  for (int i = 0; i < n_annotated_a; ++i) {
    std::snprintf(id, sizeof(id), "A%03d", i);
    PhantomCase pc = generate_case(eff, static_cast<uint64_t>(i));
    pc.volume_a.case_id = id;
    pc.labels.case_id = id;
    std::string vol = (fs::path(out_dir) / "domainA" / (std::string(id) + "_vol.nii.gz")).string();
    std::string lab = (fs::path(out_dir) / "domainA" / (std::string(id) + "_lab.nii.gz")).string();
    save_volume(pc.volume_a, vol);
    save_labelmap(pc.labels, lab);
    ds.domain_a.cases.push_back(
        {id, Domain::ceT1, vol, lab, LabelKind::truth, std::nullopt});
  }
  for (int j = 0; j < n_unannotated_b; ++j) {
    std::snprintf(id, sizeof(id), "B%03d", j);
    // Disjoint case seeds: B continues after A (unpaired anatomies).
    PhantomCase pc = generate_case(eff, static_cast<uint64_t>(n_annotated_a + j));
    pc.volume_b.case_id = id;
    pc.labels.case_id = id;
    std::string vol = (fs::path(out_dir) / "domainB" / (std::string(id) + "_vol.nii.gz")).string();
    std::string lab = (fs::path(out_dir) / "hidden" / (std::string(id) + "_lab.nii.gz")).string();
    save_volume(pc.volume_b, vol);
    save_labelmap(pc.labels, lab);
    ds.domain_b.cases.push_back({id, Domain::hrT2_real, vol, std::nullopt, LabelKind::none,
                                 std::nullopt});
    ds.hidden_labels.cases.push_back(
        {id, Domain::hrT2_real, vol, lab, LabelKind::truth, std::nullopt});
  }
  save_dataset(ds.domain_a, (fs::path(out_dir) / "domainA" / "manifest.json").string());
  save_dataset(ds.domain_b, (fs::path(out_dir) / "domainB" / "manifest.json").string());
  save_dataset(ds.hidden_labels, (fs::path(out_dir) / "hidden" / "manifest.json").string());
  return ds;
}

}  // namespace udaseg
