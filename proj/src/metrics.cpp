#include "udaseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "udaseg/nifti.hpp"

namespace udaseg {

double dice_score(const LabelMap& pred, const LabelMap& gt, int class_id) {
  if (!pred.data.same_shape(gt.data)) throw DataError("dice_score: shape mismatch");
  int64_t inter = 0, np = 0, ng = 0;
  for (int64_t i = 0; i < pred.data.numel(); ++i) {
    bool a = pred.data[i] == class_id;
    bool b = gt.data[i] == class_id;
    inter += (a && b);
    np += a;
    ng += b;
  }
  if (np + ng == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
}

Tensor<uint8_t> surface_voxels(const LabelMap& mask, int class_id) {
  const int64_t nz = mask.nz(), ny = mask.ny(), nx = mask.nx();
  Tensor<uint8_t> surf({nz, ny, nx});
  auto fg = [&](int64_t z, int64_t y, int64_t x) {
    if (z < 0 || z >= nz || y < 0 || y >= ny || x < 0 || x >= nx) return false;
    return mask.at(z, y, x) == class_id;
  };
  for (int64_t z = 0; z < nz; ++z)
    for (int64_t y = 0; y < ny; ++y)
      for (int64_t x = 0; x < nx; ++x) {
        if (!fg(z, y, x)) continue;
        bool border = !fg(z - 1, y, x) || !fg(z + 1, y, x) || !fg(z, y - 1, x) ||
                      !fg(z, y + 1, x) || !fg(z, y, x - 1) || !fg(z, y, x + 1);
        surf[(z * ny + y) * nx + x] = border ? 1 : 0;
      }
  return surf;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1-d lower envelope of parabolas rooted at (i*s, f[i]); exact squared
// distances even for non-unit sample spacing s.
void dt1d(const double* f, int64_t n, double s, double* out, int64_t* v, double* z,
          double* fs) {
  for (int64_t i = 0; i < n; ++i) fs[i] = f[i];
  int64_t k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int64_t q = 1; q < n; ++q) {
    if (fs[q] == kInf) continue;
    double xq = q * s;
    while (true) {
      if (fs[v[k]] == kInf) {
        // drop seedless parabola
        if (k == 0) {
          v[0] = q;
          z[0] = -kInf;
          z[1] = kInf;
          break;
        }
        --k;
        continue;
      }
      double xv = v[k] * s;
      double inter = (fs[q] + xq * xq - fs[v[k]] - xv * xv) / (2 * xq - 2 * xv);
      if (inter <= z[k]) {
        --k;
        continue;
      }
      ++k;
      v[k] = q;
      z[k] = inter;
      z[k + 1] = kInf;
      break;
    }
  }
  if (fs[v[0]] == kInf) {  // no seeds in this line
    for (int64_t i = 0; i < n; ++i) out[i] = kInf;
    return;
  }
  k = 0;
  for (int64_t q = 0; q < n; ++q) {
    double xq = q * s;
    while (z[k + 1] < xq) ++k;
    double d = xq - v[k] * s;
    out[q] = d * d + fs[v[k]];
  }
}

}  // namespace

Tensor<double> distance_transform_sq(const Tensor<uint8_t>& seeds, const Spacing& spacing) {
  const int64_t nz = seeds.dim(0), ny = seeds.dim(1), nx = seeds.dim(2);
  Tensor<double> d({nz, ny, nx});
  for (int64_t i = 0; i < d.numel(); ++i) d[i] = seeds[i] ? 0.0 : kInf;

  int64_t maxn = std::max({nz, ny, nx});
  std::vector<double> line(maxn), out(maxn), z(maxn + 1), fs(maxn);
  std::vector<int64_t> v(maxn);

  // x axis
  for (int64_t zz = 0; zz < nz; ++zz)
    for (int64_t yy = 0; yy < ny; ++yy) {
      double* row = d.data() + (zz * ny + yy) * nx;
      dt1d(row, nx, spacing.x, out.data(), v.data(), z.data(), fs.data());
      std::copy_n(out.data(), nx, row);
    }
  // y axis
  for (int64_t zz = 0; zz < nz; ++zz)
    for (int64_t xx = 0; xx < nx; ++xx) {
      for (int64_t yy = 0; yy < ny; ++yy) line[yy] = d[(zz * ny + yy) * nx + xx];
      dt1d(line.data(), ny, spacing.y, out.data(), v.data(), z.data(), fs.data());
      for (int64_t yy = 0; yy < ny; ++yy) d[(zz * ny + yy) * nx + xx] = out[yy];
    }
  // z axis
  for (int64_t yy = 0; yy < ny; ++yy)
    for (int64_t xx = 0; xx < nx; ++xx) {
      for (int64_t zz = 0; zz < nz; ++zz) line[zz] = d[(zz * ny + yy) * nx + xx];
      dt1d(line.data(), nz, spacing.z, out.data(), v.data(), z.data(), fs.data());
      for (int64_t zz = 0; zz < nz; ++zz) d[(zz * ny + yy) * nx + xx] = out[zz];
    }
  return d;
}

std::optional<double> assd(const LabelMap& pred, const LabelMap& gt, int class_id,
                           const Spacing& spacing) {
  if (!pred.data.same_shape(gt.data)) throw DataError("assd: shape mismatch");
  if (!(spacing.z > 0 && spacing.y > 0 && spacing.x > 0))
    throw DataError("assd: spacing must be strictly positive");
  Tensor<uint8_t> sp = surface_voxels(pred, class_id);
  Tensor<uint8_t> sg = surface_voxels(gt, class_id);
  int64_t n_sp = 0, n_sg = 0;
  for (int64_t i = 0; i < sp.numel(); ++i) n_sp += sp[i];
  for (int64_t i = 0; i < sg.numel(); ++i) n_sg += sg[i];
  if (n_sp == 0 && n_sg == 0) return 0.0;
  if (n_sp == 0 || n_sg == 0) return std::nullopt;
  Tensor<double> d_to_g = distance_transform_sq(sg, spacing);
  Tensor<double> d_to_p = distance_transform_sq(sp, spacing);
  double sum = 0;
  for (int64_t i = 0; i < sp.numel(); ++i) {
    if (sp[i]) sum += std::sqrt(d_to_g[i]);
    if (sg[i]) sum += std::sqrt(d_to_p[i]);
  }
  return sum / static_cast<double>(n_sp + n_sg);
}

MetricsReport evaluate_dataset(const Dataset& preds, const Dataset& gts,
                               const std::vector<int>& classes) {
  MetricsReport report;
  report.prediction_source = preds.name;
  report.ground_truth_source = gts.name;
  for (const auto& g : gts.cases)
    if (g.label_kind == LabelKind::pseudo)
      throw DataError("evaluate_dataset: ground-truth case '" + g.case_id +
                      "' carries pseudo-labels; refusing to treat them as truth");
  for (const auto& p : preds.cases) {
    const CaseManifest* g = gts.find(p.case_id);
    if (!g) throw DataError("evaluate_dataset: no ground truth for case '" + p.case_id + "'");
    if (!p.label_path || !g->label_path)
      throw DataError("evaluate_dataset: case '" + p.case_id + "' lacks a label file");
    LabelMap lp = load_labelmap(*p.label_path);
    LabelMap lg = load_labelmap(*g->label_path);
    for (int cls : classes) {
      CaseMetrics m;
      m.case_id = p.case_id;
      m.class_id = cls;
      m.dice = dice_score(lp, lg, cls);
      m.assd_mm = assd(lp, lg, cls, lg.spacing);
      report.per_case.push_back(std::move(m));
    }
  }
  for (int cls : classes) {
    ClassAggregate agg;
    agg.class_id = cls;
    std::vector<double> dices, assds;
    for (const auto& m : report.per_case)
      if (m.class_id == cls) {
        dices.push_back(m.dice);
        if (m.assd_mm)
          assds.push_back(*m.assd_mm);
        else
          ++agg.assd_undefined;
      }
    auto mean_std = [](const std::vector<double>& v) {
      double mean = 0;
      for (double x : v) mean += x;
      mean /= v.empty() ? 1 : v.size();
      double var = 0;
      for (double x : v) var += (x - mean) * (x - mean);
      double std = v.size() > 1 ? std::sqrt(var / (v.size() - 1)) : 0.0;
      return std::pair<double, double>(mean, std);
    };
    agg.n = static_cast<int>(dices.size());
    std::tie(agg.dice_mean, agg.dice_std) = mean_std(dices);
    agg.assd_n = static_cast<int>(assds.size());
    std::tie(agg.assd_mean, agg.assd_std) = mean_std(assds);
    report.aggregates.push_back(agg);
  }
  return report;
}

namespace {
const char* class_name(int cls) {
  switch (cls) {
    case 0: return "background";
    case 1: return "VS";
    case 2: return "cochlea";
  }
  return "?";
}
}  // namespace

void write_metrics_csv(const MetricsReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "# classes: 0=background 1=VS 2=cochlea\n";
  out << "# predictions: " << report.prediction_source
      << "  ground_truth: " << report.ground_truth_source << "\n";
  out << "row,case_id,class,dice,assd_mm\n";
  char buf[64];
  for (const auto& m : report.per_case) {
    std::snprintf(buf, sizeof(buf), "%.17g", m.dice);
    out << "case," << m.case_id << ',' << m.class_id << ',' << buf << ',';
    if (m.assd_mm) {
      std::snprintf(buf, sizeof(buf), "%.17g", *m.assd_mm);
      out << buf;
    }
    out << '\n';
  }
  for (const auto& a : report.aggregates) {
    out << "aggregate,mean," << a.class_id << ',' << a.dice_mean << ',' << a.assd_mean << '\n';
    out << "aggregate,std," << a.class_id << ',' << a.dice_std << ',' << a.assd_std << '\n';
    out << "aggregate,n," << a.class_id << ',' << a.n << ',' << a.assd_n << '\n';
    out << "aggregate,assd_undefined," << a.class_id << ",," << a.assd_undefined << '\n';
  }
}

std::string format_metrics_table(const MetricsReport& report) {
  std::ostringstream os;
  os << "classes: 0=background 1=VS 2=cochlea\n";
  os << "predictions: " << report.prediction_source
     << "   ground truth: " << report.ground_truth_source << "\n";
  char line[256];
  for (const auto& a : report.aggregates) {
    std::snprintf(line, sizeof(line),
                  "%-9s  Dice %.4f +- %.4f (n=%d)   ASSD %.4f +- %.4f mm (n=%d, undefined=%d)\n",
                  class_name(a.class_id), a.dice_mean, a.dice_std, a.n, a.assd_mean, a.assd_std,
                  a.assd_n, a.assd_undefined);
    os << line;
  }
  if (!report.aggregates.empty() && report.aggregates.front().n == 1)
    os << "(single case: std reported as 0 with n=1)\n";
  return os.str();
}

}  // namespace udaseg
