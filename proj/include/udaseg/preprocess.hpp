#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "udaseg/volume.hpp"

namespace udaseg {

// Affine rescale so that min(out) = lo and max(out) = hi. A constant input
// maps every voxel to the midpoint (lo + hi) / 2, which keeps batch pipelines
// alive on blank slices.
inline Volume minmax_normalize(const Volume& v, float lo, float hi) {
  if (!(lo < hi)) throw DataError("minmax_normalize: lo must be < hi");
  Volume out = v;
  float mn = v.data.array().minCoeff();
  float mx = v.data.array().maxCoeff();
  if (mx <= mn) {
    out.data.fill(0.5f * (lo + hi));
    return out;
  }
  float scale = (hi - lo) / (mx - mn);
  out.data.array() = (v.data.array() - mn) * scale + lo;
  return out;
}

inline std::array<int64_t, 3> resampled_shape(const std::array<int64_t, 3>& in_shape,
                                              const Spacing& in, const Spacing& target) {
  std::array<int64_t, 3> out;
  for (int a = 0; a < 3; ++a) {
    double n = std::round(static_cast<double>(in_shape[a]) * in[a] / target[a]);
    out[a] = std::max<int64_t>(1, static_cast<int64_t>(n));
  }
  return out;
}

namespace detail {

// Source coordinate of output voxel i under center-aligned resampling.
inline double src_coord(int64_t i, double ratio) {
  if (ratio == 1.0) return static_cast<double>(i);
  return (static_cast<double>(i) + 0.5) * ratio - 0.5;
}

}  // namespace detail

// Trilinear resampling with clamp-to-edge boundary handling.
inline Volume resample(const Volume& v, const Spacing& target) {
  if (!(target.z > 0 && target.y > 0 && target.x > 0))
    throw DataError("resample: target spacing must be strictly positive");
  auto shp = resampled_shape({v.nz(), v.ny(), v.nx()}, v.spacing, target);
  Volume out;
  out.data = Tensor<float>({shp[0], shp[1], shp[2]});
  out.spacing = target;
  out.affine = v.affine;  // affine is pass-through metadata; spacing governs geometry
  out.case_id = v.case_id;
  double rz = target.z / v.spacing.z, ry = target.y / v.spacing.y, rx = target.x / v.spacing.x;
  auto clampi = [](int64_t i, int64_t n) { return std::clamp<int64_t>(i, 0, n - 1); };
  for (int64_t z = 0; z < shp[0]; ++z) {
    double fz = detail::src_coord(z, rz);
    int64_t z0 = static_cast<int64_t>(std::floor(fz));
    double wz = fz - z0;
    int64_t za = clampi(z0, v.nz()), zb = clampi(z0 + 1, v.nz());
    for (int64_t y = 0; y < shp[1]; ++y) {
      double fy = detail::src_coord(y, ry);
      int64_t y0 = static_cast<int64_t>(std::floor(fy));
      double wy = fy - y0;
      int64_t ya = clampi(y0, v.ny()), yb = clampi(y0 + 1, v.ny());
      for (int64_t x = 0; x < shp[2]; ++x) {
        double fx = detail::src_coord(x, rx);
        int64_t x0 = static_cast<int64_t>(std::floor(fx));
        double wx = fx - x0;
        int64_t xa = clampi(x0, v.nx()), xb = clampi(x0 + 1, v.nx());
        double c00 = v.at(za, ya, xa) * (1 - wx) + v.at(za, ya, xb) * wx;
        double c01 = v.at(za, yb, xa) * (1 - wx) + v.at(za, yb, xb) * wx;
        double c10 = v.at(zb, ya, xa) * (1 - wx) + v.at(zb, ya, xb) * wx;
        double c11 = v.at(zb, yb, xa) * (1 - wx) + v.at(zb, yb, xb) * wx;
        double c0 = c00 * (1 - wy) + c01 * wy;
        double c1 = c10 * (1 - wy) + c11 * wy;
        out.at(z, y, x) = static_cast<float>(c0 * (1 - wz) + c1 * wz);
      }
    }
  }
  return out;
}

// Nearest-neighbour resampling for label maps.
inline LabelMap resample_labels(const LabelMap& l, const Spacing& target) {
  if (!(target.z > 0 && target.y > 0 && target.x > 0))
    throw DataError("resample_labels: target spacing must be strictly positive");
  auto shp = resampled_shape({l.nz(), l.ny(), l.nx()}, l.spacing, target);
  LabelMap out;
  out.data = Tensor<uint8_t>({shp[0], shp[1], shp[2]});
  out.spacing = target;
  out.affine = l.affine;
  out.case_id = l.case_id;
  double rz = target.z / l.spacing.z, ry = target.y / l.spacing.y, rx = target.x / l.spacing.x;
  auto nearest = [](double f, int64_t n) {
    return std::clamp<int64_t>(static_cast<int64_t>(std::llround(f)), 0, n - 1);
  };
  for (int64_t z = 0; z < shp[0]; ++z) {
    int64_t zi = nearest(detail::src_coord(z, rz), l.nz());
    for (int64_t y = 0; y < shp[1]; ++y) {
      int64_t yi = nearest(detail::src_coord(y, ry), l.ny());
      for (int64_t x = 0; x < shp[2]; ++x)
        out.at(z, y, x) = l.at(zi, yi, nearest(detail::src_coord(x, rx), l.nx()));
    }
  }
  return out;
}

// Patch of exactly `size` centred on `center`; out-of-bounds voxels are zero.
template <typename S>
Tensor<S> extract_patch(const Tensor<S>& vol, const std::array<int64_t, 3>& center,
                        const std::array<int64_t, 3>& size) {
  for (int a = 0; a < 3; ++a)
    if (size[a] < 1) throw DataError("extract_patch: size components must be >= 1");
  Tensor<S> patch({size[0], size[1], size[2]});
  std::array<int64_t, 3> n{vol.dim(0), vol.dim(1), vol.dim(2)};
  std::array<int64_t, 3> start;
  for (int a = 0; a < 3; ++a) start[a] = center[a] - size[a] / 2;
  for (int64_t z = 0; z < size[0]; ++z) {
    int64_t zi = start[0] + z;
    if (zi < 0 || zi >= n[0]) continue;
    for (int64_t y = 0; y < size[1]; ++y) {
      int64_t yi = start[1] + y;
      if (yi < 0 || yi >= n[1]) continue;
      int64_t x0 = std::max<int64_t>(0, -start[2]);
      int64_t x1 = std::min<int64_t>(size[2], n[2] - start[2]);
      for (int64_t x = x0; x < x1; ++x)
        patch[(z * size[1] + y) * size[2] + x] = vol[(zi * n[1] + yi) * n[2] + (start[2] + x)];
    }
  }
  return patch;
}

// Writes `patch` back at the same placement; out-of-bounds parts are dropped.
template <typename S>
void paste_patch(Tensor<S>& vol, const Tensor<S>& patch, const std::array<int64_t, 3>& center) {
  std::array<int64_t, 3> size{patch.dim(0), patch.dim(1), patch.dim(2)};
  std::array<int64_t, 3> n{vol.dim(0), vol.dim(1), vol.dim(2)};
  std::array<int64_t, 3> start;
  for (int a = 0; a < 3; ++a) start[a] = center[a] - size[a] / 2;
  for (int64_t z = 0; z < size[0]; ++z) {
    int64_t zi = start[0] + z;
    if (zi < 0 || zi >= n[0]) continue;
    for (int64_t y = 0; y < size[1]; ++y) {
      int64_t yi = start[1] + y;
      if (yi < 0 || yi >= n[1]) continue;
      int64_t x0 = std::max<int64_t>(0, -start[2]);
      int64_t x1 = std::min<int64_t>(size[2], n[2] - start[2]);
      for (int64_t x = x0; x < x1; ++x)
        vol[(zi * n[1] + yi) * n[2] + (start[2] + x)] = patch[(z * size[1] + y) * size[2] + x];
    }
  }
}

// Slices along z in index order.
inline std::vector<Tensor<float>> axial_slices(const Volume& v) {
  std::vector<Tensor<float>> out;
  out.reserve(static_cast<size_t>(v.nz()));
  int64_t plane = v.ny() * v.nx();
  for (int64_t z = 0; z < v.nz(); ++z) {
    Tensor<float> s({v.ny(), v.nx()});
    std::copy_n(v.data.data() + z * plane, plane, s.data());
    out.push_back(std::move(s));
  }
  return out;
}

// Inverse of axial_slices; metadata is taken from `like`.
inline Volume restack_slices(const std::vector<Tensor<float>>& slices, const Volume& like) {
  if (slices.empty()) throw DataError("restack_slices: no slices");
  int64_t ny = slices[0].dim(0), nx = slices[0].dim(1);
  Volume v;
  v.data = Tensor<float>({static_cast<int64_t>(slices.size()), ny, nx});
  for (size_t z = 0; z < slices.size(); ++z) {
    if (slices[z].dim(0) != ny || slices[z].dim(1) != nx)
      throw DataError("restack_slices: inconsistent slice shapes");
    std::copy_n(slices[z].data(), ny * nx, v.data.data() + static_cast<int64_t>(z) * ny * nx);
  }
  v.spacing = like.spacing;
  v.affine = like.affine;
  v.case_id = like.case_id;
  return v;
}

}  // namespace udaseg
