#pragma once

#include <array>
#include <cmath>
#include <string>

#include "udaseg/common.hpp"
#include "udaseg/tensor.hpp"

namespace udaseg {

// Voxel spacing in millimetres, ordered (sz, sy, sx) to match the (z, y, x)
// data layout.
struct Spacing {
  double z = 1.0, y = 1.0, x = 1.0;
  bool operator==(const Spacing&) const = default;
  double operator[](int i) const { return i == 0 ? z : (i == 1 ? y : x); }
};

// Voxel-to-world affine carried through IO unmodified (row-major 4x4).
struct Affine {
  std::array<double, 16> m{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
  bool operator==(const Affine&) const = default;
};

inline Affine affine_from_spacing(const Spacing& s) {
  Affine a;
  a.m[0] = s.x;
  a.m[5] = s.y;
  a.m[10] = s.z;
  return a;
}

// 3-d scalar image, shape (z, y, x).
struct Volume {
  Tensor<float> data;
  Spacing spacing;
  Affine affine;
  std::string case_id;

  int64_t nz() const { return data.dim(0); }
  int64_t ny() const { return data.dim(1); }
  int64_t nx() const { return data.dim(2); }
  float& at(int64_t z, int64_t y, int64_t x) { return data[(z * ny() + y) * nx() + x]; }
  float at(int64_t z, int64_t y, int64_t x) const { return data[(z * ny() + y) * nx() + x]; }
};

// 3-d class-id mask aligned to a Volume. Classes: 0 background, 1 VS,
// 2 cochlea (fixed project-wide).
struct LabelMap {
  Tensor<uint8_t> data;
  Spacing spacing;
  Affine affine;
  std::string case_id;

  static constexpr int kClasses = 3;
  static constexpr uint8_t kBackground = 0;
  static constexpr uint8_t kVS = 1;
  static constexpr uint8_t kCochlea = 2;

  int64_t nz() const { return data.dim(0); }
  int64_t ny() const { return data.dim(1); }
  int64_t nx() const { return data.dim(2); }
  uint8_t& at(int64_t z, int64_t y, int64_t x) { return data[(z * ny() + y) * nx() + x]; }
  uint8_t at(int64_t z, int64_t y, int64_t x) const { return data[(z * ny() + y) * nx() + x]; }
};

inline void validate_volume(const Volume& v, const std::string& context) {
  if (v.data.ndim() != 3) throw DataError(context + ": expected 3 axes");
  for (size_t i = 0; i < 3; ++i)
    if (v.data.dim(i) < 1) throw DataError(context + ": empty axis");
  if (!(v.spacing.z > 0 && v.spacing.y > 0 && v.spacing.x > 0))
    throw DataError(context + ": spacing components must be strictly positive");
  for (int64_t i = 0; i < v.data.numel(); ++i)
    if (!std::isfinite(v.data[i])) throw DataError(context + ": non-finite intensity at linear index " + std::to_string(i));
}

inline void validate_labelmap(const LabelMap& l, const std::string& context) {
  if (l.data.ndim() != 3) throw DataError(context + ": expected 3 axes");
  for (int64_t i = 0; i < l.data.numel(); ++i)
    if (l.data[i] >= LabelMap::kClasses)
      throw DataError(context + ": label value " + std::to_string(int(l.data[i])) +
                      " outside {0,1,2} at linear index " + std::to_string(i));
}

}  // namespace udaseg
