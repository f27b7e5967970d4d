#pragma once

// Independent reference implementations used only by tests. Each one is a
// deliberately naive computation kept separate from the library path it
// checks.

#include <cmath>
#include <complex>
#include <optional>
#include <queue>
#include <vector>

#include "udaseg/volume.hpp"

namespace oracles {

// Direct O(N^2) orthonormal 2-d DFT.
inline std::vector<std::complex<double>> dft2_ortho(const std::vector<double>& img, int64_t h,
                                                    int64_t w) {
  std::vector<std::complex<double>> out(static_cast<size_t>(h * w));
  const double tau = 2.0 * M_PI;
  for (int64_t ku = 0; ku < h; ++ku)
    for (int64_t kv = 0; kv < w; ++kv) {
      std::complex<double> acc(0, 0);
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
          double phase = -tau * (static_cast<double>(ku * y) / h + static_cast<double>(kv * x) / w);
          acc += img[y * w + x] * std::complex<double>(std::cos(phase), std::sin(phase));
        }
      out[ku * w + kv] = acc / std::sqrt(static_cast<double>(h * w));
    }
  return out;
}

// Brute-force all-pairs ASSD: surface voxels are foreground voxels with a
// six-connected background neighbour (border = background).
inline std::vector<std::array<int64_t, 3>> surface_points(const udaseg::LabelMap& m, int cls) {
  std::vector<std::array<int64_t, 3>> pts;
  auto fg = [&](int64_t z, int64_t y, int64_t x) {
    if (z < 0 || z >= m.nz() || y < 0 || y >= m.ny() || x < 0 || x >= m.nx()) return false;
    return m.at(z, y, x) == cls;
  };
  for (int64_t z = 0; z < m.nz(); ++z)
    for (int64_t y = 0; y < m.ny(); ++y)
      for (int64_t x = 0; x < m.nx(); ++x)
        if (fg(z, y, x) && (!fg(z - 1, y, x) || !fg(z + 1, y, x) || !fg(z, y - 1, x) ||
                            !fg(z, y + 1, x) || !fg(z, y, x - 1) || !fg(z, y, x + 1)))
          pts.push_back({z, y, x});
  return pts;
}

inline std::optional<double> assd_bruteforce(const udaseg::LabelMap& pred,
                                             const udaseg::LabelMap& gt, int cls,
                                             const udaseg::Spacing& sp) {
  auto a = surface_points(pred, cls);
  auto b = surface_points(gt, cls);
  if (a.empty() && b.empty()) return 0.0;
  if (a.empty() || b.empty()) return std::nullopt;
  auto nearest = [&](const std::array<int64_t, 3>& p,
                     const std::vector<std::array<int64_t, 3>>& set) {
    double best = 1e300;
    for (const auto& q : set) {
      double dz = (p[0] - q[0]) * sp.z, dy = (p[1] - q[1]) * sp.y, dx = (p[2] - q[2]) * sp.x;
      best = std::min(best, dz * dz + dy * dy + dx * dx);
    }
    return std::sqrt(best);
  };
  double sum = 0;
  for (const auto& p : a) sum += nearest(p, b);
  for (const auto& q : b) sum += nearest(q, a);
  return sum / static_cast<double>(a.size() + b.size());
}

inline double dice_setcount(const udaseg::LabelMap& a, const udaseg::LabelMap& b, int cls) {
  int64_t inter = 0, na = 0, nb = 0;
  for (int64_t i = 0; i < a.data.numel(); ++i) {
    bool pa = a.data[i] == cls, pb = b.data[i] == cls;
    inter += pa && pb;
    na += pa;
    nb += pb;
  }
  return (na + nb) == 0 ? 1.0 : 2.0 * inter / static_cast<double>(na + nb);
}

// Six-connected component count of one class.
inline int component_count(const udaseg::LabelMap& m, int cls) {
  const int64_t nz = m.nz(), ny = m.ny(), nx = m.nx();
  std::vector<char> seen(static_cast<size_t>(nz * ny * nx), 0);
  auto idx = [&](int64_t z, int64_t y, int64_t x) { return (z * ny + y) * nx + x; };
  int count = 0;
  for (int64_t z = 0; z < nz; ++z)
    for (int64_t y = 0; y < ny; ++y)
      for (int64_t x = 0; x < nx; ++x) {
        if (m.at(z, y, x) != cls || seen[idx(z, y, x)]) continue;
        ++count;
        std::queue<std::array<int64_t, 3>> q;
        q.push({z, y, x});
        seen[idx(z, y, x)] = 1;
        while (!q.empty()) {
          auto [cz, cy, cx] = q.front();
          q.pop();
          const int64_t d[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                   {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
          for (auto& dd : d) {
            int64_t pz = cz + dd[0], py = cy + dd[1], px = cx + dd[2];
            if (pz < 0 || pz >= nz || py < 0 || py >= ny || px < 0 || px >= nx) continue;
            if (m.at(pz, py, px) != cls || seen[idx(pz, py, px)]) continue;
            seen[idx(pz, py, px)] = 1;
            q.push({pz, py, px});
          }
        }
      }
  return count;
}

// Scalar-formula soft Dice + cross-entropy on probabilities/logits, written
// independently of the library implementation.
inline double dice_formula(const std::vector<double>& probs_by_class_voxel,
                           const std::vector<int>& labels, int k, double eps) {
  const size_t n = labels.size();
  double acc = 0;
  for (int c = 1; c < k; ++c) {
    double inter = 0, psum = 0, gsum = 0;
    for (size_t v = 0; v < n; ++v) {
      double p = probs_by_class_voxel[c * n + v];
      psum += p;
      if (labels[v] == c) {
        inter += p;
        gsum += 1;
      }
    }
    acc += (2 * inter + eps) / (psum + gsum + eps);
  }
  return 1.0 - acc / (k - 1);
}

inline double ce_formula(const std::vector<double>& logits_by_class_voxel,
                         const std::vector<int>& labels, int k) {
  const size_t n = labels.size();
  double acc = 0;
  for (size_t v = 0; v < n; ++v) {
    double z = 0, mx = -1e300;
    for (int c = 0; c < k; ++c) mx = std::max(mx, logits_by_class_voxel[c * n + v]);
    for (int c = 0; c < k; ++c) z += std::exp(logits_by_class_voxel[c * n + v] - mx);
    acc += std::log(z) - (logits_by_class_voxel[labels[v] * n + v] - mx);
  }
  return acc / n;
}

}  // namespace oracles
