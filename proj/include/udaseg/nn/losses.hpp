#pragma once

#include <cmath>

#include "udaseg/common.hpp"
#include "udaseg/nn/fft.hpp"
#include "udaseg/tensor.hpp"

namespace udaseg::nn {

template <typename S>
struct LossResult {
  double value = 0;
  Tensor<S> grad;  // w.r.t. the first argument
};

// Least-squares GAN objective: mean squared distance of the score grid to the
// real/fake target.
template <typename S>
LossResult<S> lsgan_loss(const Tensor<S>& scores, bool target_is_real) {
  const S t = target_is_real ? S(1) : S(0);
  const int64_t n = scores.numel();
  LossResult<S> r;
  r.grad = Tensor<S>::zeros_like(scores);
  double acc = 0;
  for (int64_t i = 0; i < n; ++i) {
    double d = scores[i] - t;
    acc += d * d;
    r.grad[i] = static_cast<S>(2.0 * d / n);
  }
  r.value = acc / n;
  return r;
}

// Mean absolute error; gradient w.r.t. pred.
template <typename S>
LossResult<S> l1_loss(const Tensor<S>& pred, const Tensor<S>& target) {
  if (!pred.same_shape(target)) throw DataError("l1_loss: shape mismatch");
  const int64_t n = pred.numel();
  LossResult<S> r;
  r.grad = Tensor<S>::zeros_like(pred);
  double acc = 0;
  for (int64_t i = 0; i < n; ++i) {
    double d = static_cast<double>(pred[i]) - target[i];
    acc += std::abs(d);
    r.grad[i] = static_cast<S>((d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) / n);
  }
  r.value = acc / n;
  return r;
}

enum class KspaceNorm { L1, L2 };

// Fourier-domain consistency loss. Each (n, c, z) plane is transformed with
// the orthonormal 2-d DFT; per plane the loss is the mean over frequency bins
// of |Re d| + |Im d| (L1) or |d|^2 (L2), then averaged over planes. With the
// orthonormal transform the L2 form equals the image-domain mean squared
// error (Parseval), which the tests assert.
template <typename S>
LossResult<S> kspace_loss(const Tensor<S>& pred, const Tensor<S>& target,
                          KspaceNorm norm = KspaceNorm::L1) {
  if (!pred.same_shape(target)) throw DataError("kspace_loss: shape mismatch");
  const size_t nd = pred.ndim();
  const int64_t h = pred.dim(nd - 2), w = pred.dim(nd - 1);
  const int64_t bins = h * w;
  const int64_t planes = pred.numel() / bins;
  LossResult<S> r;
  r.grad = Tensor<S>::zeros_like(pred);
  double total = 0;
  for (int64_t pl = 0; pl < planes; ++pl) {
    const S* pp = pred.data() + pl * bins;
    const S* tp = target.data() + pl * bins;
    auto fp = fft2_ortho(pp, h, w);
    auto ft = fft2_ortho(tp, h, w);
    std::vector<std::complex<S>> s(static_cast<size_t>(bins));
    double acc = 0;
    const double scale = 1.0 / (static_cast<double>(bins) * planes);
    for (int64_t k = 0; k < bins; ++k) {
      double re = fp[k].real() - ft[k].real();
      double im = fp[k].imag() - ft[k].imag();
      if (norm == KspaceNorm::L1) {
        acc += std::abs(re) + std::abs(im);
        s[k] = std::complex<S>(static_cast<S>((re > 0 ? 1 : (re < 0 ? -1 : 0)) * scale),
                               static_cast<S>((im > 0 ? 1 : (im < 0 ? -1 : 0)) * scale));
      } else {
        acc += re * re + im * im;
        s[k] = std::complex<S>(static_cast<S>(2 * re * scale), static_cast<S>(2 * im * scale));
      }
    }
    total += acc / bins;
    auto g = ifft2_ortho_real(s, h, w);
    S* gp = r.grad.data() + pl * bins;
    for (int64_t k = 0; k < bins; ++k) gp[k] += g[k];
  }
  r.value = total / planes;
  return r;
}

// Per-voxel softmax over the class axis of [N, K, Z, Y, X] logits.
template <typename S>
Tensor<S> softmax(const Tensor<S>& logits) {
  const int64_t n = logits.dim(0), k = logits.dim(1);
  const int64_t p = logits.numel() / (n * k);
  Tensor<S> probs = Tensor<S>::zeros_like(logits);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t v = 0; v < p; ++v) {
      const S* lp = logits.data() + i * k * p + v;
      S* pp = probs.data() + i * k * p + v;
      double mx = -1e300;
      for (int64_t c = 0; c < k; ++c) mx = std::max(mx, static_cast<double>(lp[c * p]));
      double z = 0;
      for (int64_t c = 0; c < k; ++c) z += std::exp(static_cast<double>(lp[c * p]) - mx);
      for (int64_t c = 0; c < k; ++c)
        pp[c * p] = static_cast<S>(std::exp(static_cast<double>(lp[c * p]) - mx) / z);
    }
  return probs;
}

constexpr double kDiceEps = 1e-5;

// Soft Dice loss over the foreground classes, aggregated jointly over the
// whole batch (batch-Dice): 1 - mean_c (2*sum(p*g)+eps)/(sum(p)+sum(g)+eps).
template <typename S>
double dice_loss_value(const Tensor<S>& probs, const Tensor<uint8_t>& labels,
                       double eps = kDiceEps) {
  const int64_t n = probs.dim(0), k = probs.dim(1);
  const int64_t p = probs.numel() / (n * k);
  if (labels.numel() != n * p) throw DataError("dice_loss: label shape mismatch");
  double mean_dice = 0;
  for (int64_t c = 1; c < k; ++c) {
    double inter = 0, psum = 0, gsum = 0;
    for (int64_t i = 0; i < n; ++i) {
      const S* pp = probs.data() + (i * k + c) * p;
      const uint8_t* lp = labels.data() + i * p;
      for (int64_t v = 0; v < p; ++v) {
        double pv = pp[v];
        psum += pv;
        if (lp[v] == c) {
          inter += pv;
          gsum += 1;
        }
      }
    }
    mean_dice += (2 * inter + eps) / (psum + gsum + eps);
  }
  return 1.0 - mean_dice / (k - 1);
}

// Multiclass cross-entropy, mean over voxels, computed from logits with a
// numerically stable log-sum-exp.
template <typename S>
double ce_loss_value(const Tensor<S>& logits, const Tensor<uint8_t>& labels) {
  const int64_t n = logits.dim(0), k = logits.dim(1);
  const int64_t p = logits.numel() / (n * k);
  if (labels.numel() != n * p) throw DataError("ce_loss: label shape mismatch");
  double acc = 0;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t v = 0; v < p; ++v) {
      const S* lp = logits.data() + i * k * p + v;
      uint8_t y = labels[i * p + v];
      if (y >= k) throw DataError("ce_loss: label out of range");
      double mx = -1e300;
      for (int64_t c = 0; c < k; ++c) mx = std::max(mx, static_cast<double>(lp[c * p]));
      double z = 0;
      for (int64_t c = 0; c < k; ++c) z += std::exp(static_cast<double>(lp[c * p]) - mx);
      acc += std::log(z) - (static_cast<double>(lp[y * p]) - mx);
    }
  return acc / (n * p);
}

template <typename S>
struct DiceCeResult {
  double total = 0, dice = 0, ce = 0;
  Tensor<S> grad;  // w.r.t. logits
};

// Equally weighted Dice + cross-entropy with the analytic gradient through
// the softmax. Gradient correctness is pinned by finite differences in the
// test suite.
template <typename S>
DiceCeResult<S> dice_ce_loss(const Tensor<S>& logits, const Tensor<uint8_t>& labels,
                             double eps = kDiceEps) {
  const int64_t n = logits.dim(0), k = logits.dim(1);
  const int64_t p = logits.numel() / (n * k);
  if (labels.numel() != n * p) throw DataError("dice_ce_loss: label shape mismatch");
  Tensor<S> probs = softmax(logits);

  DiceCeResult<S> r;
  r.grad = Tensor<S>::zeros_like(logits);
  const int64_t voxels = n * p;

  // Batch-Dice statistics per foreground class.
  std::vector<double> inter(k, 0), psum(k, 0), gsum(k, 0);
  for (int64_t c = 1; c < k; ++c)
    for (int64_t i = 0; i < n; ++i) {
      const S* pp = probs.data() + (i * k + c) * p;
      const uint8_t* lp = labels.data() + i * p;
      for (int64_t v = 0; v < p; ++v) {
        psum[c] += pp[v];
        if (lp[v] == c) {
          inter[c] += pp[v];
          gsum[c] += 1;
        }
      }
    }
  double mean_dice = 0;
  std::vector<double> denom(k, 0), dnum(k, 0);
  for (int64_t c = 1; c < k; ++c) {
    denom[c] = psum[c] + gsum[c] + eps;
    dnum[c] = 2 * inter[c] + eps;
    mean_dice += dnum[c] / denom[c];
  }
  r.dice = 1.0 - mean_dice / (k - 1);

  // d(dice)/d p_c(v) = -(1/|C|) * (2*g - dnum/denom) / denom ; background 0.
  // Chained through softmax together with the CE gradient.
  double ce_acc = 0;
  std::vector<double> q(static_cast<size_t>(k));
  for (int64_t i = 0; i < n; ++i) {
    const uint8_t* lp = labels.data() + i * p;
    for (int64_t v = 0; v < p; ++v) {
      const S* pp = probs.data() + i * k * p + v;
      uint8_t y = lp[v];
      if (y >= k) throw DataError("dice_ce_loss: label out of range");
      ce_acc += -std::log(std::max(1e-300, static_cast<double>(pp[y * p])));
      double qdotp = 0;
      for (int64_t c = 0; c < k; ++c) {
        double g = 0;
        if (c >= 1) {
          double gc = (y == c) ? 1.0 : 0.0;
          g = -(2.0 * gc - dnum[c] / denom[c]) / denom[c] / (k - 1);
        }
        q[c] = g;
        qdotp += g * pp[c * p];
      }
      S* gp = r.grad.data() + i * k * p + v;
      for (int64_t c = 0; c < k; ++c) {
        double pv = pp[c * p];
        double dice_part = pv * (q[c] - qdotp);
        double ce_part = (pv - ((y == c) ? 1.0 : 0.0)) / voxels;
        gp[c * p] = static_cast<S>(dice_part + ce_part);
      }
    }
  }
  r.ce = ce_acc / voxels;
  r.total = r.dice + r.ce;
  return r;
}

}  // namespace udaseg::nn
