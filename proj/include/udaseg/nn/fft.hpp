#pragma once

#include <complex>
#include <unsupported/Eigen/FFT>
#include <vector>

#include "udaseg/tensor.hpp"

namespace udaseg::nn {

// Orthonormal (unitary) 2-d DFT of a real H x W image. With the 1/sqrt(HW)
// scaling the transform preserves the l2 norm, which the Parseval check in
// the tests relies on.
template <typename S>
std::vector<std::complex<S>> fft2_ortho(const S* img, int64_t h, int64_t w) {
  Eigen::FFT<S> fft;
  std::vector<std::complex<S>> out(static_cast<size_t>(h * w));
  std::vector<std::complex<S>> row_in(static_cast<size_t>(w)), row_out(static_cast<size_t>(w));
  for (int64_t r = 0; r < h; ++r) {
    for (int64_t c = 0; c < w; ++c) row_in[c] = std::complex<S>(img[r * w + c], S(0));
    fft.fwd(row_out, row_in);
    for (int64_t c = 0; c < w; ++c) out[r * w + c] = row_out[c];
  }
  std::vector<std::complex<S>> col_in(static_cast<size_t>(h)), col_out(static_cast<size_t>(h));
  for (int64_t c = 0; c < w; ++c) {
    for (int64_t r = 0; r < h; ++r) col_in[r] = out[r * w + c];
    fft.fwd(col_out, col_in);
    for (int64_t r = 0; r < h; ++r) out[r * w + c] = col_out[r];
  }
  S scale = S(1) / std::sqrt(static_cast<S>(h * w));
  for (auto& v : out) v *= scale;
  return out;
}

// Adjoint of fft2_ortho (equals its inverse since the transform is unitary),
// restricted to the real part. Used to route gradients back to image space.
template <typename S>
std::vector<S> ifft2_ortho_real(const std::vector<std::complex<S>>& spec, int64_t h, int64_t w) {
  Eigen::FFT<S> fft;
  std::vector<std::complex<S>> tmp(spec);
  std::vector<std::complex<S>> col_in(static_cast<size_t>(h)), col_out(static_cast<size_t>(h));
  for (int64_t c = 0; c < w; ++c) {
    for (int64_t r = 0; r < h; ++r) col_in[r] = tmp[r * w + c];
    fft.inv(col_out, col_in);  // includes 1/h scaling
    for (int64_t r = 0; r < h; ++r) tmp[r * w + c] = col_out[r];
  }
  std::vector<std::complex<S>> row_in(static_cast<size_t>(w)), row_out(static_cast<size_t>(w));
  std::vector<S> out(static_cast<size_t>(h * w));
  S scale = std::sqrt(static_cast<S>(h * w));  // undo 1/(hw), apply 1/sqrt(hw)
  for (int64_t r = 0; r < h; ++r) {
    for (int64_t c = 0; c < w; ++c) row_in[c] = tmp[r * w + c];
    fft.inv(row_out, row_in);
    for (int64_t c = 0; c < w; ++c) out[r * w + c] = row_out[c].real() * scale;
  }
  return out;
}

}  // namespace udaseg::nn
