#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "udaseg/rng.hpp"
#include "udaseg/tensor.hpp"

namespace udaseg::nn {

using udaseg::Rng;
using udaseg::Tensor;

// Learnable tensor with its gradient accumulator.
template <typename S>
struct Param {
  std::string name;
  Tensor<S> value;
  Tensor<S> grad;

  void init_shape(std::vector<int64_t> shape) {
    value = Tensor<S>(shape);
    grad = Tensor<S>(std::move(shape));
  }
};

// Saved activations for one application of a module. Every forward pushes in
// layer order; the matching backward pops in exact reverse order, so one
// module can be applied several times per step as long as each application
// gets its own tape.
template <typename S>
struct Tape {
  std::vector<Tensor<S>> stack;

  void push(Tensor<S> t) { stack.push_back(std::move(t)); }
  Tensor<S> pop() {
    Tensor<S> t = std::move(stack.back());
    stack.pop_back();
    return t;
  }
  bool empty() const { return stack.empty(); }
};

template <typename S>
class Module {
 public:
  virtual ~Module() = default;
  // x is [N, C, Z, Y, X]; 2-d data travels with Z = 1.
  virtual Tensor<S> forward(const Tensor<S>& x, Tape<S>& tape) = 0;
  // Returns the gradient w.r.t. the input. When accum_param_grads is false the
  // pass only routes gradients through (used for frozen discriminators).
  virtual Tensor<S> backward(const Tensor<S>& gy, Tape<S>& tape, bool accum_param_grads) = 0;
  virtual void collect_params(std::vector<Param<S>*>& out) {}
};

using Triple = std::array<int64_t, 3>;

inline int64_t conv_out_dim(int64_t in, int64_t k, int64_t s, int64_t p) {
  return (in + 2 * p - k) / s + 1;
}

namespace detail {

// Unfolds x [C, Z, Y, X] into col [C*Kz*Ky*Kx, P] for GEMM-based convolution.
template <typename S>
void im2col(const S* x, const std::array<int64_t, 4>& xs, const Triple& k, const Triple& st,
            const Triple& pad, const Triple& os, S* col) {
  const int64_t C = xs[0], Z = xs[1], Y = xs[2], X = xs[3];
  const int64_t Zo = os[0], Yo = os[1], Xo = os[2];
  S* dst = col;
  for (int64_t c = 0; c < C; ++c)
    for (int64_t dz = 0; dz < k[0]; ++dz)
      for (int64_t dy = 0; dy < k[1]; ++dy)
        for (int64_t dx = 0; dx < k[2]; ++dx)
          for (int64_t zo = 0; zo < Zo; ++zo) {
            int64_t zi = zo * st[0] - pad[0] + dz;
            if (zi < 0 || zi >= Z) {
              std::fill(dst, dst + Yo * Xo, S(0));
              dst += Yo * Xo;
              continue;
            }
            const S* xz = x + (c * Z + zi) * Y * X;
            for (int64_t yo = 0; yo < Yo; ++yo) {
              int64_t yi = yo * st[1] - pad[1] + dy;
              if (yi < 0 || yi >= Y) {
                std::fill(dst, dst + Xo, S(0));
                dst += Xo;
                continue;
              }
              const S* xy = xz + yi * X;
              int64_t xi = dx - pad[2];
              if (st[2] == 1) {
                int64_t x0 = std::max<int64_t>(0, -xi);
                int64_t x1 = std::min<int64_t>(Xo, X - xi);
                if (x0 > 0) std::fill(dst, dst + std::min(x0, Xo), S(0));
                if (x1 > x0) std::copy(xy + xi + x0, xy + xi + x1, dst + x0);
                if (x1 < Xo) std::fill(dst + std::max(x0, x1), dst + Xo, S(0));
                dst += Xo;
              } else {
                for (int64_t xo = 0; xo < Xo; ++xo, xi += st[2])
                  *dst++ = (xi >= 0 && xi < X) ? xy[xi] : S(0);
              }
            }
          }
}

// Adjoint of im2col: scatter-adds col back into x.
template <typename S>
void col2im(const S* col, const std::array<int64_t, 4>& xs, const Triple& k, const Triple& st,
            const Triple& pad, const Triple& os, S* x) {
  const int64_t C = xs[0], Z = xs[1], Y = xs[2], X = xs[3];
  const int64_t Zo = os[0], Yo = os[1], Xo = os[2];
  const S* src = col;
  for (int64_t c = 0; c < C; ++c)
    for (int64_t dz = 0; dz < k[0]; ++dz)
      for (int64_t dy = 0; dy < k[1]; ++dy)
        for (int64_t dx = 0; dx < k[2]; ++dx)
          for (int64_t zo = 0; zo < Zo; ++zo) {
            int64_t zi = zo * st[0] - pad[0] + dz;
            if (zi < 0 || zi >= Z) {
              src += Yo * Xo;
              continue;
            }
            S* xz = x + (c * Z + zi) * Y * X;
            for (int64_t yo = 0; yo < Yo; ++yo) {
              int64_t yi = yo * st[1] - pad[1] + dy;
              if (yi < 0 || yi >= Y) {
                src += Xo;
                continue;
              }
              S* xy = xz + yi * X;
              int64_t xi = dx - pad[2];
              for (int64_t xo = 0; xo < Xo; ++xo, xi += st[2], ++src)
                if (xi >= 0 && xi < X) xy[xi] += *src;
            }
          }
}

}  // namespace detail

template <typename S>
class Conv : public Module<S> {
 public:
  Conv(std::string name, int64_t in_c, int64_t out_c, Triple kernel, Triple stride, Triple pad)
      : in_c_(in_c), out_c_(out_c), kernel_(kernel), stride_(stride), pad_(pad) {
    k_ = kernel[0] * kernel[1] * kernel[2];
    w_.name = name + ".w";
    w_.init_shape({out_c, in_c, kernel[0], kernel[1], kernel[2]});
    b_.name = name + ".b";
    b_.init_shape({out_c});
  }

  void init(Rng& rng) {
    // He initialisation with LeakyReLU gain.
    double std = std::sqrt(2.0 / static_cast<double>(in_c_ * k_));
    for (int64_t i = 0; i < w_.value.numel(); ++i) w_.value[i] = static_cast<S>(rng.normal() * std);
    b_.value.zero();
  }

  Triple out_spatial(const Triple& in) const {
    return {conv_out_dim(in[0], kernel_[0], stride_[0], pad_[0]),
            conv_out_dim(in[1], kernel_[1], stride_[1], pad_[1]),
            conv_out_dim(in[2], kernel_[2], stride_[2], pad_[2])};
  }

  Tensor<S> forward(const Tensor<S>& x, Tape<S>& tape) override {
    const int64_t n = x.dim(0);
    Triple in{x.dim(2), x.dim(3), x.dim(4)};
    Triple os = out_spatial(in);
    const int64_t p = os[0] * os[1] * os[2];
    Tensor<S> y({n, out_c_, os[0], os[1], os[2]});
    col_.resize(static_cast<size_t>(in_c_ * k_ * p));
    auto w = w_.value.matrix(out_c_, in_c_ * k_);
    for (int64_t i = 0; i < n; ++i) {
      detail::im2col(x.data() + i * in_c_ * in[0] * in[1] * in[2],
                     {in_c_, in[0], in[1], in[2]}, kernel_, stride_, pad_, os, col_.data());
      Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> col(
          col_.data(), in_c_ * k_, p);
      Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> out(
          y.data() + i * out_c_ * p, out_c_, p);
      out.noalias() = w * col;
      out.colwise() += b_.value.matrix(out_c_, 1).col(0);
    }
    tape.push(x);
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy, Tape<S>& tape, bool accum) override {
    Tensor<S> x = tape.pop();
    const int64_t n = x.dim(0);
    Triple in{x.dim(2), x.dim(3), x.dim(4)};
    Triple os{gy.dim(2), gy.dim(3), gy.dim(4)};
    const int64_t p = os[0] * os[1] * os[2];
    Tensor<S> gx = Tensor<S>::zeros_like(x);
    col_.resize(static_cast<size_t>(in_c_ * k_ * p));
    gcol_.resize(col_.size());
    auto w = w_.value.matrix(out_c_, in_c_ * k_);
    auto gw = w_.grad.matrix(out_c_, in_c_ * k_);
    for (int64_t i = 0; i < n; ++i) {
      Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> g(
          gy.data() + i * out_c_ * p, out_c_, p);
      if (accum) {
        detail::im2col(x.data() + i * in_c_ * in[0] * in[1] * in[2],
                       {in_c_, in[0], in[1], in[2]}, kernel_, stride_, pad_, os, col_.data());
        Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> col(
            col_.data(), in_c_ * k_, p);
        gw.noalias() += g * col.transpose();
        // Fixed-order bias reduction; a vectorized redux would round
        // differently depending on buffer alignment.
        for (int64_t co = 0; co < out_c_; ++co) {
          double acc = 0;
          const S* gp = gy.data() + (i * out_c_ + co) * p;
          for (int64_t v = 0; v < p; ++v) acc += gp[v];
          b_.grad[co] += static_cast<S>(acc);
        }
      }
      Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gcol(
          gcol_.data(), in_c_ * k_, p);
      gcol.noalias() = w.transpose() * g;
      detail::col2im(gcol_.data(), {in_c_, in[0], in[1], in[2]}, kernel_, stride_, pad_, os,
                     gx.data() + i * in_c_ * in[0] * in[1] * in[2]);
    }
    return gx;
  }

  void collect_params(std::vector<Param<S>*>& out) override {
    out.push_back(&w_);
    out.push_back(&b_);
  }

 private:
  int64_t in_c_, out_c_, k_;
  Triple kernel_, stride_, pad_;
  Param<S> w_, b_;
  std::vector<S> col_, gcol_;
};

// Transposed convolution with kernel == stride (disjoint output blocks),
// the upsampling used throughout the decoders.
template <typename S>
class ConvTranspose : public Module<S> {
 public:
  ConvTranspose(std::string name, int64_t in_c, int64_t out_c, Triple factor)
      : in_c_(in_c), out_c_(out_c), factor_(factor) {
    k_ = factor[0] * factor[1] * factor[2];
    w_.name = name + ".w";
    w_.init_shape({in_c, out_c, factor[0], factor[1], factor[2]});
    b_.name = name + ".b";
    b_.init_shape({out_c});
  }

  void init(Rng& rng) {
    double std = std::sqrt(2.0 / static_cast<double>(in_c_ * k_));
    for (int64_t i = 0; i < w_.value.numel(); ++i) w_.value[i] = static_cast<S>(rng.normal() * std);
    b_.value.zero();
  }

  Tensor<S> forward(const Tensor<S>& x, Tape<S>& tape) override {
    const int64_t n = x.dim(0);
    Triple in{x.dim(2), x.dim(3), x.dim(4)};
    Triple os{in[0] * factor_[0], in[1] * factor_[1], in[2] * factor_[2]};
    const int64_t pin = in[0] * in[1] * in[2];
    Tensor<S> y({n, out_c_, os[0], os[1], os[2]});
    y.zero();
    col_.resize(static_cast<size_t>(out_c_ * k_ * pin));
    auto w = w_.value.matrix(in_c_, out_c_ * k_);
    for (int64_t i = 0; i < n; ++i) {
      Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> xm(
          x.data() + i * in_c_ * pin, in_c_, pin);
      Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> col(
          col_.data(), out_c_ * k_, pin);
      col.noalias() = w.transpose() * xm;
      S* yi = y.data() + i * out_c_ * os[0] * os[1] * os[2];
      detail::col2im(col_.data(), {out_c_, os[0], os[1], os[2]}, factor_, factor_, {0, 0, 0}, in,
                     yi);
      Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> ym(
          yi, out_c_, os[0] * os[1] * os[2]);
      ym.colwise() += b_.value.matrix(out_c_, 1).col(0);
    }
    tape.push(x);
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy, Tape<S>& tape, bool accum) override {
    Tensor<S> x = tape.pop();
    const int64_t n = x.dim(0);
    Triple in{x.dim(2), x.dim(3), x.dim(4)};
    Triple os{gy.dim(2), gy.dim(3), gy.dim(4)};
    const int64_t pin = in[0] * in[1] * in[2];
    const int64_t pout = os[0] * os[1] * os[2];
    Tensor<S> gx({n, in_c_, in[0], in[1], in[2]});
    col_.resize(static_cast<size_t>(out_c_ * k_ * pin));
    auto w = w_.value.matrix(in_c_, out_c_ * k_);
    auto gw = w_.grad.matrix(in_c_, out_c_ * k_);
    for (int64_t i = 0; i < n; ++i) {
      detail::im2col(gy.data() + i * out_c_ * pout, {out_c_, os[0], os[1], os[2]}, factor_,
                     factor_, {0, 0, 0}, in, col_.data());
      Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gcol(
          col_.data(), out_c_ * k_, pin);
      Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gxm(
          gx.data() + i * in_c_ * pin, in_c_, pin);
      gxm.noalias() = w * gcol;
      if (accum) {
        Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> xm(
            x.data() + i * in_c_ * pin, in_c_, pin);
        gw.noalias() += xm * gcol.transpose();
        for (int64_t co = 0; co < out_c_; ++co) {
          double acc = 0;
          const S* gp = gy.data() + (i * out_c_ + co) * pout;
          for (int64_t v = 0; v < pout; ++v) acc += gp[v];
          b_.grad[co] += static_cast<S>(acc);
        }
      }
    }
    return gx;
  }

  void collect_params(std::vector<Param<S>*>& out) override {
    out.push_back(&w_);
    out.push_back(&b_);
  }

 private:
  int64_t in_c_, out_c_, k_;
  Triple factor_;
  Param<S> w_, b_;
  std::vector<S> col_;
};

// Per-sample, per-channel normalisation with learnable affine.
template <typename S>
class InstanceNorm : public Module<S> {
 public:
  explicit InstanceNorm(std::string name, int64_t channels, double eps = 1e-5)
      : c_(channels), eps_(eps) {
    gamma_.name = name + ".gamma";
    gamma_.init_shape({channels});
    gamma_.value.fill(S(1));
    beta_.name = name + ".beta";
    beta_.init_shape({channels});
  }

  Tensor<S> forward(const Tensor<S>& x, Tape<S>& tape) override {
    const int64_t n = x.dim(0), p = x.dim(2) * x.dim(3) * x.dim(4);
    Tensor<S> y = Tensor<S>::zeros_like(x);
    Tensor<S> xhat = Tensor<S>::zeros_like(x);
    Tensor<S> invstd({n, c_});
    for (int64_t i = 0; i < n; ++i)
      for (int64_t c = 0; c < c_; ++c) {
        const S* xp = x.data() + (i * c_ + c) * p;
        double mean = 0;
        for (int64_t v = 0; v < p; ++v) mean += xp[v];
        mean /= p;
        double var = 0;
        for (int64_t v = 0; v < p; ++v) {
          double d = xp[v] - mean;
          var += d * d;
        }
        var /= p;
        double istd = 1.0 / std::sqrt(var + eps_);
        invstd[i * c_ + c] = static_cast<S>(istd);
        S* hp = xhat.data() + (i * c_ + c) * p;
        S* yp = y.data() + (i * c_ + c) * p;
        S g = gamma_.value[c], b = beta_.value[c];
        for (int64_t v = 0; v < p; ++v) {
          hp[v] = static_cast<S>((xp[v] - mean) * istd);
          yp[v] = g * hp[v] + b;
        }
      }
    tape.push(std::move(xhat));
    tape.push(std::move(invstd));
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy, Tape<S>& tape, bool accum) override {
    Tensor<S> invstd = tape.pop();
    Tensor<S> xhat = tape.pop();
    const int64_t n = gy.dim(0), p = gy.dim(2) * gy.dim(3) * gy.dim(4);
    Tensor<S> gx = Tensor<S>::zeros_like(gy);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t c = 0; c < c_; ++c) {
        const S* gp = gy.data() + (i * c_ + c) * p;
        const S* hp = xhat.data() + (i * c_ + c) * p;
        double sum_g = 0, sum_gh = 0;
        for (int64_t v = 0; v < p; ++v) {
          sum_g += gp[v];
          sum_gh += static_cast<double>(gp[v]) * hp[v];
        }
        if (accum) {
          gamma_.grad[c] += static_cast<S>(sum_gh);
          beta_.grad[c] += static_cast<S>(sum_g);
        }
        double g = gamma_.value[c];
        double istd = invstd[i * c_ + c];
        double mg = sum_g / p, mgh = sum_gh / p;
        S* xp = gx.data() + (i * c_ + c) * p;
        for (int64_t v = 0; v < p; ++v)
          xp[v] = static_cast<S>(g * istd * (gp[v] - mg - hp[v] * mgh));
      }
    return gx;
  }

  void collect_params(std::vector<Param<S>*>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }

 private:
  int64_t c_;
  double eps_;
  Param<S> gamma_, beta_;
};

template <typename S>
class LeakyReLU : public Module<S> {
 public:
  explicit LeakyReLU(double slope) : slope_(static_cast<S>(slope)) {}

  Tensor<S> forward(const Tensor<S>& x, Tape<S>& tape) override {
    Tensor<S> y = x;
    for (int64_t i = 0; i < y.numel(); ++i)
      if (y[i] < S(0)) y[i] *= slope_;
    tape.push(x);
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy, Tape<S>& tape, bool) override {
    Tensor<S> x = tape.pop();
    Tensor<S> gx = gy;
    for (int64_t i = 0; i < gx.numel(); ++i)
      if (x[i] < S(0)) gx[i] *= slope_;
    return gx;
  }

 private:
  S slope_;
};

template <typename S>
class Tanh : public Module<S> {
 public:
  Tensor<S> forward(const Tensor<S>& x, Tape<S>& tape) override {
    Tensor<S> y = x;
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = std::tanh(y[i]);
    tape.push(y);
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy, Tape<S>& tape, bool) override {
    Tensor<S> y = tape.pop();
    Tensor<S> gx = gy;
    for (int64_t i = 0; i < gx.numel(); ++i) gx[i] *= (S(1) - y[i] * y[i]);
    return gx;
  }
};

template <typename S>
class Sequential : public Module<S> {
 public:
  Sequential() = default;

  template <typename M, typename... Args>
  M* add(Args&&... args) {
    auto m = std::make_unique<M>(std::forward<Args>(args)...);
    M* raw = m.get();
    layers_.push_back(std::move(m));
    return raw;
  }

  Tensor<S> forward(const Tensor<S>& x, Tape<S>& tape) override {
    Tensor<S> h = x;
    for (auto& l : layers_) h = l->forward(h, tape);
    return h;
  }

  Tensor<S> backward(const Tensor<S>& gy, Tape<S>& tape, bool accum) override {
    Tensor<S> g = gy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
      g = (*it)->backward(g, tape, accum);
    return g;
  }

  void collect_params(std::vector<Param<S>*>& out) override {
    for (auto& l : layers_) l->collect_params(out);
  }

  void init(Rng& rng) {
    for (auto& l : layers_) {
      if (auto* c = dynamic_cast<Conv<S>*>(l.get())) c->init(rng);
      if (auto* t = dynamic_cast<ConvTranspose<S>*>(l.get())) t->init(rng);
    }
  }

 private:
  std::vector<std::unique_ptr<Module<S>>> layers_;
};

// Concatenates two feature maps along the channel axis.
template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
  const int64_t n = a.dim(0), p = a.dim(2) * a.dim(3) * a.dim(4);
  Tensor<S> out({n, a.dim(1) + b.dim(1), a.dim(2), a.dim(3), a.dim(4)});
  for (int64_t i = 0; i < n; ++i) {
    std::copy_n(a.data() + i * a.dim(1) * p, a.dim(1) * p, out.data() + i * out.dim(1) * p);
    std::copy_n(b.data() + i * b.dim(1) * p, b.dim(1) * p,
                out.data() + i * out.dim(1) * p + a.dim(1) * p);
  }
  return out;
}

template <typename S>
std::pair<Tensor<S>, Tensor<S>> split_channels(const Tensor<S>& g, int64_t ca, int64_t cb) {
  const int64_t n = g.dim(0), p = g.dim(2) * g.dim(3) * g.dim(4);
  Tensor<S> a({n, ca, g.dim(2), g.dim(3), g.dim(4)});
  Tensor<S> b({n, cb, g.dim(2), g.dim(3), g.dim(4)});
  for (int64_t i = 0; i < n; ++i) {
    std::copy_n(g.data() + i * g.dim(1) * p, ca * p, a.data() + i * ca * p);
    std::copy_n(g.data() + i * g.dim(1) * p + ca * p, cb * p, b.data() + i * cb * p);
  }
  return {std::move(a), std::move(b)};
}

}  // namespace udaseg::nn
