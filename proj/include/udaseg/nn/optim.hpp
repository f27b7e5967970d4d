#pragma once

#include <cmath>
#include <vector>

#include "udaseg/common.hpp"
#include "udaseg/nn/layers.hpp"

namespace udaseg::nn {

template <typename S>
void zero_grads(const std::vector<Param<S>*>& params) {
  for (auto* p : params) p->grad.zero();
}

template <typename S>
class Adam {
 public:
  Adam(std::vector<Param<S>*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto* p : params_) {
      m_.push_back(Tensor<S>::zeros_like(p->value));
      v_.push_back(Tensor<S>::zeros_like(p->value));
    }
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  void step() {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, t_);
    double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t i = 0; i < params_.size(); ++i) {
      Param<S>* p = params_[i];
      for (int64_t j = 0; j < p->value.numel(); ++j) {
        double g = p->grad[j];
        double m = beta1_ * m_[i][j] + (1 - beta1_) * g;
        double v = beta2_ * v_[i][j] + (1 - beta2_) * g * g;
        m_[i][j] = static_cast<S>(m);
        v_[i][j] = static_cast<S>(v);
        p->value[j] -= static_cast<S>(lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_));
      }
    }
  }

 private:
  std::vector<Param<S>*> params_;
  std::vector<Tensor<S>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

template <typename S>
class SgdMomentum {
 public:
  SgdMomentum(std::vector<Param<S>*> params, double lr, double momentum, bool nesterov)
      : params_(std::move(params)), lr_(lr), momentum_(momentum), nesterov_(nesterov) {
    for (auto* p : params_) v_.push_back(Tensor<S>::zeros_like(p->value));
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  void step() {
    for (size_t i = 0; i < params_.size(); ++i) {
      Param<S>* p = params_[i];
      for (int64_t j = 0; j < p->value.numel(); ++j) {
        double g = p->grad[j];
        double v = momentum_ * v_[i][j] + g;
        v_[i][j] = static_cast<S>(v);
        double d = nesterov_ ? g + momentum_ * v : v;
        p->value[j] -= static_cast<S>(lr_ * d);
      }
    }
  }

 private:
  std::vector<Param<S>*> params_;
  std::vector<Tensor<S>> v_;
  double lr_, momentum_;
  bool nesterov_;
};

// nnU-Net style polynomial decay: lr0 * (1 - epoch/epochs)^power.
inline double poly_lr(double lr0, int epoch, int epochs, double power) {
  return lr0 * std::pow(1.0 - static_cast<double>(epoch) / epochs, power);
}

}  // namespace udaseg::nn
