//
// Project smipred - Copyright 2026 smipred contributors
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cmath>
#include <vector>

#include "smipred/nn/graph.hpp"

namespace smipred {

// RMSprop with the standard settings: per-parameter running mean square,
//   acc <- rho * acc + (1 - rho) * g^2
//   theta <- theta - lr * g / (sqrt(acc) + eps)
template <typename T>
class RmsProp {
 public:
  explicit RmsProp(T lr = static_cast<T>(1e-3), T rho = static_cast<T>(0.9),
                   T eps = static_cast<T>(1e-8))
      : lr_(lr), rho_(rho), eps_(eps) {}

  void step(std::vector<Variable<T>*>& params) {
    ensure_state(params);
    for (std::size_t k = 0; k < params.size(); ++k) {
      Variable<T>& p = *params[k];
      Tensor<T>& acc = acc_[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const T gi = p.grad[i];
        acc[i] = rho_ * acc[i] + (T{1} - rho_) * gi * gi;
        p.value[i] -= lr_ * gi / (std::sqrt(acc[i]) + eps_);
      }
    }
  }

  T learning_rate() const { return lr_; }
  const Tensor<T>& accumulator(std::size_t k) const { return acc_.at(k); }

 private:
  void ensure_state(const std::vector<Variable<T>*>& params) {
    if (acc_.size() == params.size()) return;
    acc_.clear();
    for (const Variable<T>* p : params) acc_.emplace_back(p->value.shape());
  }

  T lr_, rho_, eps_;
  std::vector<Tensor<T>> acc_;
};

// Bias-corrected Adam.
template <typename T>
class Adam {
 public:
  explicit Adam(T lr = static_cast<T>(1e-3), T beta1 = static_cast<T>(0.9),
                T beta2 = static_cast<T>(0.999), T eps = static_cast<T>(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::vector<Variable<T>*>& params) {
    ensure_state(params);
    ++t_;
    const T bc1 = T{1} - std::pow(beta1_, static_cast<T>(t_));
    const T bc2 = T{1} - std::pow(beta2_, static_cast<T>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      Variable<T>& p = *params[k];
      Tensor<T>& m = m_[k];
      Tensor<T>& v = v_[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const T gi = p.grad[i];
        m[i] = beta1_ * m[i] + (T{1} - beta1_) * gi;
        v[i] = beta2_ * v[i] + (T{1} - beta2_) * gi * gi;
        const T mh = m[i] / bc1;
        const T vh = v[i] / bc2;
        p.value[i] -= lr_ * mh / (std::sqrt(vh) + eps_);
      }
    }
  }

  void set_learning_rate(T lr) { lr_ = lr; }
  T learning_rate() const { return lr_; }
  long step_count() const { return t_; }

 private:
  void ensure_state(const std::vector<Variable<T>*>& params) {
    if (m_.size() == params.size()) return;
    m_.clear();
    v_.clear();
    t_ = 0;
    for (const Variable<T>* p : params) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }

  T lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

template <typename T>
void zero_grads(std::vector<Variable<T>*>& params) {
  for (Variable<T>* p : params) p->grad.zero();
}

}  // namespace smipred
