//
// Project smipred - Copyright 2026 smipred contributors
// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference verification harness. Meant to run in 64-bit mode: the
// relative error floor interacts with central-difference noise at 32 bits.
#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include "smipred/nn/graph.hpp"

namespace smipred {

// Builds the scalar loss from current parameter values. The callable must
// construct a fresh graph each invocation and return the loss value.
template <typename T>
using LossFn = std::function<T()>;

// Reverse-mode gradients vs central finite differences, step 1e-5. Returns
// max over all parameter entries of |g_auto - g_fd| / max(|g_auto|, |g_fd|,
// 1e-8). The caller computes g_auto into param.grad before calling.
template <typename T>
double grad_check(std::vector<Variable<T>*>& params, const LossFn<T>& loss,
                  double step = 1e-5) {
  double worst = 0.0;
  for (Variable<T>* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const T keep = p->value[i];
      p->value[i] = keep + static_cast<T>(step);
      const double up = static_cast<double>(loss());
      p->value[i] = keep - static_cast<T>(step);
      const double dn = static_cast<double>(loss());
      p->value[i] = keep;
      const double fd = (up - dn) / (2.0 * step);
      const double ga = static_cast<double>(p->grad[i]);
      const double denom = std::max({std::abs(ga), std::abs(fd), 1e-8});
      worst = std::max(worst, std::abs(ga - fd) / denom);
    }
  }
  return worst;
}

}  // namespace smipred
