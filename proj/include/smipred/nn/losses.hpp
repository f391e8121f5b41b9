//
// Project smipred - Copyright 2026 smipred contributors
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cmath>

#include "smipred/nn/graph.hpp"

namespace smipred {

inline constexpr double kBceClamp = 1e-7;

// Mean binary cross entropy over unmasked entries. Predictions are clamped
// into [1e-7, 1-1e-7] before the logs; mask entries are 0 (ignore) or 1.
template <typename T>
NodeId bce_masked(Graph<T>& g, NodeId pred, const Tensor<T>& target,
                  const Tensor<T>& mask) {
  const Tensor<T>& p = g.value(pred);
  if (p.size() != target.size() || p.size() != mask.size())
    raise<ShapeError>("bce: prediction/target/mask sizes differ");
  T count{0};
  for (std::size_t i = 0; i < mask.size(); ++i) count += mask[i];
  if (count <= T{0}) raise("bce: all labels masked out");
  const T lo = static_cast<T>(kBceClamp), hi = T{1} - static_cast<T>(kBceClamp);
  T acc{0};
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (mask[i] == T{0}) continue;
    const T q = std::min(hi, std::max(lo, p[i]));
    acc -= target[i] * std::log(q) + (T{1} - target[i]) * std::log(T{1} - q);
  }
  auto tgt = std::make_shared<Tensor<T>>(target);
  auto msk = std::make_shared<Tensor<T>>(mask);
  return g.add_op(
      Tensor<T>::scalar(acc / count), g.needs_grad(pred),
      [pred, tgt, msk, count, lo, hi](Graph<T>& g2, NodeId self) {
        const T d = g2.grad(self)[0] / count;
        const Tensor<T>& pv = g2.value(pred);
        Tensor<T>& dp = g2.grad_accum(pred);
        for (std::size_t i = 0; i < pv.size(); ++i) {
          if ((*msk)[i] == T{0}) continue;
          if (pv[i] <= lo || pv[i] >= hi) continue;  // clamp region, flat
          dp[i] += d * (pv[i] - (*tgt)[i]) / (pv[i] * (T{1} - pv[i]));
        }
      });
}

// Mean absolute error; subgradient 0 at exact ties.
template <typename T>
NodeId mae_loss(Graph<T>& g, NodeId pred, const Tensor<T>& target) {
  const Tensor<T>& p = g.value(pred);
  if (p.size() == 0) raise("mae: empty batch");
  if (p.size() != target.size())
    raise<ShapeError>("mae: prediction/target sizes differ");
  const T n = static_cast<T>(p.size());
  T acc{0};
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - target[i]);
  auto tgt = std::make_shared<Tensor<T>>(target);
  return g.add_op(Tensor<T>::scalar(acc / n), g.needs_grad(pred),
                  [pred, tgt, n](Graph<T>& g2, NodeId self) {
                    const T d = g2.grad(self)[0] / n;
                    const Tensor<T>& pv = g2.value(pred);
                    Tensor<T>& dp = g2.grad_accum(pred);
                    for (std::size_t i = 0; i < pv.size(); ++i) {
                      const T r = pv[i] - (*tgt)[i];
                      if (r > T{0})
                        dp[i] += d;
                      else if (r < T{0})
                        dp[i] -= d;
                    }
                  });
}

// Per-row squared error between a [B x 1] prediction and a [B] target.
template <typename T>
NodeId sq_err_rows(Graph<T>& g, NodeId pred, const Tensor<T>& target) {
  const Tensor<T>& p = g.value(pred);
  if (p.size() != target.size())
    raise<ShapeError>("sq_err_rows: prediction/target sizes differ");
  Tensor<T> out({p.size()});
  for (std::size_t i = 0; i < p.size(); ++i) {
    const T r = p[i] - target[i];
    out[i] = r * r;
  }
  auto tgt = std::make_shared<Tensor<T>>(target);
  return g.add_op(std::move(out), g.needs_grad(pred),
                  [pred, tgt](Graph<T>& g2, NodeId self) {
                    const Tensor<T>& dy = g2.grad(self);
                    const Tensor<T>& pv = g2.value(pred);
                    Tensor<T>& dp = g2.grad_accum(pred);
                    for (std::size_t i = 0; i < pv.size(); ++i)
                      dp[i] += dy[i] * T{2} * (pv[i] - (*tgt)[i]);
                  });
}

// Euclidean norm of each row of m restricted to content positions.
// m: [B x L], content: [B x L] of 0/1 weights. Output: [B].
template <typename T>
NodeId row_norm2(Graph<T>& g, NodeId m, const Tensor<T>& content) {
  const Tensor<T>& mv = g.value(m);
  if (mv.rank() != 2 || !mv.same_shape(content))
    raise<ShapeError>("row_norm2: mask/content shapes differ");
  const std::size_t rows = mv.dim(0), cols = mv.dim(1);
  Tensor<T> out({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    T acc{0};
    for (std::size_t c = 0; c < cols; ++c) {
      const T v = mv[r * cols + c] * content[r * cols + c];
      acc += v * v;
    }
    out[r] = std::sqrt(acc);
  }
  auto cw = std::make_shared<Tensor<T>>(content);
  return g.add_op(
      std::move(out), g.needs_grad(m),
      [m, cw, rows, cols](Graph<T>& g2, NodeId self) {
        const Tensor<T>& dy = g2.grad(self);
        const Tensor<T>& norm = g2.value(self);
        const Tensor<T>& mv2 = g2.value(m);
        Tensor<T>& dm = g2.grad_accum(m);
        for (std::size_t r = 0; r < rows; ++r) {
          if (norm[r] <= T{0}) continue;
          const T s = dy[r] / norm[r];
          for (std::size_t c = 0; c < cols; ++c)
            dm[r * cols + c] += s * mv2[r * cols + c] * (*cw)[r * cols + c];
        }
      });
}

// Shannon entropy of each row of m normalized to sum 1 over content
// positions: H = -sum p ln p with p = m / sum(m). Gradient uses the closed
// form dH/dm_k = -(ln p_k + H) / S.
template <typename T>
NodeId row_entropy(Graph<T>& g, NodeId m, const Tensor<T>& content) {
  const Tensor<T>& mv = g.value(m);
  if (mv.rank() != 2 || !mv.same_shape(content))
    raise<ShapeError>("row_entropy: mask/content shapes differ");
  const std::size_t rows = mv.dim(0), cols = mv.dim(1);
  const T tiny = static_cast<T>(1e-12);
  Tensor<T> out({rows});
  std::vector<T> sums(rows, T{0});
  for (std::size_t r = 0; r < rows; ++r) {
    T s{0};
    for (std::size_t c = 0; c < cols; ++c)
      s += mv[r * cols + c] * content[r * cols + c];
    sums[r] = s;
    T h{0};
    if (s > T{0}) {
      for (std::size_t c = 0; c < cols; ++c) {
        if (content[r * cols + c] == T{0}) continue;
        const T p = mv[r * cols + c] / s;
        if (p > tiny) h -= p * std::log(p);
      }
    }
    out[r] = h;
  }
  auto cw = std::make_shared<Tensor<T>>(content);
  auto sm = std::make_shared<std::vector<T>>(std::move(sums));
  return g.add_op(
      std::move(out), g.needs_grad(m),
      [m, cw, sm, rows, cols, tiny](Graph<T>& g2, NodeId self) {
        const Tensor<T>& dy = g2.grad(self);
        const Tensor<T>& hv = g2.value(self);
        const Tensor<T>& mv2 = g2.value(m);
        Tensor<T>& dm = g2.grad_accum(m);
        for (std::size_t r = 0; r < rows; ++r) {
          const T s = (*sm)[r];
          if (s <= T{0}) continue;
          const T scale = dy[r] / s;
          for (std::size_t c = 0; c < cols; ++c) {
            if ((*cw)[r * cols + c] == T{0}) continue;
            const T p = std::max(mv2[r * cols + c] / s, tiny);
            dm[r * cols + c] -= scale * (std::log(p) + hv[r]);
          }
        }
      });
}

}  // namespace smipred
