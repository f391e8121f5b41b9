//
// Project smipred - Copyright 2026 smipred contributors
// SPDX-License-Identifier: Apache-2.0
//
// Layer ops on the tape: embedding lookup, position-wise dense, width-3
// same-padded 1D convolution, batch normalization, and single-direction
// GRU/LSTM scans. Recurrent input transforms are hoisted into one GEMM per
// layer; per-step work is two small GEMMs plus elementwise gates.
#pragma once

#include <memory>

#include "smipred/nn/graph.hpp"

namespace smipred {

inline constexpr double kBnEpsilon = 1e-5;
inline constexpr double kBnMomentum = 0.99;

// indices: [B x L] grid of vocabulary ids; table: [V x E].
template <typename T>
NodeId embedding(Graph<T>& g, const IndexMatrix& indices, NodeId table) {
  const Tensor<T>& tab = g.value(table);
  if (tab.rank() != 2) raise<ShapeError>("embedding: table must be rank 2");
  const std::size_t vocab = tab.dim(0), em = tab.dim(1);
  const std::size_t rows = indices.rows * indices.cols;
  for (std::int32_t ix : indices.v)
    if (ix < 0 || static_cast<std::size_t>(ix) >= vocab)
      raise("embedding: index ", ix, " outside vocabulary of ", vocab);
  Tensor<T> out({indices.rows, indices.cols, em});
  {
    auto out2d = out.mat(rows, em);
    const auto tab2d = tab.mat(vocab, em);
    for (std::size_t r = 0; r < rows; ++r)
      out2d.row(static_cast<Eigen::Index>(r)) = tab2d.row(indices.v[r]);
  }
  auto idx = std::make_shared<std::vector<std::int32_t>>(indices.v);
  return g.add_op(std::move(out), g.needs_grad(table),
                  [table, idx, rows, em](Graph<T>& g2, NodeId self) {
                    const auto dy = g2.grad(self).mat(rows, em);
                    auto dt = g2.grad_accum(table).mat_lastdim();
                    for (std::size_t r = 0; r < rows; ++r)
                      dt.row((*idx)[r]) += dy.row(static_cast<Eigen::Index>(r));
                  });
}

// Affine map on the last dimension followed by an activation.
template <typename T>
NodeId dense(Graph<T>& g, NodeId x, NodeId w, NodeId b, Act act) {
  const Tensor<T>& xv = g.value(x);
  const Tensor<T>& wv = g.value(w);
  const Tensor<T>& bv = g.value(b);
  const std::size_t cin = xv.last_dim();
  const std::size_t rows = xv.size() / cin;
  if (wv.rank() != 2 || wv.dim(0) != cin)
    raise<ShapeError>("dense: weights ", shape_str(wv.shape()),
                      " do not match input width ", cin);
  const std::size_t cout = wv.dim(1);
  if (bv.size() != cout) raise<ShapeError>("dense: bias size mismatch");
  Shape out_shape = xv.shape();
  out_shape.back() = cout;
  Tensor<T> out(out_shape);
  {
    auto y = out.mat(rows, cout);
    y.noalias() = xv.mat(rows, cin) * wv.mat(cin, cout);
    y.rowwise() += bv.vec().transpose();
  }
  if (act != Act::Linear)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = act_eval(act, out[i]);
  const bool ng = g.needs_grad(x) || g.needs_grad(w) || g.needs_grad(b);
  return g.add_op(
      std::move(out), ng,
      [x, w, b, act, rows, cin, cout](Graph<T>& g2, NodeId self) {
        const Tensor<T>& yv = g2.value(self);
        const Tensor<T>& dyv = g2.grad(self);
        // da = dy * act'(y), staged once
        Tensor<T> da(dyv.shape());
        if (act == Act::Linear) {
          da.vec() = dyv.vec();
        } else {
          for (std::size_t i = 0; i < da.size(); ++i)
            da[i] = dyv[i] * act_deriv_from_output(act, yv[i]);
        }
        const auto da2d = da.mat(rows, cout);
        if (g2.needs_grad(x)) {
          g2.grad_accum(x).mat(rows, cin).noalias() +=
              da2d * g2.value(w).mat(cin, cout).transpose();
        }
        if (g2.needs_grad(w)) {
          g2.grad_accum(w).mat(cin, cout).noalias() +=
              g2.value(x).mat(rows, cin).transpose() * da2d;
        }
        if (g2.needs_grad(b))
          g2.grad_accum(b).vec() += da2d.colwise().sum().transpose();
      });
}

namespace detail {
template <typename T>
struct ConvSaved {
  Tensor<T> cols;  // [B*L x 3*Cin]
};
}  // namespace detail

// Same-length convolution, kernel width 3, stride 1, zero padded at the
// sequence edges. kernel: [3 x Cin x Cout].
template <typename T>
NodeId conv1d_same3(Graph<T>& g, NodeId x, NodeId kernel, NodeId bias) {
  const Tensor<T>& xv = g.value(x);
  const Tensor<T>& kv = g.value(kernel);
  const Tensor<T>& bv = g.value(bias);
  if (xv.rank() != 3) raise<ShapeError>("conv1d: rank-3 input expected");
  if (kv.rank() != 3 || kv.dim(0) != 3)
    raise<ShapeError>("conv1d: kernel must be [3 x Cin x Cout]");
  const std::size_t batch = xv.dim(0), len = xv.dim(1), cin = xv.dim(2);
  if (kv.dim(1) != cin)
    raise<ShapeError>("conv1d: kernel expects ", kv.dim(1),
                      " channels, input has ", cin);
  const std::size_t cout = kv.dim(2);
  if (bv.size() != cout) raise<ShapeError>("conv1d: bias size mismatch");

  auto saved = std::make_shared<detail::ConvSaved<T>>();
  saved->cols = Tensor<T>({batch * len, 3 * cin});
  {
    const T* xp = xv.data();
    T* cp = saved->cols.data();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t l = 0; l < len; ++l) {
        T* row = cp + (b * len + l) * 3 * cin;
        for (int d = -1; d <= 1; ++d) {
          const std::ptrdiff_t ll = static_cast<std::ptrdiff_t>(l) + d;
          T* dst = row + static_cast<std::size_t>(d + 1) * cin;
          if (ll < 0 || ll >= static_cast<std::ptrdiff_t>(len)) {
            std::fill(dst, dst + cin, T{0});
          } else {
            const T* src = xp + (b * len + static_cast<std::size_t>(ll)) * cin;
            std::copy(src, src + cin, dst);
          }
        }
      }
    }
  }
  Tensor<T> out({batch, len, cout});
  {
    auto y = out.mat(batch * len, cout);
    y.noalias() = saved->cols.mat(batch * len, 3 * cin) * kv.mat(3 * cin, cout);
    y.rowwise() += bv.vec().transpose();
  }
  const bool ng =
      g.needs_grad(x) || g.needs_grad(kernel) || g.needs_grad(bias);
  return g.add_op(
      std::move(out), ng,
      [x, kernel, bias, saved, batch, len, cin, cout](Graph<T>& g2,
                                                      NodeId self) {
        const auto dy = g2.grad(self).mat(batch * len, cout);
        if (g2.needs_grad(kernel)) {
          g2.grad_accum(kernel).mat(3 * cin, cout).noalias() +=
              saved->cols.mat(batch * len, 3 * cin).transpose() * dy;
        }
        if (g2.needs_grad(bias))
          g2.grad_accum(bias).vec() += dy.colwise().sum().transpose();
        if (g2.needs_grad(x)) {
          Tensor<T> dcols({batch * len, 3 * cin});
          dcols.mat(batch * len, 3 * cin).noalias() =
              dy * g2.value(kernel).mat(3 * cin, cout).transpose();
          T* dxp = g2.grad_accum(x).data();
          const T* dc = dcols.data();
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t l = 0; l < len; ++l) {
              const T* row = dc + (b * len + l) * 3 * cin;
              for (int d = -1; d <= 1; ++d) {
                const std::ptrdiff_t ll = static_cast<std::ptrdiff_t>(l) + d;
                if (ll < 0 || ll >= static_cast<std::ptrdiff_t>(len)) continue;
                T* dst = dxp + (b * len + static_cast<std::size_t>(ll)) * cin;
                const T* src = row + static_cast<std::size_t>(d + 1) * cin;
                for (std::size_t c = 0; c < cin; ++c) dst[c] += src[c];
              }
            }
          }
        }
      });
}

// Running statistics for batch normalization; owned by the module that owns
// the gamma/beta parameters and persisted alongside them.
template <typename T>
struct BnState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = static_cast<T>(kBnMomentum);

  explicit BnState(std::size_t channels = 1)
      : running_mean({channels}), running_var({channels}) {
    running_var.fill(T{1});
  }
};

namespace detail {
template <typename T>
struct BnSaved {
  Tensor<T> xhat;
  Tensor<T> invstd;  // [C]
};
}  // namespace detail

// Normalizes over all leading dimensions, per trailing channel. Training
// mode uses batch statistics and updates the running ones; inference mode
// reads the running statistics only.
template <typename T>
NodeId batchnorm(Graph<T>& g, NodeId x, NodeId gamma, NodeId beta,
                 BnState<T>* state, bool training) {
  const Tensor<T>& xv = g.value(x);
  const std::size_t ch = xv.last_dim();
  const std::size_t rows = xv.size() / ch;
  if (g.value(gamma).size() != ch || g.value(beta).size() != ch)
    raise<ShapeError>("batchnorm: gamma/beta must have ", ch, " entries");
  if (state->running_mean.size() != ch)
    raise<ShapeError>("batchnorm: running stats sized for ",
                      state->running_mean.size(), " channels, input has ", ch);
  if (training && xv.dim(0) < 2)
    raise("batchnorm: training mode needs batch size >= 2");

  auto saved = std::make_shared<detail::BnSaved<T>>();
  saved->xhat = Tensor<T>(xv.shape());
  saved->invstd = Tensor<T>({ch});
  {
    const auto x2d = xv.mat(rows, ch);
    VecX<T> mean(static_cast<Eigen::Index>(ch));
    VecX<T> var(static_cast<Eigen::Index>(ch));
    if (training) {
      mean = x2d.colwise().mean().transpose();
      var = ((x2d.rowwise() - mean.transpose())
                 .array()
                 .square()
                 .colwise()
                 .sum() /
             static_cast<T>(rows))
                .matrix()
                .transpose();
      state->running_mean.vec() = state->momentum * state->running_mean.vec() +
                                  (T{1} - state->momentum) * mean;
      state->running_var.vec() = state->momentum * state->running_var.vec() +
                                 (T{1} - state->momentum) * var;
    } else {
      mean = state->running_mean.vec();
      var = state->running_var.vec();
    }
    for (std::size_t c = 0; c < ch; ++c)
      saved->invstd[c] = T{1} / std::sqrt(var[static_cast<Eigen::Index>(c)] +
                                          static_cast<T>(kBnEpsilon));
    auto xhat2d = saved->xhat.mat(rows, ch);
    xhat2d = x2d.rowwise() - mean.transpose();
    xhat2d.array().rowwise() *= saved->invstd.vec().transpose().array();
  }

  Tensor<T> out(xv.shape());
  {
    auto y = out.mat(rows, ch);
    y = saved->xhat.mat(rows, ch);
    y.array().rowwise() *= g.value(gamma).vec().transpose().array();
    y.rowwise() += g.value(beta).vec().transpose();
  }

  const bool ng = g.needs_grad(x) || g.needs_grad(gamma) || g.needs_grad(beta);
  return g.add_op(
      std::move(out), ng,
      [x, gamma, beta, saved, rows, ch, training](Graph<T>& g2, NodeId self) {
        const auto dy = g2.grad(self).mat(rows, ch);
        const auto xhat = saved->xhat.mat(rows, ch);
        if (g2.needs_grad(gamma))
          g2.grad_accum(gamma).vec() +=
              (dy.array() * xhat.array()).colwise().sum().matrix().transpose();
        if (g2.needs_grad(beta))
          g2.grad_accum(beta).vec() += dy.colwise().sum().transpose();
        if (g2.needs_grad(x)) {
          const VecX<T> gamv = g2.value(gamma).vec();
          const VecX<T> istdv = saved->invstd.vec();
          Eigen::Array<T, 1, Eigen::Dynamic> ginv =
              (gamv.array() * istdv.array()).transpose();
          auto dx = g2.grad_accum(x).mat(rows, ch);
          if (training) {
            Eigen::Matrix<T, 1, Eigen::Dynamic> m1 = dy.colwise().mean();
            Eigen::Matrix<T, 1, Eigen::Dynamic> m2 =
                (dy.array() * xhat.array()).colwise().mean().matrix();
            MatRM<T> inner = dy.rowwise() - m1;
            inner.array() -= xhat.array().rowwise() * m2.array();
            dx.array() += inner.array().rowwise() * ginv;
          } else {
            dx.array() += dy.array().rowwise() * ginv;
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Recurrent layers
// ---------------------------------------------------------------------------

namespace detail {

// Copy [B,L,C] to time-major [L,B,C]; flip time when scanning backwards so
// the same scan code serves both directions.
template <typename T>
Tensor<T> to_time_major(const Tensor<T>& x, std::size_t batch, std::size_t len,
                        std::size_t ch, bool reverse) {
  Tensor<T> out({len, batch, ch});
  const T* xp = x.data();
  T* op = out.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < len; ++t) {
      const std::size_t s = reverse ? len - 1 - t : t;
      std::copy(xp + (b * len + t) * ch, xp + (b * len + t + 1) * ch,
                op + (s * batch + b) * ch);
    }
  }
  return out;
}

// Accumulate time-major gradients back into batch-major layout.
template <typename T>
void add_from_time_major(const Tensor<T>& tm, std::size_t batch,
                         std::size_t len, std::size_t ch, bool reverse,
                         Tensor<T>& dst) {
  const T* sp = tm.data();
  T* dp = dst.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < len; ++t) {
      const std::size_t s = reverse ? len - 1 - t : t;
      const T* src = sp + (s * batch + b) * ch;
      T* out = dp + (b * len + t) * ch;
      for (std::size_t c = 0; c < ch; ++c) out[c] += src[c];
    }
  }
}

template <typename T>
struct GruSaved {
  std::size_t batch, len, cin, hidden;
  bool reverse;
  Tensor<T> xs;                  // [L,B,C] scan-ordered input
  Tensor<T> zs, rs, gs, hs, rh;  // [L,B,H] gate and state traces
};

template <typename T>
struct LstmSaved {
  std::size_t batch, len, cin, hidden;
  bool reverse;
  Tensor<T> xs;
  Tensor<T> is, fs, gs, os, cs, tcs, hs;  // [L,B,H]
};

}  // namespace detail

// Single-direction GRU over a [B x L x C] sequence. Gate order in the packed
// weights is update | reset | candidate. Update rule:
//   h_t = (1 - z_t) * h_{t-1} + z_t * tanh(Wx x_t + Uh (r_t * h_{t-1}) + bh)
// Returns the full hidden sequence [B x L x H] aligned to input positions;
// for reverse scans out[:, t] is the state after consuming positions L-1..t.
template <typename T>
NodeId gru(Graph<T>& g, NodeId x, NodeId wx, NodeId wh, NodeId b,
           bool reverse) {
  const Tensor<T>& xv = g.value(x);
  const Tensor<T>& wxv = g.value(wx);
  const Tensor<T>& whv = g.value(wh);
  const Tensor<T>& bv = g.value(b);
  if (xv.rank() != 3) raise<ShapeError>("gru: rank-3 input expected");
  const std::size_t batch = xv.dim(0), len = xv.dim(1), cin = xv.dim(2);
  if (whv.rank() != 2 || whv.dim(1) != 3 * whv.dim(0))
    raise<ShapeError>("gru: recurrent weights must be [H x 3H]");
  const std::size_t hidden = whv.dim(0);
  if (wxv.rank() != 2 || wxv.dim(0) != cin || wxv.dim(1) != 3 * hidden)
    raise<ShapeError>("gru: input weights must be [", cin, " x ", 3 * hidden,
                      "], got ", shape_str(wxv.shape()));
  if (bv.size() != 3 * hidden) raise<ShapeError>("gru: bias must be [3H]");

  auto sv = std::make_shared<detail::GruSaved<T>>();
  sv->batch = batch;
  sv->len = len;
  sv->cin = cin;
  sv->hidden = hidden;
  sv->reverse = reverse;
  sv->xs = detail::to_time_major(xv, batch, len, cin, reverse);
  sv->zs = Tensor<T>({len, batch, hidden});
  sv->rs = Tensor<T>({len, batch, hidden});
  sv->gs = Tensor<T>({len, batch, hidden});
  sv->hs = Tensor<T>({len, batch, hidden});
  sv->rh = Tensor<T>({len, batch, hidden});

  const auto bE = static_cast<Eigen::Index>(batch);
  const auto hE = static_cast<Eigen::Index>(hidden);

  Tensor<T> xw({len, batch, 3 * hidden});
  {
    auto xw2d = xw.mat(len * batch, 3 * hidden);
    xw2d.noalias() = sv->xs.mat(len * batch, cin) * wxv.mat(cin, 3 * hidden);
    xw2d.rowwise() += bv.vec().transpose();
  }

  {
    auto xw2d = xw.mat(len * batch, 3 * hidden);
    auto zs2d = sv->zs.mat(len * batch, hidden);
    auto rs2d = sv->rs.mat(len * batch, hidden);
    auto gs2d = sv->gs.mat(len * batch, hidden);
    auto hs2d = sv->hs.mat(len * batch, hidden);
    auto rh2d = sv->rh.mat(len * batch, hidden);
    const auto wh2d = whv.mat(hidden, 3 * hidden);
    MatRM<T> h = MatRM<T>::Zero(bE, hE);
    MatRM<T> a_zr(bE, 2 * hE), a_h(bE, hE);
    auto sigmoid = [](T v) { return act_eval(Act::Sigmoid, v); };
    auto tanh_f = [](T v) { return act_eval(Act::Tanh, v); };
    for (std::size_t s = 0; s < len; ++s) {
      auto xw_s = xw2d.middleRows(static_cast<Eigen::Index>(s) * bE, bE);
      auto Z = zs2d.middleRows(static_cast<Eigen::Index>(s) * bE, bE);
      auto R = rs2d.middleRows(static_cast<Eigen::Index>(s) * bE, bE);
      auto G = gs2d.middleRows(static_cast<Eigen::Index>(s) * bE, bE);
      auto Hs = hs2d.middleRows(static_cast<Eigen::Index>(s) * bE, bE);
      auto RH = rh2d.middleRows(static_cast<Eigen::Index>(s) * bE, bE);

      a_zr = xw_s.leftCols(2 * hE);
      a_zr.noalias() += h * wh2d.leftCols(2 * hE);
      Z = a_zr.leftCols(hE).unaryExpr(sigmoid);
      R = a_zr.rightCols(hE).unaryExpr(sigmoid);
      RH = R.cwiseProduct(h);
      a_h = xw_s.rightCols(hE);
      a_h.noalias() += RH * wh2d.rightCols(hE);
      G = a_h.unaryExpr(tanh_f);
      Hs = h + Z.cwiseProduct(G - h);  // (1-z)*h_prev + z*g
      h = Hs;
    }
  }

  Tensor<T> out({batch, len, hidden});
  detail::add_from_time_major(sv->hs, batch, len, hidden, reverse, out);

  const bool ng = g.needs_grad(x) || g.needs_grad(wx) || g.needs_grad(wh) ||
                  g.needs_grad(b);
  return g.add_op(std::move(out), ng, [x, wx, wh, b,
                                       sv](Graph<T>& g2, NodeId self) {
    const std::size_t batch = sv->batch, len = sv->len, cin = sv->cin,
                      hidden = sv->hidden;
    const auto bE = static_cast<Eigen::Index>(batch);
    const auto hE = static_cast<Eigen::Index>(hidden);
    const auto wh2d = g2.value(wh).mat(hidden, 3 * hidden);

    Tensor<T> dout_tm =
        detail::to_time_major(g2.grad(self), batch, len, hidden, sv->reverse);
    Tensor<T> da({len, batch, 3 * hidden});
    {
      auto dout2d = dout_tm.mat(len * batch, hidden);
      auto da2d = da.mat(len * batch, 3 * hidden);
      auto zs2d = sv->zs.mat(len * batch, hidden);
      auto rs2d = sv->rs.mat(len * batch, hidden);
      auto gs2d = sv->gs.mat(len * batch, hidden);
      auto hs2d = sv->hs.mat(len * batch, hidden);
      MatRM<T> dh_carry = MatRM<T>::Zero(bE, hE);
      MatRM<T> dh(bE, hE), dtmp(bE, hE), drh(bE, hE), h_prev(bE, hE);
      for (std::size_t s = len; s-- > 0;) {
        const auto sE = static_cast<Eigen::Index>(s);
        auto Z = zs2d.middleRows(sE * bE, bE);
        auto R = rs2d.middleRows(sE * bE, bE);
        auto G = gs2d.middleRows(sE * bE, bE);
        if (s > 0)
          h_prev = hs2d.middleRows((sE - 1) * bE, bE);
        else
          h_prev.setZero();
        auto dA = da2d.middleRows(sE * bE, bE);

        dh = dout2d.middleRows(sE * bE, bE) + dh_carry;
        dtmp = dh.cwiseProduct(G - h_prev);
        dA.leftCols(hE) = dtmp.array() * Z.array() * (T{1} - Z.array());
        dtmp = dh.cwiseProduct(Z);
        dA.rightCols(hE) = dtmp.array() * (T{1} - G.array().square());
        dh_carry = dh - dh.cwiseProduct(Z);
        drh.noalias() = dA.rightCols(hE) * wh2d.rightCols(hE).transpose();
        dh_carry += drh.cwiseProduct(R);
        dtmp = drh.cwiseProduct(h_prev);
        dA.middleCols(hE, hE) = dtmp.array() * R.array() * (T{1} - R.array());
        dh_carry.noalias() +=
            dA.leftCols(2 * hE) * wh2d.leftCols(2 * hE).transpose();
      }
    }

    const auto da2d = da.mat(len * batch, 3 * hidden);
    if (g2.needs_grad(wh)) {
      // h_{t-1} trace: zeros at the first step, then shifted states.
      Tensor<T> hp({len, batch, hidden});
      std::copy(sv->hs.data(), sv->hs.data() + (len - 1) * batch * hidden,
                hp.data() + batch * hidden);
      auto dwh = g2.grad_accum(wh).mat(hidden, 3 * hidden);
      dwh.leftCols(2 * hE).noalias() +=
          hp.mat(len * batch, hidden).transpose() * da2d.leftCols(2 * hE);
      dwh.rightCols(hE).noalias() +=
          sv->rh.mat(len * batch, hidden).transpose() * da2d.rightCols(hE);
    }
    if (g2.needs_grad(b))
      g2.grad_accum(b).vec() += da2d.colwise().sum().transpose();
    if (g2.needs_grad(wx))
      g2.grad_accum(wx).mat(cin, 3 * hidden).noalias() +=
          sv->xs.mat(len * batch, cin).transpose() * da2d;
    if (g2.needs_grad(x)) {
      Tensor<T> dxs({len, batch, cin});
      dxs.mat(len * batch, cin).noalias() =
          da2d * g2.value(wx).mat(cin, 3 * hidden).transpose();
      detail::add_from_time_major(dxs, batch, len, cin, sv->reverse,
                                  g2.grad_accum(x));
    }
  });
}

// Single-direction LSTM; packed gate order input | forget | cell | output.
// Same sequence-in/sequence-out contract as gru().
template <typename T>
NodeId lstm(Graph<T>& g, NodeId x, NodeId wx, NodeId wh, NodeId b,
            bool reverse) {
  const Tensor<T>& xv = g.value(x);
  const Tensor<T>& wxv = g.value(wx);
  const Tensor<T>& whv = g.value(wh);
  const Tensor<T>& bv = g.value(b);
  if (xv.rank() != 3) raise<ShapeError>("lstm: rank-3 input expected");
  const std::size_t batch = xv.dim(0), len = xv.dim(1), cin = xv.dim(2);
  if (whv.rank() != 2 || whv.dim(1) != 4 * whv.dim(0))
    raise<ShapeError>("lstm: recurrent weights must be [H x 4H]");
  const std::size_t hidden = whv.dim(0);
  if (wxv.rank() != 2 || wxv.dim(0) != cin || wxv.dim(1) != 4 * hidden)
    raise<ShapeError>("lstm: input weights must be [", cin, " x ", 4 * hidden,
                      "], got ", shape_str(wxv.shape()));
  if (bv.size() != 4 * hidden) raise<ShapeError>("lstm: bias must be [4H]");

  auto sv = std::make_shared<detail::LstmSaved<T>>();
  sv->batch = batch;
  sv->len = len;
  sv->cin = cin;
  sv->hidden = hidden;
  sv->reverse = reverse;
  sv->xs = detail::to_time_major(xv, batch, len, cin, reverse);
  for (Tensor<T>* t :
       {&sv->is, &sv->fs, &sv->gs, &sv->os, &sv->cs, &sv->tcs, &sv->hs})
    *t = Tensor<T>({len, batch, hidden});

  const auto bE = static_cast<Eigen::Index>(batch);
  const auto hE = static_cast<Eigen::Index>(hidden);

  Tensor<T> xw({len, batch, 4 * hidden});
  {
    auto xw2d = xw.mat(len * batch, 4 * hidden);
    xw2d.noalias() = sv->xs.mat(len * batch, cin) * wxv.mat(cin, 4 * hidden);
    xw2d.rowwise() += bv.vec().transpose();
  }

  {
    auto xw2d = xw.mat(len * batch, 4 * hidden);
    auto is2d = sv->is.mat(len * batch, hidden);
    auto fs2d = sv->fs.mat(len * batch, hidden);
    auto gs2d = sv->gs.mat(len * batch, hidden);
    auto os2d = sv->os.mat(len * batch, hidden);
    auto cs2d = sv->cs.mat(len * batch, hidden);
    auto tcs2d = sv->tcs.mat(len * batch, hidden);
    auto hs2d = sv->hs.mat(len * batch, hidden);
    const auto wh2d = whv.mat(hidden, 4 * hidden);
    MatRM<T> h = MatRM<T>::Zero(bE, hE);
    MatRM<T> c = MatRM<T>::Zero(bE, hE);
    MatRM<T> a(bE, 4 * hE);
    auto sigmoid = [](T v) { return act_eval(Act::Sigmoid, v); };
    auto tanh_f = [](T v) { return act_eval(Act::Tanh, v); };
    for (std::size_t s = 0; s < len; ++s) {
      const auto sE = static_cast<Eigen::Index>(s);
      auto I = is2d.middleRows(sE * bE, bE);
      auto F = fs2d.middleRows(sE * bE, bE);
      auto G = gs2d.middleRows(sE * bE, bE);
      auto O = os2d.middleRows(sE * bE, bE);
      auto Cs = cs2d.middleRows(sE * bE, bE);
      auto Tc = tcs2d.middleRows(sE * bE, bE);
      auto Hs = hs2d.middleRows(sE * bE, bE);

      a = xw2d.middleRows(sE * bE, bE);
      a.noalias() += h * wh2d;
      I = a.leftCols(hE).unaryExpr(sigmoid);
      F = a.middleCols(hE, hE).unaryExpr(sigmoid);
      G = a.middleCols(2 * hE, hE).unaryExpr(tanh_f);
      O = a.rightCols(hE).unaryExpr(sigmoid);
      Cs = F.cwiseProduct(c) + I.cwiseProduct(G);
      Tc = Cs.unaryExpr(tanh_f);
      Hs = O.cwiseProduct(Tc);
      h = Hs;
      c = Cs;
    }
  }

  Tensor<T> out({batch, len, hidden});
  detail::add_from_time_major(sv->hs, batch, len, hidden, reverse, out);

  const bool ng = g.needs_grad(x) || g.needs_grad(wx) || g.needs_grad(wh) ||
                  g.needs_grad(b);
  return g.add_op(std::move(out), ng, [x, wx, wh, b,
                                       sv](Graph<T>& g2, NodeId self) {
    const std::size_t batch = sv->batch, len = sv->len, cin = sv->cin,
                      hidden = sv->hidden;
    const auto bE = static_cast<Eigen::Index>(batch);
    const auto hE = static_cast<Eigen::Index>(hidden);
    const auto wh2d = g2.value(wh).mat(hidden, 4 * hidden);

    Tensor<T> dout_tm =
        detail::to_time_major(g2.grad(self), batch, len, hidden, sv->reverse);
    Tensor<T> da({len, batch, 4 * hidden});
    {
      auto dout2d = dout_tm.mat(len * batch, hidden);
      auto da2d = da.mat(len * batch, 4 * hidden);
      auto is2d = sv->is.mat(len * batch, hidden);
      auto fs2d = sv->fs.mat(len * batch, hidden);
      auto gs2d = sv->gs.mat(len * batch, hidden);
      auto os2d = sv->os.mat(len * batch, hidden);
      auto cs2d = sv->cs.mat(len * batch, hidden);
      auto tcs2d = sv->tcs.mat(len * batch, hidden);
      MatRM<T> dh_carry = MatRM<T>::Zero(bE, hE);
      MatRM<T> dc_carry = MatRM<T>::Zero(bE, hE);
      MatRM<T> dh(bE, hE), dc(bE, hE), dtmp(bE, hE), c_prev(bE, hE);
      for (std::size_t s = len; s-- > 0;) {
        const auto sE = static_cast<Eigen::Index>(s);
        auto I = is2d.middleRows(sE * bE, bE);
        auto F = fs2d.middleRows(sE * bE, bE);
        auto G = gs2d.middleRows(sE * bE, bE);
        auto O = os2d.middleRows(sE * bE, bE);
        auto Tc = tcs2d.middleRows(sE * bE, bE);
        if (s > 0)
          c_prev = cs2d.middleRows((sE - 1) * bE, bE);
        else
          c_prev.setZero();
        auto dA = da2d.middleRows(sE * bE, bE);

        dh = dout2d.middleRows(sE * bE, bE) + dh_carry;
        dtmp = dh.cwiseProduct(Tc);
        dA.rightCols(hE) = dtmp.array() * O.array() * (T{1} - O.array());
        dc = (dh.cwiseProduct(O).array() * (T{1} - Tc.array().square()))
                 .matrix() +
             dc_carry;
        dtmp = dc.cwiseProduct(G);
        dA.leftCols(hE) = dtmp.array() * I.array() * (T{1} - I.array());
        dtmp = dc.cwiseProduct(c_prev);
        dA.middleCols(hE, hE) = dtmp.array() * F.array() * (T{1} - F.array());
        dtmp = dc.cwiseProduct(I);
        dA.middleCols(2 * hE, hE) = dtmp.array() * (T{1} - G.array().square());
        dc_carry = dc.cwiseProduct(F);
        dh_carry.noalias() = dA * wh2d.transpose();
      }
    }

    const auto da2d = da.mat(len * batch, 4 * hidden);
    if (g2.needs_grad(wh)) {
      Tensor<T> hp({len, batch, hidden});
      std::copy(sv->hs.data(), sv->hs.data() + (len - 1) * batch * hidden,
                hp.data() + batch * hidden);
      g2.grad_accum(wh).mat(hidden, 4 * hidden).noalias() +=
          hp.mat(len * batch, hidden).transpose() * da2d;
    }
    if (g2.needs_grad(b))
      g2.grad_accum(b).vec() += da2d.colwise().sum().transpose();
    if (g2.needs_grad(wx))
      g2.grad_accum(wx).mat(cin, 4 * hidden).noalias() +=
          sv->xs.mat(len * batch, cin).transpose() * da2d;
    if (g2.needs_grad(x)) {
      Tensor<T> dxs({len, batch, cin});
      dxs.mat(len * batch, cin).noalias() =
          da2d * g2.value(wx).mat(cin, 4 * hidden).transpose();
      detail::add_from_time_major(dxs, batch, len, cin, sv->reverse,
                                  g2.grad_accum(x));
    }
  });
}

}  // namespace smipred
