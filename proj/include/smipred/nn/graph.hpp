//
// Project smipred - Copyright 2026 smipred contributors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode tape. Operations append nodes holding their forward value and
// a closure that scatters gradients to their parents; backward() replays the
// tape in reverse insertion order, which is a reverse topological order since
// nodes can only reference earlier nodes. Gradients accumulate additively at
// fan-out points. Layer-granular ops (dense, conv, rnn; see layers.hpp) keep
// the tape short and the inner loops inside Eigen.
#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "smipred/nn/tensor.hpp"

namespace smipred {

using NodeId = std::int32_t;

template <typename T>
struct Variable {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  Variable() = default;
  Variable(std::string n, Tensor<T> v, bool train = true)
      : name(std::move(n)),
        value(std::move(v)),
        grad(value.shape()),
        trainable(train) {}
};

enum class Act { Linear, Sigmoid, Relu, Selu, Softplus, Tanh };

inline constexpr double kSeluLambda = 1.0507009873554804934193349852946;
inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;

template <typename T>
T act_eval(Act a, T x) {
  switch (a) {
    case Act::Linear: return x;
    case Act::Sigmoid:
      return x >= T{0} ? T{1} / (T{1} + std::exp(-x))
                       : std::exp(x) / (T{1} + std::exp(x));
    case Act::Relu: return x > T{0} ? x : T{0};
    case Act::Selu:
      return x > T{0} ? static_cast<T>(kSeluLambda) * x
                      : static_cast<T>(kSeluLambda * kSeluAlpha) *
                            (std::exp(x) - T{1});
    case Act::Softplus:
      if (x > T{20}) return x;
      if (x < T{-20}) return std::exp(x);
      return std::log1p(std::exp(x));
    case Act::Tanh: return std::tanh(x);
  }
  return x;
}

// Derivative expressed through the op's own output; every activation here
// admits that form, so forward values double as backward state.
template <typename T>
T act_deriv_from_output(Act a, T y) {
  switch (a) {
    case Act::Linear: return T{1};
    case Act::Sigmoid: return y * (T{1} - y);
    case Act::Relu: return y > T{0} ? T{1} : T{0};
    case Act::Selu:
      return y > T{0} ? static_cast<T>(kSeluLambda)
                      : y + static_cast<T>(kSeluLambda * kSeluAlpha);
    case Act::Softplus: return T{1} - std::exp(-y);
    case Act::Tanh: return T{1} - y * y;
  }
  return T{1};
}

template <typename T>
class Graph {
 public:
  using BackFn = std::function<void(Graph&)>;

  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // empty until touched during backward
    BackFn back;
    bool needs_grad = false;
  };

  // When set, every node's forward value is scanned for non-finite entries.
  bool check_finite = false;

  NodeId add_node(Tensor<T> value, bool needs_grad) {
    if (check_finite && !value.all_finite())
      raise("non-finite activation in node ", nodes_.size());
    nodes_.push_back(Node{std::move(value), {}, {}, needs_grad});
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  // Append an op node; `back` receives the graph and the node's own id.
  NodeId add_op(Tensor<T> value, bool needs_grad,
                std::function<void(Graph&, NodeId)> back) {
    const NodeId id = add_node(std::move(value), needs_grad);
    if (needs_grad && back) {
      nodes_[static_cast<std::size_t>(id)].back =
          [id, fn = std::move(back)](Graph& g) {
            if (g.has_grad(id)) fn(g, id);
          };
    }
    return id;
  }

  NodeId input(Tensor<T> v) { return add_node(std::move(v), false); }

  NodeId param(Variable<T>& var) {
    Variable<T>* vp = &var;
    return add_op(var.value, var.trainable, [vp](Graph& g, NodeId self) {
      vp->grad.vec() += g.grad(self).vec();
    });
  }

  const Tensor<T>& value(NodeId id) const {
    return nodes_[static_cast<std::size_t>(id)].value;
  }
  bool needs_grad(NodeId id) const {
    return nodes_[static_cast<std::size_t>(id)].needs_grad;
  }
  bool has_grad(NodeId id) const {
    return !nodes_[static_cast<std::size_t>(id)].grad.empty();
  }
  const Tensor<T>& grad(NodeId id) const {
    return nodes_[static_cast<std::size_t>(id)].grad;
  }

  // Gradient buffer, allocated to zeros on first touch.
  Tensor<T>& grad_accum(NodeId id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  void backward(NodeId root) {
    Node& r = nodes_[static_cast<std::size_t>(root)];
    if (r.value.size() != 1)
      raise<ShapeError>("backward: root must be scalar, got ",
                        shape_str(r.value.shape()));
    grad_accum(root)[0] = T{1};
    for (std::int32_t i = root; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.needs_grad && n.back && !n.grad.empty()) n.back(*this);
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Elementwise and structural ops
// ---------------------------------------------------------------------------

template <typename T>
NodeId activation(Graph<T>& g, NodeId x, Act a) {
  if (a == Act::Linear) return x;
  const Tensor<T>& xv = g.value(x);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = act_eval(a, xv[i]);
  return g.add_op(std::move(out), g.needs_grad(x),
                  [x, a](Graph<T>& g2, NodeId self) {
                    const Tensor<T>& dy = g2.grad(self);
                    const Tensor<T>& y = g2.value(self);
                    Tensor<T>& dx = g2.grad_accum(x);
                    for (std::size_t i = 0; i < dy.size(); ++i)
                      dx[i] += dy[i] * act_deriv_from_output(a, y[i]);
                  });
}

template <typename T>
NodeId add(Graph<T>& g, NodeId a, NodeId b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  if (!av.same_shape(bv))
    raise<ShapeError>("add: ", shape_str(av.shape()), " vs ",
                      shape_str(bv.shape()));
  Tensor<T> out(av.shape());
  out.vec() = av.vec() + bv.vec();
  return g.add_op(std::move(out), g.needs_grad(a) || g.needs_grad(b),
                  [a, b](Graph<T>& g2, NodeId self) {
                    const Tensor<T>& dy = g2.grad(self);
                    if (g2.needs_grad(a)) g2.grad_accum(a).vec() += dy.vec();
                    if (g2.needs_grad(b)) g2.grad_accum(b).vec() += dy.vec();
                  });
}

template <typename T>
NodeId scale(Graph<T>& g, NodeId x, T c) {
  Tensor<T> out(g.value(x).shape());
  out.vec() = g.value(x).vec() * c;
  return g.add_op(std::move(out), g.needs_grad(x),
                  [x, c](Graph<T>& g2, NodeId self) {
                    g2.grad_accum(x).vec() += g2.grad(self).vec() * c;
                  });
}

// out[b,l,:] = x[b,l,:] * m[b,l]; the mask broadcasts across channels.
template <typename T>
NodeId mul_positions(Graph<T>& g, NodeId x, NodeId m) {
  const Tensor<T>& xv = g.value(x);
  const Tensor<T>& mv = g.value(m);
  const std::size_t ch = xv.last_dim();
  if (xv.size() != mv.size() * ch)
    raise<ShapeError>("mul_positions: ", shape_str(xv.shape()), " vs ",
                      shape_str(mv.shape()));
  Tensor<T> out(xv.shape());
  const std::size_t rows = mv.size();
  for (std::size_t r = 0; r < rows; ++r) {
    const T s = mv[r];
    for (std::size_t c = 0; c < ch; ++c) out[r * ch + c] = xv[r * ch + c] * s;
  }
  return g.add_op(
      std::move(out), g.needs_grad(x) || g.needs_grad(m),
      [x, m, ch, rows](Graph<T>& g2, NodeId self) {
        const Tensor<T>& dy = g2.grad(self);
        const Tensor<T>& xv2 = g2.value(x);
        const Tensor<T>& mv2 = g2.value(m);
        if (g2.needs_grad(x)) {
          Tensor<T>& dx = g2.grad_accum(x);
          for (std::size_t r = 0; r < rows; ++r) {
            const T s = mv2[r];
            for (std::size_t c = 0; c < ch; ++c)
              dx[r * ch + c] += dy[r * ch + c] * s;
          }
        }
        if (g2.needs_grad(m)) {
          Tensor<T>& dm = g2.grad_accum(m);
          for (std::size_t r = 0; r < rows; ++r) {
            T acc{0};
            for (std::size_t c = 0; c < ch; ++c)
              acc += dy[r * ch + c] * xv2[r * ch + c];
            dm[r] += acc;
          }
        }
      });
}

// Concatenate along the last dimension; leading dimensions must agree.
template <typename T>
NodeId concat_last(Graph<T>& g, NodeId a, NodeId b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  const std::size_t ca = av.last_dim(), cb = bv.last_dim();
  const std::size_t rows = av.size() / ca;
  if (bv.size() / cb != rows || av.rank() != bv.rank())
    raise<ShapeError>("concat_last: ", shape_str(av.shape()), " vs ",
                      shape_str(bv.shape()));
  Shape out_shape = av.shape();
  out_shape.back() = ca + cb;
  Tensor<T> out(out_shape);
  out.mat(rows, ca + cb).leftCols(ca) = av.mat(rows, ca);
  out.mat(rows, ca + cb).rightCols(cb) = bv.mat(rows, cb);
  return g.add_op(std::move(out), g.needs_grad(a) || g.needs_grad(b),
                  [a, b, rows, ca, cb](Graph<T>& g2, NodeId self) {
                    const auto dy = g2.grad(self).mat(rows, ca + cb);
                    if (g2.needs_grad(a))
                      g2.grad_accum(a).mat(rows, ca) += dy.leftCols(ca);
                    if (g2.needs_grad(b))
                      g2.grad_accum(b).mat(rows, cb) += dy.rightCols(cb);
                  });
}

// Select one timestep from a [B x L x H] sequence.
template <typename T>
NodeId slice_time(Graph<T>& g, NodeId x, std::size_t t) {
  const Tensor<T>& xv = g.value(x);
  if (xv.rank() != 3) raise<ShapeError>("slice_time: rank-3 input expected");
  const std::size_t batch = xv.dim(0), len = xv.dim(1), ch = xv.dim(2);
  if (t >= len) raise<ShapeError>("slice_time: t=", t, " out of ", len);
  Tensor<T> out({batch, ch});
  for (std::size_t b = 0; b < batch; ++b)
    out.mat(batch, ch).row(static_cast<Eigen::Index>(b)) =
        xv.mat(batch * len, ch).row(static_cast<Eigen::Index>(b * len + t));
  return g.add_op(std::move(out), g.needs_grad(x),
                  [x, t, batch, len, ch](Graph<T>& g2, NodeId self) {
                    const auto dy = g2.grad(self).mat(batch, ch);
                    auto dx = g2.grad_accum(x).mat(batch * len, ch);
                    for (std::size_t b = 0; b < batch; ++b)
                      dx.row(static_cast<Eigen::Index>(b * len + t)) +=
                          dy.row(static_cast<Eigen::Index>(b));
                  });
}

// Same data, new dimensions; backward is the identity.
template <typename T>
NodeId reshape(Graph<T>& g, NodeId x, Shape shape) {
  const Tensor<T>& xv = g.value(x);
  if (shape_size(shape) != xv.size())
    raise<ShapeError>("reshape: ", shape_str(shape), " has wrong size for ",
                      shape_str(xv.shape()));
  Tensor<T> out(shape);
  out.vec() = xv.vec();
  return g.add_op(std::move(out), g.needs_grad(x),
                  [x](Graph<T>& g2, NodeId self) {
                    g2.grad_accum(x).vec() += g2.grad(self).vec();
                  });
}

template <typename T>
NodeId mean_all(Graph<T>& g, NodeId x) {
  const Tensor<T>& xv = g.value(x);
  const T n = static_cast<T>(xv.size());
  // fixed-order accumulation, bit-reproducible across runs
  T acc{0};
  for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i];
  return g.add_op(Tensor<T>::scalar(acc / n), g.needs_grad(x),
                  [x, n](Graph<T>& g2, NodeId self) {
                    const T d = g2.grad(self)[0] / n;
                    g2.grad_accum(x).vec().array() += d;
                  });
}

}  // namespace smipred
