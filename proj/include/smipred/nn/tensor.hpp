//
// Project smipred - Copyright 2026 smipred contributors
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "smipred/common.hpp"

namespace smipred {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// 64-byte aligned storage so Eigen's vectorized kernels always take the same
// code path; reduction order, and hence rounding, stays independent of where
// the heap happens to place a buffer.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlign));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

// Dense row-major tensor. Rank and dimension sizes are dynamic; values are
// contiguous. All nn ops view slabs of it through Eigen maps.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    for (auto d : shape_)
      if (d == 0) raise<ShapeError>("Tensor: zero dimension in ", shape_str(shape_));
  }

  static Tensor from(Shape shape, const std::vector<T>& values) {
    Tensor t;
    if (shape_size(shape) != values.size())
      raise<ShapeError>("Tensor::from: ", values.size(), " values for shape ",
                        shape_str(shape));
    t.shape_ = std::move(shape);
    t.data_.assign(values.begin(), values.end());
    return t;
  }

  static Tensor scalar(T v) { return from({1}, {v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T{0}); }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  // Collapse to a rows x cols matrix view; rows * cols must equal size().
  Eigen::Map<MatRM<T>> mat(std::size_t rows, std::size_t cols) {
    check_view(rows * cols);
    return {data_.data(), static_cast<Eigen::Index>(rows),
            static_cast<Eigen::Index>(cols)};
  }
  Eigen::Map<const MatRM<T>> mat(std::size_t rows, std::size_t cols) const {
    check_view(rows * cols);
    return {data_.data(), static_cast<Eigen::Index>(rows),
            static_cast<Eigen::Index>(cols)};
  }

  // View with the last dimension as columns.
  Eigen::Map<MatRM<T>> mat_lastdim() {
    return mat(size() / last_dim(), last_dim());
  }
  Eigen::Map<const MatRM<T>> mat_lastdim() const {
    return mat(size() / last_dim(), last_dim());
  }

  Eigen::Map<VecX<T>> vec() {
    return {data_.data(), static_cast<Eigen::Index>(size())};
  }
  Eigen::Map<const VecX<T>> vec() const {
    return {data_.data(), static_cast<Eigen::Index>(size())};
  }

  std::size_t last_dim() const {
    return shape_.empty() ? 1 : shape_.back();
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  void check_view(std::size_t n) const {
    if (n != size())
      raise<ShapeError>("Tensor view of ", n, " elements over ", size());
  }

  Shape shape_;
  std::vector<T, AlignedAllocator<T>> data_;
};

// Integer index grid, used for encoded SMILES batches.
struct IndexMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int32_t> v;

  IndexMatrix() = default;
  IndexMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0) {}
  std::int32_t& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  std::int32_t at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
};

template <typename T>
Tensor<T> tensor_like(const Tensor<T>& t, T fill = T{0}) {
  return Tensor<T>(t.shape(), fill);
}

}  // namespace smipred
