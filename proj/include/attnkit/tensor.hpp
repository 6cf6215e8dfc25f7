// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace attnkit {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles; the last index varies fastest.
///
/// A Tensor is a value: copies are deep and no operation mutates its
/// argument. Reshape only rewrites the shape metadata.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double value);
  static Tensor identity(std::size_t n);
  /// 2-D tensor from nested rows; all rows must have equal length.
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const;

  /// Rows and columns of a 2-D tensor.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  double operator[](std::size_t flat) const { return data_[flat]; }
  double& operator[](std::size_t flat) { return data_[flat]; }

  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  /// Contiguous row `i` of a 2-D tensor (or the i-th slab along axis 0).
  std::span<const double> row(std::size_t i) const;
  std::span<double> row(std::size_t i);

  Tensor reshape(Shape shape) const;

  /// Sub-block starting at `offsets` with the given `extents` (one per axis).
  Tensor block(std::span<const std::size_t> offsets, std::span<const std::size_t> extents) const;

  /// Writes `src` into this tensor at `offsets`; shapes must fit.
  void assign_block(std::span<const std::size_t> offsets, const Tensor& src);

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Linear algebra. All accumulation is in double precision.

/// c[i,j] = sum_l a[i,l] * b[l,j]
Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T, i.e. c[i,j] = sum_l a[i,l] * b[j,l]
Tensor matmul_bt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Per-head contraction "hp,hpc->hc": x is [h, p], w is [h, p, c].
Tensor head_contract(const Tensor& x, const Tensor& w);

/// Row-wise softmax with per-row max subtraction. -inf entries get zero mass.
Tensor softmax_rows(const Tensor& m);

/// out[t,:] = m[t,:] / sqrt(mean(m[t,:]^2) + eps); no gain vector.
Tensor rmsnorm(const Tensor& m, double eps = 1e-6);

// Elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor sigmoid(const Tensor& a);
Tensor silu(const Tensor& a);

// Structure. Column operations act on the last axis of 2-D tensors.
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
/// Repeats each slice along `axis` r times consecutively (torch.repeat_interleave).
Tensor repeat_interleave(const Tensor& t, std::size_t r, std::size_t axis);

double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);
/// max|a-b| / max(max|b|, floor)
double max_rel_diff(const Tensor& a, const Tensor& b, double floor = 1e-300);

}  // namespace attnkit
