// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#include "attnkit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "attnkit/error.hpp"

namespace attnkit {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) { return fmt::format("[{}]", fmt::join(shape, ", ")); }

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(fmt::format("{}: expected rank {}, got {}", op, rank, shape_string(t.shape())));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(
        fmt::format("{}: shape mismatch {} vs {}", op, shape_string(a.shape()), shape_string(b.shape())));
  }
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t axis = shape.size(); axis-- > 1;) strides[axis - 1] = strides[axis] * shape[axis];
  return strides;
}

// Calls fn(src_flat, dst_flat) for every element of a block copy, one
// contiguous innermost run at a time.
template <typename Fn>
void for_each_block_run(const Shape& outer_shape, std::span<const std::size_t> offsets,
                        std::span<const std::size_t> extents, Fn&& fn) {
  const std::size_t rank = outer_shape.size();
  if (rank == 0) {
    fn(0, 0, 1);
    return;
  }
  const auto strides = strides_of(outer_shape);
  const std::size_t runs = shape_size(Shape(extents.begin(), extents.end() - 1));
  const std::size_t run_len = extents[rank - 1];
  std::vector<std::size_t> idx(rank - 1, 0);
  for (std::size_t r = 0; r < runs; ++r) {
    std::size_t src = offsets[rank - 1];
    for (std::size_t axis = 0; axis + 1 < rank; ++axis) src += (offsets[axis] + idx[axis]) * strides[axis];
    fn(src, r * run_len, run_len);
    for (std::size_t axis = rank - 1; axis-- > 0;) {
      if (++idx[axis] < extents[axis]) break;
      idx[axis] = 0;
    }
  }
}

void check_block(const Shape& shape, std::span<const std::size_t> offsets, std::span<const std::size_t> extents,
                 const char* op) {
  if (offsets.size() != shape.size() || extents.size() != shape.size()) {
    throw DimensionError(fmt::format("{}: block rank does not match tensor {}", op, shape_string(shape)));
  }
  for (std::size_t axis = 0; axis < shape.size(); ++axis) {
    if (offsets[axis] + extents[axis] > shape[axis]) {
      throw DimensionError(fmt::format("{}: block [{}] + [{}] exceeds tensor {}", op, fmt::join(offsets, ", "),
                                       fmt::join(extents, ", "), shape_string(shape)));
    }
  }
}

template <typename Fn>
Tensor map(const Tensor& a, Fn&& fn) {
  Tensor out(a.shape());
  std::transform(a.data().begin(), a.data().end(), out.data().begin(), fn);
  return out;
}

template <typename Fn>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, Fn&& fn) {
  require_same_shape(a, b, op);
  Tensor out(a.shape());
  std::transform(a.data().begin(), a.data().end(), b.data().begin(), out.data().begin(), fn);
  return out;
}

}  // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError(
        fmt::format("tensor: shape {} needs {} elements, got {}", shape_string(shape_), shape_size(shape_), data_.size()));
  }
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t cols = rows.size() == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw DimensionError("from_rows: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(data));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError(fmt::format("dim: axis {} out of range for {}", axis, shape_string(shape_)));
  }
  return shape_[axis];
}

std::size_t Tensor::rows() const {
  require_rank(*this, 2, "rows");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  require_rank(*this, 2, "cols");
  return shape_[1];
}

std::span<const double> Tensor::row(std::size_t i) const {
  const std::size_t stride = shape_.empty() ? 0 : data_.size() / shape_[0];
  return std::span<const double>(data_).subspan(i * stride, stride);
}

std::span<double> Tensor::row(std::size_t i) {
  const std::size_t stride = shape_.empty() ? 0 : data_.size() / shape_[0];
  return std::span<double>(data_).subspan(i * stride, stride);
}

Tensor Tensor::reshape(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError(
        fmt::format("reshape: cannot view {} as {}", shape_string(shape_), shape_string(shape)));
  }
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::block(std::span<const std::size_t> offsets, std::span<const std::size_t> extents) const {
  check_block(shape_, offsets, extents, "block");
  Tensor out(Shape(extents.begin(), extents.end()));
  for_each_block_run(shape_, offsets, extents, [&](std::size_t src, std::size_t dst, std::size_t len) {
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(src), len, out.data_.begin() + static_cast<std::ptrdiff_t>(dst));
  });
  return out;
}

void Tensor::assign_block(std::span<const std::size_t> offsets, const Tensor& src) {
  check_block(shape_, offsets, src.shape(), "assign_block");
  for_each_block_run(shape_, offsets, src.shape(), [&](std::size_t dst, std::size_t from, std::size_t len) {
    std::copy_n(src.data_.begin() + static_cast<std::ptrdiff_t>(from), len, data_.begin() + static_cast<std::ptrdiff_t>(dst));
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError(fmt::format("matmul: inner dimensions differ: {} x {}", shape_string(a.shape()),
                                     shape_string(b.shape())));
  }
  const std::size_t m = a.rows(), k = a.cols(), p = b.cols();
  Tensor c({m, p});
  for (std::size_t i = 0; i < m; ++i) {
    auto out = c.row(i);
    for (std::size_t l = 0; l < k; ++l) {
      const double ail = a.at(i, l);
      if (ail == 0.0) continue;
      const auto brow = b.row(l);
      for (std::size_t j = 0; j < p; ++j) out[j] += ail * brow[j];
    }
  }
  return c;
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_bt");
  require_rank(b, 2, "matmul_bt");
  if (a.cols() != b.cols()) {
    throw DimensionError(fmt::format("matmul_bt: inner dimensions differ: {} x {}^T", shape_string(a.shape()),
                                     shape_string(b.shape())));
  }
  const std::size_t m = a.rows(), p = b.rows();
  Tensor c({m, p});
  for (std::size_t i = 0; i < m; ++i) {
    const auto arow = a.row(i);
    for (std::size_t j = 0; j < p; ++j) {
      const auto brow = b.row(j);
      double acc = 0.0;
      for (std::size_t l = 0; l < arow.size(); ++l) acc += arow[l] * brow[l];
      c.at(i, j) = acc;
    }
  }
  return c;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  Tensor t({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
  return t;
}

Tensor head_contract(const Tensor& x, const Tensor& w) {
  require_rank(x, 2, "head_contract");
  require_rank(w, 3, "head_contract");
  if (x.dim(0) != w.dim(0) || x.dim(1) != w.dim(1)) {
    throw DimensionError(fmt::format("head_contract: hp,hpc mismatch: {} vs {}", shape_string(x.shape()),
                                     shape_string(w.shape())));
  }
  const std::size_t h = w.dim(0), p = w.dim(1), c = w.dim(2);
  Tensor out({h, c});
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t l = 0; l < p; ++l) {
      const double xv = x.at(i, l);
      for (std::size_t j = 0; j < c; ++j) out.at(i, j) += xv * w.at(i, l, j);
    }
  }
  return out;
}

Tensor softmax_rows(const Tensor& m) {
  require_rank(m, 2, "softmax_rows");
  Tensor out(m.shape());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto in = m.row(i);
    double peak = -std::numeric_limits<double>::infinity();
    for (double v : in) {
      if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
        throw NumericError(fmt::format("softmax_rows: non-finite logit in row {}", i));
      }
      peak = std::max(peak, v);
    }
    if (!std::isfinite(peak)) throw NumericError(fmt::format("softmax_rows: row {} is fully masked", i));
    auto dst = out.row(i);
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      dst[j] = std::exp(in[j] - peak);
      total += dst[j];
    }
    for (double& v : dst) v /= total;
  }
  return out;
}

Tensor rmsnorm(const Tensor& m, double eps) {
  require_rank(m, 2, "rmsnorm");
  if (m.cols() == 0) throw DimensionError("rmsnorm: zero-width rows");
  Tensor out(m.shape());
  for (std::size_t t = 0; t < m.rows(); ++t) {
    const auto in = m.row(t);
    double ms = 0.0;
    for (double v : in) ms += v * v;
    ms /= static_cast<double>(in.size());
    const double denom = std::sqrt(ms + eps);
    auto dst = out.row(t);
    for (std::size_t j = 0; j < in.size(); ++j) dst[j] = denom == 0.0 ? 0.0 : in[j] / denom;
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return zip(a, b, "add", std::plus<>()); }
Tensor sub(const Tensor& a, const Tensor& b) { return zip(a, b, "sub", std::minus<>()); }
Tensor hadamard(const Tensor& a, const Tensor& b) { return zip(a, b, "hadamard", std::multiplies<>()); }
Tensor scale(const Tensor& a, double s) {
  return map(a, [s](double v) { return v * s; });
}
Tensor sigmoid(const Tensor& a) {
  return map(a, [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); });
}
Tensor silu(const Tensor& a) {
  return hadamard(a, sigmoid(a));
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  const std::size_t n = parts.front().rows();
  std::size_t width = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) {
      throw DimensionError(fmt::format("concat_cols: row counts differ: {} vs {}",
                                       shape_string(parts.front().shape()), shape_string(p.shape())));
    }
    width += p.cols();
  }
  Tensor out({n, width});
  for (std::size_t i = 0; i < n; ++i) {
    auto dst = out.row(i).begin();
    for (const auto& p : parts) dst = std::copy(p.row(i).begin(), p.row(i).end(), dst);
  }
  return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  const Tensor parts[] = {a, b};
  return concat_cols(parts);
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank(a, 2, "slice_cols");
  if (begin > end || end > a.cols()) {
    throw DimensionError(fmt::format("slice_cols: [{}, {}) outside {}", begin, end, shape_string(a.shape())));
  }
  const std::size_t offsets[] = {0, begin};
  const std::size_t extents[] = {a.rows(), end - begin};
  return a.block(offsets, extents);
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no operands");
  Shape shape = parts.front().shape();
  std::vector<double> data;
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (Shape(p.shape().begin() + 1, p.shape().end()) != Shape(shape.begin() + 1, shape.end())) {
      throw DimensionError(fmt::format("concat_rows: trailing shapes differ: {} vs {}", shape_string(shape),
                                       shape_string(p.shape())));
    }
    n += p.dim(0);
    data.insert(data.end(), p.data().begin(), p.data().end());
  }
  shape[0] = n;
  return Tensor(std::move(shape), std::move(data));
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  if (a.rank() == 0 || begin > end || end > a.dim(0)) {
    throw DimensionError(fmt::format("slice_rows: [{}, {}) outside {}", begin, end, shape_string(a.shape())));
  }
  Shape shape = a.shape();
  const std::size_t stride = a.size() / shape[0];
  shape[0] = end - begin;
  std::vector<double> data(a.data().begin() + static_cast<std::ptrdiff_t>(begin * stride),
                           a.data().begin() + static_cast<std::ptrdiff_t>(end * stride));
  return Tensor(std::move(shape), std::move(data));
}

Tensor repeat_interleave(const Tensor& t, std::size_t r, std::size_t axis) {
  if (axis >= t.rank()) throw DimensionError(fmt::format("repeat_interleave: axis {} out of range", axis));
  Shape shape = t.shape();
  const std::size_t outer = shape_size(Shape(shape.begin(), shape.begin() + static_cast<std::ptrdiff_t>(axis)));
  const std::size_t inner = shape_size(Shape(shape.begin() + static_cast<std::ptrdiff_t>(axis) + 1, shape.end()));
  const std::size_t along = shape[axis];
  shape[axis] *= r;
  Tensor out(shape);
  auto dst = out.data().begin();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t a = 0; a < along; ++a) {
      const auto src = t.data().begin() + static_cast<std::ptrdiff_t>((o * along + a) * inner);
      for (std::size_t k = 0; k < r; ++k) dst = std::copy_n(src, inner, dst);
    }
  }
  return out;
}

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double max_rel_diff(const Tensor& a, const Tensor& b, double floor) {
  return max_abs_diff(a, b) / std::max(max_abs(b), floor);
}

}  // namespace attnkit
