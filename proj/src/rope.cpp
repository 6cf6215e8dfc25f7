// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#include "attnkit/rope.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "attnkit/error.hpp"

namespace attnkit {

namespace {

void require_even(std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw ConfigError(fmt::format("rope: dimension {} must be even and positive", dim));
}

}  // namespace

std::vector<double> rope_frequencies(std::size_t dim, double base) {
  require_even(dim);
  std::vector<double> theta(dim / 2);
  for (std::size_t l = 0; l < theta.size(); ++l) {
    theta[l] = std::pow(base, -2.0 * static_cast<double>(l) / static_cast<double>(dim));
  }
  return theta;
}

void rope_rotate(std::span<double> row, std::size_t dim, double position, double base) {
  require_even(dim);
  if (row.size() % dim != 0) {
    throw DimensionError(fmt::format("rope: row width {} is not a multiple of {}", row.size(), dim));
  }
  const auto theta = rope_frequencies(dim, base);
  for (std::size_t chunk = 0; chunk < row.size(); chunk += dim) {
    for (std::size_t l = 0; l < theta.size(); ++l) {
      const double angle = position * theta[l];
      const double c = std::cos(angle), s = std::sin(angle);
      double& x0 = row[chunk + 2 * l];
      double& x1 = row[chunk + 2 * l + 1];
      const double a = x0, b = x1;
      x0 = a * c - b * s;
      x1 = a * s + b * c;
    }
  }
}

Tensor rope_apply(const Tensor& x, const RopeParams& params) {
  require_even(params.dim);
  if (x.rank() < 2 || x.shape().back() != params.dim) {
    throw DimensionError(
        fmt::format("rope_apply: last axis of {} must equal {}", shape_string(x.shape()), params.dim));
  }
  if (params.positions.size() != x.dim(0)) {
    throw DimensionError(
        fmt::format("rope_apply: {} positions for {} token rows", params.positions.size(), x.dim(0)));
  }
  Tensor out = x;
  for (std::size_t t = 0; t < x.dim(0); ++t) {
    rope_rotate(out.row(t), params.dim, static_cast<double>(params.positions[t] + params.offset), params.base);
  }
  return out;
}

std::vector<std::int64_t> iota_positions(std::size_t n, std::int64_t start) {
  std::vector<std::int64_t> pos(n);
  std::iota(pos.begin(), pos.end(), start);
  return pos;
}

}  // namespace attnkit
