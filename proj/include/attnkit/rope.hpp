// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "attnkit/tensor.hpp"

namespace attnkit {

/// Rotary embedding over interleaved pairs (2l, 2l+1).
struct RopeParams {
  std::size_t dim = 0;
  double base = 10000.0;
  /// One absolute position per token row.
  std::vector<std::int64_t> positions;
  /// Added to every position; models left padding.
  std::int64_t offset = 0;
};

/// theta_l = base^(-2l/dim) for l in [0, dim/2).
std::vector<double> rope_frequencies(std::size_t dim, double base);

/// Rotates x, shaped [n, dim] or [n, k, dim], row t by positions[t] + offset.
Tensor rope_apply(const Tensor& x, const RopeParams& params);

/// Rotates every consecutive `dim`-wide chunk of `row` in place.
void rope_rotate(std::span<double> row, std::size_t dim, double position, double base);

/// Positions 0..n-1 shifted by `start`.
std::vector<std::int64_t> iota_positions(std::size_t n, std::int64_t start = 0);

}  // namespace attnkit
