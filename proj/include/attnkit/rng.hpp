// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#pragma once

#include <cstdint>
#include <string_view>

#include "attnkit/tensor.hpp"

namespace attnkit {

/// Counter-based generator: draw k of stream s is a pure function of
/// (seed, s, k), so split streams never depend on how many draws other
/// streams have made.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  /// Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n);
  double normal();

  /// Child generator on an independent stream.
  Rng split(std::uint64_t id) const;
  Rng split(std::string_view name) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t fnv1a(std::string_view text);

/// I.i.d. N(0, sigma^2) entries. sigma == 0 yields an all-zero tensor.
Tensor gaussian_init(Shape shape, double sigma, Rng& rng);

}  // namespace attnkit
