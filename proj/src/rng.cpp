// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#include "attnkit/rng.hpp"

#include <cmath>
#include <numbers>

#include "attnkit/error.hpp"

namespace attnkit {

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

std::uint64_t Rng::next_u64() {
  const std::uint64_t key = mix64(seed_ ^ mix64(stream_ + 0x632be59bd9b4e019ULL));
  return mix64(key + mix64(counter_++));
}

double Rng::uniform() {
  // 53 random mantissa bits, shifted off zero.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) throw ConfigError("uniform_int: empty range");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

Rng Rng::split(std::uint64_t id) const { return Rng(seed_, mix64(stream_ ^ mix64(id + 0x5851f42d4c957f2dULL))); }

Rng Rng::split(std::string_view name) const { return split(fnv1a(name)); }

Tensor gaussian_init(Shape shape, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw ConfigError("gaussian_init: sigma must be non-negative");
  Tensor t(std::move(shape));
  if (sigma == 0.0) return t;
  for (double& v : t.data()) v = sigma * rng.normal();
  return t;
}

}  // namespace attnkit
