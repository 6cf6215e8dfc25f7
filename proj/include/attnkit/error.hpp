// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#pragma once

#include <stdexcept>
#include <string>

namespace attnkit {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Non-finite input where a finite one is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid or incomplete configuration (missing dims, odd RoPE width, bad TP degree).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A variant was sent to the wrong forward path.
class RoutingError : public Error {
 public:
  using Error::Error;
};

/// Shards or caches are inconsistent with each other.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

}  // namespace attnkit
