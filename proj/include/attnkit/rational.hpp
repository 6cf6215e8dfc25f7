// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#pragma once

#include <cstdint>
#include <string>

#include <boost/rational.hpp>

namespace attnkit {

using Rational = boost::rational<std::int64_t>;

/// "p" or "p/q".
std::string rational_string(const Rational& r);

/// Decimal rendering with up to `digits` fractional digits, trailing zeros trimmed.
std::string rational_decimal(const Rational& r, int digits = 6);

double to_double(const Rational& r);

/// Symbolic square root of a non-negative rational: "1/2", "√6", "√2/2".
std::string sqrt_string(const Rational& square);

}  // namespace attnkit
