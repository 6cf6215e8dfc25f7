// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attnkit/config.hpp"
#include "attnkit/tensor.hpp"

namespace attnkit {

/// Counts distinct cache elements touched: for each cache tensor, the
/// number of rows read times the number of distinct columns read.
class ReadCounter {
 public:
  void record(std::string_view tensor, std::size_t rows, std::size_t col_begin, std::size_t col_end,
              std::size_t width);
  std::uint64_t total() const;
  std::map<std::string, std::uint64_t> per_tensor() const;
  /// Distinct columns read from one tensor.
  std::vector<std::size_t> columns(std::string_view tensor) const;
  void reset() { seen_.clear(); }

 private:
  struct Seen {
    std::size_t rows = 0;
    std::vector<bool> cols;
  };
  std::map<std::string, Seen, std::less<>> seen_;
};

/// Append-only row store for one cached quantity. A tensor may own only a
/// subset of the logical columns; reading any other column is an error.
class CacheTensor {
 public:
  CacheTensor(std::string name, std::size_t width, std::vector<std::size_t> owned);
  static CacheTensor full(std::string name, std::size_t width);

  const std::string& name() const { return name_; }
  std::size_t width() const { return width_; }
  std::size_t rows() const { return rows_; }
  const std::vector<std::size_t>& owned() const { return owned_; }
  bool owns(std::size_t col) const { return col < width_ && local_[col] >= 0; }

  /// Appends one row given all `width` logical values; unowned ones are dropped.
  void append_full(std::span<const double> row);
  /// Appends one row given only the owned values, in owned-column order.
  void append_owned(std::span<const double> values);

  /// Rows [0, rows()) and logical columns [begin, end) as a dense tensor.
  Tensor read(std::size_t begin, std::size_t end, ReadCounter* counter = nullptr) const;
  /// Prefix of `n` rows.
  Tensor read_rows(std::size_t n, std::size_t begin, std::size_t end, ReadCounter* counter = nullptr) const;

  /// FNV-style digest over the bit patterns of the first `n` stored rows.
  std::uint64_t checksum(std::size_t n) const;

 private:
  std::string name_;
  std::size_t width_;
  std::vector<std::size_t> owned_;
  std::vector<std::ptrdiff_t> local_;
  std::vector<double> data_;
  std::size_t rows_ = 0;
};

/// Per-variant decode state.
///
/// Head caches (MHA/MQA/GQA/MFA): K, V. GTA: V_C, K_R. TPA: K_A, K_C, V_A,
/// V_C. Latent variants: C_KV (all groups side by side), K_R.
struct KvCache {
  Variant variant = Variant::MHA;
  std::vector<CacheTensor> tensors;

  CacheTensor& get(std::string_view name);
  const CacheTensor& get(std::string_view name) const;
  /// Tokens stored; every tensor has the same row count.
  std::size_t length() const;
  /// Logical elements per token summed over tensors.
  std::size_t width_per_token() const;
  /// Elements this cache physically stores per token.
  std::size_t stored_per_token() const;
  std::uint64_t checksum() const;
};

/// Logical cache tensor names and widths for a variant.
std::vector<std::pair<std::string, std::size_t>> cache_layout(const AttnConfig& cfg);

/// Empty cache; `owned` restricts columns per tensor name (absent = all).
KvCache make_cache(const AttnConfig& cfg, const std::map<std::string, std::vector<std::size_t>>& owned = {});

}  // namespace attnkit
