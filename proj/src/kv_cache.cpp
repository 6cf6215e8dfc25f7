// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#include "attnkit/kv_cache.hpp"

#include <algorithm>
#include <bit>
#include <numeric>

#include <fmt/format.h>

#include "attnkit/error.hpp"

namespace attnkit {

void ReadCounter::record(std::string_view tensor, std::size_t rows, std::size_t col_begin, std::size_t col_end,
                         std::size_t width) {
  auto it = seen_.find(tensor);
  if (it == seen_.end()) it = seen_.emplace(std::string(tensor), Seen{0, std::vector<bool>(width, false)}).first;
  Seen& s = it->second;
  s.rows = std::max(s.rows, rows);
  for (std::size_t c = col_begin; c < col_end; ++c) s.cols[c] = true;
}

std::uint64_t ReadCounter::total() const {
  std::uint64_t sum = 0;
  for (const auto& [name, count] : per_tensor()) sum += count;
  return sum;
}

std::map<std::string, std::uint64_t> ReadCounter::per_tensor() const {
  std::map<std::string, std::uint64_t> out;
  for (const auto& [name, s] : seen_) {
    out[name] = static_cast<std::uint64_t>(s.rows) * static_cast<std::uint64_t>(std::count(s.cols.begin(), s.cols.end(), true));
  }
  return out;
}

std::vector<std::size_t> ReadCounter::columns(std::string_view tensor) const {
  std::vector<std::size_t> cols;
  auto it = seen_.find(tensor);
  if (it == seen_.end()) return cols;
  for (std::size_t c = 0; c < it->second.cols.size(); ++c) {
    if (it->second.cols[c]) cols.push_back(c);
  }
  return cols;
}

CacheTensor::CacheTensor(std::string name, std::size_t width, std::vector<std::size_t> owned)
    : name_(std::move(name)), width_(width), owned_(std::move(owned)), local_(width, -1) {
  std::sort(owned_.begin(), owned_.end());
  for (std::size_t i = 0; i < owned_.size(); ++i) {
    if (owned_[i] >= width_ || local_[owned_[i]] >= 0) {
      throw IntegrityError(fmt::format("cache {}: bad owned column {}", name_, owned_[i]));
    }
    local_[owned_[i]] = static_cast<std::ptrdiff_t>(i);
  }
}

CacheTensor CacheTensor::full(std::string name, std::size_t width) {
  std::vector<std::size_t> all(width);
  std::iota(all.begin(), all.end(), std::size_t{0});
  return CacheTensor(std::move(name), width, std::move(all));
}

void CacheTensor::append_full(std::span<const double> row) {
  if (row.size() != width_) {
    throw DimensionError(fmt::format("cache {}: appended row has {} values, expected {}", name_, row.size(), width_));
  }
  for (std::size_t c : owned_) data_.push_back(row[c]);
  ++rows_;
}

void CacheTensor::append_owned(std::span<const double> values) {
  if (values.size() != owned_.size()) {
    throw DimensionError(
        fmt::format("cache {}: appended {} values, expected {}", name_, values.size(), owned_.size()));
  }
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

Tensor CacheTensor::read(std::size_t begin, std::size_t end, ReadCounter* counter) const {
  return read_rows(rows_, begin, end, counter);
}

Tensor CacheTensor::read_rows(std::size_t n, std::size_t begin, std::size_t end, ReadCounter* counter) const {
  if (begin > end || end > width_ || n > rows_) {
    throw DimensionError(fmt::format("cache {}: read of {} rows, columns [{}, {}) outside {}x{}", name_, n, begin, end,
                                     rows_, width_));
  }
  for (std::size_t c = begin; c < end; ++c) {
    if (local_[c] < 0) throw IntegrityError(fmt::format("cache {}: column {} is not held here", name_, c));
  }
  Tensor out({n, end - begin});
  const std::size_t stride = owned_.size();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = begin; c < end; ++c) {
      out.at(r, c - begin) = data_[r * stride + static_cast<std::size_t>(local_[c])];
    }
  }
  if (counter != nullptr) counter->record(name_, n, begin, end, width_);
  return out;
}

std::uint64_t CacheTensor::checksum(std::size_t n) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const std::size_t count = std::min(n, rows_) * owned_.size();
  for (std::size_t i = 0; i < count; ++i) {
    h ^= std::bit_cast<std::uint64_t>(data_[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

CacheTensor& KvCache::get(std::string_view name) {
  return const_cast<CacheTensor&>(std::as_const(*this).get(name));
}

const CacheTensor& KvCache::get(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name() == name) return t;
  }
  throw IntegrityError(fmt::format("cache has no tensor {}", name));
}

std::size_t KvCache::length() const {
  if (tensors.empty()) return 0;
  const std::size_t n = tensors.front().rows();
  for (const auto& t : tensors) {
    if (t.rows() != n) throw IntegrityError(fmt::format("cache tensor {} has {} rows, expected {}", t.name(), t.rows(), n));
  }
  return n;
}

std::size_t KvCache::width_per_token() const {
  std::size_t w = 0;
  for (const auto& t : tensors) w += t.width();
  return w;
}

std::size_t KvCache::stored_per_token() const {
  std::size_t w = 0;
  for (const auto& t : tensors) w += t.owned().size();
  return w;
}

std::uint64_t KvCache::checksum() const {
  std::uint64_t h = 0;
  for (const auto& t : tensors) h = h * 31 + t.checksum(t.rows());
  return h;
}

std::vector<std::pair<std::string, std::size_t>> cache_layout(const AttnConfig& cfg) {
  switch (cfg.variant) {
    case Variant::MHA:
    case Variant::MQA:
    case Variant::GQA:
    case Variant::MFA: {
      const std::size_t w = kv_heads(cfg) * head_out_dim(cfg);
      return {{"K", w}, {"V", w}};
    }
    case Variant::TPA:
      return {{"K_A", cfg.beta_kv * cfg.h},
              {"K_C", cfg.beta_kv * cfg.d_h},
              {"V_A", cfg.beta_kv * cfg.h},
              {"V_C", cfg.beta_kv * cfg.d_h}};
    case Variant::GTA:
      return {{"V_C", cfg.g * cfg.d_h}, {"K_R", cfg.d_hR}};
    case Variant::MLA:
    case Variant::GLA:
    case Variant::MLRA:
      return {{"C_KV", cfg.d_c}, {"K_R", cfg.d_hR}};
  }
  return {};
}

KvCache make_cache(const AttnConfig& cfg, const std::map<std::string, std::vector<std::size_t>>& owned) {
  KvCache cache;
  cache.variant = cfg.variant;
  for (auto& [name, width] : cache_layout(cfg)) {
    auto it = owned.find(name);
    cache.tensors.push_back(it == owned.end() ? CacheTensor::full(name, width) : CacheTensor(name, width, it->second));
  }
  return cache;
}

}  // namespace attnkit
