// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "attnkit/attn_zoo.hpp"
#include "attnkit/config.hpp"
#include "attnkit/kv_cache.hpp"
#include "attnkit/tensor.hpp"
#include "attnkit/weights.hpp"

namespace attnkit {

enum class ReductionKind {
  /// Every head comes from exactly one device (all-gather shape).
  Concat,
  /// Some head is a sum of partial outputs from several devices (all-reduce shape).
  Sum,
};
const char* reduction_name(ReductionKind k);

/// One logical device: the heads and latent blocks it computes, the weight
/// slices it holds and its own cache columns.
struct DeviceShard {
  std::size_t id = 0;
  Scope scope;
  WeightView weights;
  KvCache cache;
};

/// Devices form a head_parts x block_parts grid; device id =
/// head_part * block_parts + block_part.
struct ShardPlan {
  AttnConfig cfg;
  std::size_t phi = 1;
  std::size_t head_parts = 1;
  std::size_t block_parts = 1;
  ReductionKind expected = ReductionKind::Concat;
  std::vector<DeviceShard> shards;
};

/// Splits weights and caches over phi devices. Down-projections, shared
/// components and K_R are replicated; W_O and W_G stay outside the shards.
ShardPlan make_shards(const AttnConfig& cfg, const WeightSet& w, std::size_t phi);

/// Throws IntegrityError unless the shards' weight slices together cover
/// every sharded weight with values equal to `w`.
void verify_shards(const ShardPlan& plan, const WeightSet& w);

struct TrafficLedger {
  /// Cache length during the step.
  std::size_t n = 0;
  /// Cache elements read per device during the step.
  std::vector<std::uint64_t> reads;
  /// Devices that read each cache tensor.
  std::map<std::string, std::vector<std::size_t>> readers;
  /// Cache tensors with at least one column read by more than one device.
  std::vector<std::string> replicated;
};

struct SimResult {
  /// [h, per-head output width]
  Tensor o;
  TrafficLedger ledger;
  ReductionKind kind = ReductionKind::Concat;
};

/// One decode step on every device, then a device-ordered reduction. Throws
/// IntegrityError if the observed reduction differs from plan.expected.
SimResult sim_decode(ShardPlan& plan, std::span<const double> h_t);

/// Single-device reference for the same step.
Tensor single_device_decode(const AttnConfig& cfg, const WeightSet& w, KvCache& cache, std::span<const double> h_t);

}  // namespace attnkit
