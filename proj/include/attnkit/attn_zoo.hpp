// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#pragma once

#include <span>
#include <utility>
#include <vector>

#include "attnkit/config.hpp"
#include "attnkit/kv_cache.hpp"
#include "attnkit/tensor.hpp"
#include "attnkit/weights.hpp"

namespace attnkit {

/// The heads (and, for MLRA, latent blocks within each group) that one
/// computing unit is responsible for.
struct Scope {
  std::size_t head_begin = 0;
  std::size_t head_end = 0;
  std::size_t block_begin = 0;
  std::size_t block_end = 1;

  static Scope all(const AttnConfig& cfg);
  std::size_t heads() const { return head_end - head_begin; }
  bool operator==(const Scope&) const = default;
};

struct PrefillOutput {
  /// [n, h, per-head output width]
  Tensor O;
  KvCache cache;
};

/// Scaled dot-product attention for one head. Query row j sits at position
/// first_pos + j and sees keys 0..first_pos + j.
Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, double tau, std::size_t first_pos);

/// O_flat * sigmoid(H W_G), elementwise.
Tensor gated_output(const Tensor& H, const Tensor& O_flat, const Tensor& W_G);

/// [n, h, w] -> [n, h * w]
Tensor flatten_heads(const Tensor& O);

/// Prefill for MHA, MQA, GQA, MFA, TPA and GTA. Latent variants raise RoutingError.
PrefillOutput prefill(const AttnConfig& cfg, const WeightSet& w, const Tensor& H);

/// Projects rows of H (at positions cache.length() onward) into every
/// owned cache column and appends them.
void baseline_append(const AttnConfig& cfg, const WeightView& view, const Tensor& H, KvCache& cache);

/// One [m, key width] query matrix per head in scope.
std::vector<Tensor> baseline_queries(const AttnConfig& cfg, const WeightView& view, const Scope& scope,
                                     const Tensor& H, std::size_t first_pos);

/// Keys and values of one head over the first `rows` cached tokens.
std::pair<Tensor, Tensor> baseline_head_kv(const AttnConfig& cfg, const KvCache& cache, std::size_t head,
                                           std::size_t rows, ReadCounter* counter = nullptr);

/// Appends h_t and returns [heads in scope, per-head output width].
Tensor baseline_decode_scoped(const AttnConfig& cfg, const WeightView& view, const Scope& scope, KvCache& cache,
                              std::span<const double> h_t, ReadCounter* counter = nullptr);

Tensor baseline_decode_step(const AttnConfig& cfg, const WeightSet& w, KvCache& cache, std::span<const double> h_t,
                            ReadCounter* counter = nullptr);

/// Contiguous runs [begin, end) of a sorted column list.
std::vector<std::pair<std::size_t, std::size_t>> column_runs(const std::vector<std::size_t>& cols);

}  // namespace attnkit
