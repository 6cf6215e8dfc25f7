// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#pragma once

#include <span>

#include "attnkit/attn_zoo.hpp"
#include "attnkit/config.hpp"
#include "attnkit/kv_cache.hpp"
#include "attnkit/tensor.hpp"
#include "attnkit/weights.hpp"

namespace attnkit {

enum class DecodeMode {
  /// Materialize per-head keys and values from the latent cache.
  Naive,
  /// Fold W_UK into the query, attend over the shared latent, then apply W_UV.
  Absorbed,
};

struct AbsorbedQuery {
  /// [heads, latent block width]
  Tensor nope;
  /// [heads, d_hR]
  Tensor rope;

  /// Per-head logit width: block width + d_hR.
  std::size_t logit_dim() const { return nope.cols() + rope.cols(); }
};

/// nope[i] = q_nope[i] * W_uk_t[i] for every head ("hp,hpc->hc").
/// q_nope is [heads, d_h]; W_uk_t is [heads, d_h, c].
AbsorbedQuery absorb_query(const Tensor& q_nope, const Tensor& q_rope, const Tensor& W_uk_t);

/// Transposed up-projection blocks of heads [head_begin, head_end) for one
/// latent block: [heads, d_h, block width]. `name` is W_UK or W_UV.
Tensor absorbed_weights(const AttnConfig& cfg, const WeightView& view, const char* name, std::size_t head_begin,
                        std::size_t head_end, std::size_t block);

/// Latent decode restricted to `scope`: appends h_t (owned cache columns
/// only) and returns [scope heads, d_h]. Blocks outside the scope are
/// skipped. With apply_attn_scale false the branch sum is left unscaled.
Tensor latent_decode_scoped(const AttnConfig& cfg, const WeightView& view, const Scope& scope, KvCache& cache,
                            std::span<const double> h_t, DecodeMode mode, ReadCounter* counter = nullptr,
                            bool apply_attn_scale = true);

/// One decode step for MLA, GLA or MLRA. Returns [h, d_h].
Tensor naive_decode_step(const AttnConfig& cfg, const WeightSet& w, KvCache& cache, std::span<const double> h_t,
                         ReadCounter* counter = nullptr);
Tensor absorbed_decode_step(const AttnConfig& cfg, const WeightSet& w, KvCache& cache, std::span<const double> h_t,
                            ReadCounter* counter = nullptr);

/// Any variant. Baseline variants ignore `mode`.
Tensor decode_step(const AttnConfig& cfg, const WeightSet& w, KvCache& cache, std::span<const double> h_t,
                   DecodeMode mode = DecodeMode::Absorbed, ReadCounter* counter = nullptr);

/// Cache length 0 state for any variant.
KvCache empty_cache(const AttnConfig& cfg);

}  // namespace attnkit
