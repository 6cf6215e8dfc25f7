// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#include "attnkit/decode.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "attnkit/error.hpp"
#include "attnkit/latent.hpp"

namespace attnkit {

namespace {

void require_latent(const AttnConfig& cfg, const char* op) {
  if (!is_latent(cfg.variant)) {
    throw RoutingError(fmt::format("{}: {} is not a latent-attention variant", op, variant_label(cfg)));
  }
}

Tensor hidden_row(const AttnConfig& cfg, std::span<const double> h_t) {
  if (h_t.size() != cfg.d) {
    throw DimensionError(fmt::format("decode: hidden state has {} values, expected d={}", h_t.size(), cfg.d));
  }
  return Tensor({1, cfg.d}, std::vector<double>(h_t.begin(), h_t.end()));
}

/// Rows [r0, r1) of a [1, heads * width] query reshaped to [r1 - r0, width].
Tensor head_rows(const Tensor& q, std::size_t width, std::size_t r0, std::size_t r1) {
  return slice_cols(q, r0 * width, r1 * width).reshape({r1 - r0, width});
}

/// Up-projection blocks of heads [i0, i1) stacked as [heads, w, d_h], or
/// [heads, d_h, w] when transposed.
Tensor stacked_blocks(const AttnConfig& cfg, const WeightView& view, const char* name, std::size_t i0, std::size_t i1,
                      std::size_t block, bool transposed) {
  const std::size_t w = latent_layout(cfg).block_width, dh = cfg.d_h;
  Tensor out(transposed ? Shape{i1 - i0, dh, w} : Shape{i1 - i0, w, dh});
  for (std::size_t i = i0; i < i1; ++i) {
    Tensor blk = up_block(cfg, view, name, i, block);
    if (transposed) blk = transpose(blk);
    const std::size_t offsets[] = {i - i0, 0, 0};
    out.assign_block(offsets, blk.reshape({1, blk.rows(), blk.cols()}));
  }
  return out;
}

}  // namespace

AbsorbedQuery absorb_query(const Tensor& q_nope, const Tensor& q_rope, const Tensor& W_uk_t) {
  if (q_nope.rank() != 2 || q_rope.rank() != 2 || q_nope.rows() != q_rope.rows()) {
    throw DimensionError(fmt::format("absorb_query: queries {} and {} disagree", shape_string(q_nope.shape()),
                                     shape_string(q_rope.shape())));
  }
  return AbsorbedQuery{head_contract(q_nope, W_uk_t), q_rope};
}

Tensor absorbed_weights(const AttnConfig& cfg, const WeightView& view, const char* name, std::size_t head_begin,
                        std::size_t head_end, std::size_t block) {
  return stacked_blocks(cfg, view, name, head_begin, head_end, block, true);
}

Tensor latent_decode_scoped(const AttnConfig& cfg, const WeightView& view, const Scope& scope, KvCache& cache,
                            std::span<const double> h_t, DecodeMode mode, ReadCounter* counter,
                            bool apply_attn_scale) {
  require_latent(cfg, "latent decode");
  const LatentLayout lay = latent_layout(cfg);
  if (scope.head_end > cfg.h || scope.head_begin >= scope.head_end || scope.block_end > lay.blocks ||
      scope.block_begin >= scope.block_end) {
    throw ConfigError(fmt::format("decode scope heads [{}, {}) blocks [{}, {}) does not fit {}", scope.head_begin,
                                  scope.head_end, scope.block_begin, scope.block_end, variant_label(cfg)));
  }
  const Tensor H = hidden_row(cfg, h_t);
  const std::size_t pos = cache.length();
  latent_append(cfg, view, H, cache);
  const std::size_t n = pos + 1, dh = cfg.d_h, dr = cfg.d_hR;
  const LatentQueries q = latent_queries(cfg, view, scope, H, pos);
  const double tau = score_scale(cfg);

  Tensor out({scope.heads(), dh});
  const std::size_t g0 = scope.head_begin / lay.heads_per_group;
  const std::size_t g1 = (scope.head_end - 1) / lay.heads_per_group + 1;
  for (std::size_t gamma = g0; gamma < g1; ++gamma) {
    const std::size_t i0 = std::max(scope.head_begin, gamma * lay.heads_per_group);
    const std::size_t i1 = std::min(scope.head_end, (gamma + 1) * lay.heads_per_group);
    const std::size_t r0 = i0 - scope.head_begin, r1 = i1 - scope.head_begin;
    const Tensor q_nope = head_rows(q.nope, dh, r0, r1);
    const Tensor q_rope = head_rows(q.rope, dr, r0, r1);
    for (std::size_t b = scope.block_begin; b < scope.block_end; ++b) {
      auto [c0, c1] = latent_block_cols(lay, gamma, b);
      const Tensor cb = cache.get("C_KV").read_rows(n, c0, c1, counter);
      const Tensor kr = cache.get("K_R").read_rows(n, 0, dr, counter);
      Tensor o;
      if (mode == DecodeMode::Absorbed) {
        const AbsorbedQuery aq = absorb_query(q_nope, q_rope, absorbed_weights(cfg, view, "W_UK", i0, i1, b));
        const Tensor logits = scale(add(matmul_bt(aq.nope, cb), matmul_bt(aq.rope, kr)), tau);
        const Tensor z = matmul(softmax_rows(logits), cb);
        o = head_contract(z, stacked_blocks(cfg, view, "W_UV", i0, i1, b, false));
      } else {
        o = Tensor({i1 - i0, dh});
        for (std::size_t i = i0; i < i1; ++i) {
          const Tensor qi = concat_cols(slice_rows(q_nope, i - i0, i - i0 + 1), slice_rows(q_rope, i - i0, i - i0 + 1));
          const Tensor k = concat_cols(matmul(cb, up_block(cfg, view, "W_UK", i, b)), kr);
          const Tensor v = matmul(cb, up_block(cfg, view, "W_UV", i, b));
          const Tensor oi = causal_attention(qi, k, v, tau, pos);
          std::copy(oi.data().begin(), oi.data().end(), o.row(i - i0).begin());
        }
      }
      for (std::size_t r = r0; r < r1; ++r) {
        auto dst = out.row(r);
        auto src = o.row(r - r0);
        for (std::size_t p = 0; p < dh; ++p) dst[p] += src[p];
      }
    }
  }
  return apply_attn_scale ? scale(out, calib_factors(cfg).alpha_attn()) : out;
}

Tensor naive_decode_step(const AttnConfig& cfg, const WeightSet& w, KvCache& cache, std::span<const double> h_t,
                         ReadCounter* counter) {
  require_latent(cfg, "naive_decode_step");
  return latent_decode_scoped(cfg, WeightView::of(w), Scope::all(cfg), cache, h_t, DecodeMode::Naive, counter);
}

Tensor absorbed_decode_step(const AttnConfig& cfg, const WeightSet& w, KvCache& cache, std::span<const double> h_t,
                            ReadCounter* counter) {
  require_latent(cfg, "absorbed_decode_step");
  return latent_decode_scoped(cfg, WeightView::of(w), Scope::all(cfg), cache, h_t, DecodeMode::Absorbed, counter);
}

Tensor decode_step(const AttnConfig& cfg, const WeightSet& w, KvCache& cache, std::span<const double> h_t,
                   DecodeMode mode, ReadCounter* counter) {
  if (is_latent(cfg.variant)) {
    return latent_decode_scoped(cfg, WeightView::of(w), Scope::all(cfg), cache, h_t, mode, counter);
  }
  return baseline_decode_step(cfg, w, cache, h_t, counter);
}

KvCache empty_cache(const AttnConfig& cfg) { return make_cache(cfg); }

}  // namespace attnkit
