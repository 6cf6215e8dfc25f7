// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "attnkit/attn_zoo.hpp"
#include "attnkit/config.hpp"
#include "attnkit/rational.hpp"
#include "attnkit/tensor.hpp"
#include "attnkit/weights.hpp"

namespace attnkit {

/// How the latent columns are split. Each group serves a contiguous run
/// of heads and holds `blocks` blocks; with blocks > 1 every block is an
/// independent softmax branch.
///
///   MLA     1 group,  1 block
///   GLA-g   g groups, 1 block
///   MLRA-2  2 groups, 2 blocks
///   MLRA-4  1 group,  4 blocks
struct LatentLayout {
  std::size_t groups = 1;
  std::size_t blocks = 1;
  std::size_t group_width = 0;
  std::size_t block_width = 0;
  std::size_t heads_per_group = 0;
  /// RMSNorm is taken over each group separately rather than the whole latent.
  bool grouped_norm = false;
};

LatentLayout latent_layout(const AttnConfig& cfg);

/// Latent columns [begin, end) of one block.
std::pair<std::size_t, std::size_t> latent_block_cols(const LatentLayout& lay, std::size_t group, std::size_t block);

/// Exact squares of the three rescaling factors.
struct ScaleFactors {
  Rational q_sq{1};
  Rational kv_sq{1};
  Rational attn_sq{1};

  double alpha_q() const;
  double alpha_kv() const;
  double alpha_attn() const;
  std::string alpha_q_symbol() const { return sqrt_string(q_sq); }
  std::string alpha_kv_symbol() const { return sqrt_string(kv_sq); }
  std::string alpha_attn_symbol() const { return sqrt_string(attn_sq); }
};

ScaleFactors calib_factors(const AttnConfig& cfg);

/// Two-group head map: (0 if i < h/2 else 1, index within the group).
std::pair<std::size_t, std::size_t> group_map(std::size_t i, std::size_t h);

/// Sum over n_blocks row blocks of C_(b) W_(b),(head) for keys and values.
/// C is [n, c]; both weights are [c, cols]; the head owns columns
/// [head * d_h, (head + 1) * d_h).
std::pair<Tensor, Tensor> block_reconstruct(const Tensor& C, const Tensor& W_uk, const Tensor& W_uv,
                                            std::size_t n_blocks, std::size_t head, std::size_t d_h);

PrefillOutput latent_prefill(const AttnConfig& cfg, const WeightSet& w, const Tensor& H);

/// Unscaled per-block attention outputs; latent_prefill is alpha_attn
/// times their sum in ascending block order.
struct LatentBranches {
  /// One [n, h, d_h] tensor per block.
  std::vector<Tensor> O;
  KvCache cache;
};
LatentBranches latent_branches(const AttnConfig& cfg, const WeightSet& w, const Tensor& H);

/// Scaled, normalized latent rows [m, d_c].
Tensor latent_rows(const AttnConfig& cfg, const WeightView& view, const Tensor& H);

/// Appends latent and RoPE-key rows at positions cache.length() onward.
void latent_append(const AttnConfig& cfg, const WeightView& view, const Tensor& H, KvCache& cache);

struct LatentQueries {
  /// [m, heads * d_h]
  Tensor nope;
  /// [m, heads * d_hR], rotated
  Tensor rope;
};

LatentQueries latent_queries(const AttnConfig& cfg, const WeightView& view, const Scope& scope, const Tensor& H,
                             std::size_t first_pos);

/// Up-projection block [block_width, d_h] of `name` (W_UK or W_UV) for one head.
Tensor up_block(const AttnConfig& cfg, const WeightView& view, std::string_view name, std::size_t head,
                std::size_t block);

}  // namespace attnkit
