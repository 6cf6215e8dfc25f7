// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#include "attnkit/latent.hpp"

#include <cmath>

#include <fmt/format.h>

#include "attnkit/error.hpp"
#include "attnkit/rope.hpp"

namespace attnkit {

namespace {

void require_latent(const AttnConfig& cfg, const char* op) {
  if (!is_latent(cfg.variant)) {
    throw RoutingError(fmt::format("{}: {} is not a latent-attention variant", op, variant_label(cfg)));
  }
}

}  // namespace

LatentLayout latent_layout(const AttnConfig& cfg) {
  require_latent(cfg, "latent_layout");
  LatentLayout lay;
  switch (cfg.variant) {
    case Variant::GLA:
      lay.groups = cfg.g;
      lay.grouped_norm = true;
      break;
    case Variant::MLRA:
      if (cfg.branches == 2) {
        lay.groups = 2;
        lay.blocks = 2;
        lay.grouped_norm = true;
      } else {
        lay.blocks = 4;
      }
      break;
    default:
      break;
  }
  if (lay.groups == 0 || cfg.d_c % (lay.groups * lay.blocks) != 0 || cfg.h % lay.groups != 0) {
    throw ConfigError(fmt::format("{}: d_c={} and h={} do not split into {} groups of {} blocks", variant_label(cfg),
                                  cfg.d_c, cfg.h, lay.groups, lay.blocks));
  }
  lay.group_width = cfg.d_c / lay.groups;
  lay.block_width = lay.group_width / lay.blocks;
  lay.heads_per_group = cfg.h / lay.groups;
  return lay;
}

std::pair<std::size_t, std::size_t> latent_block_cols(const LatentLayout& lay, std::size_t group, std::size_t block) {
  const std::size_t begin = group * lay.group_width + block * lay.block_width;
  return {begin, begin + lay.block_width};
}

double ScaleFactors::alpha_q() const { return std::sqrt(to_double(q_sq)); }
double ScaleFactors::alpha_kv() const { return std::sqrt(to_double(kv_sq)); }
double ScaleFactors::alpha_attn() const { return std::sqrt(to_double(attn_sq)); }

ScaleFactors calib_factors(const AttnConfig& cfg) {
  ScaleFactors f;
  if (!cfg.scaling_enabled || !is_latent(cfg.variant)) return f;
  const auto d = static_cast<std::int64_t>(cfg.d);
  const auto dc = static_cast<std::int64_t>(cfg.d_c);
  f.q_sq = Rational(d, static_cast<std::int64_t>(cfg.d_cq));
  switch (cfg.variant) {
    case Variant::MLA:
      f.kv_sq = Rational(d, dc);
      break;
    case Variant::GLA:
      f.kv_sq = Rational(static_cast<std::int64_t>(cfg.g) * d, dc);
      break;
    case Variant::MLRA:
      f.kv_sq = Rational(4 * d, dc);
      f.attn_sq = Rational(1, static_cast<std::int64_t>(cfg.branches));
      break;
    default:
      break;
  }
  return f;
}

std::pair<std::size_t, std::size_t> group_map(std::size_t i, std::size_t h) {
  if (h == 0 || h % 2 != 0 || i >= h) {
    throw ConfigError(fmt::format("group_map: head {} of {} (h must be even and i < h)", i, h));
  }
  const std::size_t gamma = i < h / 2 ? 0 : 1;
  return {gamma, i - gamma * h / 2};
}

std::pair<Tensor, Tensor> block_reconstruct(const Tensor& C, const Tensor& W_uk, const Tensor& W_uv,
                                            std::size_t n_blocks, std::size_t head, std::size_t d_h) {
  const std::size_t c = C.cols();
  if (n_blocks == 0 || c % n_blocks != 0) {
    throw ConfigError(fmt::format("block_reconstruct: latent width {} is not divisible into {} blocks", c, n_blocks));
  }
  if (W_uk.rows() != c || W_uv.rows() != c || W_uk.shape() != W_uv.shape()) {
    throw DimensionError(fmt::format("block_reconstruct: latent {} vs up-projections {} and {}", shape_string(C.shape()),
                                     shape_string(W_uk.shape()), shape_string(W_uv.shape())));
  }
  if ((head + 1) * d_h > W_uk.cols()) {
    throw DimensionError(fmt::format("block_reconstruct: head {} outside {} columns", head, W_uk.cols()));
  }
  const std::size_t w = c / n_blocks;
  Tensor k({C.rows(), d_h}), v({C.rows(), d_h});
  for (std::size_t b = 0; b < n_blocks; ++b) {
    const Tensor cb = slice_cols(C, b * w, (b + 1) * w);
    const std::size_t off[] = {b * w, head * d_h};
    const std::size_t ext[] = {w, d_h};
    k = add(k, matmul(cb, W_uk.block(off, ext)));
    v = add(v, matmul(cb, W_uv.block(off, ext)));
  }
  return {std::move(k), std::move(v)};
}

Tensor latent_rows(const AttnConfig& cfg, const WeightView& view, const Tensor& H) {
  const LatentLayout lay = latent_layout(cfg);
  const Tensor raw = matmul(H, view.whole("W_DKV"));
  Tensor normed;
  if (lay.grouped_norm) {
    std::vector<Tensor> parts;
    for (std::size_t j = 0; j < lay.groups; ++j) {
      parts.push_back(rmsnorm(slice_cols(raw, j * lay.group_width, (j + 1) * lay.group_width), cfg.eps));
    }
    normed = concat_cols(parts);
  } else {
    normed = rmsnorm(raw, cfg.eps);
  }
  return scale(normed, calib_factors(cfg).alpha_kv());
}

void latent_append(const AttnConfig& cfg, const WeightView& view, const Tensor& H, KvCache& cache) {
  const std::size_t first_pos = cache.length();
  const Tensor latent = latent_rows(cfg, view, H);
  Tensor kr = matmul(H, view.whole("W_KR"));
  for (std::size_t t = 0; t < kr.rows(); ++t) {
    rope_rotate(kr.row(t), cfg.d_hR, static_cast<double>(first_pos + t), cfg.rope_base);
  }
  for (std::size_t t = 0; t < H.rows(); ++t) {
    cache.get("C_KV").append_full(latent.row(t));
    cache.get("K_R").append_full(kr.row(t));
  }
}

LatentQueries latent_queries(const AttnConfig& cfg, const WeightView& view, const Scope& scope, const Tensor& H,
                             std::size_t first_pos) {
  const Tensor cq = scale(rmsnorm(matmul(H, view.whole("W_DQ")), cfg.eps), calib_factors(cfg).alpha_q());
  LatentQueries q;
  q.nope = matmul(cq, view.cols("W_UQ", scope.head_begin * cfg.d_h, scope.head_end * cfg.d_h));
  q.rope = matmul(cq, view.cols("W_QR", scope.head_begin * cfg.d_hR, scope.head_end * cfg.d_hR));
  for (std::size_t t = 0; t < q.rope.rows(); ++t) {
    rope_rotate(q.rope.row(t), cfg.d_hR, static_cast<double>(first_pos + t), cfg.rope_base);
  }
  return q;
}

Tensor up_block(const AttnConfig& cfg, const WeightView& view, std::string_view name, std::size_t head,
                std::size_t block) {
  const LatentLayout lay = latent_layout(cfg);
  const std::size_t w = lay.block_width, dh = cfg.d_h;
  if (lay.groups == 1) return view.fetch(name, {block * w, head * dh}, {w, dh});
  const std::size_t gamma = head / lay.heads_per_group, local = head % lay.heads_per_group;
  return view.fetch(name, {gamma, block * w, local * dh}, {1, w, dh}).reshape({w, dh});
}

LatentBranches latent_branches(const AttnConfig& cfg, const WeightSet& w, const Tensor& H) {
  require_latent(cfg, "latent_prefill");
  validate(cfg);
  if (H.rank() != 2 || H.cols() != cfg.d) {
    throw DimensionError(fmt::format("latent_prefill: H has shape {}, expected [n, {}]", shape_string(H.shape()), cfg.d));
  }
  const LatentLayout lay = latent_layout(cfg);
  const WeightView view = WeightView::of(w);
  const std::size_t n = H.rows(), dh = cfg.d_h, dr = cfg.d_hR;
  LatentBranches out{std::vector<Tensor>(lay.blocks, Tensor({n, cfg.h, dh})), make_cache(cfg)};
  latent_append(cfg, view, H, out.cache);
  const LatentQueries q = latent_queries(cfg, view, Scope::all(cfg), H, 0);
  const Tensor kr = out.cache.get("K_R").read(0, dr);
  const double tau = score_scale(cfg);
  for (std::size_t i = 0; i < cfg.h; ++i) {
    const Tensor qi = concat_cols(slice_cols(q.nope, i * dh, (i + 1) * dh), slice_cols(q.rope, i * dr, (i + 1) * dr));
    const std::size_t gamma = i / lay.heads_per_group;
    for (std::size_t b = 0; b < lay.blocks; ++b) {
      auto [c0, c1] = latent_block_cols(lay, gamma, b);
      const Tensor cb = out.cache.get("C_KV").read(c0, c1);
      const Tensor k = concat_cols(matmul(cb, up_block(cfg, view, "W_UK", i, b)), kr);
      const Tensor v = matmul(cb, up_block(cfg, view, "W_UV", i, b));
      const Tensor oi = causal_attention(qi, k, v, tau, 0);
      const std::size_t offsets[] = {0, i, 0};
      out.O[b].assign_block(offsets, oi.reshape({n, 1, dh}));
    }
  }
  return out;
}

PrefillOutput latent_prefill(const AttnConfig& cfg, const WeightSet& w, const Tensor& H) {
  LatentBranches br = latent_branches(cfg, w, H);
  Tensor sum = br.O.front();
  for (std::size_t b = 1; b < br.O.size(); ++b) sum = add(sum, br.O[b]);
  return PrefillOutput{scale(sum, calib_factors(cfg).alpha_attn()), std::move(br.cache)};
}

}  // namespace attnkit
