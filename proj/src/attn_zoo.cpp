// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#include "attnkit/attn_zoo.hpp"

#include <limits>

#include <fmt/format.h>

#include "attnkit/error.hpp"
#include "attnkit/rope.hpp"

namespace attnkit {

namespace {

struct CacheSource {
  const char* weight;
  std::size_t rope_dim;  // 0 = no rotation
};

CacheSource source_of(const AttnConfig& cfg, const std::string& cache_name) {
  const std::size_t dd = head_out_dim(cfg);
  switch (cfg.variant) {
    case Variant::MHA:
    case Variant::MQA:
    case Variant::GQA:
    case Variant::MFA:
      if (cache_name == "K") return {"W_K", dd};
      if (cache_name == "V") return {"W_V", 0};
      break;
    case Variant::TPA:
      if (cache_name == "K_A") return {"W_AK", 0};
      if (cache_name == "K_C") return {"W_CK", cfg.d_h};
      if (cache_name == "V_A") return {"W_AV", 0};
      if (cache_name == "V_C") return {"W_CV", 0};
      break;
    case Variant::GTA:
      if (cache_name == "V_C") return {"W_KV", 0};
      if (cache_name == "K_R") return {"W_KR", cfg.d_hR};
      break;
    default:
      break;
  }
  throw RoutingError(fmt::format("{} has no baseline cache tensor {}", variant_label(cfg), cache_name));
}

void require_baseline(const AttnConfig& cfg, const char* op) {
  if (is_latent(cfg.variant)) {
    throw RoutingError(fmt::format("{}: {} belongs to the latent-attention path", op, variant_label(cfg)));
  }
}

void rotate_rows(Tensor& x, std::size_t dim, std::size_t first_pos, double base) {
  for (std::size_t t = 0; t < x.rows(); ++t) rope_rotate(x.row(t), dim, static_cast<double>(first_pos + t), base);
}

}  // namespace

Scope Scope::all(const AttnConfig& cfg) {
  std::size_t blocks = 1;
  if (cfg.variant == Variant::MLRA) blocks = cfg.branches == 4 ? 4 : 2;
  return Scope{0, cfg.h, 0, blocks};
}

std::vector<std::pair<std::size_t, std::size_t>> column_runs(const std::vector<std::size_t>& cols) {
  std::vector<std::pair<std::size_t, std::size_t>> runs;
  for (std::size_t c : cols) {
    if (!runs.empty() && runs.back().second == c) {
      ++runs.back().second;
    } else {
      runs.emplace_back(c, c + 1);
    }
  }
  return runs;
}

Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, double tau, std::size_t first_pos) {
  if (k.rows() != v.rows()) {
    throw DimensionError(fmt::format("attention: {} keys but {} values", k.rows(), v.rows()));
  }
  if (first_pos + q.rows() > k.rows()) {
    throw DimensionError(fmt::format("attention: query rows reach position {} but only {} keys exist",
                                     first_pos + q.rows() - 1, k.rows()));
  }
  Tensor logits = scale(matmul_bt(q, k), tau);
  for (std::size_t j = 0; j < logits.rows(); ++j) {
    for (std::size_t t = first_pos + j + 1; t < logits.cols(); ++t) {
      logits.at(j, t) = -std::numeric_limits<double>::infinity();
    }
  }
  return matmul(softmax_rows(logits), v);
}

Tensor gated_output(const Tensor& H, const Tensor& O_flat, const Tensor& W_G) {
  return hadamard(O_flat, sigmoid(matmul(H, W_G)));
}

Tensor flatten_heads(const Tensor& O) {
  if (O.rank() != 3) throw DimensionError(fmt::format("flatten_heads: expected rank 3, got {}", shape_string(O.shape())));
  return O.reshape({O.dim(0), O.dim(1) * O.dim(2)});
}

void baseline_append(const AttnConfig& cfg, const WeightView& view, const Tensor& H, KvCache& cache) {
  require_baseline(cfg, "baseline_append");
  const std::size_t first_pos = cache.length();
  for (auto& ct : cache.tensors) {
    const CacheSource src = source_of(cfg, ct.name());
    std::vector<Tensor> parts;
    for (auto [begin, end] : column_runs(ct.owned())) {
      Tensor part = matmul(H, view.cols(src.weight, begin, end));
      if (src.rope_dim != 0) rotate_rows(part, src.rope_dim, first_pos, cfg.rope_base);
      parts.push_back(std::move(part));
    }
    const Tensor owned = parts.empty() ? Tensor({H.rows(), 0}) : concat_cols(parts);
    for (std::size_t t = 0; t < H.rows(); ++t) ct.append_owned(owned.row(t));
  }
}

std::vector<Tensor> baseline_queries(const AttnConfig& cfg, const WeightView& view, const Scope& scope,
                                     const Tensor& H, std::size_t first_pos) {
  require_baseline(cfg, "baseline_queries");
  const std::size_t dh = cfg.d_h, m = H.rows();
  std::vector<Tensor> out;
  switch (cfg.variant) {
    case Variant::MHA:
    case Variant::MQA:
    case Variant::GQA: {
      for (std::size_t i = scope.head_begin; i < scope.head_end; ++i) {
        Tensor q = matmul(H, view.cols("W_Q", i * dh, (i + 1) * dh));
        rotate_rows(q, dh, first_pos, cfg.rope_base);
        out.push_back(std::move(q));
      }
      break;
    }
    case Variant::MFA: {
      const Tensor cq = rmsnorm(matmul(H, view.whole("W_CQ")), cfg.eps);
      for (std::size_t i = scope.head_begin; i < scope.head_end; ++i) {
        Tensor q = matmul(cq, view.cols("W_UQ", i * 2 * dh, (i + 1) * 2 * dh));
        rotate_rows(q, 2 * dh, first_pos, cfg.rope_base);
        out.push_back(std::move(q));
      }
      break;
    }
    case Variant::TPA: {
      Tensor qc = matmul(H, view.whole("W_CQ"));
      rotate_rows(qc, dh, first_pos, cfg.rope_base);
      const double inv = 1.0 / static_cast<double>(cfg.beta_q);
      for (std::size_t i = scope.head_begin; i < scope.head_end; ++i) {
        Tensor q({m, dh});
        for (std::size_t b = 0; b < cfg.beta_q; ++b) {
          const std::size_t col = b * cfg.h + i;
          const Tensor qa = matmul(H, view.cols("W_AQ", col, col + 1));
          for (std::size_t t = 0; t < m; ++t) {
            for (std::size_t p = 0; p < dh; ++p) q.at(t, p) += qa.at(t, 0) * qc.at(t, b * dh + p);
          }
        }
        out.push_back(scale(q, inv));
      }
      break;
    }
    case Variant::GTA: {
      const std::size_t nope = dh - cfg.d_hR;
      for (std::size_t i = scope.head_begin; i < scope.head_end; ++i) {
        const Tensor q = matmul(H, view.cols("W_Q", i * dh, (i + 1) * dh));
        Tensor rope_part = slice_cols(q, nope, dh);
        rotate_rows(rope_part, cfg.d_hR, first_pos, cfg.rope_base);
        out.push_back(concat_cols(slice_cols(q, 0, nope), rope_part));
      }
      break;
    }
    default:
      break;
  }
  return out;
}

std::pair<Tensor, Tensor> baseline_head_kv(const AttnConfig& cfg, const KvCache& cache, std::size_t head,
                                           std::size_t rows, ReadCounter* counter) {
  require_baseline(cfg, "baseline_head_kv");
  const std::size_t dh = cfg.d_h;
  switch (cfg.variant) {
    case Variant::MHA:
    case Variant::MQA:
    case Variant::GQA:
    case Variant::MFA: {
      const std::size_t dd = head_out_dim(cfg), kv = head / heads_per_kv(cfg);
      return {cache.get("K").read_rows(rows, kv * dd, (kv + 1) * dd, counter),
              cache.get("V").read_rows(rows, kv * dd, (kv + 1) * dd, counter)};
    }
    case Variant::GTA: {
      const std::size_t kv = head / heads_per_kv(cfg);
      Tensor v = cache.get("V_C").read_rows(rows, kv * dh, (kv + 1) * dh, counter);
      const Tensor kr = cache.get("K_R").read_rows(rows, 0, cfg.d_hR, counter);
      Tensor k = concat_cols(slice_cols(v, 0, dh - cfg.d_hR), kr);
      return {std::move(k), std::move(v)};
    }
    case Variant::TPA: {
      const double inv = 1.0 / static_cast<double>(cfg.beta_kv);
      auto combine = [&](const char* coeff_name, const char* comp_name) {
        const Tensor comp = cache.get(comp_name).read_rows(rows, 0, cfg.beta_kv * dh, counter);
        Tensor out({rows, dh});
        for (std::size_t b = 0; b < cfg.beta_kv; ++b) {
          const std::size_t col = b * cfg.h + head;
          const Tensor a = cache.get(coeff_name).read_rows(rows, col, col + 1, counter);
          for (std::size_t t = 0; t < rows; ++t) {
            for (std::size_t p = 0; p < dh; ++p) out.at(t, p) += a.at(t, 0) * comp.at(t, b * dh + p);
          }
        }
        return scale(out, inv);
      };
      Tensor k = combine("K_A", "K_C");
      Tensor v = combine("V_A", "V_C");
      return {std::move(k), std::move(v)};
    }
    default:
      break;
  }
  throw RoutingError(fmt::format("baseline_head_kv: unsupported variant {}", variant_label(cfg)));
}

PrefillOutput prefill(const AttnConfig& cfg, const WeightSet& w, const Tensor& H) {
  require_baseline(cfg, "prefill");
  validate(cfg);
  if (H.rank() != 2 || H.cols() != cfg.d) {
    throw DimensionError(fmt::format("prefill: H has shape {}, expected [n, {}]", shape_string(H.shape()), cfg.d));
  }
  const WeightView view = WeightView::of(w);
  PrefillOutput out{Tensor({H.rows(), cfg.h, head_out_dim(cfg)}), make_cache(cfg)};
  baseline_append(cfg, view, H, out.cache);
  const Scope scope = Scope::all(cfg);
  const auto queries = baseline_queries(cfg, view, scope, H, 0);
  const double tau = score_scale(cfg);
  for (std::size_t i = 0; i < cfg.h; ++i) {
    auto [k, v] = baseline_head_kv(cfg, out.cache, i, H.rows());
    const Tensor o = causal_attention(queries[i], k, v, tau, 0);
    const std::size_t offsets[] = {0, i, 0};
    out.O.assign_block(offsets, o.reshape({H.rows(), 1, o.cols()}));
  }
  return out;
}

Tensor baseline_decode_scoped(const AttnConfig& cfg, const WeightView& view, const Scope& scope, KvCache& cache,
                              std::span<const double> h_t, ReadCounter* counter) {
  if (h_t.size() != cfg.d) {
    throw DimensionError(fmt::format("decode: hidden state has {} values, expected d={}", h_t.size(), cfg.d));
  }
  const Tensor H({1, cfg.d}, std::vector<double>(h_t.begin(), h_t.end()));
  const std::size_t pos = cache.length();
  baseline_append(cfg, view, H, cache);
  const auto queries = baseline_queries(cfg, view, scope, H, pos);
  const double tau = score_scale(cfg);
  Tensor out({scope.heads(), head_out_dim(cfg)});
  for (std::size_t i = scope.head_begin; i < scope.head_end; ++i) {
    auto [k, v] = baseline_head_kv(cfg, cache, i, pos + 1, counter);
    const Tensor o = causal_attention(queries[i - scope.head_begin], k, v, tau, pos);
    std::copy(o.data().begin(), o.data().end(), out.row(i - scope.head_begin).begin());
  }
  return out;
}

Tensor baseline_decode_step(const AttnConfig& cfg, const WeightSet& w, KvCache& cache, std::span<const double> h_t,
                            ReadCounter* counter) {
  require_baseline(cfg, "baseline_decode_step");
  return baseline_decode_scoped(cfg, WeightView::of(w), Scope::all(cfg), cache, h_t, counter);
}

}  // namespace attnkit
