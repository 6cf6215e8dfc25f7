// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#include "attnkit/block.hpp"

#include <fmt/format.h>

#include "attnkit/error.hpp"
#include "attnkit/latent.hpp"

namespace attnkit {

PrefillOutput attention_prefill(const AttnConfig& cfg, const WeightSet& w, const Tensor& H) {
  return is_latent(cfg.variant) ? latent_prefill(cfg, w, H) : prefill(cfg, w, H);
}

Tensor attention_sublayer(const AttnConfig& cfg, const WeightSet& w, const Tensor& H) {
  Tensor o = flatten_heads(attention_prefill(cfg, w, H).O);
  if (cfg.gated) o = gated_output(H, o, w.at("W_G"));
  return matmul(o, w.at("W_O"));
}

MlpWeights build_mlp(std::size_t d, std::size_t d_f, double sigma, const Rng& rng) {
  Rng r1 = rng.split("W1"), r2 = rng.split("W2"), r3 = rng.split("W3");
  return MlpWeights{gaussian_init({d, d_f}, sigma, r1), gaussian_init({d, d_f}, sigma, r2),
                    gaussian_init({d_f, d}, sigma, r3)};
}

Tensor mlp_forward(const MlpWeights& m, const Tensor& X) {
  return matmul(hadamard(silu(matmul(X, m.W1)), matmul(X, m.W2)), m.W3);
}

Tensor block_forward(const AttnConfig& cfg, const WeightSet& attn, const MlpWeights& mlp, const Tensor& X) {
  if (X.rank() != 2 || X.cols() != cfg.d) {
    throw DimensionError(fmt::format("block: input {} does not have d={} columns", shape_string(X.shape()), cfg.d));
  }
  const Tensor X1 = add(X, attention_sublayer(cfg, attn, rmsnorm(X, cfg.eps)));
  return add(X1, mlp_forward(mlp, rmsnorm(X1, cfg.eps)));
}

}  // namespace attnkit
