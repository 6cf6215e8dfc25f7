// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#pragma once

#include "attnkit/attn_zoo.hpp"
#include "attnkit/config.hpp"
#include "attnkit/rng.hpp"
#include "attnkit/tensor.hpp"
#include "attnkit/weights.hpp"

namespace attnkit {

/// Prefill for any variant (baseline or latent).
PrefillOutput attention_prefill(const AttnConfig& cfg, const WeightSet& w, const Tensor& H);

/// Attention sublayer output [n, d]: heads flattened, optional sigmoid gate
/// driven by H, then W_O.
Tensor attention_sublayer(const AttnConfig& cfg, const WeightSet& w, const Tensor& H);

/// SwiGLU feed-forward: (silu(X W1) * (X W2)) W3.
struct MlpWeights {
  Tensor W1;  // [d, d_f]
  Tensor W2;  // [d, d_f]
  Tensor W3;  // [d_f, d]
};

MlpWeights build_mlp(std::size_t d, std::size_t d_f, double sigma, const Rng& rng);
Tensor mlp_forward(const MlpWeights& m, const Tensor& X);

/// Pre-norm decoder block:
///   X1 = X + Attn(RMSNorm(X));  out = X1 + MLP(RMSNorm(X1)).
Tensor block_forward(const AttnConfig& cfg, const WeightSet& attn, const MlpWeights& mlp, const Tensor& X);

}  // namespace attnkit
