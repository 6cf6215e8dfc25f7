// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#pragma once

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "attnkit/config.hpp"
#include "attnkit/rng.hpp"
#include "attnkit/tensor.hpp"

namespace attnkit {

/// Named weight matrices of one attention instance.
///
/// Names follow the usual superscripts: W_Q, W_K, W_V, W_DQ, W_UQ, W_QR,
/// W_DKV, W_UK, W_UV, W_KR, W_AQ, W_CQ, W_AK, W_CK, W_AV, W_CV, W_KV, W_G, W_O.
/// Grouped latent variants (GLA, MLRA-2) store W_UK and W_UV as
/// [groups, d_c / groups, heads_per_group * d_h].
struct WeightSet {
  AttnConfig cfg;
  std::map<std::string, Tensor> tensors;

  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);
  bool has(std::string_view name) const;
  std::size_t element_count() const;
};

/// Weight names and shapes for a variant, in a fixed order. Includes W_G
/// only when the config is gated.
std::vector<std::pair<std::string, Shape>> weight_shapes(const AttnConfig& cfg);

/// Draws every weight from its own named stream, so adding or dropping a
/// matrix never perturbs the others. `zero_output` zeroes W_O.
WeightSet build_weights(const AttnConfig& cfg, double sigma, const Rng& rng, bool zero_output = false);

/// A rectangular piece of a named weight, placed at `offset` in the full tensor.
struct WeightSlice {
  std::string name;
  Shape offset;
  std::shared_ptr<const Tensor> data;
};

/// Read access to weights in global coordinates over a set of slices.
/// Requests outside every held slice raise IntegrityError.
class WeightView {
 public:
  WeightView() = default;
  WeightView(std::map<std::string, Shape> full_shapes, std::vector<WeightSlice> slices);

  /// A view that owns every weight in full.
  static WeightView of(const WeightSet& w);

  Tensor fetch(std::string_view name, const Shape& offsets, const Shape& extents) const;
  Tensor whole(std::string_view name) const;
  /// Columns [begin, end) of a 2-D weight.
  Tensor cols(std::string_view name, std::size_t begin, std::size_t end) const;
  const Shape& full_shape(std::string_view name) const;
  bool knows(std::string_view name) const;

  const std::vector<WeightSlice>& slices() const { return slices_; }

 private:
  std::map<std::string, Shape, std::less<>> full_shapes_;
  std::vector<WeightSlice> slices_;
};

}  // namespace attnkit
