// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hm4sr/data/dataset.hpp"
#include "hm4sr/data/features.hpp"
#include "hm4sr/model/common.hpp"

namespace hm4sr {

/// Frozen text and image features aligned with dataset item indices. Row 0
/// is the padding row and holds zeros. A modality that is not in use is an
/// undefined tensor.
template <typename Real>
struct FeatureStore {
  Tensor<Real> txt;  // (n_items + 1) x d_txt
  Tensor<Real> img;  // (n_items + 1) x d_img

  /// Copies rows in dataset item order; every dataset item must be present.
  static FeatureStore from_matrices(const data::Dataset& dataset,
                                    const data::FeatureMatrix* txt,
                                    const data::FeatureMatrix* img);
};

/// ID table, feature projections and the shared position table.
template <typename Real>
class ItemRepresentation {
 public:
  ItemRepresentation(ParamStore<Real>& params, const ModelConfig& config,
                     FeatureStore<Real> features, std::size_t n_items, const Initializer& init);

  /// x_m for every active modality; indices have shape `index_shape` and
  /// lie in [0, n_items].
  PerModality<Real> project(std::span<const std::int64_t> indices,
                            const Shape& index_shape) const;

  /// x_m for items 1..n_items, each n_items x d.
  PerModality<Real> catalog() const;

  /// x[B, L, d] + pos_table[i] at position i.
  Tensor<Real> add_position(const Tensor<Real>& x) const;

  /// Raw ID embeddings, used as contrastive targets.
  Tensor<Real> id_rows(std::span<const std::int64_t> items) const;

  std::size_t n_items() const noexcept { return n_items_; }
  const FeatureStore<Real>& features() const noexcept { return features_; }

 private:
  Tensor<Real> project_one(Modality m, std::span<const std::int64_t> indices,
                           const Shape& index_shape) const;

  std::vector<Modality> active_;
  FeatureStore<Real> features_;
  std::size_t n_items_;
  Tensor<Real> id_table_;
  Tensor<Real> w_txt_, b_txt_, w_img_, b_img_;
  Tensor<Real> pos_table_;
};

}  // namespace hm4sr
