// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "hm4sr/data/dataset.hpp"
#include "hm4sr/model/encoder.hpp"
#include "hm4sr/model/item_representation.hpp"
#include "hm4sr/model/moe.hpp"
#include "hm4sr/model/objectives.hpp"

namespace hm4sr {

/// Loss tensors of one forward pass; terms that were skipped are undefined
/// and reported as 0 in the breakdown.
template <typename Real>
struct LossTerms {
  Tensor<Real> total, main, cp, idcl, pcl;
  LossBreakdown breakdown;
};

/// Shapes the model depends on besides the config.
struct ModelDims {
  std::size_t n_items = 0;
  std::size_t n_categories = 0;
  std::int64_t time_origin = 0;  // seconds; timestamps are measured from here
};

/// Intermediate streams of one batch, exposed for tests.
template <typename Real>
struct ForwardStreams {
  PerModality<Real> initial;   // x_m
  PerModality<Real> interactive;  // e'_m
  PerModality<Real> temporal;  // encoder inputs
  std::optional<TimeInputs<Real>> time;
  std::vector<std::uint8_t> pad_mask;
};

template <typename Real>
class Model {
 public:
  Model(const ModelConfig& config, const ModelDims& dims, FeatureStore<Real> features,
        std::uint64_t seed);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  ForwardStreams<Real> streams(const data::SequenceBatch& batch) const;

  /// Final hidden state per active modality.
  PerModality<Real> user_states(const ForwardStreams<Real>& streams,
                                const StepContext& ctx) const;

  /// Item vectors used for scoring, per active modality, n_items x d.
  PerModality<Real> catalog() const;

  /// Scores over the full catalog, [B, n_items].
  Tensor<Real> scores(const data::SequenceBatch& batch, const PerModality<Real>& catalog,
                      const StepContext& ctx) const;

  /// Scores for specific candidate items (1-based; 0 is rejected).
  Tensor<Real> score_candidates(const PerModality<Real>& states,
                                std::span<const std::int64_t> candidates) const;

  /// Every enabled loss term and the weighted total.
  LossTerms<Real> loss(const data::SequenceBatch& batch, const StepContext& ctx) const;

  ParamStore<Real>& params() noexcept { return params_; }
  const ParamStore<Real>& params() const noexcept { return params_; }
  const ModelConfig& config() const noexcept { return config_; }
  const ModelDims& dims() const noexcept { return dims_; }
  const std::vector<Modality>& active() const noexcept { return active_; }

  const ItemRepresentation<Real>& items() const { return *items_; }
  const InteractiveMoe<Real>& interactive_moe() const { return *imoe_; }
  const TemporalMoe<Real>& temporal_moe() const { return *tmoe_; }
  const SequenceEncoder<Real>& encoder(Modality m) const;

 private:
  bool pcl_active() const;

  ModelConfig config_;
  ModelDims dims_;
  std::vector<Modality> active_;
  ParamStore<Real> params_;
  std::unique_ptr<ItemRepresentation<Real>> items_;
  std::unique_ptr<InteractiveMoe<Real>> imoe_;
  std::unique_ptr<TemporalMoe<Real>> tmoe_;
  std::array<std::unique_ptr<SequenceEncoder<Real>>, 3> encoders_;
  std::unique_ptr<CategoryHead<Real>> cp_head_;
  std::array<std::unique_ptr<PlaceholderHead<Real>>, 3> placeholders_;
};

}  // namespace hm4sr
