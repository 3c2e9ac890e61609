// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0
//
// Two-level mixture of experts. The interactive level lets every modality
// read the concatenation of all modalities; the temporal level rescales the
// concatenation per coordinate with experts chosen from time alone.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hm4sr/data/dataset.hpp"
#include "hm4sr/model/common.hpp"

namespace hm4sr {

template <typename Real>
class InteractiveMoe {
 public:
  InteractiveMoe(ParamStore<Real>& params, const ModelConfig& config, const Initializer& init);

  /// e'_m = e_m + alpha_m * sum_i g_i (e_cat W_i + b_i) for each active m.
  PerModality<Real> forward(const PerModality<Real>& e) const;

  /// Router probabilities of modality m, [..., k1].
  Tensor<Real> routing(Modality m, const Tensor<Real>& e_m) const;

 private:
  struct Head {
    Tensor<Real> alpha, experts_w, experts_b, router_w, router_b;
  };
  std::vector<Modality> active_;
  std::vector<Head> heads_;  // parallel to active_
};

/// floor(mu * ln(a + 1)) clamped to p_max - 1. Negative intervals throw.
std::vector<std::int64_t> interval_positions(std::span<const std::int64_t> intervals,
                                             double mu, std::size_t p_max);

/// cos(l_i * t / freq^(i/d) + z_i) for every t; result shape `shape` + [d].
template <typename Real>
Tensor<Real> absolute_time_embedding(std::span<const double> t, const Shape& shape,
                                     const Tensor<Real>& l, const Tensor<Real>& z,
                                     double freq);

/// Time inputs of one batch.
template <typename Real>
struct TimeInputs {
  Tensor<Real> r1;          // interval embedding, [B, L, d]
  Tensor<Real> r2;          // absolute-time embedding, [B, L, d]
  Tensor<Real> gate_input;  // router input assembled for the time variant, [B, L, 2d]
};

template <typename Real>
class TemporalMoe {
 public:
  TemporalMoe(ParamStore<Real>& params, const ModelConfig& config, const Initializer& init);

  /// Interval and absolute-time embeddings of a batch. Timestamps become days
  /// since `origin_seconds`; pad slots get t = 0 and interval 0.
  TimeInputs<Real> time_inputs(const data::SequenceBatch& batch,
                               std::int64_t origin_seconds) const;

  /// Router input for `variant` built from r1 and r2 (and the raw intervals in
  /// days for cos_interval).
  Tensor<Real> gate_input(TimeVariant variant, const Tensor<Real>& r1, const Tensor<Real>& r2,
                          std::span<const double> interval_days) const;

  /// Router probabilities, [B, L, k2].
  Tensor<Real> routing(const Tensor<Real>& gate_input) const;

  /// x_temp = sum_i g'_i (w_i * e_cat), split back into modalities.
  PerModality<Real> forward(const PerModality<Real>& e, const Tensor<Real>& gate_input) const;

  const Tensor<Real>& interval_table() const noexcept { return interval_table_; }

 private:
  std::vector<Modality> active_;
  std::size_t d_;
  double mu_, freq_;
  std::size_t p_max_;
  TimeVariant variant_;
  Tensor<Real> interval_table_, l_, z_, cos_l_, cos_z_;
  Tensor<Real> router_w_, router_b_, experts_;
};

}  // namespace hm4sr
