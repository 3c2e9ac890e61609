// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hm4sr/data/dataset.hpp"
#include "hm4sr/model/common.hpp"

namespace hm4sr {

struct LossBreakdown {
  double main = 0.0;
  double cp = 0.0;
  double idcl = 0.0;
  double pcl = 0.0;
  double total = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double lambda3 = 0.0;
};

/// main + lambda1 * cp + lambda2 * idcl + lambda3 * pcl.
double combine(const LossBreakdown& parts);

/// Mean negative log-likelihood of `targets` under a softmax over each row of
/// scores[B, n]. Targets are 1-based item indices (column target - 1).
template <typename Real>
Tensor<Real> main_loss(const Tensor<Real>& scores, std::span<const std::int64_t> targets);

/// Category prediction head over the concatenated initial representations.
template <typename Real>
class CategoryHead {
 public:
  CategoryHead(ParamStore<Real>& params, std::size_t in_width, std::size_t n_categories,
               double init_std, const Initializer& init);

  /// Logits [B, L, C] for concat[B, L, in_width].
  Tensor<Real> logits(const Tensor<Real>& concat) const;

 private:
  Tensor<Real> w_, b_;
};

/// Binary cross-entropy with logits summed over categories and valid slots,
/// averaged over sequences. `labels` is B*L*C multi-hot; `pad_mask` is B*L.
template <typename Real>
Tensor<Real> cp_loss(const Tensor<Real>& logits, std::span<const std::uint8_t> labels,
                     std::span<const std::uint8_t> pad_mask);

/// Row-wise InfoNCE over the cosine-similarity matrix of a[B, d] and b[B, d]
/// divided by tau; the diagonal is the positive. Mean over rows.
template <typename Real>
Tensor<Real> info_nce(const Tensor<Real>& a, const Tensor<Real>& b, double tau);

template <typename Real>
Tensor<Real> idcl_loss(const Tensor<Real>& h_id, const Tensor<Real>& target_ids, double tau) {
  return info_nce(h_id, target_ids, tau);
}

/// Mean of the untempered InfoNCE between original and augmented states over
/// the given modality pairs.
template <typename Real>
Tensor<Real> pcl_loss(std::span<const Tensor<Real>> states,
                      std::span<const Tensor<Real>> augmented);

/// Positions chosen for time placeholders: round(beta * valid_length) distinct
/// valid slots per sequence, a pure function of `key`.
struct PlaceholderMask {
  std::vector<std::uint8_t> replaced;  // B*L
  std::size_t count() const;
};

PlaceholderMask sample_placeholder_positions(const data::SequenceBatch& batch, double beta,
                                             std::uint64_t key);

/// Per-modality placeholder projection of the router time input.
template <typename Real>
class PlaceholderHead {
 public:
  PlaceholderHead(ParamStore<Real>& params, Modality m, std::size_t d, double init_std,
                  const Initializer& init);

  Tensor<Real> project(const Tensor<Real>& time_input) const;

 private:
  Tensor<Real> w_, b_;
};

/// Replaces masked slots of seq[B, L, d] with placeholder[B, L, d]. With an
/// empty mask the input is returned as is.
template <typename Real>
Tensor<Real> apply_placeholders(const Tensor<Real>& seq, const Tensor<Real>& placeholder,
                                const PlaceholderMask& mask);

/// main + sum of weighted auxiliary terms; undefined terms are skipped.
template <typename Real>
Tensor<Real> total_loss(const Tensor<Real>& main, const Tensor<Real>& cp,
                        const Tensor<Real>& idcl, const Tensor<Real>& pcl, double lambda1,
                        double lambda2, double lambda3);

}  // namespace hm4sr
