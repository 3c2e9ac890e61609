// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#include "hm4sr/model/objectives.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "hm4sr/core/ops.hpp"

namespace hm4sr {

double combine(const LossBreakdown& p) {
  return p.main + p.lambda1 * p.cp + p.lambda2 * p.idcl + p.lambda3 * p.pcl;
}

template <typename Real>
Tensor<Real> main_loss(const Tensor<Real>& scores, std::span<const std::int64_t> targets) {
  if (scores.rank() != 2 || scores.dim(0) != targets.size()) {
    throw ShapeError("main_loss: scores " + shape_to_string(scores.shape()) + " for " +
                     std::to_string(targets.size()) + " targets");
  }
  const std::size_t B = scores.dim(0), n = scores.dim(1);
  std::vector<Real> onehot(B * n, Real(0));
  for (std::size_t b = 0; b < B; ++b) {
    if (targets[b] < 1 || static_cast<std::size_t>(targets[b]) > n) {
      throw std::out_of_range("main_loss: target " + std::to_string(targets[b]) +
                              " outside [1, " + std::to_string(n) + "]");
    }
    onehot[b * n + static_cast<std::size_t>(targets[b] - 1)] = Real(1);
  }
  const auto pick = Tensor<Real>::from_values({B, n}, std::move(onehot));
  return ops::scale(ops::sum(ops::mul(pick, ops::log_softmax_last_dim(scores))),
                    -1.0 / static_cast<double>(B));
}

template <typename Real>
CategoryHead<Real>::CategoryHead(ParamStore<Real>& params, std::size_t in_width,
                                 std::size_t n_categories, double init_std, const Initializer& init) {
  if (n_categories == 0) throw std::invalid_argument("category head needs >= 1 category");
  w_ = add_normal(params, init, "cp.W", {in_width, n_categories}, init_std);
  b_ = params.add("cp.b", Tensor<Real>::zeros({n_categories}));
}

template <typename Real>
Tensor<Real> CategoryHead<Real>::logits(const Tensor<Real>& concat) const {
  return ops::add(ops::matmul(concat, w_), b_);
}

template <typename Real>
Tensor<Real> cp_loss(const Tensor<Real>& logits, std::span<const std::uint8_t> labels,
                     std::span<const std::uint8_t> pad_mask) {
  if (logits.rank() != 3 || labels.size() != logits.numel() ||
      pad_mask.size() != logits.dim(0) * logits.dim(1)) {
    throw ShapeError("cp_loss: logits " + shape_to_string(logits.shape()) +
                     " do not match labels/pad mask");
  }
  const std::size_t B = logits.dim(0), C = logits.last_dim();
  std::vector<Real> y(labels.size()), valid(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    y[i] = labels[i] ? Real(1) : Real(0);
    valid[i] = pad_mask[i / C] ? Real(0) : Real(1);
  }
  const auto yt = Tensor<Real>::from_values(logits.shape(), std::move(y));
  const auto vt = Tensor<Real>::from_values(logits.shape(), std::move(valid));
  const Tensor<Real> bce = ops::subtract(ops::softplus(logits), ops::mul(yt, logits));
  return ops::scale(ops::sum(ops::mul(bce, vt)), 1.0 / static_cast<double>(B));
}

template <typename Real>
Tensor<Real> info_nce(const Tensor<Real>& a, const Tensor<Real>& b, double tau) {
  if (a.rank() != 2 || a.shape() != b.shape()) {
    throw ShapeError("info_nce: " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
  if (!(tau > 0.0)) throw std::invalid_argument("info_nce: tau must be positive");
  const std::size_t B = a.dim(0);
  std::vector<Real> diag(B * B, Real(0));
  for (std::size_t i = 0; i < B; ++i) diag[i * B + i] = Real(1);
  const auto pick = Tensor<Real>::from_values({B, B}, std::move(diag));
  const Tensor<Real> sim = ops::scale(ops::cosine_similarity(a, b), 1.0 / tau);
  return ops::scale(ops::sum(ops::mul(pick, ops::log_softmax_last_dim(sim))),
                    -1.0 / static_cast<double>(B));
}

template <typename Real>
Tensor<Real> pcl_loss(std::span<const Tensor<Real>> states,
                      std::span<const Tensor<Real>> augmented) {
  if (states.empty() || states.size() != augmented.size()) {
    throw std::invalid_argument("pcl_loss: need matching, non-empty state lists");
  }
  Tensor<Real> total;
  for (std::size_t i = 0; i < states.size(); ++i) {
    Tensor<Real> part = info_nce(states[i], augmented[i], 1.0);
    total = total.defined() ? ops::add(total, part) : part;
  }
  return states.size() == 1 ? total : ops::scale(total, 1.0 / double(states.size()));
}

std::size_t PlaceholderMask::count() const {
  return static_cast<std::size_t>(std::accumulate(replaced.begin(), replaced.end(), 0));
}

PlaceholderMask sample_placeholder_positions(const data::SequenceBatch& batch, double beta,
                                             std::uint64_t key) {
  if (!(beta >= 0.0 && beta < 1.0)) {
    throw std::invalid_argument("placeholder ratio beta must lie in [0, 1)");
  }
  const std::size_t B = batch.batch_size, L = batch.max_len;
  PlaceholderMask mask;
  mask.replaced.assign(B * L, 0);
  for (std::size_t b = 0; b < B; ++b) {
    const auto n = static_cast<std::size_t>(batch.valid_lengths[b]);
    const auto r = static_cast<std::size_t>(std::llround(beta * static_cast<double>(n)));
    if (r == 0) continue;
    std::vector<std::size_t> slots(n);
    std::iota(slots.begin(), slots.end(), L - n);
    const std::uint64_t row_key = mix_key(key, b);
    for (std::size_t j = 0; j < r; ++j) {
      const auto pick = j + static_cast<std::size_t>(counter_uniform(row_key, j) *
                                                     static_cast<double>(n - j));
      std::swap(slots[j], slots[pick]);
      mask.replaced[b * L + slots[j]] = 1;
    }
  }
  return mask;
}

template <typename Real>
PlaceholderHead<Real>::PlaceholderHead(ParamStore<Real>& params, Modality m, std::size_t d,
                                       double init_std, const Initializer& init) {
  const std::string prefix = "pcl." + std::string(modality_name(m)) + ".";
  w_ = add_normal(params, init, prefix + "W", {2 * d, d}, init_std);
  b_ = params.add(prefix + "b", Tensor<Real>::zeros({d}));
}

template <typename Real>
Tensor<Real> PlaceholderHead<Real>::project(const Tensor<Real>& time_input) const {
  return ops::add(ops::matmul(time_input, w_), b_);
}

template <typename Real>
Tensor<Real> apply_placeholders(const Tensor<Real>& seq, const Tensor<Real>& placeholder,
                                const PlaceholderMask& mask) {
  if (seq.shape() != placeholder.shape() || seq.rank() != 3 ||
      mask.replaced.size() != seq.dim(0) * seq.dim(1)) {
    throw ShapeError("apply_placeholders: " + shape_to_string(seq.shape()) + " vs " +
                     shape_to_string(placeholder.shape()));
  }
  if (mask.count() == 0) return seq;
  const std::size_t d = seq.last_dim();
  std::vector<Real> keep(seq.numel()), take(seq.numel());
  for (std::size_t i = 0; i < seq.numel(); ++i) {
    const bool r = mask.replaced[i / d] != 0;
    keep[i] = r ? Real(0) : Real(1);
    take[i] = r ? Real(1) : Real(0);
  }
  return ops::add(ops::mul(seq, Tensor<Real>::from_values(seq.shape(), std::move(keep))),
                  ops::mul(placeholder, Tensor<Real>::from_values(seq.shape(), std::move(take))));
}

template <typename Real>
Tensor<Real> total_loss(const Tensor<Real>& main, const Tensor<Real>& cp,
                        const Tensor<Real>& idcl, const Tensor<Real>& pcl, double lambda1,
                        double lambda2, double lambda3) {
  if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0) {
    throw std::invalid_argument("total_loss: weights must be >= 0");
  }
  Tensor<Real> total = main;
  if (cp.defined()) total = ops::add(total, ops::scale(cp, lambda1));
  if (idcl.defined()) total = ops::add(total, ops::scale(idcl, lambda2));
  if (pcl.defined()) total = ops::add(total, ops::scale(pcl, lambda3));
  return total;
}

#define HM4SR_INSTANTIATE_OBJECTIVES(Real)                                                \
  template Tensor<Real> main_loss(const Tensor<Real>&, std::span<const std::int64_t>);    \
  template class CategoryHead<Real>;                                                      \
  template Tensor<Real> cp_loss(const Tensor<Real>&, std::span<const std::uint8_t>,       \
                                std::span<const std::uint8_t>);                           \
  template Tensor<Real> info_nce(const Tensor<Real>&, const Tensor<Real>&, double);       \
  template Tensor<Real> pcl_loss(std::span<const Tensor<Real>>,                           \
                                 std::span<const Tensor<Real>>);                          \
  template class PlaceholderHead<Real>;                                                   \
  template Tensor<Real> apply_placeholders(const Tensor<Real>&, const Tensor<Real>&,      \
                                           const PlaceholderMask&);                       \
  template Tensor<Real> total_loss(const Tensor<Real>&, const Tensor<Real>&,              \
                                   const Tensor<Real>&, const Tensor<Real>&, double,      \
                                   double, double);

HM4SR_INSTANTIATE_OBJECTIVES(float)
HM4SR_INSTANTIATE_OBJECTIVES(double)

}  // namespace hm4sr
