// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hm4sr/data/dataset.hpp"
#include "hm4sr/model/model.hpp"

namespace hm4sr {

/// 1-based rank of column `target`. Items scoring higher come first; equal
/// scores are ordered by ascending column.
template <typename Score>
std::size_t rank_of_target(std::span<const Score> scores, std::size_t target);

double ndcg_at(std::size_t rank, std::size_t k);
double mrr_at(std::size_t rank, std::size_t k);

struct RankingMetrics {
  double ndcg5 = 0.0;
  double ndcg10 = 0.0;
  double mrr5 = 0.0;
  double mrr10 = 0.0;
  std::size_t count = 0;
};

/// Averages over ranks, summed in the given order.
RankingMetrics metrics_from_ranks(std::span<const std::size_t> ranks);

struct EvalOptions {
  std::size_t batch_size = 256;
  std::size_t threads = 1;
};

/// Ranks of every example's target against the full catalog, dropout off.
/// Worker threads split batches; the result does not depend on the count.
template <typename Real>
std::vector<std::size_t> rank_examples(const Model<Real>& model, const data::Dataset& dataset,
                                       std::span<const data::Example> examples,
                                       const EvalOptions& options);

/// Throws std::invalid_argument on an empty example set.
template <typename Real>
RankingMetrics evaluate(const Model<Real>& model, const data::Dataset& dataset,
                        std::span<const data::Example> examples, const EvalOptions& options);

}  // namespace hm4sr
