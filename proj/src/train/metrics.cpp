// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#include "hm4sr/train/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <stdexcept>
#include <thread>

namespace hm4sr {

template <typename Score>
std::size_t rank_of_target(std::span<const Score> scores, std::size_t target) {
  if (target >= scores.size()) throw std::out_of_range("rank_of_target: target out of range");
  const Score st = scores[target];
  std::size_t rank = 1;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > st || (j < target && scores[j] == st)) ++rank;
  }
  return rank;
}

double ndcg_at(std::size_t rank, std::size_t k) {
  return rank >= 1 && rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

double mrr_at(std::size_t rank, std::size_t k) {
  return rank >= 1 && rank <= k ? 1.0 / static_cast<double>(rank) : 0.0;
}

RankingMetrics metrics_from_ranks(std::span<const std::size_t> ranks) {
  RankingMetrics m;
  m.count = ranks.size();
  if (ranks.empty()) return m;
  for (std::size_t r : ranks) {
    m.ndcg5 += ndcg_at(r, 5);
    m.ndcg10 += ndcg_at(r, 10);
    m.mrr5 += mrr_at(r, 5);
    m.mrr10 += mrr_at(r, 10);
  }
  const double n = static_cast<double>(ranks.size());
  m.ndcg5 /= n;
  m.ndcg10 /= n;
  m.mrr5 /= n;
  m.mrr10 /= n;
  return m;
}

template <typename Real>
std::vector<std::size_t> rank_examples(const Model<Real>& model, const data::Dataset& dataset,
                                       std::span<const data::Example> examples,
                                       const EvalOptions& options) {
  if (examples.empty()) throw std::invalid_argument("evaluate: empty split");
  const auto batches = data::make_batches(examples, dataset, std::max<std::size_t>(options.batch_size, 1),
                                          model.config().max_len, std::nullopt);
  std::vector<std::size_t> offsets(batches.size() + 1, 0);
  for (std::size_t i = 0; i < batches.size(); ++i)
    offsets[i + 1] = offsets[i] + batches[i].batch_size;

  const PerModality<Real> catalog = model.catalog();
  const std::size_t n_items = model.dims().n_items;
  std::vector<std::size_t> ranks(examples.size(), 0);
  auto run_batch = [&](std::size_t i) {
    const StepContext eval_ctx{};
    const Tensor<Real> scores = model.scores(batches[i], catalog, eval_ctx);
    auto all = scores.values();
    for (std::size_t b = 0; b < batches[i].batch_size; ++b) {
      const auto row = all.subspan(b * n_items, n_items);
      ranks[offsets[i] + b] = rank_of_target<Real>(
          row, static_cast<std::size_t>(batches[i].targets[b] - 1));
    }
  };

  const std::size_t threads = std::min(std::max<std::size_t>(options.threads, 1), batches.size());
  if (threads <= 1) {
    for (std::size_t i = 0; i < batches.size(); ++i) run_batch(i);
    return ranks;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < threads; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < batches.size(); i += threads) run_batch(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return ranks;
}

template <typename Real>
RankingMetrics evaluate(const Model<Real>& model, const data::Dataset& dataset,
                        std::span<const data::Example> examples, const EvalOptions& options) {
  const auto ranks = rank_examples(model, dataset, examples, options);
  return metrics_from_ranks(ranks);
}

template std::size_t rank_of_target(std::span<const float>, std::size_t);
template std::size_t rank_of_target(std::span<const double>, std::size_t);
template std::vector<std::size_t> rank_examples(const Model<float>&, const data::Dataset&,
                                                std::span<const data::Example>,
                                                const EvalOptions&);
template std::vector<std::size_t> rank_examples(const Model<double>&, const data::Dataset&,
                                                std::span<const data::Example>,
                                                const EvalOptions&);
template RankingMetrics evaluate(const Model<float>&, const data::Dataset&,
                                 std::span<const data::Example>, const EvalOptions&);
template RankingMetrics evaluate(const Model<double>&, const data::Dataset&,
                                 std::span<const data::Example>, const EvalOptions&);

}  // namespace hm4sr
