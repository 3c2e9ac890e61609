// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hm4sr/model/model.hpp"
#include "hm4sr/train/metrics.hpp"
#include "hm4sr/train/optimizer.hpp"

namespace hm4sr {

/// One epoch of training as reported on the metrics stream.
struct MetricsReport {
  std::size_t epoch = 0;
  LossBreakdown loss;  // mean over the epoch's batches
  std::optional<RankingMetrics> valid;
  double wall_time_seconds = 0.0;
};

std::string to_json_line(const MetricsReport& report);

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(std::size_t epoch, std::size_t batch, const LossBreakdown& loss);
  std::size_t epoch;
  std::size_t batch;
  LossBreakdown loss;
};

struct TrainHooks {
  /// Called after every epoch.
  std::function<void(const MetricsReport&)> on_epoch;
  /// Returning true ends training after the current epoch.
  std::function<bool(const MetricsReport&)> stop;
  /// Skip validation (and with it early stopping and best-snapshot restore).
  bool skip_validation = false;
};

struct TrainResult {
  std::vector<MetricsReport> history;
  std::size_t best_epoch = 0;
  std::optional<RankingMetrics> best_valid;
  bool stopped_early = false;
};

/// Adam training with gradient clipping and early stopping on validation
/// NDCG@10. On return the model holds the best-validation parameters when
/// validation ran, otherwise the final ones.
template <typename Real>
TrainResult train(Model<Real>& model, const data::Dataset& dataset, const data::Splits& splits,
                  const TrainConfig& config, const TrainHooks& hooks = {});

/// One optimizer step on one batch; returns the breakdown before the update.
/// A non-finite loss throws NonFiniteLoss naming `batch_index` and leaves the
/// parameters untouched.
template <typename Real>
LossBreakdown train_step(Model<Real>& model, Adam<Real>& optimizer,
                         const data::SequenceBatch& batch, const StepContext& ctx,
                         double grad_clip, std::size_t batch_index);

}  // namespace hm4sr
