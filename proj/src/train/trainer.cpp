// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#include "hm4sr/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "hm4sr/core/rng.hpp"
#include "json.hpp"

namespace hm4sr {

namespace {

std::string describe(const LossBreakdown& l) {
  std::ostringstream out;
  out << "main=" << l.main << " cp=" << l.cp << " idcl=" << l.idcl << " pcl=" << l.pcl
      << " total=" << l.total;
  return out.str();
}

bool finite(const LossBreakdown& l) {
  return std::isfinite(l.main) && std::isfinite(l.cp) && std::isfinite(l.idcl) &&
         std::isfinite(l.pcl) && std::isfinite(l.total);
}

}  // namespace

NonFiniteLoss::NonFiniteLoss(std::size_t epoch_, std::size_t batch_, const LossBreakdown& loss_)
    : std::runtime_error("non-finite loss in epoch " + std::to_string(epoch_) + ", batch " +
                         std::to_string(batch_) + ": " + describe(loss_)),
      epoch(epoch_),
      batch(batch_),
      loss(loss_) {}

std::string to_json_line(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["main"] = r.loss.main;
  j["cp"] = r.loss.cp;
  j["idcl"] = r.loss.idcl;
  j["pcl"] = r.loss.pcl;
  j["total"] = r.loss.total;
  j["lambda1"] = r.loss.lambda1;
  j["lambda2"] = r.loss.lambda2;
  j["lambda3"] = r.loss.lambda3;
  if (r.valid) {
    j["ndcg@5"] = r.valid->ndcg5;
    j["ndcg@10"] = r.valid->ndcg10;
    j["mrr@5"] = r.valid->mrr5;
    j["mrr@10"] = r.valid->mrr10;
  }
  j["wall_time_seconds"] = r.wall_time_seconds;
  return j.dump();
}

template <typename Real>
LossBreakdown train_step(Model<Real>& model, Adam<Real>& optimizer,
                         const data::SequenceBatch& batch, const StepContext& ctx,
                         double grad_clip, std::size_t batch_index) {
  model.params().zero_grad();
  Tape<Real> tape;
  TapeScope<Real> scope(tape);
  LossTerms<Real> terms = model.loss(batch, ctx);
  if (!finite(terms.breakdown)) {
    tape.clear();
    throw NonFiniteLoss(ctx.epoch, batch_index, terms.breakdown);
  }
  tape.backward(terms.total);
  clip_grad_norm(model.params(), grad_clip);
  optimizer.step();
  return terms.breakdown;
}

template <typename Real>
TrainResult train(Model<Real>& model, const data::Dataset& dataset, const data::Splits& splits,
                  const TrainConfig& config, const TrainHooks& hooks) {
  if (splits.train.empty()) throw std::invalid_argument("train: no training examples");
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  Adam<Real> optimizer(model.params(), AdamOptions{config.lr});
  const EvalOptions eval{config.eval_batch_size, config.eval_threads};
  const bool validate = !hooks.skip_validation && !splits.valid.empty();

  TrainResult result;
  std::vector<std::vector<Real>> best;
  double best_ndcg = -1.0;
  std::size_t since_best = 0;
  std::uint64_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batches = data::make_batches(splits.train, dataset, config.batch_size,
                                            model.config().max_len, mix_key(config.seed, epoch));
    MetricsReport report;
    report.epoch = epoch;
    for (std::size_t i = 0; i < batches.size(); ++i) {
      const StepContext ctx{true, config.seed, epoch, step++};
      const LossBreakdown l =
          train_step(model, optimizer, batches[i], ctx, config.grad_clip, i);
      report.loss.main += l.main;
      report.loss.cp += l.cp;
      report.loss.idcl += l.idcl;
      report.loss.pcl += l.pcl;
      report.loss.total += l.total;
      report.loss.lambda1 = l.lambda1;
      report.loss.lambda2 = l.lambda2;
      report.loss.lambda3 = l.lambda3;
    }
    const double n = static_cast<double>(batches.size());
    report.loss.main /= n;
    report.loss.cp /= n;
    report.loss.idcl /= n;
    report.loss.pcl /= n;
    report.loss.total /= n;

    bool stop = false;
    if (validate) {
      report.valid = evaluate(model, dataset, splits.valid, eval);
      if (report.valid->ndcg10 > best_ndcg) {
        best_ndcg = report.valid->ndcg10;
        best = model.params().snapshot();
        result.best_epoch = epoch;
        result.best_valid = report.valid;
        since_best = 0;
      } else if (config.patience > 0 && ++since_best >= config.patience) {
        stop = true;
        result.stopped_early = true;
      }
    } else {
      result.best_epoch = epoch;
    }
    report.wall_time_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    result.history.push_back(report);
    if (hooks.on_epoch) hooks.on_epoch(report);
    if (hooks.stop && hooks.stop(report)) stop = true;
    if (stop) break;
  }
  if (!best.empty()) model.params().restore(best);
  return result;
}

template LossBreakdown train_step(Model<float>&, Adam<float>&, const data::SequenceBatch&,
                                  const StepContext&, double, std::size_t);
template LossBreakdown train_step(Model<double>&, Adam<double>&, const data::SequenceBatch&,
                                  const StepContext&, double, std::size_t);
template TrainResult train(Model<float>&, const data::Dataset&, const data::Splits&,
                           const TrainConfig&, const TrainHooks&);
template TrainResult train(Model<double>&, const data::Dataset&, const data::Splits&,
                           const TrainConfig&, const TrainHooks&);

}  // namespace hm4sr
