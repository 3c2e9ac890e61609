// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#include "hm4sr/model/model.hpp"

#include <stdexcept>

#include "hm4sr/core/ops.hpp"

namespace hm4sr {

template <typename Real>
Model<Real>::Model(const ModelConfig& config, const ModelDims& dims,
                   FeatureStore<Real> features, std::uint64_t seed)
    : config_(config), dims_(dims), active_(active_modalities(config)) {
  if (dims.n_items < 1) throw std::invalid_argument("model needs at least one item");
  const Initializer init(seed);
  items_ = std::make_unique<ItemRepresentation<Real>>(params_, config_, std::move(features),
                                                      dims.n_items, init);
  if (config_.enable_imoe) {
    imoe_ = std::make_unique<InteractiveMoe<Real>>(params_, config_, init);
  }
  if (config_.enable_tmoe) {
    tmoe_ = std::make_unique<TemporalMoe<Real>>(params_, config_, init);
  }
  for (Modality m : active_) {
    encoders_[static_cast<std::size_t>(m)] = std::make_unique<SequenceEncoder<Real>>(
        params_, config_, std::string(modality_name(m)), init);
  }
  if (config_.enable_cp) {
    cp_head_ = std::make_unique<CategoryHead<Real>>(params_, active_.size() * config_.d,
                                                    std::max<std::size_t>(dims.n_categories, 1),
                                                    config_.init_std, init);
  }
  if (pcl_active()) {
    for (Modality m : active_) {
      if (m == Modality::id) continue;
      placeholders_[static_cast<std::size_t>(m)] = std::make_unique<PlaceholderHead<Real>>(
          params_, m, config_.d, config_.init_std, init);
    }
  }
}

template <typename Real>
bool Model<Real>::pcl_active() const {
  return config_.enable_pcl && config_.enable_tmoe && active_.size() > 1;
}

template <typename Real>
const SequenceEncoder<Real>& Model<Real>::encoder(Modality m) const {
  const auto& e = encoders_[static_cast<std::size_t>(m)];
  if (!e) throw std::invalid_argument("no encoder for modality " + std::string(modality_name(m)));
  return *e;
}

template <typename Real>
ForwardStreams<Real> Model<Real>::streams(const data::SequenceBatch& batch) const {
  const std::size_t B = batch.batch_size, L = batch.max_len;
  if (B == 0) throw std::invalid_argument("empty batch");
  ForwardStreams<Real> out;
  out.pad_mask.resize(B * L);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < L; ++i) out.pad_mask[b * L + i] = batch.is_pad(b, i);

  out.initial = items_->project(batch.item_indices, {B, L});
  PerModality<Real> e;
  for (Modality m : active_) at(e, m) = items_->add_position(at(out.initial, m));
  out.interactive = imoe_ ? imoe_->forward(e) : e;
  if (tmoe_) {
    out.time = tmoe_->time_inputs(batch, dims_.time_origin);
    out.temporal = tmoe_->forward(out.interactive, out.time->gate_input);
  } else {
    out.temporal = out.interactive;
  }
  return out;
}

template <typename Real>
PerModality<Real> Model<Real>::user_states(const ForwardStreams<Real>& s,
                                           const StepContext& ctx) const {
  PerModality<Real> states;
  for (Modality m : active_) {
    const std::string site = "enc." + std::string(modality_name(m));
    at(states, m) = encoder(m).encode(at(s.temporal, m), s.pad_mask, ctx, site);
  }
  return states;
}

template <typename Real>
PerModality<Real> Model<Real>::catalog() const {
  PerModality<Real> x = items_->catalog();
  if (config_.score_with == ScoreSource::interactive && imoe_) return imoe_->forward(x);
  return x;
}

template <typename Real>
Tensor<Real> Model<Real>::scores(const data::SequenceBatch& batch,
                                 const PerModality<Real>& catalog,
                                 const StepContext& ctx) const {
  return score_items(user_states(streams(batch), ctx), catalog);
}

template <typename Real>
Tensor<Real> Model<Real>::score_candidates(const PerModality<Real>& states,
                                           std::span<const std::int64_t> candidates) const {
  for (std::int64_t c : candidates) {
    if (c == 0) throw std::invalid_argument("padding index among candidates");
  }
  PerModality<Real> x = items_->project(candidates, {candidates.size()});
  if (config_.score_with == ScoreSource::interactive && imoe_) x = imoe_->forward(x);
  return score_items(states, x);
}

template <typename Real>
LossTerms<Real> Model<Real>::loss(const data::SequenceBatch& batch,
                                  const StepContext& ctx) const {
  const ForwardStreams<Real> s = streams(batch);
  const PerModality<Real> states = user_states(s, ctx);
  LossTerms<Real> out;
  out.main = main_loss(score_items(states, catalog()), batch.targets);

  if (cp_head_) {
    std::vector<Tensor<Real>> parts;
    for (Modality m : active_) parts.push_back(at(s.initial, m));
    const Tensor<Real> logits = cp_head_->logits(ops::concat_last_dim<Real>(parts));
    out.cp = cp_loss(logits, batch.target_categories, s.pad_mask);
  }
  if (config_.enable_idcl) {
    out.idcl = idcl_loss(at(states, Modality::id), items_->id_rows(batch.targets), config_.tau);
  }
  if (pcl_active()) {
    const PlaceholderMask mask =
        sample_placeholder_positions(batch, config_.beta, ctx.key("pcl.positions"));
    std::vector<Tensor<Real>> originals, augmented;
    for (Modality m : active_) {
      if (m == Modality::id) continue;
      const auto& head = *placeholders_[static_cast<std::size_t>(m)];
      const Tensor<Real> seq =
          apply_placeholders(at(s.temporal, m), head.project(s.time->gate_input), mask);
      const std::string site = "enc." + std::string(modality_name(m)) + ".aug";
      originals.push_back(at(states, m));
      augmented.push_back(encoder(m).encode(seq, s.pad_mask, ctx, site));
    }
    out.pcl = pcl_loss<Real>(originals, augmented);
  }

  out.total = total_loss(out.main, out.cp, out.idcl, out.pcl, config_.lambda1, config_.lambda2,
                         config_.lambda3);
  LossBreakdown& br = out.breakdown;
  auto value = [](const Tensor<Real>& t) { return t.defined() ? double(t.item()) : 0.0; };
  br.main = value(out.main);
  br.cp = value(out.cp);
  br.idcl = value(out.idcl);
  br.pcl = value(out.pcl);
  br.total = value(out.total);
  br.lambda1 = config_.lambda1;
  br.lambda2 = config_.lambda2;
  br.lambda3 = config_.lambda3;
  return out;
}

template class Model<float>;
template class Model<double>;

}  // namespace hm4sr
