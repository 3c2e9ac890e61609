// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#include "hm4sr/model/moe.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "hm4sr/core/ops.hpp"

namespace hm4sr {

namespace {

std::string param_name(const char* prefix, Modality m, const char* leaf) {
  return std::string(prefix) + "." + std::string(modality_name(m)) + "." + leaf;
}

}  // namespace

template <typename Real>
InteractiveMoe<Real>::InteractiveMoe(ParamStore<Real>& params, const ModelConfig& config,
                                     const Initializer& init)
    : active_(active_modalities(config)) {
  const std::size_t d = config.d, k = config.k1, width = active_.size() * d;
  const double sd = config.init_std;
  for (Modality m : active_) {
    Head h;
    h.alpha = params.add(param_name("imoe", m, "alpha"),
                         Tensor<Real>::filled({1}, static_cast<Real>(config.alpha_init)));
    h.experts_w = add_normal(params, init, param_name("imoe", m, "experts.W"), {width, k * d}, sd);
    h.experts_b = params.add(param_name("imoe", m, "experts.b"), Tensor<Real>::zeros({k * d}));
    h.router_w = add_normal(params, init, param_name("imoe", m, "router.W"), {d, k}, sd);
    h.router_b = params.add(param_name("imoe", m, "router.b"), Tensor<Real>::zeros({k}));
    heads_.push_back(std::move(h));
  }
}

template <typename Real>
Tensor<Real> InteractiveMoe<Real>::routing(Modality m, const Tensor<Real>& e_m) const {
  for (std::size_t i = 0; i < active_.size(); ++i) {
    if (active_[i] == m) {
      const Head& h = heads_[i];
      return ops::softmax_last_dim(ops::add(ops::matmul(e_m, h.router_w), h.router_b));
    }
  }
  throw std::invalid_argument("modality '" + std::string(modality_name(m)) +
                              "' is not active");
}

template <typename Real>
PerModality<Real> InteractiveMoe<Real>::forward(const PerModality<Real>& e) const {
  std::vector<Tensor<Real>> parts;
  for (Modality m : active_) parts.push_back(at(e, m));
  const Tensor<Real> e_cat = ops::concat_last_dim<Real>(parts);
  PerModality<Real> out;
  for (std::size_t i = 0; i < active_.size(); ++i) {
    const Head& h = heads_[i];
    const Tensor<Real>& e_m = parts[i];
    Tensor<Real> experts = ops::add(ops::matmul(e_cat, h.experts_w), h.experts_b);
    Tensor<Real> mixed = ops::expert_mix(routing(active_[i], e_m), experts);
    at(out, active_[i]) = ops::add(e_m, ops::scale(mixed, h.alpha));
  }
  return out;
}

std::vector<std::int64_t> interval_positions(std::span<const std::int64_t> intervals,
                                             double mu, std::size_t p_max) {
  if (!(mu > 0.0)) throw std::invalid_argument("interval_positions: mu must be positive");
  if (p_max == 0) throw std::invalid_argument("interval_positions: P_max must be >= 1");
  std::vector<std::int64_t> out(intervals.size());
  const auto cap = static_cast<std::int64_t>(p_max - 1);
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    if (intervals[i] < 0) {
      throw std::invalid_argument("interval_positions: negative interval " +
                                  std::to_string(intervals[i]));
    }
    const double pos = std::floor(mu * std::log1p(static_cast<double>(intervals[i])));
    out[i] = pos >= static_cast<double>(cap) ? cap : static_cast<std::int64_t>(pos);
  }
  return out;
}

template <typename Real>
Tensor<Real> absolute_time_embedding(std::span<const double> t, const Shape& shape,
                                     const Tensor<Real>& l, const Tensor<Real>& z,
                                     double freq) {
  if (!(freq > 1.0)) throw std::invalid_argument("absolute_time_embedding: freq must exceed 1");
  const std::size_t d = l.numel();
  if (z.numel() != d) throw ShapeError("absolute_time_embedding: l and z widths differ");
  if (shape_numel(shape) != t.size()) {
    throw ShapeError("absolute_time_embedding: " + std::to_string(t.size()) +
                     " timestamps for shape " + shape_to_string(shape));
  }
  std::vector<double> inv_freq(d);
  for (std::size_t i = 0; i < d; ++i)
    inv_freq[i] = std::pow(freq, -static_cast<double>(i) / static_cast<double>(d));
  Shape out_shape = shape;
  out_shape.push_back(d);
  std::vector<Real> coef(t.size() * d);
  for (std::size_t s = 0; s < t.size(); ++s)
    for (std::size_t i = 0; i < d; ++i) coef[s * d + i] = static_cast<Real>(t[s] * inv_freq[i]);
  Tensor<Real> c = Tensor<Real>::from_values(out_shape, std::move(coef));
  return ops::cos(ops::add(ops::mul(c, l), z));
}

template <typename Real>
TemporalMoe<Real>::TemporalMoe(ParamStore<Real>& params, const ModelConfig& config,
                               const Initializer& init)
    : active_(active_modalities(config)),
      d_(config.d),
      mu_(config.mu),
      freq_(config.freq),
      p_max_(config.p_max),
      variant_(config.time_variant) {
  const std::size_t d = config.d, k = config.k2, width = active_.size() * d;
  const double sd = config.init_std;
  interval_table_ = add_normal(params, init, "tmoe.interval_table", {config.p_max, d}, sd);
  l_ = params.add("tmoe.time.l", Tensor<Real>::filled({d}, Real(1)));
  z_ = params.add("tmoe.time.z", Tensor<Real>::zeros({d}));
  if (variant_ == TimeVariant::cos_interval) {
    cos_l_ = params.add("tmoe.interval_cos.l", Tensor<Real>::filled({d}, Real(1)));
    cos_z_ = params.add("tmoe.interval_cos.z", Tensor<Real>::zeros({d}));
  }
  router_w_ = add_normal(params, init, "tmoe.router.W", {2 * d, k}, sd);
  router_b_ = params.add("tmoe.router.b", Tensor<Real>::zeros({k}));
  experts_ = add_normal(params, init, "tmoe.experts", {k, width}, sd);
}

template <typename Real>
TimeInputs<Real> TemporalMoe<Real>::time_inputs(const data::SequenceBatch& batch,
                                                std::int64_t origin_seconds) const {
  const std::size_t B = batch.batch_size, L = batch.max_len;
  const Shape shape{B, L};
  std::vector<double> t(B * L, 0.0), a_days(B * L, 0.0);
  std::vector<std::int64_t> intervals(B * L, 0);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < L; ++i) {
      if (batch.is_pad(b, i)) continue;
      const std::size_t s = b * L + i;
      t[s] = static_cast<double>(batch.timestamps[s] - origin_seconds) / 86400.0;
      intervals[s] = batch.intervals[s];
      a_days[s] = static_cast<double>(batch.intervals[s]) / 86400.0;
    }
  }
  TimeInputs<Real> out;
  out.r1 = ops::embedding_lookup(interval_table_, interval_positions(intervals, mu_, p_max_),
                                 shape);
  out.r2 = absolute_time_embedding<Real>(t, shape, l_, z_, freq_);
  out.gate_input = gate_input(variant_, out.r1, out.r2, a_days);
  return out;
}

template <typename Real>
Tensor<Real> TemporalMoe<Real>::gate_input(TimeVariant variant, const Tensor<Real>& r1,
                                           const Tensor<Real>& r2,
                                           std::span<const double> interval_days) const {
  auto concat = [](const Tensor<Real>& a, const Tensor<Real>& b) {
    const Tensor<Real> parts[] = {a, b};
    return ops::concat_last_dim<Real>(parts);
  };
  switch (variant) {
    case TimeVariant::both:
      return concat(r1, r2);
    case TimeVariant::interval_only:
      return concat(r1, Tensor<Real>::zeros(r2.shape()));
    case TimeVariant::absolute_only:
      return concat(Tensor<Real>::zeros(r1.shape()), r2);
    case TimeVariant::cos_interval: {
      if (!cos_l_.defined()) {
        throw std::invalid_argument("cos_interval needs a model built with that variant");
      }
      Shape shape(r1.shape().begin(), r1.shape().end() - 1);
      return concat(absolute_time_embedding<Real>(interval_days, shape, cos_l_, cos_z_, freq_),
                    r2);
    }
  }
  throw std::invalid_argument("unknown time variant");
}

template <typename Real>
Tensor<Real> TemporalMoe<Real>::routing(const Tensor<Real>& gate_input) const {
  return ops::softmax_last_dim(ops::add(ops::matmul(gate_input, router_w_), router_b_));
}

template <typename Real>
PerModality<Real> TemporalMoe<Real>::forward(const PerModality<Real>& e,
                                             const Tensor<Real>& gate_input) const {
  std::vector<Tensor<Real>> parts;
  for (Modality m : active_) parts.push_back(at(e, m));
  const Tensor<Real> e_cat = ops::concat_last_dim<Real>(parts);
  const Tensor<Real> scaling = ops::matmul(routing(gate_input), experts_);
  const auto split = ops::split_last_dim(ops::mul(scaling, e_cat), active_.size());
  PerModality<Real> out;
  for (std::size_t i = 0; i < active_.size(); ++i) at(out, active_[i]) = split[i];
  return out;
}

template class InteractiveMoe<float>;
template class InteractiveMoe<double>;
template class TemporalMoe<float>;
template class TemporalMoe<double>;
template Tensor<float> absolute_time_embedding(std::span<const double>, const Shape&,
                                               const Tensor<float>&, const Tensor<float>&,
                                               double);
template Tensor<double> absolute_time_embedding(std::span<const double>, const Shape&,
                                                const Tensor<double>&, const Tensor<double>&,
                                                double);

}  // namespace hm4sr
