// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#include "hm4sr/model/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "hm4sr/core/ops.hpp"

namespace hm4sr {

namespace {

constexpr double kMaskedLogit = -1e9;

}  // namespace

template <typename Real>
SequenceEncoder<Real>::SequenceEncoder(ParamStore<Real>& params, const ModelConfig& config,
                                       const std::string& name, const Initializer& init)
    : d_(config.d), heads_(config.n_heads), dropout_(config.dropout), causal_(config.causal) {
  if (d_ % heads_ != 0) throw std::invalid_argument("d must be divisible by n_heads");
  const std::size_t d = d_, h = 4 * d_;
  const double sd = config.init_std;
  const std::string prefix = "enc." + name + ".";
  auto ones = [](std::size_t n) { return Tensor<Real>::filled({n}, Real(1)); };
  ln_in_g_ = params.add(prefix + "ln_in.gain", ones(d));
  ln_in_b_ = params.add(prefix + "ln_in.bias", Tensor<Real>::zeros({d}));
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    const std::string p = prefix + "l" + std::to_string(i) + ".";
    Layer layer;
    layer.wq = add_normal(params, init, p + "attn.Wq", {d, d}, sd);
    layer.bq = params.add(p + "attn.bq", Tensor<Real>::zeros({d}));
    layer.wk = add_normal(params, init, p + "attn.Wk", {d, d}, sd);
    layer.bk = params.add(p + "attn.bk", Tensor<Real>::zeros({d}));
    layer.wv = add_normal(params, init, p + "attn.Wv", {d, d}, sd);
    layer.bv = params.add(p + "attn.bv", Tensor<Real>::zeros({d}));
    layer.wo = add_normal(params, init, p + "attn.Wo", {d, d}, sd);
    layer.bo = params.add(p + "attn.bo", Tensor<Real>::zeros({d}));
    layer.ln1_g = params.add(p + "ln1.gain", ones(d));
    layer.ln1_b = params.add(p + "ln1.bias", Tensor<Real>::zeros({d}));
    layer.w1 = add_normal(params, init, p + "ffn.W1", {d, h}, sd);
    layer.b1 = params.add(p + "ffn.b1", Tensor<Real>::zeros({h}));
    layer.w2 = add_normal(params, init, p + "ffn.W2", {h, d}, sd);
    layer.b2 = params.add(p + "ffn.b2", Tensor<Real>::zeros({d}));
    layer.ln2_g = params.add(p + "ln2.gain", ones(d));
    layer.ln2_b = params.add(p + "ln2.bias", Tensor<Real>::zeros({d}));
    layers_.push_back(std::move(layer));
  }
}

template <typename Real>
Tensor<Real> SequenceEncoder<Real>::attention(const Layer& layer, const Tensor<Real>& x,
                                              std::span<const std::uint8_t> attn_mask,
                                              const StepContext& ctx,
                                              const std::string& site) const {
  auto affine = [](const Tensor<Real>& v, const Tensor<Real>& w, const Tensor<Real>& b) {
    return ops::add(ops::matmul(v, w), b);
  };
  const Tensor<Real> q = affine(x, layer.wq, layer.bq);
  const Tensor<Real> k = affine(x, layer.wk, layer.bk);
  const Tensor<Real> v = affine(x, layer.wv, layer.bv);
  std::vector<Tensor<Real>> qs{q}, ks{k}, vs{v};
  if (heads_ > 1) {
    qs = ops::split_last_dim(q, heads_);
    ks = ops::split_last_dim(k, heads_);
    vs = ops::split_last_dim(v, heads_);
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_ / heads_));
  std::vector<Tensor<Real>> outs;
  for (std::size_t h = 0; h < heads_; ++h) {
    Tensor<Real> logits = ops::scale(ops::matmul(qs[h], ops::transpose_last_two(ks[h])), inv_sqrt);
    logits = ops::masked_fill(logits, attn_mask, kMaskedLogit);
    Tensor<Real> probs = ops::softmax_last_dim(logits);
    probs = ops::dropout(probs, dropout_, ctx.training,
                         ctx.key(site + ".attn" + std::to_string(h)));
    outs.push_back(ops::matmul(probs, vs[h]));
  }
  Tensor<Real> merged = heads_ > 1 ? ops::concat_last_dim<Real>(outs) : outs.front();
  return ops::dropout(affine(merged, layer.wo, layer.bo), dropout_, ctx.training,
                      ctx.key(site + ".attn_out"));
}

template <typename Real>
Tensor<Real> SequenceEncoder<Real>::hidden(const Tensor<Real>& s,
                                           std::span<const std::uint8_t> pad_mask,
                                           const StepContext& ctx,
                                           const std::string& site) const {
  if (s.rank() != 3 || s.last_dim() != d_) {
    throw ShapeError("encoder expects [B, L, " + std::to_string(d_) + "], got " +
                     shape_to_string(s.shape()));
  }
  const std::size_t B = s.dim(0), L = s.dim(1);
  if (pad_mask.size() != B * L) throw ShapeError("pad mask size does not match [B, L]");
  std::vector<std::uint8_t> attn_mask(B * L * L, 0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = 0; j < L; ++j)
        attn_mask[(b * L + i) * L + j] = (causal_ && j > i) || pad_mask[b * L + j];

  Tensor<Real> x = ops::layer_norm(s, ln_in_g_, ln_in_b_);
  x = ops::dropout(x, dropout_, ctx.training, ctx.key(site + ".in"));
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    const std::string lsite = site + ".l" + std::to_string(l);
    x = ops::layer_norm(ops::add(x, attention(layer, x, attn_mask, ctx, lsite)), layer.ln1_g,
                        layer.ln1_b);
    Tensor<Real> f = ops::gelu(ops::add(ops::matmul(x, layer.w1), layer.b1));
    f = ops::add(ops::matmul(f, layer.w2), layer.b2);
    f = ops::dropout(f, dropout_, ctx.training, ctx.key(lsite + ".ffn"));
    x = ops::layer_norm(ops::add(x, f), layer.ln2_g, layer.ln2_b);
  }
  return x;
}

template <typename Real>
Tensor<Real> SequenceEncoder<Real>::encode(const Tensor<Real>& s,
                                           std::span<const std::uint8_t> pad_mask,
                                           const StepContext& ctx,
                                           const std::string& site) const {
  const std::size_t B = s.dim(0), L = s.dim(1);
  for (std::size_t b = 0; b < B && b * L + L - 1 < pad_mask.size(); ++b) {
    if (pad_mask[b * L + L - 1]) {
      throw std::invalid_argument("encoder: sequence " + std::to_string(b) +
                                  " has no valid position");
    }
  }
  return ops::take_step(hidden(s, pad_mask, ctx, site), L - 1);
}

template <typename Real>
Tensor<Real> score_items(const PerModality<Real>& states, const PerModality<Real>& catalog) {
  Tensor<Real> scores;
  for (Modality m : kModalities) {
    const Tensor<Real>& h = at(states, m);
    if (!h.defined()) continue;
    const Tensor<Real>& x = at(catalog, m);
    if (!x.defined()) {
      throw std::invalid_argument("score_items: no catalog vectors for modality '" +
                                  std::string(modality_name(m)) + "'");
    }
    Tensor<Real> part = ops::matmul(h, ops::transpose_last_two(x));
    scores = scores.defined() ? ops::add(scores, part) : part;
  }
  if (!scores.defined()) throw std::invalid_argument("score_items: no active modality");
  return scores;
}

template class SequenceEncoder<float>;
template class SequenceEncoder<double>;
template Tensor<float> score_items(const PerModality<float>&, const PerModality<float>&);
template Tensor<double> score_items(const PerModality<double>&, const PerModality<double>&);

}  // namespace hm4sr
