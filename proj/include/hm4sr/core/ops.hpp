// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable primitives. Every op returns a fresh tensor and, when a tape
// is active and some input requires a gradient, records its backward rule.
//
// Broadcasting is limited to a scalar times a tensor and a trailing vector
// added to (or multiplied into) every row; every other pair of shapes must
// match exactly.

#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "hm4sr/core/tensor.hpp"

namespace hm4sr::ops {

enum class Primitive {
  matmul,
  add,
  subtract,
  scale,
  elementwise_mul,
  concat_last_dim,
  split_last_dim,
  softmax_last_dim,
  log_softmax_last_dim,
  layer_norm,
  dropout,
  cos,
  exp,
  log,
  gelu,
  softplus,
  embedding_lookup,
  cosine_similarity,
  masked_fill,
  transpose_last_two,
  take_step,
  expert_mix,
  mean,
  sum,
};

Primitive primitive_from_name(std::string_view name);
std::string_view primitive_name(Primitive op);

struct PrimitiveAttrs {
  double factor = 1.0;                // scale with a constant factor
  std::size_t parts = 1;              // split_last_dim
  double rate = 0.0;                  // dropout
  bool training = false;              // dropout
  std::uint64_t dropout_key = 0;      // dropout
  double epsilon = 1e-12;             // layer_norm, cosine_similarity
  std::vector<std::int64_t> indices;  // embedding_lookup
  Shape index_shape;                  // embedding_lookup
  std::int64_t padding_index = -1;    // embedding_lookup
  std::vector<std::uint8_t> mask;     // masked_fill
  double fill = 0.0;                  // masked_fill
  std::size_t position = 0;           // take_step
};

/// Generic entry point. Inputs follow the argument order of the typed
/// functions below; split_last_dim returns `parts` tensors, every other op
/// returns one.
template <typename Real>
std::vector<Tensor<Real>> apply_primitive(Primitive op,
                                          std::span<const Tensor<Real>> inputs,
                                          const PrimitiveAttrs& attrs);

/// a[..., n, k] x b[..., k, m]. `b` may also be a plain k x m matrix shared
/// across the leading batch dimensions of `a`.
template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);

/// Same shape, or `b` a vector matching the last dim of `a` (row-wise bias).
template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real>
Tensor<Real> subtract(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b);

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& x, double factor);
/// `factor` is a one-element tensor and may be trainable.
template <typename Real>
Tensor<Real> scale(const Tensor<Real>& x, const Tensor<Real>& factor);

template <typename Real>
Tensor<Real> concat_last_dim(std::span<const Tensor<Real>> parts);
template <typename Real>
std::vector<Tensor<Real>> split_last_dim(const Tensor<Real>& x,
                                         std::size_t parts);

template <typename Real>
Tensor<Real> softmax_last_dim(const Tensor<Real>& x);
template <typename Real>
Tensor<Real> log_softmax_last_dim(const Tensor<Real>& x);

template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gain,
                        const Tensor<Real>& bias, double epsilon = 1e-12);

/// Inverted dropout. The mask for entry i is a function of (key, i) only.
template <typename Real>
Tensor<Real> dropout(const Tensor<Real>& x, double rate, bool training,
                     std::uint64_t key);

template <typename Real>
Tensor<Real> cos(const Tensor<Real>& x);
template <typename Real>
Tensor<Real> exp(const Tensor<Real>& x);
template <typename Real>
Tensor<Real> log(const Tensor<Real>& x);
template <typename Real>
Tensor<Real> gelu(const Tensor<Real>& x);
/// log(1 + e^x), evaluated without overflow.
template <typename Real>
Tensor<Real> softplus(const Tensor<Real>& x);

/// Rows of `table` gathered by `indices` (shape index_shape); the result has
/// shape index_shape + [table.last_dim()]. Rows equal to padding_index never
/// receive gradient.
template <typename Real>
Tensor<Real> embedding_lookup(const Tensor<Real>& table,
                              std::span<const std::int64_t> indices,
                              const Shape& index_shape,
                              std::int64_t padding_index = -1);

/// Pairwise cosine similarity between the rows of a[n, d] and b[m, d]. Row
/// norms are floored at epsilon.
template <typename Real>
Tensor<Real> cosine_similarity(const Tensor<Real>& a, const Tensor<Real>& b,
                               double epsilon = 1e-12);

template <typename Real>
Tensor<Real> masked_fill(const Tensor<Real>& x,
                         std::span<const std::uint8_t> mask, double value);

template <typename Real>
Tensor<Real> transpose_last_two(const Tensor<Real>& x);

/// x[..., L, d] -> x[..., position, d]; drops the second-to-last axis.
template <typename Real>
Tensor<Real> take_step(const Tensor<Real>& x, std::size_t position);

/// out[..., j] = sum_i gates[..., i] * outputs[..., i*d + j].
template <typename Real>
Tensor<Real> expert_mix(const Tensor<Real>& gates, const Tensor<Real>& outputs);

template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x);
template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x);

}  // namespace hm4sr::ops
