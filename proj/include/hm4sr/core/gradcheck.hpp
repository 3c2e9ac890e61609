// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hm4sr/core/param_store.hpp"

namespace hm4sr {

struct GradCheckEntry {
  std::string name;
  std::size_t size = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> tensors;
  double tolerance = 0.0;
  bool passed = false;
  double worst() const;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor for the relative error, so rounding noise on
  /// near-zero gradients is not divided by ~0.
  double denominator_floor = 1e-5;
};

/// Compares the tape gradient of `loss_fn` with central differences
/// (f(x+h) - f(x-h)) / 2h for every entry of every tensor in `params`.
/// The error per entry is |a - n| / max(|a|, |n|, floor).
/// Throws std::runtime_error when two evaluations at the same point disagree.
template <typename Real>
GradCheckReport grad_check(const std::function<Tensor<Real>()>& loss_fn,
                           std::span<NamedTensor<Real>> params,
                           const GradCheckOptions& options = {});

}  // namespace hm4sr
