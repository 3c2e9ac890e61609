// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "hm4sr/core/param_store.hpp"

namespace hm4sr {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction over every tensor of a ParamStore.
template <typename Real>
class Adam {
 public:
  Adam(ParamStore<Real>& params, AdamOptions options);

  /// Applies one update from the gradients currently held by the store.
  void step();

  std::uint64_t steps() const noexcept { return steps_; }
  const AdamOptions& options() const noexcept { return options_; }

 private:
  ParamStore<Real>& params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t steps_ = 0;
};

template <typename Real>
double global_grad_norm(const ParamStore<Real>& params);

/// Rescales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping. max_norm <= 0 disables clipping.
template <typename Real>
double clip_grad_norm(ParamStore<Real>& params, double max_norm);

}  // namespace hm4sr
