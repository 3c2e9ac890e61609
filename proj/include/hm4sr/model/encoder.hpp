// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hm4sr/model/common.hpp"

namespace hm4sr {

/// Post-norm Transformer over one modality stream with causal and padding
/// masks. Reads out the hidden state at the last slot.
template <typename Real>
class SequenceEncoder {
 public:
  /// Parameters are registered as "enc.<name>.*".
  SequenceEncoder(ParamStore<Real>& params, const ModelConfig& config, const std::string& name,
                  const Initializer& init);

  /// s[B, L, d] -> [B, d]. `pad_mask` holds B*L flags, 1 at padding slots.
  /// `site` names the dropout sites; distinct views of one batch must use
  /// distinct sites.
  Tensor<Real> encode(const Tensor<Real>& s, std::span<const std::uint8_t> pad_mask,
                      const StepContext& ctx, const std::string& site) const;

  /// Full hidden sequence [B, L, d], for tests of masking.
  Tensor<Real> hidden(const Tensor<Real>& s, std::span<const std::uint8_t> pad_mask,
                      const StepContext& ctx, const std::string& site) const;

 private:
  struct Layer {
    Tensor<Real> wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor<Real> ln1_g, ln1_b;
    Tensor<Real> w1, b1, w2, b2;
    Tensor<Real> ln2_g, ln2_b;
  };

  Tensor<Real> attention(const Layer& layer, const Tensor<Real>& x,
                         std::span<const std::uint8_t> attn_mask, const StepContext& ctx,
                         const std::string& site) const;

  std::size_t d_, heads_;
  double dropout_;
  bool causal_;
  Tensor<Real> ln_in_g_, ln_in_b_;
  std::vector<Layer> layers_;
};

/// scores[b, v] = sum_m H_m[b] . x_m[v] over active modalities.
template <typename Real>
Tensor<Real> score_items(const PerModality<Real>& states, const PerModality<Real>& catalog);

}  // namespace hm4sr
