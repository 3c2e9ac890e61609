// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference checks of every trainable tensor on small 64-bit
// instances of each module and of the whole model.

#pragma once

#include <cstdint>
#include <string_view>

#include "hm4sr/core/gradcheck.hpp"
#include "hm4sr/data/dataset.hpp"
#include "hm4sr/model/model.hpp"

namespace hm4sr {

inline constexpr std::string_view kGradcheckModules[] = {
    "item", "imoe", "tmoe", "encoder", "objectives", "model"};

/// Tiny full-model setup: d=8, L=6, 20 items, 3 categories, k1=k2=2, one
/// layer, one head, dropout off.
struct TinySetup {
  data::Dataset dataset;
  data::SequenceBatch batch;
  RunConfig config;
  data::FeatureMatrix txt, img;
};

TinySetup tiny_setup(std::uint64_t seed = 1);

/// Unknown module names throw std::invalid_argument.
GradCheckReport run_gradcheck(std::string_view module, std::uint64_t seed = 1,
                              const GradCheckOptions& options = {});

}  // namespace hm4sr
