// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0
//
// Glue between prepared data directories, configs and the trainer.

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string_view>

#include "hm4sr/data/dataset.hpp"
#include "hm4sr/data/features.hpp"
#include "hm4sr/train/trainer.hpp"

namespace hm4sr {

/// Names accepted by apply_variant.
inline constexpr std::string_view kVariants[] = {"full", "-IMoE",  "-TMoE", "-CP",
                                                 "-IDCL", "-PCL", "-Text", "-Image"};

/// Rewrites `config` for an ablation variant. -TMoE also drops the placeholder
/// term; -Text/-Image remove the modality from representation, encoding,
/// scoring and placeholder learning. Unknown names throw.
void apply_variant(ModelConfig& config, std::string_view variant);

/// Dataset plus the feature files the config needs; unused files are never
/// opened.
struct LoadedData {
  data::Dataset dataset;
  std::optional<data::FeatureMatrix> txt;
  std::optional<data::FeatureMatrix> img;
};

LoadedData load_data_dir(const std::filesystem::path& dir, const ModelConfig& config);

ModelDims dims_of(const data::Dataset& dataset);

template <typename Real>
std::unique_ptr<Model<Real>> build_model(const RunConfig& config, const LoadedData& data);

struct ExperimentResult {
  TrainResult train;
  RankingMetrics test;
};

/// Splits, trains and evaluates on the test split at the configured precision.
ExperimentResult run_experiment(const RunConfig& config, const LoadedData& data,
                                const TrainHooks& hooks = {});

}  // namespace hm4sr
