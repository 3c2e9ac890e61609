// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#include "hm4sr/train/experiment.hpp"

#include <stdexcept>
#include <string>

namespace hm4sr {

void apply_variant(ModelConfig& c, std::string_view variant) {
  if (variant == "full") return;
  if (variant == "-IMoE") {
    c.enable_imoe = false;
  } else if (variant == "-TMoE") {
    c.enable_tmoe = false;
    c.enable_pcl = false;
    c.lambda3 = 0.0;
  } else if (variant == "-CP") {
    c.enable_cp = false;
    c.lambda1 = 0.0;
  } else if (variant == "-IDCL") {
    c.enable_idcl = false;
    c.lambda2 = 0.0;
  } else if (variant == "-PCL") {
    c.enable_pcl = false;
    c.lambda3 = 0.0;
  } else if (variant == "-Text") {
    c.use_text = false;
  } else if (variant == "-Image") {
    c.use_image = false;
  } else {
    throw std::invalid_argument("unknown variant '" + std::string(variant) + "'");
  }
}

LoadedData load_data_dir(const std::filesystem::path& dir, const ModelConfig& config) {
  LoadedData out{data::load_dataset(dir), std::nullopt, std::nullopt};
  if (config.use_text) out.txt = data::read_hmft(dir / data::DataDirLayout::txt_features);
  if (config.use_image) out.img = data::read_hmft(dir / data::DataDirLayout::img_features);
  return out;
}

ModelDims dims_of(const data::Dataset& dataset) {
  return ModelDims{dataset.n_items(), static_cast<std::size_t>(dataset.n_categories),
                   dataset.min_timestamp};
}

template <typename Real>
std::unique_ptr<Model<Real>> build_model(const RunConfig& config, const LoadedData& data) {
  config.validate();
  const auto* txt = config.model.use_text && data.txt ? &*data.txt : nullptr;
  const auto* img = config.model.use_image && data.img ? &*data.img : nullptr;
  auto features = FeatureStore<Real>::from_matrices(data.dataset, txt, img);
  return std::make_unique<Model<Real>>(config.model, dims_of(data.dataset), std::move(features),
                                       config.train.seed);
}

namespace {

template <typename Real>
ExperimentResult run_typed(const RunConfig& config, const LoadedData& data,
                           const TrainHooks& hooks) {
  auto model = build_model<Real>(config, data);
  const auto mode = config.train.per_target ? data::TrainTargets::per_target
                                            : data::TrainTargets::last_only;
  const auto splits = data::split_leave_one_out(data.dataset, config.model.max_len, mode);
  ExperimentResult out;
  out.train = train(*model, data.dataset, splits, config.train, hooks);
  out.test = evaluate(*model, data.dataset, splits.test,
                      EvalOptions{config.train.eval_batch_size, config.train.eval_threads});
  return out;
}

}  // namespace

ExperimentResult run_experiment(const RunConfig& config, const LoadedData& data,
                                const TrainHooks& hooks) {
  return config.train.precision == Precision::f64 ? run_typed<double>(config, data, hooks)
                                                  : run_typed<float>(config, data, hooks);
}

template std::unique_ptr<Model<float>> build_model(const RunConfig&, const LoadedData&);
template std::unique_ptr<Model<double>> build_model(const RunConfig&, const LoadedData&);

}  // namespace hm4sr
