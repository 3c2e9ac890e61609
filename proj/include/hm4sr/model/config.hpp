// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace hm4sr {

enum class TimeVariant { both, interval_only, absolute_only, cos_interval };
enum class ScoreSource { initial, interactive };
enum class Precision { f32, f64 };

TimeVariant parse_time_variant(std::string_view text);
std::string_view to_string(TimeVariant v);

struct ModelConfig {
  std::size_t d = 64;
  std::size_t max_len = 50;  // L
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  double dropout = 0.2;
  bool causal = true;

  std::size_t k1 = 4;
  std::size_t k2 = 4;
  double mu = 100.0;
  double freq = 10000.0;
  std::size_t p_max = 2200;
  TimeVariant time_variant = TimeVariant::both;
  double alpha_init = 0.1;
  ScoreSource score_with = ScoreSource::initial;

  double tau = 0.2;
  double beta = 0.3;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda3 = 0.5;

  bool enable_imoe = true;
  bool enable_tmoe = true;
  bool enable_cp = true;
  bool enable_idcl = true;
  bool enable_pcl = true;
  bool use_text = true;
  bool use_image = true;

  double init_std = 0.02;
};

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 256;
  std::size_t epochs = 50;
  std::size_t patience = 10;
  std::uint64_t seed = 42;
  double grad_clip = 5.0;  // 0 disables
  bool per_target = true;
  std::size_t eval_threads = 1;
  std::size_t eval_batch_size = 256;
  Precision precision = Precision::f32;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

/// Applies one "key = value" assignment; unknown keys are rejected.
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);

/// Parses flat UTF-8 "key = value" lines. Blank lines and lines starting
/// with '#' are ignored.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);
std::string config_to_text(const RunConfig& config);

}  // namespace hm4sr
