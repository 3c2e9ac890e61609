// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>

#include "hm4sr/data/features.hpp"
#include "hm4sr/data/interactions.hpp"

namespace hm4sr::data {

struct SynthConfig {
  std::size_t n_users = 50;
  std::size_t n_items = 30;
  std::size_t d_txt = 16;
  std::size_t d_img = 16;
  std::size_t n_categories = 4;
  bool drift = false;
  std::uint64_t seed = 7;
  std::size_t min_len = 8;  // interactions per user
  std::size_t max_len = 12;
  /// Every item is topped up to at least this many interactions.
  std::size_t min_item_degree = 5;
  std::int64_t start_time = 1'500'000'000;
  std::int64_t span_days = 720;
};

struct SynthData {
  InteractionLog log;
  ItemCatalog catalog;
  FeatureMatrix txt;
  FeatureMatrix img;
};

/// Synthetic catalog and interaction history. Items carry one primary
/// category (balanced round-robin) and sometimes a secondary one; text and
/// image features are noisy projections of a category-driven latent vector.
/// Each user has an early interest vector of their own and a late one built
/// around a category shared by all users. With drift on, the preference moves
/// linearly from the first to the second across the global time span,
/// otherwise it stays at the early vector. Fully determined by the seed.
SynthData synth_generate(const SynthConfig& config);

/// Writes interactions.tsv, items.tsv, both feature files and stats.json.
void write_synth(const SynthData& data, const std::filesystem::path& dir);

}  // namespace hm4sr::data
