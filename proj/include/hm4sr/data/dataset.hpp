// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hm4sr/data/interactions.hpp"

namespace hm4sr::data {

/// File names inside a prepared data directory.
struct DataDirLayout {
  static constexpr const char* interactions = "interactions.tsv";
  static constexpr const char* items = "items.tsv";
  static constexpr const char* txt_features = "txt_features.hmft";
  static constexpr const char* img_features = "img_features.hmft";
  static constexpr const char* stats = "stats.json";
};

/// Interaction log re-keyed to contiguous indices. Items are numbered
/// 1..n_items in token order; 0 is the padding index.
struct Dataset {
  std::vector<std::string> item_tokens;  // item_tokens[i - 1] is item i
  std::unordered_map<std::string, std::int32_t> item_index;
  std::vector<std::string> user_tokens;
  std::vector<std::vector<std::int32_t>> user_items;  // chronological
  std::vector<std::vector<std::int64_t>> user_times;
  std::vector<std::vector<int>> item_categories;  // indexed by item, [0] empty
  int n_categories = 0;
  std::int64_t min_timestamp = 0;

  std::size_t n_items() const noexcept { return item_tokens.size(); }
  std::size_t n_users() const noexcept { return user_tokens.size(); }
  const std::string& token_of(std::int32_t item) const { return item_tokens.at(item - 1); }
};

Dataset build_dataset(const InteractionLog& log, const ItemCatalog& catalog);

/// Reads interactions.tsv and items.tsv from a prepared directory.
Dataset load_dataset(const std::filesystem::path& dir);

/// One (prefix, next item) pair. The prefix holds at most L items.
struct Example {
  std::int32_t user = 0;
  std::vector<std::int32_t> items;
  std::vector<std::int64_t> times;
  std::int32_t target = 0;
};

enum class TrainTargets { per_target, last_only };

struct Splits {
  std::vector<Example> train;
  std::vector<Example> valid;
  std::vector<Example> test;
};

/// Last item of every user is the test target, the one before it the
/// validation target, earlier items train targets. Users with fewer than
/// three interactions are rejected.
Splits split_leave_one_out(const Dataset& dataset, std::size_t max_len,
                           TrainTargets mode = TrainTargets::per_target);

/// Left-padded batch: real items occupy the rightmost valid_length slots.
struct SequenceBatch {
  std::size_t batch_size = 0;
  std::size_t max_len = 0;
  std::size_t n_categories = 0;
  std::vector<std::int64_t> item_indices;      // B*L, 0 = pad
  std::vector<std::int64_t> timestamps;        // B*L, raw seconds, 0 at pads
  std::vector<std::int64_t> intervals;         // B*L, seconds
  std::vector<std::int32_t> valid_lengths;     // B
  std::vector<std::int64_t> targets;           // B
  std::vector<std::uint8_t> target_categories; // B*L*C multi-hot
  std::vector<std::int32_t> users;             // B

  bool is_pad(std::size_t b, std::size_t i) const {
    return i < max_len - static_cast<std::size_t>(valid_lengths[b]);
  }
};

SequenceBatch make_batch(std::span<const Example> examples, const Dataset& dataset,
                         std::size_t max_len);

/// Splits `examples` into batches of `batch_size` (last one may be short).
/// With a seed, the example order is a deterministic shuffle of the input.
std::vector<SequenceBatch> make_batches(std::span<const Example> examples,
                                        const Dataset& dataset, std::size_t batch_size,
                                        std::size_t max_len,
                                        std::optional<std::uint64_t> shuffle_seed);

}  // namespace hm4sr::data
