// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#include "hm4sr/data/dataset.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

namespace hm4sr::data {

Dataset build_dataset(const InteractionLog& log, const ItemCatalog& catalog) {
  Dataset ds;
  std::set<std::string> items;
  ds.min_timestamp = INT64_MAX;
  for (const auto& [user, group] : log.by_user()) {
    for (const auto& r : group) {
      items.insert(r.item);
      ds.min_timestamp = std::min(ds.min_timestamp, r.timestamp);
    }
  }
  if (items.empty()) ds.min_timestamp = 0;
  ds.item_tokens.assign(items.begin(), items.end());
  for (std::size_t i = 0; i < ds.item_tokens.size(); ++i) {
    ds.item_index[ds.item_tokens[i]] = static_cast<std::int32_t>(i + 1);
  }
  ds.n_categories = catalog.n_categories;
  ds.item_categories.resize(ds.item_tokens.size() + 1);
  for (std::size_t i = 0; i < ds.item_tokens.size(); ++i) {
    auto it = catalog.categories.find(ds.item_tokens[i]);
    if (it != catalog.categories.end()) ds.item_categories[i + 1] = it->second;
  }
  for (const auto& [user, group] : log.by_user()) {
    ds.user_tokens.push_back(user);
    auto& seq = ds.user_items.emplace_back();
    auto& times = ds.user_times.emplace_back();
    for (const auto& r : group) {
      seq.push_back(ds.item_index.at(r.item));
      times.push_back(r.timestamp);
    }
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto log = load_interactions(dir / DataDirLayout::interactions);
  ItemCatalog catalog;
  if (std::filesystem::exists(dir / DataDirLayout::items)) {
    catalog = load_items(dir / DataDirLayout::items);
  }
  return build_dataset(log, catalog);
}

namespace {

Example prefix_example(const Dataset& ds, std::size_t user, std::size_t target_pos,
                       std::size_t max_len) {
  Example ex;
  ex.user = static_cast<std::int32_t>(user);
  const std::size_t begin = target_pos > max_len ? target_pos - max_len : 0;
  const auto& items = ds.user_items[user];
  const auto& times = ds.user_times[user];
  ex.items.assign(items.begin() + begin, items.begin() + target_pos);
  ex.times.assign(times.begin() + begin, times.begin() + target_pos);
  ex.target = items[target_pos];
  return ex;
}

}  // namespace

Splits split_leave_one_out(const Dataset& ds, std::size_t max_len, TrainTargets mode) {
  if (max_len == 0) throw std::invalid_argument("split_leave_one_out: L must be >= 1");
  Splits splits;
  for (std::size_t u = 0; u < ds.n_users(); ++u) {
    const std::size_t n = ds.user_items[u].size();
    if (n < 3) {
      throw DataError("split_leave_one_out: user '" + ds.user_tokens[u] + "' has " +
                      std::to_string(n) + " interactions, need >= 3");
    }
    // Training targets are positions 1 .. n-3 (each needs a non-empty prefix).
    if (mode == TrainTargets::per_target) {
      for (std::size_t pos = 1; pos + 2 < n; ++pos)
        splits.train.push_back(prefix_example(ds, u, pos, max_len));
    } else if (n >= 4) {
      splits.train.push_back(prefix_example(ds, u, n - 3, max_len));
    }
    splits.valid.push_back(prefix_example(ds, u, n - 2, max_len));
    splits.test.push_back(prefix_example(ds, u, n - 1, max_len));
  }
  return splits;
}

SequenceBatch make_batch(std::span<const Example> examples, const Dataset& ds,
                         std::size_t max_len) {
  SequenceBatch batch;
  const std::size_t B = examples.size();
  const std::size_t L = max_len;
  const std::size_t C = static_cast<std::size_t>(ds.n_categories);
  batch.batch_size = B;
  batch.max_len = L;
  batch.n_categories = C;
  batch.item_indices.assign(B * L, 0);
  batch.timestamps.assign(B * L, 0);
  batch.intervals.assign(B * L, 0);
  batch.valid_lengths.assign(B, 0);
  batch.targets.assign(B, 0);
  batch.target_categories.assign(B * L * C, 0);
  batch.users.assign(B, 0);
  for (std::size_t b = 0; b < B; ++b) {
    const Example& ex = examples[b];
    if (ex.items.empty()) throw DataError("make_batch: example with empty prefix");
    const std::size_t n = std::min(ex.items.size(), L);
    const std::size_t skip = ex.items.size() - n;
    const std::size_t pad = L - n;
    batch.valid_lengths[b] = static_cast<std::int32_t>(n);
    batch.targets[b] = ex.target;
    batch.users[b] = ex.user;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t slot = b * L + pad + i;
      const std::int32_t item = ex.items[skip + i];
      batch.item_indices[slot] = item;
      batch.timestamps[slot] = ex.times[skip + i];
      batch.intervals[slot] = i == 0 ? 0 : ex.times[skip + i] - ex.times[skip + i - 1];
      for (int c : ds.item_categories.at(item)) {
        batch.target_categories[slot * C + static_cast<std::size_t>(c)] = 1;
      }
    }
  }
  return batch;
}

std::vector<SequenceBatch> make_batches(std::span<const Example> examples,
                                        const Dataset& ds, std::size_t batch_size,
                                        std::size_t max_len,
                                        std::optional<std::uint64_t> shuffle_seed) {
  if (batch_size == 0) throw std::invalid_argument("make_batches: batch_size must be >= 1");
  if (max_len == 0) throw std::invalid_argument("make_batches: L must be >= 1");
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  if (shuffle_seed) {
    std::mt19937_64 rng(*shuffle_seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<SequenceBatch> batches;
  std::vector<Example> chunk;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    chunk.clear();
    const std::size_t end = std::min(order.size(), start + batch_size);
    for (std::size_t i = start; i < end; ++i) chunk.push_back(examples[order[i]]);
    batches.push_back(make_batch(chunk, ds, max_len));
  }
  return batches;
}

}  // namespace hm4sr::data
