// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace hm4sr::data {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Interaction {
  std::string user;
  std::string item;
  std::int64_t timestamp = 0;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

/// Deduplicated interactions grouped per user; every group is sorted by
/// (timestamp, item) ascending.
class InteractionLog {
 public:
  InteractionLog() = default;
  static InteractionLog from_records(std::vector<Interaction> records);

  const std::map<std::string, std::vector<Interaction>>& by_user() const noexcept {
    return by_user_;
  }
  std::size_t n_users() const noexcept { return by_user_.size(); }
  std::size_t n_items() const;
  std::size_t size() const noexcept { return n_actions_; }
  bool empty() const noexcept { return n_actions_ == 0; }
  std::vector<Interaction> flatten() const;

  friend bool operator==(const InteractionLog&, const InteractionLog&) = default;

 private:
  std::map<std::string, std::vector<Interaction>> by_user_;
  std::size_t n_actions_ = 0;
};

/// Parses "user<TAB>item<TAB>timestamp" lines. Errors name the line number.
InteractionLog load_interactions(const std::filesystem::path& path);
void write_interactions(const std::filesystem::path& path, const InteractionLog& log);

/// Maximal sub-log in which every user and every item has >= k interactions.
InteractionLog kcore_filter(const InteractionLog& log, int k);

struct DatasetStats {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::size_t n_actions = 0;
  double avg_actions_per_user = 0.0;
  double avg_actions_per_item = 0.0;
  double sparsity = 0.0;
  bool empty = false;
};

DatasetStats compute_stats(std::size_t n_users, std::size_t n_items,
                           std::size_t n_actions);
DatasetStats compute_stats(const InteractionLog& log);
std::string stats_to_json(const DatasetStats& stats);

/// Counts interactions in `bins` equal-width slices of [min_ts, max_ts]; the
/// last slice is closed. When every timestamp is equal, bin 0 holds all.
std::vector<std::size_t> time_histogram(const InteractionLog& log, int bins);

/// Item categories from "item<TAB>cat0,cat1,..." lines.
struct ItemCatalog {
  std::map<std::string, std::vector<int>> categories;
  int n_categories = 0;  // 1 + largest id seen
};

ItemCatalog load_items(const std::filesystem::path& path);
void write_items(const std::filesystem::path& path, const ItemCatalog& catalog);

}  // namespace hm4sr::data
