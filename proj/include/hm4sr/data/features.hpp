// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0
//
// HMFT per-item feature files:
//
//   HMFT\t1\t<n_rows>\t<dim>\n
//   <item_id>\t<offset>\n            (n_rows lines)
//   <n_rows * dim little-endian float32, row-major, rows in offset order>
//
// The loader rejects anything that deviates, including trailing bytes.

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace hm4sr::data {

class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t rows() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::vector<float>& values() const noexcept { return values_; }

  void append(const std::string& item_id, std::span<const float> row);
  bool contains(const std::string& item_id) const { return index_.count(item_id) > 0; }
  /// Row of `item_id`; throws if the item has no row.
  std::span<const float> row(const std::string& item_id) const;
  std::span<const float> row_at(std::size_t offset) const;

  friend bool operator==(const FeatureMatrix& a, const FeatureMatrix& b) {
    return a.dim_ == b.dim_ && a.ids_ == b.ids_ && a.values_ == b.values_;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

FeatureMatrix read_hmft(const std::filesystem::path& path);
void write_hmft(const std::filesystem::path& path, const FeatureMatrix& features);

}  // namespace hm4sr::data
