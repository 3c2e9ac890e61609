// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#include "hm4sr/data/features.hpp"

#include <charconv>
#include <fstream>

#include "hm4sr/core/binary_io.hpp"
#include "hm4sr/data/interactions.hpp"

namespace hm4sr::data {

namespace {

bool parse_size(const std::string& text, std::size_t& out) {
  if (text.empty()) return false;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

void FeatureMatrix::append(const std::string& item_id, std::span<const float> row) {
  if (row.size() != dim_) {
    throw DataError("feature row for '" + item_id + "' has width " +
                    std::to_string(row.size()) + ", expected " + std::to_string(dim_));
  }
  if (!index_.emplace(item_id, ids_.size()).second) {
    throw DataError("duplicate feature row for item '" + item_id + "'");
  }
  ids_.push_back(item_id);
  values_.insert(values_.end(), row.begin(), row.end());
}

std::span<const float> FeatureMatrix::row(const std::string& item_id) const {
  auto it = index_.find(item_id);
  if (it == index_.end()) throw DataError("no feature row for item '" + item_id + "'");
  return row_at(it->second);
}

std::span<const float> FeatureMatrix::row_at(std::size_t offset) const {
  return std::span<const float>(values_).subspan(offset * dim_, dim_);
}

FeatureMatrix read_hmft(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature file " + path.string());
  const std::string where = path.string();
  std::string line;
  if (!std::getline(in, line)) throw DataError(where + ": missing HMFT header");
  std::vector<std::string> header;
  for (std::size_t start = 0;;) {
    const auto tab = line.find('\t', start);
    header.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  std::size_t n_rows = 0, dim = 0;
  if (header.size() != 4 || header[0] != "HMFT" || header[1] != "1" ||
      !parse_size(header[2], n_rows) || !parse_size(header[3], dim) || dim == 0) {
    throw DataError(where + ": bad HMFT header '" + line + "'");
  }
  std::vector<std::string> id_at(n_rows);
  std::vector<char> seen(n_rows, 0);
  for (std::size_t i = 0; i < n_rows; ++i) {
    if (!std::getline(in, line)) {
      throw DataError(where + ": expected " + std::to_string(n_rows) +
                      " offset lines, found " + std::to_string(i));
    }
    const auto tab = line.find('\t');
    std::size_t offset = 0;
    if (tab == std::string::npos || tab == 0 ||
        !parse_size(line.substr(tab + 1), offset) || offset >= n_rows || seen[offset]) {
      throw DataError(where + ": bad offset line " + std::to_string(i + 2) + " '" +
                      line + "'");
    }
    seen[offset] = 1;
    id_at[offset] = line.substr(0, tab);
  }
  std::vector<float> values(n_rows * dim);
  if (!read_le<float>(in, values)) {
    throw DataError(where + ": binary section shorter than " +
                    std::to_string(n_rows * dim * sizeof(float)) + " bytes");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw DataError(where + ": trailing bytes after binary section");
  }
  FeatureMatrix features(dim);
  for (std::size_t r = 0; r < n_rows; ++r) {
    features.append(id_at[r], std::span<const float>(values).subspan(r * dim, dim));
  }
  return features;
}

void write_hmft(const std::filesystem::path& path, const FeatureMatrix& features) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "HMFT\t1\t" << features.rows() << '\t' << features.dim() << '\n';
  for (std::size_t r = 0; r < features.rows(); ++r) {
    out << features.ids()[r] << '\t' << r << '\n';
  }
  write_le<float>(out, features.values());
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace hm4sr::data
