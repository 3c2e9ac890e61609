// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#include "hm4sr/data/interactions.hpp"

#include <algorithm>
#include <charconv>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace hm4sr::data {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

bool parse_int64(const std::string& text, std::int64_t& out) {
  if (text.empty()) return false;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

InteractionLog InteractionLog::from_records(std::vector<Interaction> records) {
  InteractionLog log;
  for (auto& r : records) log.by_user_[r.user].push_back(std::move(r));
  for (auto& [user, group] : log.by_user_) {
    std::sort(group.begin(), group.end(), [](const auto& a, const auto& b) {
      return std::tie(a.timestamp, a.item) < std::tie(b.timestamp, b.item);
    });
    group.erase(std::unique(group.begin(), group.end()), group.end());
    log.n_actions_ += group.size();
  }
  return log;
}

std::size_t InteractionLog::n_items() const {
  std::set<std::string_view> items;
  for (const auto& [user, group] : by_user_)
    for (const auto& r : group) items.insert(r.item);
  return items.size();
}

std::vector<Interaction> InteractionLog::flatten() const {
  std::vector<Interaction> out;
  out.reserve(n_actions_);
  for (const auto& [user, group] : by_user_)
    out.insert(out.end(), group.begin(), group.end());
  return out;
}

InteractionLog load_interactions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open interactions file " + path.string());
  std::vector<Interaction> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(std::move(line));
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty()) {
      throw DataError(where + ": expected user<TAB>item<TAB>timestamp");
    }
    Interaction r{fields[0], fields[1], 0};
    if (!parse_int64(fields[2], r.timestamp)) {
      throw DataError(where + ": bad timestamp '" + fields[2] + "'");
    }
    if (r.timestamp < 0) throw DataError(where + ": negative timestamp");
    records.push_back(std::move(r));
  }
  return InteractionLog::from_records(std::move(records));
}

void write_interactions(const std::filesystem::path& path, const InteractionLog& log) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : log.flatten())
    out << r.user << '\t' << r.item << '\t' << r.timestamp << '\n';
}

InteractionLog kcore_filter(const InteractionLog& log, int k) {
  if (k < 1) throw std::invalid_argument("kcore_filter: k must be >= 1");
  const auto records = log.flatten();
  std::unordered_map<std::string, std::size_t> user_ids, item_ids;
  std::vector<std::size_t> rec_user(records.size()), rec_item(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    rec_user[i] = user_ids.try_emplace(records[i].user, user_ids.size()).first->second;
    rec_item[i] = item_ids.try_emplace(records[i].item, item_ids.size()).first->second;
  }
  // Bipartite peeling: vertices 0..U-1 are users, U.. are items.
  const std::size_t n_users = user_ids.size();
  const std::size_t n_vertices = n_users + item_ids.size();
  std::vector<std::vector<std::size_t>> incident(n_vertices);
  std::vector<std::size_t> degree(n_vertices, 0);
  for (std::size_t i = 0; i < records.size(); ++i) {
    incident[rec_user[i]].push_back(i);
    incident[n_users + rec_item[i]].push_back(i);
    ++degree[rec_user[i]];
    ++degree[n_users + rec_item[i]];
  }
  const auto threshold = static_cast<std::size_t>(k);
  std::vector<char> vertex_alive(n_vertices, 1), record_alive(records.size(), 1);
  std::deque<std::size_t> queue;
  for (std::size_t v = 0; v < n_vertices; ++v) {
    if (degree[v] < threshold) {
      vertex_alive[v] = 0;
      queue.push_back(v);
    }
  }
  while (!queue.empty()) {
    const std::size_t v = queue.front();
    queue.pop_front();
    for (std::size_t r : incident[v]) {
      if (!record_alive[r]) continue;
      record_alive[r] = 0;
      const std::size_t other = v < n_users ? n_users + rec_item[r] : rec_user[r];
      if (vertex_alive[other] && --degree[other] < threshold) {
        vertex_alive[other] = 0;
        queue.push_back(other);
      }
    }
  }
  std::vector<Interaction> kept;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (record_alive[i]) kept.push_back(records[i]);
  return InteractionLog::from_records(std::move(kept));
}

DatasetStats compute_stats(std::size_t n_users, std::size_t n_items,
                           std::size_t n_actions) {
  DatasetStats s;
  s.n_users = n_users;
  s.n_items = n_items;
  s.n_actions = n_actions;
  s.empty = n_actions == 0;
  if (n_users) s.avg_actions_per_user = static_cast<double>(n_actions) / n_users;
  if (n_items) s.avg_actions_per_item = static_cast<double>(n_actions) / n_items;
  if (n_users && n_items) {
    s.sparsity = 1.0 - static_cast<double>(n_actions) /
                           (static_cast<double>(n_users) * static_cast<double>(n_items));
  }
  return s;
}

DatasetStats compute_stats(const InteractionLog& log) {
  return compute_stats(log.n_users(), log.n_items(), log.size());
}

std::string stats_to_json(const DatasetStats& stats) {
  nlohmann::ordered_json j;
  j["n_users"] = stats.n_users;
  j["n_items"] = stats.n_items;
  j["n_actions"] = stats.n_actions;
  j["avg_actions_per_user"] = stats.avg_actions_per_user;
  j["avg_actions_per_item"] = stats.avg_actions_per_item;
  j["sparsity"] = stats.sparsity;
  j["empty"] = stats.empty;
  return j.dump(2);
}

std::vector<std::size_t> time_histogram(const InteractionLog& log, int bins) {
  if (bins < 1) throw std::invalid_argument("time_histogram: bins must be >= 1");
  if (log.empty()) throw std::invalid_argument("time_histogram: empty log");
  std::int64_t lo = INT64_MAX, hi = INT64_MIN;
  for (const auto& [user, group] : log.by_user()) {
    for (const auto& r : group) {
      lo = std::min(lo, r.timestamp);
      hi = std::max(hi, r.timestamp);
    }
  }
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
  const double span = static_cast<double>(hi - lo);
  for (const auto& [user, group] : log.by_user()) {
    for (const auto& r : group) {
      std::size_t b = 0;
      if (span > 0) {
        const double pos = static_cast<double>(r.timestamp - lo) / span * bins;
        b = std::min(static_cast<std::size_t>(pos), counts.size() - 1);
      }
      ++counts[b];
    }
  }
  return counts;
}

ItemCatalog load_items(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open items file " + path.string());
  ItemCatalog catalog;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(std::move(line));
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() > 2 || fields[0].empty()) {
      throw DataError(where + ": expected item<TAB>cat0,cat1,...");
    }
    std::vector<int> cats;
    if (fields.size() == 2 && !fields[1].empty()) {
      std::stringstream ss(fields[1]);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        std::int64_t c = 0;
        if (!parse_int64(tok, c) || c < 0 || c > 1'000'000) {
          throw DataError(where + ": bad category id '" + tok + "'");
        }
        cats.push_back(static_cast<int>(c));
        catalog.n_categories = std::max(catalog.n_categories, static_cast<int>(c) + 1);
      }
    }
    std::sort(cats.begin(), cats.end());
    cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
    catalog.categories[fields[0]] = std::move(cats);
  }
  return catalog;
}

void write_items(const std::filesystem::path& path, const ItemCatalog& catalog) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& [item, cats] : catalog.categories) {
    out << item << '\t';
    for (std::size_t i = 0; i < cats.size(); ++i) out << (i ? "," : "") << cats[i];
    out << '\n';
  }
}

}  // namespace hm4sr::data
