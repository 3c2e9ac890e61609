// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#include "hm4sr/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "hm4sr/data/dataset.hpp"

namespace hm4sr::data {

namespace {

constexpr std::size_t kLatent = 8;
constexpr double kSharpness = 3.0;

using Vec = std::vector<double>;

Vec gaussian(std::mt19937_64& rng, std::size_t n, double sd) {
  std::normal_distribution<double> dist(0.0, sd);
  Vec v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

std::string item_token(std::size_t j) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "i%04zu", j);
  return buf;
}

std::string user_token(std::size_t u) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "u%05zu", u);
  return buf;
}

}  // namespace

SynthData synth_generate(const SynthConfig& cfg) {
  if (cfg.n_items < 2) throw std::invalid_argument("synth_generate: need at least 2 items");
  if (cfg.n_users < 1) throw std::invalid_argument("synth_generate: need at least 1 user");
  if (cfg.n_categories < 1) throw std::invalid_argument("synth_generate: need >= 1 category");
  if (cfg.min_len < 1 || cfg.max_len < cfg.min_len || cfg.max_len > cfg.n_items) {
    throw std::invalid_argument("synth_generate: need 1 <= min_len <= max_len <= n_items");
  }
  if (cfg.span_days < 1) throw std::invalid_argument("synth_generate: span_days must be >= 1");
  std::mt19937_64 rng(cfg.seed);
  const std::size_t C = cfg.n_categories;

  std::vector<Vec> centers;
  for (std::size_t c = 0; c < C; ++c) centers.push_back(gaussian(rng, kLatent, 1.0));

  SynthData out;
  out.catalog.n_categories = static_cast<int>(C);
  std::vector<Vec> latent(cfg.n_items);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t j = 0; j < cfg.n_items; ++j) {
    const std::size_t primary = j % C;
    std::vector<int> cats{static_cast<int>(primary)};
    Vec z = gaussian(rng, kLatent, 0.5);
    for (std::size_t k = 0; k < kLatent; ++k) z[k] += centers[primary][k];
    if (C > 1 && unit(rng) < 0.25) {
      std::size_t secondary = (primary + 1 + rng() % (C - 1)) % C;
      cats.push_back(static_cast<int>(secondary));
      for (std::size_t k = 0; k < kLatent; ++k) z[k] += 0.5 * centers[secondary][k];
    }
    std::sort(cats.begin(), cats.end());
    out.catalog.categories[item_token(j)] = cats;
    latent[j] = std::move(z);
  }

  auto project = [&](std::size_t dim) {
    FeatureMatrix features(dim);
    const Vec mix = gaussian(rng, dim * kLatent, 1.0 / std::sqrt(double(kLatent)));
    std::vector<float> row(dim);
    for (std::size_t j = 0; j < cfg.n_items; ++j) {
      const Vec noise = gaussian(rng, dim, 0.1);
      for (std::size_t r = 0; r < dim; ++r) {
        double acc = noise[r];
        for (std::size_t k = 0; k < kLatent; ++k) acc += mix[r * kLatent + k] * latent[j][k];
        row[r] = static_cast<float>(acc);
      }
      features.append(item_token(j), row);
    }
    return features;
  };
  out.txt = project(cfg.d_txt);
  out.img = project(cfg.d_img);

  const std::int64_t span = cfg.span_days * 86400;
  const std::int64_t t0 = cfg.start_time;
  std::vector<Interaction> records;
  struct Window {
    std::int64_t begin, end;
  };
  std::vector<Window> windows(cfg.n_users);
  std::vector<std::set<std::size_t>> consumed(cfg.n_users);
  std::vector<std::set<std::int64_t>> used_times(cfg.n_users);
  std::vector<std::size_t> degree(cfg.n_items, 0);

  // Late interests share one trend category, so the drift shows up in the
  // global category mix over time and not only within each user.
  const std::size_t trend = rng() % C;
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    const std::size_t early = rng() % C;
    const std::size_t late = trend;
    Vec p = gaussian(rng, kLatent, 0.3), q = gaussian(rng, kLatent, 0.3);
    for (std::size_t k = 0; k < kLatent; ++k) {
      p[k] += centers[early][k];
      q[k] += centers[late][k];
    }
    const double length = 0.3 + 0.6 * unit(rng);
    const double start = (1.0 - length) * unit(rng);
    Window w{t0 + static_cast<std::int64_t>(start * span),
             t0 + static_cast<std::int64_t>((start + length) * span)};
    windows[u] = w;
    const std::size_t n = cfg.min_len + rng() % (cfg.max_len - cfg.min_len + 1);
    std::uniform_int_distribution<std::int64_t> when(w.begin, w.end);
    while (used_times[u].size() < n) used_times[u].insert(when(rng));

    for (std::int64_t t : used_times[u]) {
      const double progress = cfg.drift ? double(t - t0) / double(span) : 0.0;
      std::vector<double> weights(cfg.n_items, 0.0);
      double mx = -1e300;
      std::vector<double> logits(cfg.n_items);
      for (std::size_t j = 0; j < cfg.n_items; ++j) {
        double dot = 0;
        for (std::size_t k = 0; k < kLatent; ++k) {
          const double pref = (1.0 - progress) * p[k] + progress * q[k];
          dot += pref * latent[j][k];
        }
        logits[j] = kSharpness * dot / std::sqrt(double(kLatent));
        if (!consumed[u].count(j)) mx = std::max(mx, logits[j]);
      }
      for (std::size_t j = 0; j < cfg.n_items; ++j) {
        if (!consumed[u].count(j)) weights[j] = std::exp(logits[j] - mx);
      }
      std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
      const std::size_t j = pick(rng);
      consumed[u].insert(j);
      ++degree[j];
      records.push_back({user_token(u), item_token(j), t});
    }
  }

  // Top up rarely chosen items so every item reaches min_item_degree.
  for (std::size_t j = 0; j < cfg.n_items; ++j) {
    std::size_t attempts = 0;
    while (degree[j] < cfg.min_item_degree && attempts < 100 * cfg.n_users) {
      ++attempts;
      const std::size_t u = rng() % cfg.n_users;
      if (consumed[u].count(j)) continue;
      std::uniform_int_distribution<std::int64_t> when(windows[u].begin, windows[u].end);
      std::int64_t t = when(rng);
      if (!used_times[u].insert(t).second) continue;
      consumed[u].insert(j);
      ++degree[j];
      records.push_back({user_token(u), item_token(j), t});
    }
  }

  out.log = InteractionLog::from_records(std::move(records));
  return out;
}

void write_synth(const SynthData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_interactions(dir / DataDirLayout::interactions, data.log);
  write_items(dir / DataDirLayout::items, data.catalog);
  write_hmft(dir / DataDirLayout::txt_features, data.txt);
  write_hmft(dir / DataDirLayout::img_features, data.img);
  std::ofstream stats(dir / DataDirLayout::stats, std::ios::trunc);
  stats << stats_to_json(compute_stats(data.log)) << '\n';
}

}  // namespace hm4sr::data
