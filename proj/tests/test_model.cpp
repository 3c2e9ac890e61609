// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "hm4sr/core/ops.hpp"
#include "hm4sr/model/model.hpp"
#include "hm4sr/train/experiment.hpp"
#include "hm4sr/train/gradcheck_suite.hpp"
#include "test_support.hpp"

using namespace hm4sr;
using hm4sr::testing::random_tensor;
using T = Tensor<double>;

namespace {

ModelConfig small_config(std::size_t d = 4, std::size_t L = 3) {
  ModelConfig c;
  c.d = d;
  c.max_len = L;
  c.n_layers = 1;
  c.n_heads = 1;
  c.dropout = 0.0;
  c.k1 = 2;
  c.k2 = 2;
  c.mu = 10.0;
  c.p_max = 50;
  c.init_std = 0.3;
  return c;
}

FeatureStore<double> random_features(std::mt19937_64& rng, std::size_t n_items,
                                     std::size_t d_txt, std::size_t d_img) {
  FeatureStore<double> f;
  f.txt = random_tensor(rng, {n_items + 1, d_txt});
  f.img = random_tensor(rng, {n_items + 1, d_img});
  std::fill_n(f.txt.values().begin(), d_txt, 0.0);
  std::fill_n(f.img.values().begin(), d_img, 0.0);
  return f;
}

void fill(Tensor<double>& t, double v) { std::fill(t.values().begin(), t.values().end(), v); }

std::vector<double> to_vec(const T& t) { return {t.values().begin(), t.values().end()}; }

PerModality<double> random_streams(std::mt19937_64& rng, Shape shape) {
  PerModality<double> e;
  for (Modality m : kModalities) at(e, m) = random_tensor(rng, shape);
  return e;
}

/// Hand-built batch: every row lists its real items (right-aligned) with
/// timestamps one day apart.
data::SequenceBatch hand_batch(const std::vector<std::vector<std::int64_t>>& rows,
                               std::size_t L, std::size_t n_categories = 2) {
  data::SequenceBatch b;
  b.batch_size = rows.size();
  b.max_len = L;
  b.n_categories = n_categories;
  b.item_indices.assign(rows.size() * L, 0);
  b.timestamps.assign(rows.size() * L, 0);
  b.intervals.assign(rows.size() * L, 0);
  b.target_categories.assign(rows.size() * L * n_categories, 0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t n = rows[r].size();
    b.valid_lengths.push_back(static_cast<std::int32_t>(n));
    b.targets.push_back(1);
    b.users.push_back(static_cast<std::int32_t>(r));
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t s = r * L + (L - n) + j;
      b.item_indices[s] = rows[r][j];
      b.timestamps[s] = 86400 * static_cast<std::int64_t>(j + 1);
      b.intervals[s] = j == 0 ? 0 : 86400;
    }
  }
  return b;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("item representation") {
  std::mt19937_64 rng(3);
  const std::size_t n = 5, d = 4;
  ModelConfig c = small_config(d);
  ParamStore<double> params;
  ItemRepresentation<double> rep(params, c, random_features(rng, n, d, 3), n, Initializer(1));
  const std::vector<std::int64_t> idx{0, 2, 5, 1, 0, 3};

  SUBCASE("padding slot has a zero ID vector and the bare bias for features") {
    fill(params.at("item.txt.b"), 0.25);
    const auto x = rep.project(idx, {2, 3});
    for (std::size_t j = 0; j < d; ++j) {
      CHECK(at(x, Modality::id)[j] == 0.0);
      CHECK(at(x, Modality::txt)[j] == 0.25);
    }
  }
  SUBCASE("zero projection gives the bias everywhere") {
    fill(params.at("item.img.W"), 0.0);
    fill(params.at("item.img.b"), -1.5);
    const auto x = rep.project(idx, {2, 3});
    for (double v : at(x, Modality::img).values()) CHECK(v == -1.5);
  }
  SUBCASE("identity projection returns the stored features") {
    auto& w = params.at("item.txt.W");
    fill(w, 0.0);
    for (std::size_t i = 0; i < d; ++i) w[i * d + i] = 1.0;
    const auto x = rep.project(idx, {2, 3});
    for (std::size_t s = 0; s < idx.size(); ++s)
      for (std::size_t j = 0; j < d; ++j)
        CHECK(at(x, Modality::txt)[s * d + j] ==
              rep.features().txt[static_cast<std::size_t>(idx[s]) * d + j]);
  }
  SUBCASE("catalog rows are the projections of items 1..n") {
    const std::vector<std::int64_t> all{1, 2, 3, 4, 5};
    const auto a = rep.catalog(), b = rep.project(all, {n});
    for (Modality m : kModalities) CHECK(to_vec(at(a, m)) == to_vec(at(b, m)));
  }
  SUBCASE("out-of-range index is rejected") {
    const std::vector<std::int64_t> bad{6};
    CHECK_THROWS(rep.project(bad, {1}));
    const std::vector<std::int64_t> neg{-1};
    CHECK_THROWS(rep.project(neg, {1}));
  }
  SUBCASE("position add is a batch-independent shift") {
    const T x = random_tensor(rng, {3, 3, d});
    const T e = rep.add_position(x);
    const auto& pos = params.at("item.pos_table");
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          const std::size_t s = (b * 3 + i) * d + j;
          CHECK(e[s] - x[s] == doctest::Approx(pos[i * d + j]).epsilon(1e-12));
        }
    const T zero = rep.add_position(T::zeros({2, 3, d}));
    for (std::size_t s = 0; s < zero.numel(); ++s) CHECK(zero[s] == pos[s % (3 * d)]);
    fill(params.at("item.pos_table"), 0.0);
    CHECK(to_vec(rep.add_position(x)) == to_vec(x));
  }
  SUBCASE("frozen features get no gradient") {
    Tape<double> tape;
    {
      TapeScope<double> scope(tape);
      const auto x = rep.project(idx, {2, 3});
      T loss = ops::sum(ops::add(at(x, Modality::txt), at(x, Modality::img)));
      tape.backward(loss);
    }
    CHECK_FALSE(rep.features().txt.requires_grad());
    CHECK_FALSE(rep.features().img.requires_grad());
    for (double g : params.at("item.txt.W").grad()) CHECK(std::isfinite(g));
  }
}

TEST_CASE("interactive mixture of experts") {
  std::mt19937_64 rng(5);
  const std::size_t d = 4;

  SUBCASE("routing is a probability simplex") {
    ModelConfig c = small_config(d);
    c.k1 = 5;
    ParamStore<double> params;
    InteractiveMoe<double> moe(params, c, Initializer(2));
    for (int trial = 0; trial < 50; ++trial) {
      const T e = random_tensor(rng, {2, 3, d}, -5, 5);
      for (Modality m : kModalities) {
        const T g = moe.routing(m, e);
        for (std::size_t r = 0; r < 6; ++r) {
          double s = 0;
          for (std::size_t k = 0; k < 5; ++k) {
            CHECK(g[r * 5 + k] >= 0.0);
            s += g[r * 5 + k];
          }
          CHECK(std::abs(s - 1.0) <= 1e-6);
        }
      }
    }
  }
  SUBCASE("alpha = 0 is the exact identity") {
    ParamStore<double> params;
    InteractiveMoe<double> moe(params, small_config(d), Initializer(2));
    for (Modality m : kModalities)
      fill(params.at("imoe." + std::string(modality_name(m)) + ".alpha"), 0.0);
    const auto e = random_streams(rng, {2, 3, d});
    const auto out = moe.forward(e);
    for (Modality m : kModalities) CHECK(to_vec(at(out, m)) == to_vec(at(e, m)));
  }
  SUBCASE("a single expert gets all the weight") {
    ModelConfig c = small_config(d);
    c.k1 = 1;
    ParamStore<double> params;
    InteractiveMoe<double> moe(params, c, Initializer(2));
    const T g = moe.routing(Modality::txt, random_tensor(rng, {4, d}, -3, 3));
    for (double v : g.values()) CHECK(v == 1.0);
  }
  SUBCASE("equal router logits average the experts, checked densely") {
    ModelConfig c = small_config(d);
    c.alpha_init = 0.7;
    ParamStore<double> params;
    InteractiveMoe<double> moe(params, c, Initializer(9));
    fill(params.at("imoe.img.router.W"), 0.0);
    const auto e = random_streams(rng, {1, 1, d});
    const auto out = moe.forward(e);
    const auto& w = params.at("imoe.img.experts.W");
    const auto& bias = params.at("imoe.img.experts.b");
    std::vector<double> cat;
    for (Modality m : kModalities)
      for (double v : at(e, m).values()) cat.push_back(v);
    for (std::size_t j = 0; j < d; ++j) {
      double mix = 0;
      for (std::size_t k = 0; k < 2; ++k) {
        double y = bias[k * d + j];
        for (std::size_t r = 0; r < 3 * d; ++r) y += cat[r] * w[r * 2 * d + k * d + j];
        mix += 0.5 * y;
      }
      CHECK(at(out, Modality::img)[j] ==
            doctest::Approx(at(e, Modality::img)[j] + 0.7 * mix).epsilon(1e-12));
    }
  }
}

TEST_CASE("interval positions") {
  const std::vector<std::int64_t> a{0, 1, 1'000'000'000};
  const auto pos = interval_positions(a, 100.0, 5000);
  CHECK(pos[0] == 0);
  CHECK(pos[1] == static_cast<std::int64_t>(std::floor(100.0L * std::log(2.0L))));
  CHECK(pos[1] == 69);
  CHECK(pos[2] == static_cast<std::int64_t>(std::floor(100.0L * std::log(1'000'000'001.0L))));
  CHECK(pos[2] == 2072);
  CHECK(interval_positions(a, 100.0, 2072)[2] == 2071);
  CHECK_THROWS(interval_positions(std::vector<std::int64_t>{-1}, 1.0, 10));
  CHECK_THROWS(interval_positions(a, 0.0, 10));

  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::int64_t> v(40);
    for (auto& x : v) x = static_cast<std::int64_t>(rng() % 100'000'000);
    std::sort(v.begin(), v.end());
    const double mu = 0.5 + static_cast<double>(rng() % 200);
    const auto p = interval_positions(v, mu, 1 + rng() % 3000);
    CHECK(std::is_sorted(p.begin(), p.end()));
  }
}

TEST_CASE("absolute time embedding") {
  const std::size_t d = 4;
  const std::vector<double> t{0.0, 1.0};
  const T ones = T::filled({d}, 1.0), zeros = T::zeros({d});
  const T e = absolute_time_embedding<double>(t, {2}, ones, zeros, 10000.0);
  for (std::size_t i = 0; i < d; ++i) {
    CHECK(e[i] == 1.0);
    const long double expected =
        std::cos(std::pow(10000.0L, -static_cast<long double>(i) / static_cast<long double>(d)));
    CHECK(e[d + i] == doctest::Approx(static_cast<double>(expected)).epsilon(1e-14));
  }
  // Frozen values of the four entries at t = 1.
  const double frozen[] = {0.5403023058681398, 0.9950041652780258, 0.9999500004166653,
                           0.9999995000000417};
  for (std::size_t i = 0; i < d; ++i) CHECK(e[d + i] == doctest::Approx(frozen[i]).epsilon(1e-14));

  const T shifted = absolute_time_embedding<double>(t, {2}, ones,
                                                    T::filled({d}, std::numbers::pi / 2), 1e4);
  for (std::size_t i = 0; i < d; ++i) CHECK(std::abs(shifted[i]) <= 1e-6);

  std::mt19937_64 rng(4);
  std::vector<double> many(200);
  for (auto& x : many) x = std::uniform_real_distribution<double>(0, 1e4)(rng);
  const T r = absolute_time_embedding<double>(many, {200}, random_tensor(rng, {d}, -3, 3),
                                              random_tensor(rng, {d}, -3, 3), 100.0);
  for (double v : r.values()) CHECK((v >= -1.0 && v <= 1.0));
  CHECK_THROWS(absolute_time_embedding<double>(t, {2}, ones, zeros, 1.0));
}

TEST_CASE("temporal mixture of experts") {
  std::mt19937_64 rng(6);
  const std::size_t d = 4, L = 3;
  const auto batch = hand_batch({{1, 2, 3}, {4, 5}}, L);

  SUBCASE("routing is a simplex and ignores content") {
    ModelConfig c = small_config(d, L);
    c.k2 = 3;
    ParamStore<double> params;
    TemporalMoe<double> moe(params, c, Initializer(2));
    const auto time = moe.time_inputs(batch, 0);
    const T g = moe.routing(time.gate_input);
    for (std::size_t r = 0; r < 2 * L; ++r) {
      double s = 0;
      for (std::size_t k = 0; k < 3; ++k) s += g[r * 3 + k];
      CHECK(std::abs(s - 1.0) <= 1e-6);
    }
    // x_temp / e_cat is the routed scaling; it must not depend on e.
    const auto e1 = random_streams(rng, {2, L, d}), e2 = random_streams(rng, {2, L, d});
    const auto o1 = moe.forward(e1, time.gate_input), o2 = moe.forward(e2, time.gate_input);
    for (Modality m : kModalities)
      for (std::size_t s = 0; s < 2 * L * d; ++s)
        CHECK(at(o1, m)[s] / at(e1, m)[s] ==
              doctest::Approx(at(o2, m)[s] / at(e2, m)[s]).epsilon(1e-9));
  }
  SUBCASE("one all-ones expert is the identity") {
    ModelConfig c = small_config(d, L);
    c.k2 = 1;
    ParamStore<double> params;
    TemporalMoe<double> moe(params, c, Initializer(2));
    fill(params.at("tmoe.experts"), 1.0);
    const auto e = random_streams(rng, {2, L, d});
    const auto out = moe.forward(e, moe.time_inputs(batch, 0).gate_input);
    for (Modality m : kModalities) CHECK(to_vec(at(out, m)) == to_vec(at(e, m)));
  }
  SUBCASE("two experts match a dense computation") {
    ParamStore<double> params;
    TemporalMoe<double> moe(params, small_config(d, L), Initializer(11));
    const auto time = moe.time_inputs(batch, 0);
    const auto e = random_streams(rng, {2, L, d});
    const auto out = moe.forward(e, time.gate_input);
    const auto& rw = params.at("tmoe.router.W");
    const auto& rb = params.at("tmoe.router.b");
    const auto& ex = params.at("tmoe.experts");
    for (std::size_t s = 0; s < 2 * L; ++s) {
      double logit[2];
      for (std::size_t k = 0; k < 2; ++k) {
        logit[k] = rb[k];
        for (std::size_t r = 0; r < 2 * d; ++r) logit[k] += time.gate_input[s * 2 * d + r] * rw[r * 2 + k];
      }
      const double g0 = 1.0 / (1.0 + std::exp(logit[1] - logit[0]));
      for (std::size_t mi = 0; mi < 3; ++mi)
        for (std::size_t j = 0; j < d; ++j) {
          const std::size_t col = mi * d + j;
          const double scale = g0 * ex[col] + (1.0 - g0) * ex[3 * d + col];
          const double x = at(e, kModalities[mi])[s * d + j];
          CHECK(at(out, kModalities[mi])[s * d + j] == doctest::Approx(scale * x).epsilon(1e-12));
        }
    }
  }
  SUBCASE("time inputs skip pad slots") {
    ParamStore<double> params;
    TemporalMoe<double> moe(params, small_config(d, L), Initializer(2));
    auto moved = batch;
    moved.timestamps[3] = 987654321;  // row 1, pad slot
    moved.intervals[3] = 55555;
    const auto a = moe.time_inputs(batch, 0), b = moe.time_inputs(moved, 0);
    CHECK(to_vec(a.gate_input) == to_vec(b.gate_input));
  }
}

TEST_CASE("time variants") {
  const std::size_t d = 4, L = 3;
  const auto batch = hand_batch({{1, 2, 3}, {4, 5}}, L);
  ModelConfig c = small_config(d, L);
  ParamStore<double> params;
  TemporalMoe<double> moe(params, c, Initializer(2));
  const auto time = moe.time_inputs(batch, 0);

  SUBCASE("both is the concatenation of r1 and r2") {
    const T g = moe.gate_input(TimeVariant::both, time.r1, time.r2, std::vector<double>(6, 0.0));
    CHECK(to_vec(g) == to_vec(time.gate_input));
    for (std::size_t s = 0; s < 2 * L; ++s)
      for (std::size_t j = 0; j < d; ++j) {
        CHECK(g[s * 2 * d + j] == time.r1[s * d + j]);
        CHECK(g[s * 2 * d + d + j] == time.r2[s * d + j]);
      }
  }
  SUBCASE("one-sided variants zero the other half") {
    const std::vector<double> none(6, 0.0);
    const T gi = moe.gate_input(TimeVariant::interval_only, time.r1, time.r2, none);
    const T ga = moe.gate_input(TimeVariant::absolute_only, time.r1, time.r2, none);
    for (std::size_t s = 0; s < 2 * L; ++s)
      for (std::size_t j = 0; j < d; ++j) {
        CHECK(gi[s * 2 * d + d + j] == 0.0);
        CHECK(ga[s * 2 * d + j] == 0.0);
      }
    // All intervals zero: every slot reads table row 0, so the input is constant.
    const T r1 = ops::embedding_lookup(moe.interval_table(), std::vector<std::int64_t>(6, 0), {2, L});
    const T flat = moe.gate_input(TimeVariant::interval_only, r1, time.r2, none);
    for (std::size_t s = 1; s < 2 * L; ++s)
      for (std::size_t j = 0; j < 2 * d; ++j) CHECK(flat[s * 2 * d + j] == flat[j]);
  }
  SUBCASE("cos_interval of zero intervals is all ones") {
    ModelConfig cc = c;
    cc.time_variant = TimeVariant::cos_interval;
    ParamStore<double> p2;
    TemporalMoe<double> cos_moe(p2, cc, Initializer(2));
    const T g = cos_moe.gate_input(TimeVariant::cos_interval, time.r1, time.r2,
                                   std::vector<double>(6, 0.0));
    for (std::size_t s = 0; s < 2 * L; ++s)
      for (std::size_t j = 0; j < d; ++j) CHECK(g[s * 2 * d + j] == 1.0);
    CHECK_THROWS(moe.gate_input(TimeVariant::cos_interval, time.r1, time.r2,
                                std::vector<double>(6, 0.0)));
  }
}

TEST_CASE("sequence encoder") {
  std::mt19937_64 rng(12);
  const std::size_t d = 4, L = 4;
  ModelConfig c = small_config(d, L);
  c.n_heads = 2;
  c.n_layers = 2;
  ParamStore<double> params;
  SequenceEncoder<double> enc(params, c, "t", Initializer(4));
  const StepContext eval;
  std::vector<std::uint8_t> pad{1, 1, 0, 0, 0, 0, 0, 0};
  const T s = random_tensor(rng, {2, L, d}, -2, 2);

  SUBCASE("eval is deterministic") {
    CHECK(to_vec(enc.encode(s, pad, eval, "x")) == to_vec(enc.encode(s, pad, eval, "x")));
  }
  SUBCASE("pad slot content does not reach valid positions") {
    T moved = s.clone();
    for (std::size_t j = 0; j < 2 * d; ++j) moved[j] += 10.0 * (j + 1);
    const T a = enc.hidden(s, pad, eval, "x"), b = enc.hidden(moved, pad, eval, "x");
    for (std::size_t s2 = 2 * d; s2 < 2 * L * d; ++s2) CHECK(a[s2] == b[s2]);
  }
  SUBCASE("causal: a later position does not change earlier outputs") {
    for (std::size_t j = 1; j < L; ++j) {
      T moved = s.clone();
      for (std::size_t k = 0; k < d; ++k) moved[(L + j) * d + k] += 3.0;
      const T a = enc.hidden(s, pad, eval, "x"), b = enc.hidden(moved, pad, eval, "x");
      for (std::size_t i = 0; i < j; ++i)
        for (std::size_t k = 0; k < d; ++k)
          CHECK(a[(L + i) * d + k] == b[(L + i) * d + k]);
    }
  }
  SUBCASE("permuting the batch permutes the states") {
    std::vector<double> swapped(2 * L * d);
    std::copy_n(s.values().begin() + L * d, L * d, swapped.begin());
    std::copy_n(s.values().begin(), L * d, swapped.begin() + L * d);
    std::vector<std::uint8_t> pad2{0, 0, 0, 0, 1, 1, 0, 0};
    const T a = enc.encode(s, pad, eval, "x");
    const T b = enc.encode(T::from_values({2, L, d}, swapped), pad2, eval, "x");
    for (std::size_t k = 0; k < d; ++k) {
      CHECK(a[k] == doctest::Approx(b[d + k]).epsilon(1e-12));
      CHECK(a[d + k] == doctest::Approx(b[k]).epsilon(1e-12));
    }
  }
  SUBCASE("all-pad row is rejected") {
    std::vector<std::uint8_t> bad{0, 0, 0, 0, 1, 1, 1, 1};
    CHECK_THROWS_AS(enc.encode(s, bad, eval, "x"), std::invalid_argument);
  }
}

TEST_CASE("single valid slot reproduces its normalized vector") {
  const std::size_t d = 4;
  ModelConfig c = small_config(d, 2);
  ParamStore<double> params;
  SequenceEncoder<double> enc(params, c, "t", Initializer(4));
  for (const char* w : {"enc.t.l0.attn.Wv", "enc.t.l0.attn.Wo"}) {
    auto& m = params.at(w);
    fill(m, 0.0);
    for (std::size_t i = 0; i < d; ++i) m[i * d + i] = 1.0;
  }
  fill(params.at("enc.t.l0.ffn.W1"), 0.0);
  fill(params.at("enc.t.l0.ffn.W2"), 0.0);
  const std::vector<double> slot{0.3, -1.2, 2.0, 0.5};
  std::vector<double> values{9, 9, 9, 9};
  values.insert(values.end(), slot.begin(), slot.end());
  const T h = enc.encode(T::from_values({1, 2, d}, values), std::vector<std::uint8_t>{1, 0},
                         StepContext{}, "x");
  // attention sees only the slot itself: LN(LN(x) + LN(x)) = LN(x).
  const double mean = (0.3 - 1.2 + 2.0 + 0.5) / 4.0;
  double var = 0;
  for (double v : slot) var += (v - mean) * (v - mean);
  var /= 4.0;
  for (std::size_t k = 0; k < d; ++k)
    CHECK(h[k] == doctest::Approx((slot[k] - mean) / std::sqrt(var)).epsilon(1e-9));
}

TEST_CASE("item scoring") {
  PerModality<double> h, x;
  h[0] = T::from_values({1, 2}, {1.0, 2.0});
  h[1] = T::from_values({1, 2}, {0.5, -1.0});
  h[2] = T::from_values({1, 2}, {3.0, 0.0});
  x[0] = T::from_values({3, 2}, {1, 0, 0, 1, 1, 1});
  x[1] = T::from_values({3, 2}, {2, 2, -1, 0, 0, 4});
  x[2] = T::from_values({3, 2}, {0, 1, 1, 1, -2, 0});
  const T s = score_items(h, x);
  for (std::size_t v = 0; v < 3; ++v) {
    double expected = 0;
    for (std::size_t m = 0; m < 3; ++m)
      expected += dot(h[m].values(), x[m].values().subspan(v * 2, 2));
    CHECK(s[v] == doctest::Approx(expected).epsilon(1e-15));
  }
  CHECK(s[0] == doctest::Approx(1.0 - 1.0 + 0.0));
  CHECK(s[1] == doctest::Approx(2.0 - 0.5 + 3.0));
  CHECK(s[2] == doctest::Approx(3.0 - 4.0 - 6.0));

  PerModality<double> zero;
  for (std::size_t m = 0; m < 3; ++m) zero[m] = T::zeros({1, 2});
  const T zs = score_items(zero, x);
  for (double v : zs.values()) CHECK(v == 0.0);
  PerModality<double> one;
  for (std::size_t m = 0; m < 3; ++m) one[m] = T::from_values({1, 2}, {1.0, 1.0});
  CHECK(ops::softmax_last_dim(score_items(h, one))[0] == 1.0);
}

TEST_CASE("main loss") {
  const std::vector<std::int64_t> t7{7};
  CHECK(main_loss(T::zeros({1, 20}), t7).item() ==
        doctest::Approx(std::log(20.0)).epsilon(1e-12));
  CHECK(std::abs(main_loss(T::zeros({1, 20}), t7).item() - 2.995732273553991) <= 1e-5);

  std::vector<double> big(20, 0.0);
  big[6] = 1000.0;
  CHECK(main_loss(T::from_values({1, 20}, big), t7).item() <= 1e-12);

  const double oracle = -std::log(std::exp(3.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0)));
  const T l = main_loss(T::from_values({1, 3}, {1, 2, 3}), std::vector<std::int64_t>{3});
  CHECK(l.item() == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(l.item() == doctest::Approx(0.4076059644443803).epsilon(1e-12));

  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    T s = random_tensor(rng, {1, 8}, -3, 3);
    const std::vector<std::int64_t> target{1 + static_cast<std::int64_t>(rng() % 8)};
    const double before = main_loss(s, target).item();
    CHECK(before >= 0.0);
    s[static_cast<std::size_t>(target[0] - 1)] += 0.5;
    CHECK(main_loss(s, target).item() < before);
  }
}

TEST_CASE("category prediction loss") {
  SUBCASE("zero logits give |C| ln 2 per valid slot") {
    const std::vector<std::uint8_t> labels{1, 0, 1, 1, 0, 0, 0, 0};
    const T l = cp_loss(T::zeros({1, 2, 4}), labels, std::vector<std::uint8_t>{1, 0});
    CHECK(std::abs(l.item() - 4.0 * std::log(2.0)) <= 1e-5);
    CHECK(l.item() == doctest::Approx(2.772588722239781).epsilon(1e-12));
  }
  SUBCASE("hand example") {
    const double l0 = std::log(0.9 / 0.1), l1 = std::log(0.2 / 0.8);
    const T l = cp_loss(T::from_values({1, 1, 2}, {l0, l1}), std::vector<std::uint8_t>{1, 0},
                        std::vector<std::uint8_t>{0});
    CHECK(l.item() == doctest::Approx(-std::log(0.9) - std::log(0.8)).epsilon(1e-12));
    CHECK(l.item() == doctest::Approx(0.328504066972036).epsilon(1e-12));
  }
  SUBCASE("confident correct predictions cost nothing") {
    const T l = cp_loss(T::from_values({1, 1, 2}, {50.0, -50.0}), std::vector<std::uint8_t>{1, 0},
                        std::vector<std::uint8_t>{0});
    CHECK(l.item() <= 1e-20);
  }
  SUBCASE("sum over slots, mean over sequences, pads ignored") {
    std::mt19937_64 rng(4);
    const T logits = random_tensor(rng, {2, 3, 2}, -2, 2);
    std::vector<std::uint8_t> labels(12);
    for (auto& v : labels) v = rng() % 2;
    const std::vector<std::uint8_t> pad{1, 0, 0, 1, 1, 0};
    double oracle = 0;
    for (std::size_t s = 0; s < 6; ++s) {
      if (pad[s]) continue;
      for (std::size_t c = 0; c < 2; ++c) {
        const double p = 1.0 / (1.0 + std::exp(-logits[s * 2 + c]));
        oracle -= labels[s * 2 + c] ? std::log(p) : std::log(1.0 - p);
      }
    }
    CHECK(cp_loss(logits, labels, pad).item() == doctest::Approx(oracle / 2.0).epsilon(1e-12));
    T moved = logits.clone();
    moved[0] = 1e6;
    moved[7] = -1e6;
    CHECK(cp_loss(moved, labels, pad).item() == cp_loss(logits, labels, pad).item());
  }
}

TEST_CASE("contrastive losses") {
  const double closed = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
  const T eye = T::from_values({2, 2}, {1, 0, 0, 1});
  SUBCASE("closed forms") {
    CHECK(idcl_loss(eye, eye, 1.0).item() == doctest::Approx(closed).epsilon(1e-12));
    CHECK(closed == doctest::Approx(0.3132616875182228).epsilon(1e-14));
    const T xs[] = {eye, eye}, ys[] = {eye, eye};
    CHECK(pcl_loss<double>(xs, ys).item() == doctest::Approx(closed).epsilon(1e-12));
  }
  SUBCASE("a single row has nothing to contrast with") {
    std::mt19937_64 rng(1);
    const T a = random_tensor(rng, {1, 5}), b = random_tensor(rng, {1, 5});
    CHECK(idcl_loss(a, b, 0.2).item() == 0.0);
    const T xs[] = {a, a}, ys[] = {b, a};
    CHECK(pcl_loss<double>(xs, ys).item() == 0.0);
  }
  SUBCASE("tempered InfoNCE matches a direct computation") {
    std::mt19937_64 rng(2);
    const T a = random_tensor(rng, {4, 3}), b = random_tensor(rng, {4, 3});
    double oracle = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      std::vector<double> sims(4);
      for (std::size_t j = 0; j < 4; ++j) {
        const auto ai = a.values().subspan(i * 3, 3), bj = b.values().subspan(j * 3, 3);
        sims[j] = dot(ai, bj) / std::sqrt(dot(ai, ai) * dot(bj, bj)) / 0.2;
      }
      double z = 0;
      for (double s : sims) z += std::exp(s);
      oracle += std::log(z) - sims[i];
    }
    CHECK(idcl_loss(a, b, 0.2).item() == doctest::Approx(oracle / 4.0).epsilon(1e-12));
  }
  SUBCASE("invariant to row scaling and joint permutation") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      const T a = random_tensor(rng, {3, 4}), b = random_tensor(rng, {3, 4});
      const double base = idcl_loss(a, b, 0.5).item();
      T sa = a.clone(), sb = b.clone();
      for (std::size_t k = 0; k < 4; ++k) {
        sa[4 + k] *= 7.5;
        sb[k] *= 0.01;
      }
      CHECK(idcl_loss(sa, sb, 0.5).item() == doctest::Approx(base).epsilon(1e-10));
      std::vector<double> pa(12), pb(12);
      const std::size_t perm[] = {2, 0, 1};
      for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t k = 0; k < 4; ++k) {
          pa[r * 4 + k] = a[perm[r] * 4 + k];
          pb[r * 4 + k] = b[perm[r] * 4 + k];
        }
      CHECK(idcl_loss(T::from_values({3, 4}, pa), T::from_values({3, 4}, pb), 0.5).item() ==
            doctest::Approx(base).epsilon(1e-12));
    }
  }
}

TEST_CASE("placeholder sampling") {
  const auto batch = hand_batch({{1, 2, 3, 4}, {5, 6}, {7}, {1, 2, 3, 4, 5, 6}}, 6);
  SUBCASE("beta = 0 replaces nothing and returns the input") {
    const auto mask = sample_placeholder_positions(batch, 0.0, 9);
    CHECK(mask.count() == 0);
    std::mt19937_64 rng(1);
    const T seq = random_tensor(rng, {4, 6, 2});
    CHECK(to_vec(apply_placeholders(seq, T::zeros({4, 6, 2}), mask)) == to_vec(seq));
  }
  SUBCASE("round(beta * length) valid slots per row, replaced by the placeholder") {
    for (std::uint64_t key = 0; key < 200; ++key) {
      const auto mask = sample_placeholder_positions(batch, 0.5, key);
      const std::size_t want[] = {2, 1, 1, 3};  // llround(0.5) = 1
      for (std::size_t b = 0; b < 4; ++b) {
        std::size_t n = 0;
        for (std::size_t i = 0; i < 6; ++i) {
          if (!mask.replaced[b * 6 + i]) continue;
          CHECK_FALSE(batch.is_pad(b, i));
          ++n;
        }
        CHECK(n == want[b]);
      }
      CHECK(mask.replaced == sample_placeholder_positions(batch, 0.5, key).replaced);
    }
    const auto mask = sample_placeholder_positions(batch, 0.5, 3);
    std::mt19937_64 rng(2);
    const T seq = random_tensor(rng, {4, 6, 2});
    const T out = apply_placeholders(seq, T::filled({4, 6, 2}, 4.25), mask);
    for (std::size_t s = 0; s < 24; ++s)
      for (std::size_t k = 0; k < 2; ++k)
        CHECK(out[s * 2 + k] == (mask.replaced[s] ? 4.25 : seq[s * 2 + k]));
  }
  SUBCASE("beta outside [0, 1) is rejected") {
    CHECK_THROWS(sample_placeholder_positions(batch, 1.0, 0));
    CHECK_THROWS(sample_placeholder_positions(batch, -0.1, 0));
  }
}

TEST_CASE("total loss") {
  const T main = T::scalar(0.5), cp = T::scalar(2.0), idcl = T::scalar(0.3), pcl = T::scalar(0.4);
  CHECK(total_loss(main, cp, idcl, pcl, 0, 0, 0).item() == 0.5);
  CHECK(total_loss(T::scalar(1.0), T::scalar(1.0), T::scalar(1.0), T::scalar(1.0), 1, 1, 1).item() ==
        4.0);
  CHECK(total_loss(main, cp, idcl, pcl, 1.0, 0.5, 0.5).item() ==
        doctest::Approx(0.5 + 1.0 * 2.0 + 0.5 * 0.3 + 0.5 * 0.4).epsilon(1e-15));
  CHECK(total_loss(main, cp, idcl, pcl, 1.0, 0.5, 0.5).item() == doctest::Approx(2.85));
  CHECK(total_loss(main, T(), T(), pcl, 1.0, 1.0, 2.0).item() == doctest::Approx(1.3));
  CHECK_THROWS(total_loss(main, cp, idcl, pcl, -1.0, 0, 0));
  LossBreakdown parts{0.5, 2.0, 0.3, 0.4, 0.0, 1.0, 0.5, 0.5};
  CHECK(combine(parts) == doctest::Approx(2.85).epsilon(1e-15));
}

namespace {

struct Built {
  TinySetup setup;
  std::unique_ptr<Model<double>> model;
};

Built build_tiny(const std::function<void(ModelConfig&)>& edit = {}) {
  Built b{tiny_setup(1), nullptr};
  if (edit) edit(b.setup.config.model);
  LoadedData data{b.setup.dataset, b.setup.txt, b.setup.img};
  b.model = build_model<double>(b.setup.config, data);
  return b;
}

/// Gradients of the total loss, keyed by parameter name.
std::map<std::string, std::vector<double>> gradients(Model<double>& model,
                                                     const data::SequenceBatch& batch,
                                                     const StepContext& ctx) {
  model.params().zero_grad();
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    auto terms = model.loss(batch, ctx);
    tape.backward(terms.total);
  }
  std::map<std::string, std::vector<double>> out;
  for (const auto& e : model.params().entries())
    out[e.name] = {e.tensor.grad().begin(), e.tensor.grad().end()};
  return out;
}

}  // namespace

TEST_CASE("zero weight removes a term exactly") {
  const StepContext ctx{true, 5, 1, 2};
  struct Case {
    const char* name;
    std::function<void(ModelConfig&)> zero, skip;
  };
  const Case cases[] = {
      {"cp", [](ModelConfig& c) { c.lambda1 = 0; }, [](ModelConfig& c) { c.enable_cp = false; }},
      {"idcl", [](ModelConfig& c) { c.lambda2 = 0; }, [](ModelConfig& c) { c.enable_idcl = false; }},
      {"pcl", [](ModelConfig& c) { c.lambda3 = 0; }, [](ModelConfig& c) { c.enable_pcl = false; }},
  };
  for (const auto& tc : cases) {
    CAPTURE(tc.name);
    auto zeroed = build_tiny(tc.zero);
    auto skipped = build_tiny(tc.skip);
    const auto gz = gradients(*zeroed.model, zeroed.setup.batch, ctx);
    const auto gs = gradients(*skipped.model, skipped.setup.batch, ctx);
    CHECK(zeroed.model->loss(zeroed.setup.batch, ctx).breakdown.total ==
          skipped.model->loss(skipped.setup.batch, ctx).breakdown.total);
    std::size_t compared = 0;
    for (const auto& [name, g] : gs) {
      REQUIRE(gz.count(name));
      CHECK(gz.at(name) == g);
      ++compared;
    }
    CHECK(compared > 50);
  }
}

TEST_CASE("model-level invariants") {
  auto built = build_tiny();
  auto& model = *built.model;
  const auto& batch = built.setup.batch;
  const StepContext eval;

  SUBCASE("loss ignores pad-slot timestamps and intervals") {
    auto moved = batch;
    std::size_t touched = 0;
    for (std::size_t b = 0; b < batch.batch_size; ++b)
      for (std::size_t i = 0; i < batch.max_len; ++i)
        if (batch.is_pad(b, i)) {
          moved.timestamps[b * batch.max_len + i] = 1'700'000'000 + 1234 * i;
          moved.intervals[b * batch.max_len + i] = 99999;
          ++touched;
        }
    REQUIRE(touched > 0);
    CHECK(model.loss(batch, eval).breakdown.total == model.loss(moved, eval).breakdown.total);
  }
  SUBCASE("breakdown total is the weighted sum") {
    const auto br = model.loss(batch, StepContext{true, 1, 0, 0}).breakdown;
    CHECK(br.total == doctest::Approx(combine(br)).epsilon(1e-12));
    CHECK(br.cp > 0);
    CHECK(br.idcl > 0);
    CHECK(br.pcl > 0);
  }
  SUBCASE("eval-mode PCL view with beta = 0 is the original state") {
    const auto s = model.streams(batch);
    const auto states = model.user_states(s, eval);
    const auto mask = sample_placeholder_positions(batch, 0.0, 1);
    for (Modality m : {Modality::txt, Modality::img}) {
      const T aug = model.encoder(m).encode(
          apply_placeholders(at(s.temporal, m), T::zeros(at(s.temporal, m).shape()), mask),
          s.pad_mask, eval, "enc." + std::string(modality_name(m)) + ".aug");
      const T cos = ops::cosine_similarity(at(states, m), aug);
      const std::size_t B = batch.batch_size;
      for (std::size_t b = 0; b < B; ++b) CHECK(std::abs(cos[b * B + b] - 1.0) <= 1e-6);
    }
  }
  SUBCASE("candidate scores agree with the full catalog") {
    const auto states = model.user_states(model.streams(batch), eval);
    const T full = score_items(states, model.catalog());
    const std::vector<std::int64_t> cand{3, 1, 20};
    const T some = model.score_candidates(states, cand);
    for (std::size_t b = 0; b < batch.batch_size; ++b)
      for (std::size_t j = 0; j < 3; ++j)
        CHECK(some[b * 3 + j] ==
              doctest::Approx(full[b * 20 + static_cast<std::size_t>(cand[j] - 1)]).epsilon(1e-12));
    CHECK_THROWS(model.score_candidates(states, std::vector<std::int64_t>{0}));
  }
  SUBCASE("without the temporal level no placeholder term exists") {
    auto no_t = build_tiny([](ModelConfig& c) { apply_variant(c, "-TMoE"); });
    const auto terms = no_t.model->loss(no_t.setup.batch, StepContext{true, 1, 0, 0});
    CHECK_FALSE(terms.pcl.defined());
    CHECK(terms.breakdown.pcl == 0.0);
    CHECK(terms.breakdown.lambda3 == 0.0);
  }
}
