// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>

#include "doctest.h"
#include "hm4sr/core/checkpoint.hpp"
#include "hm4sr/core/gradcheck.hpp"
#include "hm4sr/core/ops.hpp"
#include "hm4sr/core/rng.hpp"
#include "test_support.hpp"

using namespace hm4sr;
using hm4sr::testing::random_tensor;
using hm4sr::testing::TempDir;
using hm4sr::testing::weighted_sum;
using T = Tensor<double>;

namespace {

T vec(std::vector<double> v, bool grad = false) {
  const std::size_t n = v.size();
  return T::from_values({n}, std::move(v), grad);
}

bool contains(const std::string& text, const std::string& part) {
  return text.find(part) != std::string::npos;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("softmax of equal logits is uniform") {
  const T s = ops::softmax_last_dim(vec({0.0, 0.0}));
  CHECK(s[0] == doctest::Approx(0.5));
  CHECK(s[1] == doctest::Approx(0.5));
}

TEST_CASE("concat keeps id, txt, img order") {
  const T parts[] = {vec({1, 2, 3, 4}), vec({5, 6, 7, 8}), vec({9, 10, 11, 12})};
  const T c = ops::concat_last_dim<double>(parts);
  REQUIRE(c.shape() == Shape{12});
  for (std::size_t i = 0; i < 12; ++i) CHECK(c[i] == double(i + 1));
}

TEST_CASE("matmul of all-ones 2x3 by 3x2 gives 3s") {
  const T a = T::filled({2, 3}, 1.0), b = T::filled({3, 2}, 1.0);
  const T c = ops::matmul(a, b);
  REQUIRE(c.shape() == Shape{2, 2});
  for (double v : c.values()) CHECK(v == 3.0);
}

TEST_CASE("matmul against a naive triple loop") {
  std::mt19937_64 rng(3);
  const T a = random_tensor(rng, {2, 5, 7}), b = random_tensor(rng, {2, 7, 4});
  const T w = random_tensor(rng, {7, 4});
  const T c = ops::matmul(a, b), shared = ops::matmul(a, w);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        double acc = 0, acc_w = 0;
        for (std::size_t k = 0; k < 7; ++k) {
          acc += a[n * 35 + i * 7 + k] * b[n * 28 + k * 4 + j];
          acc_w += a[n * 35 + i * 7 + k] * w[k * 4 + j];
        }
        CHECK(c[n * 20 + i * 4 + j] == doctest::Approx(acc).epsilon(1e-12));
        CHECK(shared[n * 20 + i * 4 + j] == doctest::Approx(acc_w).epsilon(1e-12));
      }
}

TEST_CASE("backward of sum gives ones") {
  Tape<double> tape;
  T w = vec({0.3, -1.0, 2.0}, true);
  TapeScope<double> scope(tape);
  T loss = ops::sum(w);
  tape.backward(loss);
  for (double g : w.grad()) CHECK(g == 1.0);
  CHECK(tape.size() == 0);
}

TEST_CASE("product rule: grad of sum(a*b) w.r.t. a is b") {
  Tape<double> tape;
  T a = vec({1.0, 2.0, 3.0}, true), b = vec({-4.0, 0.5, 7.0}, true);
  TapeScope<double> scope(tape);
  T loss = ops::sum(ops::mul(a, b));
  tape.backward(loss);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.grad()[i] == b[i]);
    CHECK(b.grad()[i] == a[i]);
  }
}

TEST_CASE("softmax cross-entropy gradient is softmax minus one-hot") {
  // softmax([1,2,3]) evaluated independently; target class 2.
  const double expected[] = {0.09003057317038046, 0.24472847105479767,
                             0.6652409557748219 - 1.0};
  Tape<double> tape;
  T logits = vec({1.0, 2.0, 3.0}, true);
  const T onehot = vec({0.0, 0.0, 1.0});
  TapeScope<double> scope(tape);
  T loss = ops::scale(ops::sum(ops::mul(ops::log_softmax_last_dim(logits), onehot)), -1.0);
  tape.backward(loss);
  for (std::size_t i = 0; i < 3; ++i) CHECK(logits.grad()[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("gradients accumulate across uses of one tensor") {
  Tape<double> tape;
  T x = vec({1.5, -2.0}, true);
  TapeScope<double> scope(tape);
  T loss = ops::add(ops::sum(ops::mul(x, x)), ops::sum(x));
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(4.0));
  CHECK(x.grad()[1] == doctest::Approx(-3.0));
}

TEST_CASE("frozen and unreachable tensors get no gradient") {
  Tape<double> tape;
  T w = vec({1.0, 2.0}, true), frozen = vec({3.0, 4.0}), unused = vec({5.0, 6.0}, true);
  TapeScope<double> scope(tape);
  T loss = ops::sum(ops::mul(w, frozen));
  tape.backward(loss);
  CHECK(frozen.grad().empty());
  for (double g : unused.grad()) CHECK(g == 0.0);
}

TEST_CASE("backward rejects a non-scalar loss") {
  Tape<double> tape;
  T w = vec({1.0, 2.0}, true);
  TapeScope<double> scope(tape);
  T out = ops::scale(w, 2.0);
  CHECK_THROWS_AS(tape.backward(out), ShapeError);
}

TEST_CASE("ops record nothing without an active tape") {
  Tape<double> tape;
  T w = vec({1.0, 2.0}, true);
  T out = ops::sum(ops::mul(w, w));
  CHECK(tape.size() == 0);
  CHECK(active_tape<double>() == nullptr);
}

TEST_CASE("shape mismatches name the op and both shapes") {
  const T a = T::zeros({2, 3}), b = T::zeros({4, 2});
  const std::string msg = error_of([&] { ops::matmul(a, b); });
  CHECK(contains(msg, "matmul"));
  CHECK(contains(msg, "[2,3]"));
  CHECK(contains(msg, "[4,2]"));
  CHECK_THROWS_AS(ops::add(T::zeros({2, 3}), T::zeros({3, 2})), ShapeError);
  CHECK_THROWS_AS(ops::mul(T::zeros({2, 3}), T::zeros({2})), ShapeError);
}

TEST_CASE("unknown primitive names are rejected") {
  CHECK_THROWS_AS(ops::primitive_from_name("conv2d"), std::invalid_argument);
  CHECK(ops::primitive_from_name("layer_norm") == ops::Primitive::layer_norm);
  CHECK(ops::primitive_name(ops::Primitive::cosine_similarity) == "cosine_similarity");
}

TEST_CASE("log of a non-positive value names the index") {
  const std::string msg = error_of([] { ops::log(vec({1.0, 2.0, 0.0, 3.0})); });
  CHECK(contains(msg, "index 2"));
  CHECK_THROWS_AS(ops::log(vec({-1.0})), std::domain_error);
}

TEST_CASE("apply_primitive dispatches to the typed ops") {
  std::mt19937_64 rng(11);
  const T a = random_tensor(rng, {3, 4}), b = random_tensor(rng, {4, 2});
  const T ab[] = {a, b};
  const auto out = ops::apply_primitive<double>(ops::Primitive::matmul, ab, {});
  REQUIRE(out.size() == 1);
  const T ref = ops::matmul(a, b);
  for (std::size_t i = 0; i < ref.numel(); ++i) CHECK(out[0][i] == ref[i]);

  ops::PrimitiveAttrs attrs;
  attrs.parts = 2;
  const T only_a[] = {a};
  CHECK(ops::apply_primitive<double>(ops::Primitive::split_last_dim, only_a, attrs).size() == 2);
  CHECK_THROWS(ops::apply_primitive<double>(ops::Primitive::matmul, only_a, {}));
}

TEST_CASE("dropout") {
  std::mt19937_64 rng(5);
  const T x = random_tensor(rng, {40, 50});
  SUBCASE("eval mode is bitwise identity") {
    const T y = ops::dropout(x, 0.5, false, 123);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
  }
  SUBCASE("training zeroes entries and rescales survivors") {
    const double rate = 0.25;
    const T y = ops::dropout(x, rate, true, 99);
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
      if (y[i] == 0.0) ++zeros;
      else CHECK(y[i] == doctest::Approx(x[i] / (1.0 - rate)));
    }
    const double frac = double(zeros) / double(x.numel());
    CHECK(frac == doctest::Approx(rate).epsilon(0.2));
  }
  SUBCASE("mask is a function of the key") {
    const T y1 = ops::dropout(x, 0.3, true, 7), y2 = ops::dropout(x, 0.3, true, 7);
    const T y3 = ops::dropout(x, 0.3, true, 8);
    bool differs = false;
    for (std::size_t i = 0; i < x.numel(); ++i) {
      CHECK(y1[i] == y2[i]);
      differs = differs || y1[i] != y3[i];
    }
    CHECK(differs);
  }
  SUBCASE("rate outside [0, 1) is rejected") {
    CHECK_THROWS_AS(ops::dropout(x, 1.0, true, 1), std::invalid_argument);
    CHECK_THROWS_AS(ops::dropout(x, -0.1, true, 1), std::invalid_argument);
  }
}

TEST_CASE("softmax rows are simplices and layer_norm rows are standardized") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    const T x = random_tensor(rng, {6, 9}, -30.0, 30.0);
    const T s = ops::softmax_last_dim(x);
    const T ln = ops::layer_norm(x, T::filled({9}, 1.0), T::zeros({9}));
    for (std::size_t r = 0; r < 6; ++r) {
      double total = 0, mean = 0, var = 0;
      for (std::size_t c = 0; c < 9; ++c) {
        CHECK(s[r * 9 + c] >= 0.0);
        total += s[r * 9 + c];
        mean += ln[r * 9 + c] / 9.0;
      }
      for (std::size_t c = 0; c < 9; ++c) var += (ln[r * 9 + c] - mean) * (ln[r * 9 + c] - mean) / 9.0;
      CHECK(std::abs(total - 1.0) <= 1e-6);
      CHECK(std::abs(mean) <= 1e-5);
      CHECK(std::abs(var - 1.0) <= 1e-4);
    }
  }
}

TEST_CASE("log_softmax stays finite for large logits") {
  const T y = ops::log_softmax_last_dim(vec({1000.0, 0.0, -1000.0}));
  CHECK(y[0] == doctest::Approx(0.0));
  CHECK(std::isfinite(y[2]));
}

TEST_CASE("embedding_lookup never sends gradient to the padding row") {
  Tape<double> tape;
  std::mt19937_64 rng(2);
  T table = random_tensor(rng, {4, 3}, -1, 1, true);
  const std::vector<std::int64_t> idx{0, 2, 0, 3};
  TapeScope<double> scope(tape);
  T loss = ops::sum(ops::embedding_lookup<double>(table, idx, {2, 2}, 0));
  tape.backward(loss);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(table.grad()[c] == 0.0);
    CHECK(table.grad()[3 + c] == 0.0);
    CHECK(table.grad()[6 + c] == 1.0);
    CHECK(table.grad()[9 + c] == 1.0);
  }
  const std::vector<std::int64_t> bad{4};
  CHECK_THROWS_AS(ops::embedding_lookup<double>(table, bad, {1}), std::out_of_range);
}

TEST_CASE("grad_check on sum of squares") {
  T x = vec({1.0, 2.0});
  std::vector<NamedTensor<double>> params{{"x", x}};
  const GradCheckReport report =
      grad_check<double>([&] { return ops::sum(ops::mul(x, x)); }, params, {1e-5, 1e-8, 1e-6});
  REQUIRE(report.tensors.size() == 1);
  CHECK(report.passed);
  CHECK(report.tensors[0].max_rel_error <= 1e-8);
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("grad_check of a constant function") {
  T x = vec({1.0, 2.0});
  std::vector<NamedTensor<double>> params{{"x", x}};
  const GradCheckReport report = grad_check<double>(
      [&] { return ops::add(ops::scale(ops::sum(x), 0.0), T::scalar(3.0)); }, params);
  CHECK(report.passed);
  CHECK(report.tensors[0].max_abs_error <= 1e-9);
}

TEST_CASE("grad_check rejects a non-deterministic function") {
  T x = vec({1.0});
  std::vector<NamedTensor<double>> params{{"x", x}};
  int calls = 0;
  CHECK_THROWS_AS(grad_check<double>(
                      [&] { return ops::scale(ops::sum(x), 1.0 + 0.01 * ++calls); }, params),
                  std::runtime_error);
}

// Every primitive against central differences on random inputs.
namespace {

struct Case {
  std::vector<NamedTensor<double>> params;
  std::function<T()> loss;
};

using CaseFactory = std::function<Case(std::mt19937_64&)>;

T rnd(std::mt19937_64& rng, Shape s, double lo = -1.0, double hi = 1.0) {
  return random_tensor(rng, std::move(s), lo, hi);
}

std::vector<std::pair<const char*, CaseFactory>> primitive_cases() {
  std::vector<std::pair<const char*, CaseFactory>> out;
  out.emplace_back("matmul", [](std::mt19937_64& r) {
    T a = rnd(r, {2, 3, 4}), b = rnd(r, {2, 4, 3}), w = rnd(r, {4, 2});
    T p1 = rnd(r, {2, 3, 3}), p2 = rnd(r, {2, 3, 2});
    return Case{{{"a", a}, {"b", b}, {"w", w}}, [=] {
                  return ops::add(weighted_sum(ops::matmul(a, b), p1),
                                  weighted_sum(ops::matmul(a, w), p2));
                }};
  });
  out.emplace_back("add/subtract", [](std::mt19937_64& r) {
    T a = rnd(r, {3, 5}), b = rnd(r, {3, 5}), bias = rnd(r, {5}), p = rnd(r, {3, 5});
    return Case{{{"a", a}, {"b", b}, {"bias", bias}}, [=] {
                  return weighted_sum(ops::subtract(ops::add(a, bias), b), p);
                }};
  });
  out.emplace_back("elementwise_mul", [](std::mt19937_64& r) {
    T a = rnd(r, {3, 5}), b = rnd(r, {3, 5}), row = rnd(r, {5}), p = rnd(r, {3, 5});
    return Case{{{"a", a}, {"b", b}, {"row", row}}, [=] {
                  return weighted_sum(ops::mul(ops::mul(a, b), row), p);
                }};
  });
  out.emplace_back("scale", [](std::mt19937_64& r) {
    T x = rnd(r, {4, 3}), f = rnd(r, {1}), p = rnd(r, {4, 3});
    return Case{{{"x", x}, {"f", f}}, [=] {
                  return weighted_sum(ops::scale(ops::scale(x, f), -1.7), p);
                }};
  });
  out.emplace_back("concat/split", [](std::mt19937_64& r) {
    T a = rnd(r, {2, 3}), b = rnd(r, {2, 3}), c = rnd(r, {2, 3}), p = rnd(r, {2, 9});
    T q = rnd(r, {2, 3});
    return Case{{{"a", a}, {"b", b}, {"c", c}}, [=] {
                  const T parts[] = {a, b, c};
                  const T cat = ops::concat_last_dim<double>(parts);
                  const auto back = ops::split_last_dim(ops::mul(cat, cat), 3);
                  return ops::add(weighted_sum(cat, p), weighted_sum(back[1], q));
                }};
  });
  out.emplace_back("softmax", [](std::mt19937_64& r) {
    T x = rnd(r, {3, 6}, -3, 3), p = rnd(r, {3, 6});
    return Case{{{"x", x}}, [=] { return weighted_sum(ops::softmax_last_dim(x), p); }};
  });
  out.emplace_back("log_softmax", [](std::mt19937_64& r) {
    T x = rnd(r, {3, 6}, -3, 3), p = rnd(r, {3, 6});
    return Case{{{"x", x}}, [=] { return weighted_sum(ops::log_softmax_last_dim(x), p); }};
  });
  out.emplace_back("layer_norm", [](std::mt19937_64& r) {
    T x = rnd(r, {4, 5}, -2, 2), g = rnd(r, {5}), b = rnd(r, {5}), p = rnd(r, {4, 5});
    return Case{{{"x", x}, {"gain", g}, {"bias", b}},
                [=] { return weighted_sum(ops::layer_norm(x, g, b), p); }};
  });
  out.emplace_back("dropout", [](std::mt19937_64& r) {
    T x = rnd(r, {4, 6}), p = rnd(r, {4, 6});
    const std::uint64_t key = r();
    return Case{{{"x", x}}, [=] { return weighted_sum(ops::dropout(x, 0.3, true, key), p); }};
  });
  out.emplace_back("cos/exp/gelu/softplus", [](std::mt19937_64& r) {
    T x = rnd(r, {3, 4}, -2, 2), p = rnd(r, {3, 4});
    return Case{{{"x", x}}, [=] {
                  T acc = weighted_sum(ops::cos(x), p);
                  acc = ops::add(acc, weighted_sum(ops::exp(x), p));
                  acc = ops::add(acc, weighted_sum(ops::gelu(x), p));
                  return ops::add(acc, weighted_sum(ops::softplus(x), p));
                }};
  });
  out.emplace_back("log", [](std::mt19937_64& r) {
    T x = rnd(r, {3, 4}, 0.5, 2.0), p = rnd(r, {3, 4});
    return Case{{{"x", x}}, [=] { return weighted_sum(ops::log(x), p); }};
  });
  out.emplace_back("embedding_lookup", [](std::mt19937_64& r) {
    T table = rnd(r, {5, 3}), p = rnd(r, {2, 3, 3});
    std::vector<std::int64_t> idx(6);
    for (auto& i : idx) i = static_cast<std::int64_t>(r() % 5);
    return Case{{{"table", table}}, [=] {
                  return weighted_sum(ops::embedding_lookup<double>(table, idx, {2, 3}), p);
                }};
  });
  out.emplace_back("cosine_similarity", [](std::mt19937_64& r) {
    T a = rnd(r, {3, 4}), b = rnd(r, {2, 4}), p = rnd(r, {3, 2});
    return Case{{{"a", a}, {"b", b}},
                [=] { return weighted_sum(ops::cosine_similarity(a, b), p); }};
  });
  out.emplace_back("masked_fill", [](std::mt19937_64& r) {
    T x = rnd(r, {3, 4}), p = rnd(r, {3, 4});
    std::vector<std::uint8_t> mask(12);
    for (auto& m : mask) m = static_cast<std::uint8_t>(r() % 2);
    return Case{{{"x", x}}, [=] { return weighted_sum(ops::masked_fill<double>(x, mask, -5.0), p); }};
  });
  out.emplace_back("transpose_last_two", [](std::mt19937_64& r) {
    T x = rnd(r, {2, 3, 4}), p = rnd(r, {2, 4, 3});
    return Case{{{"x", x}}, [=] { return weighted_sum(ops::transpose_last_two(x), p); }};
  });
  out.emplace_back("take_step", [](std::mt19937_64& r) {
    T x = rnd(r, {2, 5, 3}), p = rnd(r, {2, 3});
    const std::size_t pos = r() % 5;
    return Case{{{"x", x}}, [=] { return weighted_sum(ops::take_step(x, pos), p); }};
  });
  out.emplace_back("expert_mix", [](std::mt19937_64& r) {
    T g = rnd(r, {2, 3, 4}), o = rnd(r, {2, 3, 20}), p = rnd(r, {2, 3, 5});
    return Case{{{"gates", g}, {"outputs", o}},
                [=] { return weighted_sum(ops::expert_mix(g, o), p); }};
  });
  out.emplace_back("mean/sum", [](std::mt19937_64& r) {
    T x = rnd(r, {3, 4});
    return Case{{{"x", x}}, [=] {
                  return ops::add(ops::mul(ops::mean(x), ops::mean(x)), ops::sum(ops::mul(x, x)));
                }};
  });
  return out;
}

}  // namespace

TEST_CASE("every primitive passes finite differences over 100 seeds") {
  for (auto& [name, factory] : primitive_cases()) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      std::mt19937_64 rng(mix_key(seed, fnv1a(name)));
      Case c = factory(rng);
      const GradCheckReport report = grad_check<double>(c.loss, c.params);
      worst = std::max(worst, report.worst());
    }
    INFO(name << " worst relative error " << worst);
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("counter-based draws") {
  const std::uint64_t key = site_key(42, 3, 17, "enc.id.in");
  CHECK(key == site_key(42, 3, 17, "enc.id.in"));
  CHECK(key != site_key(42, 3, 18, "enc.id.in"));
  CHECK(key != site_key(42, 3, 17, "enc.txt.in"));
  double total = 0;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const double u = counter_uniform(key, i);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    total += u;
  }
  CHECK(total / 10000 == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("checkpoint") {
  TempDir dir("ckpt");
  std::mt19937_64 rng(8);
  ParamStore<float> params;
  params.add("a.W", random_tensor<float>(rng, {3, 4}));
  params.add("a.b", random_tensor<float>(rng, {4}));
  params.add("table", random_tensor<float>(rng, {2, 2, 3}));
  const auto path = dir / "model.ckpt";
  save_checkpoint<float>(path, params.entries());

  SUBCASE("round trip is bitwise") {
    const auto loaded = load_checkpoint<float>(path);
    REQUIRE(loaded.size() == 3);
    for (std::size_t t = 0; t < 3; ++t) {
      CHECK(loaded[t].name == params.entries()[t].name);
      CHECK(loaded[t].tensor.shape() == params.entries()[t].tensor.shape());
      const std::span<const float> a = loaded[t].tensor.values();
      const std::span<const float> b = params.entries()[t].tensor.values();
      CHECK(std::memcmp(a.data(), b.data(), a.size_bytes()) == 0);
    }
    const auto before = params.snapshot();
    for (auto& e : params.entries()) std::fill(e.tensor.values().begin(), e.tensor.values().end(), 0.f);
    restore_checkpoint<float>(path, params);
    CHECK(params.snapshot() == before);
  }
  SUBCASE("manifest is tab-separated text") {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "a.W\tf32\t3,4");
    std::getline(in, line);
    CHECK(line == "a.b\tf32\t4");
  }
  SUBCASE("truncation names the tensor and modifies nothing") {
    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 5);
    const auto before = params.snapshot();
    const std::string msg = error_of([&] { restore_checkpoint<float>(path, params); });
    CHECK(contains(msg, "table"));
    CHECK(params.snapshot() == before);
  }
  SUBCASE("trailing bytes are rejected") {
    std::ofstream(path, std::ios::app | std::ios::binary) << "xx";
    CHECK_THROWS_AS(load_checkpoint<float>(path), CheckpointError);
  }
  SUBCASE("shape mismatch on restore") {
    ParamStore<float> other;
    other.add("a.W", Tensor<float>::zeros({4, 3}));
    other.add("a.b", Tensor<float>::zeros({4}));
    other.add("table", Tensor<float>::zeros({2, 2, 3}));
    CHECK_THROWS_AS(restore_checkpoint<float>(path, other), CheckpointError);
  }
  SUBCASE("f32 file loads at f64") {
    const auto loaded = load_checkpoint<double>(path);
    CHECK(loaded[0].tensor[5] == double(params.entries()[0].tensor[5]));
  }
}
