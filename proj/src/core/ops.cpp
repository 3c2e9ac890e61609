// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#include "hm4sr/core/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "hm4sr/core/rng.hpp"

namespace hm4sr::ops {

namespace {

constexpr std::array<std::pair<Primitive, std::string_view>, 24> kNames{{
    {Primitive::matmul, "matmul"},
    {Primitive::add, "add"},
    {Primitive::subtract, "subtract"},
    {Primitive::scale, "scale"},
    {Primitive::elementwise_mul, "elementwise_mul"},
    {Primitive::concat_last_dim, "concat_last_dim"},
    {Primitive::split_last_dim, "split_last_dim"},
    {Primitive::softmax_last_dim, "softmax_last_dim"},
    {Primitive::log_softmax_last_dim, "log_softmax_last_dim"},
    {Primitive::layer_norm, "layer_norm"},
    {Primitive::dropout, "dropout"},
    {Primitive::cos, "cos"},
    {Primitive::exp, "exp"},
    {Primitive::log, "log"},
    {Primitive::gelu, "gelu"},
    {Primitive::softplus, "softplus"},
    {Primitive::embedding_lookup, "embedding_lookup"},
    {Primitive::cosine_similarity, "cosine_similarity"},
    {Primitive::masked_fill, "masked_fill"},
    {Primitive::transpose_last_two, "transpose_last_two"},
    {Primitive::take_step, "take_step"},
    {Primitive::expert_mix, "expert_mix"},
    {Primitive::mean, "mean"},
    {Primitive::sum, "sum"},
}};

[[noreturn]] void shape_fail(std::string_view op, const Shape& a,
                             const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " +
                   shape_to_string(a) + " and " + shape_to_string(b));
}

[[noreturn]] void shape_fail(std::string_view op, const Shape& a,
                             std::string_view why) {
  throw ShapeError(std::string(op) + ": shape " + shape_to_string(a) + " " +
                   std::string(why));
}

template <typename Real>
using NodePtr = std::shared_ptr<TensorNode<Real>>;

template <typename Real>
Tensor<Real> make_output(Shape shape, bool record) {
  return Tensor<Real>::zeros(std::move(shape), record);
}

template <typename Real>
void record(std::string_view op, std::vector<Tensor<Real>> inputs,
            const Tensor<Real>& out, typename Tape<Real>::BackwardFn fn) {
  active_tape<Real>()->record(op, std::move(inputs), out, std::move(fn));
}

// C[rows, m] += A[rows, k] * B[k, m]
template <typename Real>
void gemm_nn(const Real* a, const Real* b, Real* c, std::size_t rows,
             std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < rows; ++i) {
    Real* ci = c + i * m;
    const Real* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = ai[p];
      const Real* bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
}

// dA[rows, k] += dC[rows, m] * B[k, m]^T
template <typename Real>
void gemm_nt(const Real* dc, const Real* b, Real* da, std::size_t rows,
             std::size_t k, std::size_t m) {
  // Eight independent partial sums let the compiler vectorize the dot
  // product without reassociating floating-point adds.
  constexpr std::size_t lanes = 8;
  for (std::size_t i = 0; i < rows; ++i) {
    const Real* dci = dc + i * m;
    Real* dai = da + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const Real* bp = b + p * m;
      Real part[lanes] = {};
      std::size_t j = 0;
      for (; j + lanes <= m; j += lanes)
        for (std::size_t l = 0; l < lanes; ++l) part[l] += dci[j + l] * bp[j + l];
      Real acc = 0;
      for (; j < m; ++j) acc += dci[j] * bp[j];
      for (std::size_t l = 0; l < lanes; ++l) acc += part[l];
      dai[p] += acc;
    }
  }
}

// dB[k, m] += A[rows, k]^T * dC[rows, m]
template <typename Real>
void gemm_tn(const Real* a, const Real* dc, Real* db, std::size_t rows,
             std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < rows; ++i) {
    const Real* ai = a + i * k;
    const Real* dci = dc + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = ai[p];
      Real* dbp = db + p * m;
      for (std::size_t j = 0; j < m; ++j) dbp[j] += av * dci[j];
    }
  }
}

bool is_row_vector_of(const Shape& a, const Shape& b) {
  return b.size() == 1 && a.size() >= 2 && b[0] == a.back();
}

enum class Binary { add, subtract, mul };

template <typename Real>
Tensor<Real> binary(std::string_view name, Binary kind, const Tensor<Real>& a,
                    const Tensor<Real>& b) {
  const bool same = a.shape() == b.shape();
  const bool rowwise = !same && is_row_vector_of(a.shape(), b.shape());
  if (!same && !rowwise) shape_fail(name, a.shape(), b.shape());
  const bool rec = should_record<Real>({&a, &b});
  Tensor<Real> out = make_output<Real>(a.shape(), rec);
  const std::size_t n = a.numel();
  const std::size_t width = b.numel();
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < n; ++i) {
    const Real bi = same ? bv[i] : bv[i % width];
    switch (kind) {
      case Binary::add: ov[i] = av[i] + bi; break;
      case Binary::subtract: ov[i] = av[i] - bi; break;
      case Binary::mul: ov[i] = av[i] * bi; break;
    }
  }
  if (rec) {
    NodePtr<Real> an = a.shared_node(), bn = b.shared_node(),
                  on = out.shared_node();
    record<Real>(name, {a, b}, out, [an, bn, on, kind, same, n, width] {
      const auto& g = on->grad;
      if (an->requires_grad) {
        for (std::size_t i = 0; i < n; ++i) {
          const Real bi = same ? bn->values[i] : bn->values[i % width];
          an->grad[i] += kind == Binary::mul ? g[i] * bi : g[i];
        }
      }
      if (bn->requires_grad) {
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t j = same ? i : i % width;
          switch (kind) {
            case Binary::add: bn->grad[j] += g[i]; break;
            case Binary::subtract: bn->grad[j] -= g[i]; break;
            case Binary::mul: bn->grad[j] += g[i] * an->values[i]; break;
          }
        }
      }
    });
  }
  return out;
}

// Unary elementwise op: forward f(x), derivative df(x, y).
template <typename Real, typename F, typename DF>
Tensor<Real> unary(std::string_view name, const Tensor<Real>& x, F f, DF df) {
  const bool rec = should_record<Real>({&x});
  Tensor<Real> out = make_output<Real>(x.shape(), rec);
  auto xv = x.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = f(xv[i]);
  if (rec) {
    NodePtr<Real> xn = x.shared_node(), on = out.shared_node();
    record<Real>(name, {x}, out, [xn, on, df] {
      for (std::size_t i = 0; i < xn->values.size(); ++i) {
        xn->grad[i] += on->grad[i] * df(xn->values[i], on->values[i]);
      }
    });
  }
  return out;
}

template <typename Real>
const Tensor<Real>& input_at(std::span<const Tensor<Real>> inputs,
                             std::size_t i, Primitive op) {
  if (i >= inputs.size()) {
    throw std::invalid_argument(std::string(primitive_name(op)) +
                                ": missing input " + std::to_string(i));
  }
  return inputs[i];
}

}  // namespace

Primitive primitive_from_name(std::string_view name) {
  for (const auto& [op, op_name] : kNames) {
    if (op_name == name) return op;
  }
  throw std::invalid_argument("unknown primitive '" + std::string(name) + "'");
}

std::string_view primitive_name(Primitive op) {
  for (const auto& [candidate, op_name] : kNames) {
    if (candidate == op) return op_name;
  }
  throw std::invalid_argument("unknown primitive id " +
                              std::to_string(static_cast<int>(op)));
}

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2) shape_fail("matmul", as, bs);
  const std::size_t k = as.back();
  const std::size_t n = as[as.size() - 2];
  const std::size_t m = bs.back();
  if (bs[bs.size() - 2] != k) shape_fail("matmul", as, bs);
  const bool shared_rhs = bs.size() == 2;
  std::size_t batches = 1;
  if (!shared_rhs) {
    if (bs.size() != as.size() ||
        !std::equal(as.begin(), as.end() - 2, bs.begin())) {
      shape_fail("matmul", as, bs);
    }
    batches = a.numel() / (n * k);
  }
  Shape out_shape = as;
  out_shape.back() = m;
  const bool rec = should_record<Real>({&a, &b});
  Tensor<Real> out = make_output<Real>(out_shape, rec);
  if (shared_rhs) {
    gemm_nn(a.values().data(), b.values().data(), out.values().data(),
            a.numel() / k, k, m);
  } else {
    for (std::size_t t = 0; t < batches; ++t) {
      gemm_nn(a.values().data() + t * n * k, b.values().data() + t * k * m,
              out.values().data() + t * n * m, n, k, m);
    }
  }
  if (rec) {
    NodePtr<Real> an = a.shared_node(), bn = b.shared_node(),
                  on = out.shared_node();
    record<Real>("matmul", {a, b}, out,
                 [an, bn, on, shared_rhs, batches, n, k, m] {
                   const Real* g = on->grad.data();
                   if (shared_rhs) {
                     const std::size_t rows = an->values.size() / k;
                     if (an->requires_grad)
                       gemm_nt(g, bn->values.data(), an->grad.data(), rows, k, m);
                     if (bn->requires_grad)
                       gemm_tn(an->values.data(), g, bn->grad.data(), rows, k, m);
                     return;
                   }
                   for (std::size_t t = 0; t < batches; ++t) {
                     if (an->requires_grad)
                       gemm_nt(g + t * n * m, bn->values.data() + t * k * m,
                               an->grad.data() + t * n * k, n, k, m);
                     if (bn->requires_grad)
                       gemm_tn(an->values.data() + t * n * k, g + t * n * m,
                               bn->grad.data() + t * k * m, n, k, m);
                   }
                 });
  }
  return out;
}

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary("add", Binary::add, a, b);
}

template <typename Real>
Tensor<Real> subtract(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary("subtract", Binary::subtract, a, b);
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary("elementwise_mul", Binary::mul, a, b);
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& x, double factor) {
  const Real f = static_cast<Real>(factor);
  return unary(
      "scale", x, [f](Real v) { return v * f; },
      [f](Real, Real) { return f; });
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& x, const Tensor<Real>& factor) {
  if (factor.numel() != 1) shape_fail("scale", factor.shape(), "is not a scalar");
  const bool rec = should_record<Real>({&x, &factor});
  Tensor<Real> out = make_output<Real>(x.shape(), rec);
  const Real f = factor[0];
  auto xv = x.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = f * xv[i];
  if (rec) {
    NodePtr<Real> xn = x.shared_node(), fn = factor.shared_node(),
                  on = out.shared_node();
    record<Real>("scale", {x, factor}, out, [xn, fn, on] {
      const Real fv = fn->values[0];
      Real acc = 0;
      for (std::size_t i = 0; i < xn->values.size(); ++i) {
        if (xn->requires_grad) xn->grad[i] += on->grad[i] * fv;
        acc += on->grad[i] * xn->values[i];
      }
      if (fn->requires_grad) fn->grad[0] += acc;
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> concat_last_dim(std::span<const Tensor<Real>> parts) {
  if (parts.empty()) throw ShapeError("concat_last_dim: no inputs");
  const Shape& lead = parts[0].shape();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  bool any_grad = false;
  for (const auto& p : parts) {
    if (p.rank() != lead.size() ||
        !std::equal(lead.begin(), lead.end() - 1, p.shape().begin())) {
      shape_fail("concat_last_dim", lead, p.shape());
    }
    widths.push_back(p.last_dim());
    total += p.last_dim();
    any_grad = any_grad || p.requires_grad();
  }
  const bool rec = active_tape<Real>() != nullptr && any_grad;
  Shape out_shape = lead;
  out_shape.back() = total;
  Tensor<Real> out = make_output<Real>(out_shape, rec);
  const std::size_t rows = parts[0].numel() / widths[0];
  auto ov = out.values();
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto pv = parts[p].values();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(pv.begin() + r * widths[p], widths[p],
                  ov.begin() + r * total + offset);
    }
    offset += widths[p];
  }
  if (rec) {
    std::vector<NodePtr<Real>> nodes;
    for (const auto& p : parts) nodes.push_back(p.shared_node());
    NodePtr<Real> on = out.shared_node();
    record<Real>("concat_last_dim",
                 std::vector<Tensor<Real>>(parts.begin(), parts.end()), out,
                 [nodes, on, widths, rows, total] {
                   std::size_t off = 0;
                   for (std::size_t p = 0; p < nodes.size(); ++p) {
                     if (nodes[p]->requires_grad) {
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t j = 0; j < widths[p]; ++j) {
                           nodes[p]->grad[r * widths[p] + j] +=
                               on->grad[r * total + off + j];
                         }
                       }
                     }
                     off += widths[p];
                   }
                 });
  }
  return out;
}

template <typename Real>
std::vector<Tensor<Real>> split_last_dim(const Tensor<Real>& x,
                                         std::size_t parts) {
  if (parts == 0 || x.last_dim() % parts != 0) {
    shape_fail("split_last_dim", x.shape(),
               "is not divisible into " + std::to_string(parts) + " parts");
  }
  const std::size_t total = x.last_dim();
  const std::size_t width = total / parts;
  const std::size_t rows = x.numel() / total;
  const bool rec = should_record<Real>({&x});
  Shape out_shape = x.shape();
  out_shape.back() = width;
  std::vector<Tensor<Real>> outs;
  for (std::size_t p = 0; p < parts; ++p) {
    Tensor<Real> out = make_output<Real>(out_shape, rec);
    auto xv = x.values();
    auto ov = out.values();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(xv.begin() + r * total + p * width, width,
                  ov.begin() + r * width);
    }
    if (rec) {
      NodePtr<Real> xn = x.shared_node(), on = out.shared_node();
      record<Real>("split_last_dim", {x}, out, [xn, on, p, width, rows, total] {
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < width; ++j) {
            xn->grad[r * total + p * width + j] += on->grad[r * width + j];
          }
        }
      });
    }
    outs.push_back(std::move(out));
  }
  return outs;
}

template <typename Real>
Tensor<Real> softmax_last_dim(const Tensor<Real>& x) {
  const std::size_t width = x.last_dim();
  const std::size_t rows = x.numel() / width;
  const bool rec = should_record<Real>({&x});
  Tensor<Real> out = make_output<Real>(x.shape(), rec);
  auto xv = x.values();
  auto ov = out.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xr = xv.data() + r * width;
    Real* yr = ov.data() + r * width;
    const Real mx = *std::max_element(xr, xr + width);
    Real total = 0;
    for (std::size_t j = 0; j < width; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      total += yr[j];
    }
    for (std::size_t j = 0; j < width; ++j) yr[j] /= total;
  }
  if (rec) {
    NodePtr<Real> xn = x.shared_node(), on = out.shared_node();
    record<Real>("softmax_last_dim", {x}, out, [xn, on, rows, width] {
      for (std::size_t r = 0; r < rows; ++r) {
        const Real* y = on->values.data() + r * width;
        const Real* g = on->grad.data() + r * width;
        Real dot = 0;
        for (std::size_t j = 0; j < width; ++j) dot += g[j] * y[j];
        Real* dx = xn->grad.data() + r * width;
        for (std::size_t j = 0; j < width; ++j) dx[j] += y[j] * (g[j] - dot);
      }
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> log_softmax_last_dim(const Tensor<Real>& x) {
  const std::size_t width = x.last_dim();
  const std::size_t rows = x.numel() / width;
  const bool rec = should_record<Real>({&x});
  Tensor<Real> out = make_output<Real>(x.shape(), rec);
  auto xv = x.values();
  auto ov = out.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xr = xv.data() + r * width;
    Real* yr = ov.data() + r * width;
    const Real mx = *std::max_element(xr, xr + width);
    Real total = 0;
    for (std::size_t j = 0; j < width; ++j) total += std::exp(xr[j] - mx);
    const Real lse = mx + std::log(total);
    for (std::size_t j = 0; j < width; ++j) yr[j] = xr[j] - lse;
  }
  if (rec) {
    NodePtr<Real> xn = x.shared_node(), on = out.shared_node();
    record<Real>("log_softmax_last_dim", {x}, out, [xn, on, rows, width] {
      for (std::size_t r = 0; r < rows; ++r) {
        const Real* y = on->values.data() + r * width;
        const Real* g = on->grad.data() + r * width;
        Real gsum = 0;
        for (std::size_t j = 0; j < width; ++j) gsum += g[j];
        Real* dx = xn->grad.data() + r * width;
        for (std::size_t j = 0; j < width; ++j)
          dx[j] += g[j] - std::exp(y[j]) * gsum;
      }
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gain,
                        const Tensor<Real>& bias, double epsilon) {
  const std::size_t width = x.last_dim();
  if (gain.shape() != Shape{width}) shape_fail("layer_norm", x.shape(), gain.shape());
  if (bias.shape() != Shape{width}) shape_fail("layer_norm", x.shape(), bias.shape());
  const std::size_t rows = x.numel() / width;
  const bool rec = should_record<Real>({&x, &gain, &bias});
  Tensor<Real> out = make_output<Real>(x.shape(), rec);
  std::vector<Real> normed(x.numel());
  std::vector<Real> inv_std(rows);
  auto xv = x.values();
  auto ov = out.values();
  auto gv = gain.values();
  auto bv = bias.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xr = xv.data() + r * width;
    Real mu = 0;
    for (std::size_t j = 0; j < width; ++j) mu += xr[j];
    mu /= static_cast<Real>(width);
    Real var = 0;
    for (std::size_t j = 0; j < width; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<Real>(width);
    const Real is = Real(1) / std::sqrt(var + static_cast<Real>(epsilon));
    inv_std[r] = is;
    for (std::size_t j = 0; j < width; ++j) {
      const Real h = (xr[j] - mu) * is;
      normed[r * width + j] = h;
      ov[r * width + j] = h * gv[j] + bv[j];
    }
  }
  if (rec) {
    NodePtr<Real> xn = x.shared_node(), gn = gain.shared_node(),
                  bn = bias.shared_node(), on = out.shared_node();
    record<Real>("layer_norm", {x, gain, bias}, out,
                 [xn, gn, bn, on, normed = std::move(normed),
                  inv_std = std::move(inv_std), rows, width] {
                   std::vector<Real> dh(width);
                   for (std::size_t r = 0; r < rows; ++r) {
                     const Real* g = on->grad.data() + r * width;
                     const Real* h = normed.data() + r * width;
                     Real mean_dh = 0, mean_dh_h = 0;
                     for (std::size_t j = 0; j < width; ++j) {
                       if (gn->requires_grad) gn->grad[j] += g[j] * h[j];
                       if (bn->requires_grad) bn->grad[j] += g[j];
                       dh[j] = g[j] * gn->values[j];
                       mean_dh += dh[j];
                       mean_dh_h += dh[j] * h[j];
                     }
                     if (!xn->requires_grad) continue;
                     mean_dh /= static_cast<Real>(width);
                     mean_dh_h /= static_cast<Real>(width);
                     Real* dx = xn->grad.data() + r * width;
                     for (std::size_t j = 0; j < width; ++j) {
                       dx[j] += inv_std[r] * (dh[j] - mean_dh - h[j] * mean_dh_h);
                     }
                   }
                 });
  }
  return out;
}

template <typename Real>
Tensor<Real> dropout(const Tensor<Real>& x, double rate, bool training,
                     std::uint64_t key) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout: rate must lie in [0, 1), got " +
                                std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const Real keep_scale = static_cast<Real>(1.0 / (1.0 - rate));
  std::vector<Real> mask(x.numel());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = counter_uniform(key, i) < rate ? Real(0) : keep_scale;
  }
  const bool rec = should_record<Real>({&x});
  Tensor<Real> out = make_output<Real>(x.shape(), rec);
  auto xv = x.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < mask.size(); ++i) ov[i] = xv[i] * mask[i];
  if (rec) {
    NodePtr<Real> xn = x.shared_node(), on = out.shared_node();
    record<Real>("dropout", {x}, out, [xn, on, mask = std::move(mask)] {
      for (std::size_t i = 0; i < mask.size(); ++i)
        xn->grad[i] += on->grad[i] * mask[i];
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> cos(const Tensor<Real>& x) {
  return unary(
      "cos", x, [](Real v) { return std::cos(v); },
      [](Real v, Real) { return -std::sin(v); });
}

template <typename Real>
Tensor<Real> exp(const Tensor<Real>& x) {
  return unary(
      "exp", x, [](Real v) { return std::exp(v); },
      [](Real, Real y) { return y; });
}

template <typename Real>
Tensor<Real> log(const Tensor<Real>& x) {
  auto xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    if (!(xv[i] > Real(0))) {
      throw std::domain_error("log: non-positive value " +
                              std::to_string(xv[i]) + " at index " +
                              std::to_string(i));
    }
  }
  return unary(
      "log", x, [](Real v) { return std::log(v); },
      [](Real v, Real) { return Real(1) / v; });
}

template <typename Real>
Tensor<Real> gelu(const Tensor<Real>& x) {
  constexpr Real inv_sqrt2 = static_cast<Real>(1.0 / std::numbers::sqrt2);
  constexpr Real inv_sqrt_2pi =
      static_cast<Real>(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
  return unary(
      "gelu", x,
      [](Real v) { return Real(0.5) * v * (Real(1) + std::erf(v * inv_sqrt2)); },
      [](Real v, Real) {
        const Real cdf = Real(0.5) * (Real(1) + std::erf(v * inv_sqrt2));
        const Real pdf = inv_sqrt_2pi * std::exp(Real(-0.5) * v * v);
        return cdf + v * pdf;
      });
}

template <typename Real>
Tensor<Real> softplus(const Tensor<Real>& x) {
  return unary(
      "softplus", x,
      [](Real v) {
        return std::max(v, Real(0)) + std::log1p(std::exp(-std::abs(v)));
      },
      [](Real v, Real) {
        return v >= 0 ? Real(1) / (Real(1) + std::exp(-v))
                      : std::exp(v) / (Real(1) + std::exp(v));
      });
}

template <typename Real>
Tensor<Real> embedding_lookup(const Tensor<Real>& table,
                              std::span<const std::int64_t> indices,
                              const Shape& index_shape,
                              std::int64_t padding_index) {
  if (table.rank() != 2) shape_fail("embedding_lookup", table.shape(), "is not a matrix");
  if (shape_numel(index_shape) != indices.size()) {
    shape_fail("embedding_lookup", index_shape,
               "does not match " + std::to_string(indices.size()) + " indices");
  }
  const auto rows = static_cast<std::int64_t>(table.dim(0));
  const std::size_t width = table.dim(1);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= rows) {
      throw std::out_of_range("embedding_lookup: index " +
                              std::to_string(indices[i]) + " at position " +
                              std::to_string(i) + " outside [0, " +
                              std::to_string(rows) + ")");
    }
  }
  Shape out_shape = index_shape;
  out_shape.push_back(width);
  const bool rec = should_record<Real>({&table});
  Tensor<Real> out = make_output<Real>(out_shape, rec);
  auto tv = table.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(tv.begin() + indices[i] * width, width, ov.begin() + i * width);
  }
  if (rec) {
    NodePtr<Real> tn = table.shared_node(), on = out.shared_node();
    std::vector<std::int64_t> idx(indices.begin(), indices.end());
    record<Real>("embedding_lookup", {table}, out,
                 [tn, on, idx = std::move(idx), width, padding_index] {
                   for (std::size_t i = 0; i < idx.size(); ++i) {
                     if (idx[i] == padding_index) continue;
                     Real* dst = tn->grad.data() + idx[i] * width;
                     const Real* src = on->grad.data() + i * width;
                     for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
                   }
                 });
  }
  return out;
}

template <typename Real>
Tensor<Real> cosine_similarity(const Tensor<Real>& a, const Tensor<Real>& b,
                               double epsilon) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    shape_fail("cosine_similarity", a.shape(), b.shape());
  }
  const std::size_t n = a.dim(0), m = b.dim(0), d = a.dim(1);
  const Real eps = static_cast<Real>(epsilon);
  auto norms = [d, eps](std::span<const Real> v, std::size_t rows,
                        std::vector<Real>& out, std::vector<std::uint8_t>& floored) {
    out.resize(rows);
    floored.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      Real s = 0;
      for (std::size_t j = 0; j < d; ++j) s += v[r * d + j] * v[r * d + j];
      const Real nr = std::sqrt(s);
      floored[r] = nr < eps;
      out[r] = floored[r] ? eps : nr;
    }
  };
  std::vector<Real> na, nb;
  std::vector<std::uint8_t> fa, fb;
  norms(a.values(), n, na, fa);
  norms(b.values(), m, nb, fb);
  const bool rec = should_record<Real>({&a, &b});
  Tensor<Real> out = make_output<Real>({n, m}, rec);
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      Real dot = 0;
      for (std::size_t k = 0; k < d; ++k) dot += av[i * d + k] * bv[j * d + k];
      ov[i * m + j] = dot / (na[i] * nb[j]);
    }
  }
  if (rec) {
    NodePtr<Real> an = a.shared_node(), bn = b.shared_node(),
                  on = out.shared_node();
    record<Real>("cosine_similarity", {a, b}, out,
                 [an, bn, on, na = std::move(na), nb = std::move(nb),
                  fa = std::move(fa), fb = std::move(fb), n, m, d] {
                   for (std::size_t i = 0; i < n; ++i) {
                     for (std::size_t j = 0; j < m; ++j) {
                       const Real g = on->grad[i * m + j];
                       if (g == Real(0)) continue;
                       const Real c = on->values[i * m + j];
                       const Real inv = Real(1) / (na[i] * nb[j]);
                       const Real* ai = an->values.data() + i * d;
                       const Real* bj = bn->values.data() + j * d;
                       if (an->requires_grad) {
                         const Real ca = fa[i] ? Real(0) : c / (na[i] * na[i]);
                         Real* da = an->grad.data() + i * d;
                         for (std::size_t k = 0; k < d; ++k)
                           da[k] += g * (bj[k] * inv - ca * ai[k]);
                       }
                       if (bn->requires_grad) {
                         const Real cb = fb[j] ? Real(0) : c / (nb[j] * nb[j]);
                         Real* db = bn->grad.data() + j * d;
                         for (std::size_t k = 0; k < d; ++k)
                           db[k] += g * (ai[k] * inv - cb * bj[k]);
                       }
                     }
                   }
                 });
  }
  return out;
}

template <typename Real>
Tensor<Real> masked_fill(const Tensor<Real>& x,
                         std::span<const std::uint8_t> mask, double value) {
  if (mask.size() != x.numel()) {
    shape_fail("masked_fill", x.shape(),
               "does not match a mask of " + std::to_string(mask.size()));
  }
  const bool rec = should_record<Real>({&x});
  Tensor<Real> out = make_output<Real>(x.shape(), rec);
  auto xv = x.values();
  auto ov = out.values();
  const Real fill = static_cast<Real>(value);
  for (std::size_t i = 0; i < mask.size(); ++i) ov[i] = mask[i] ? fill : xv[i];
  if (rec) {
    NodePtr<Real> xn = x.shared_node(), on = out.shared_node();
    std::vector<std::uint8_t> m(mask.begin(), mask.end());
    record<Real>("masked_fill", {x}, out, [xn, on, m = std::move(m)] {
      for (std::size_t i = 0; i < m.size(); ++i)
        if (!m[i]) xn->grad[i] += on->grad[i];
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> transpose_last_two(const Tensor<Real>& x) {
  if (x.rank() < 2) shape_fail("transpose_last_two", x.shape(), "has rank < 2");
  const std::size_t r = x.dim(x.rank() - 2), c = x.last_dim();
  const std::size_t batches = x.numel() / (r * c);
  Shape out_shape = x.shape();
  std::swap(out_shape[out_shape.size() - 2], out_shape.back());
  const bool rec = should_record<Real>({&x});
  Tensor<Real> out = make_output<Real>(out_shape, rec);
  auto xv = x.values();
  auto ov = out.values();
  for (std::size_t t = 0; t < batches; ++t) {
    const std::size_t base = t * r * c;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ov[base + j * r + i] = xv[base + i * c + j];
  }
  if (rec) {
    NodePtr<Real> xn = x.shared_node(), on = out.shared_node();
    record<Real>("transpose_last_two", {x}, out, [xn, on, batches, r, c] {
      for (std::size_t t = 0; t < batches; ++t) {
        const std::size_t base = t * r * c;
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j)
            xn->grad[base + i * c + j] += on->grad[base + j * r + i];
      }
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> take_step(const Tensor<Real>& x, std::size_t position) {
  if (x.rank() < 2) shape_fail("take_step", x.shape(), "has rank < 2");
  const std::size_t steps = x.dim(x.rank() - 2), width = x.last_dim();
  if (position >= steps) {
    shape_fail("take_step", x.shape(),
               "has no step " + std::to_string(position));
  }
  const std::size_t batches = x.numel() / (steps * width);
  Shape out_shape(x.shape().begin(), x.shape().end() - 2);
  out_shape.push_back(width);
  const bool rec = should_record<Real>({&x});
  Tensor<Real> out = make_output<Real>(out_shape, rec);
  auto xv = x.values();
  auto ov = out.values();
  for (std::size_t t = 0; t < batches; ++t) {
    std::copy_n(xv.begin() + (t * steps + position) * width, width,
                ov.begin() + t * width);
  }
  if (rec) {
    NodePtr<Real> xn = x.shared_node(), on = out.shared_node();
    record<Real>("take_step", {x}, out, [xn, on, batches, steps, width, position] {
      for (std::size_t t = 0; t < batches; ++t)
        for (std::size_t j = 0; j < width; ++j)
          xn->grad[(t * steps + position) * width + j] += on->grad[t * width + j];
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> expert_mix(const Tensor<Real>& gates, const Tensor<Real>& outputs) {
  const std::size_t k = gates.last_dim();
  if (gates.rank() != outputs.rank() || outputs.last_dim() % k != 0 ||
      !std::equal(gates.shape().begin(), gates.shape().end() - 1,
                  outputs.shape().begin())) {
    shape_fail("expert_mix", gates.shape(), outputs.shape());
  }
  const std::size_t d = outputs.last_dim() / k;
  const std::size_t rows = gates.numel() / k;
  Shape out_shape = gates.shape();
  out_shape.back() = d;
  const bool rec = should_record<Real>({&gates, &outputs});
  Tensor<Real> out = make_output<Real>(out_shape, rec);
  auto gv = gates.values();
  auto xv = outputs.values();
  auto ov = out.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < k; ++i) {
      const Real g = gv[r * k + i];
      const Real* xi = xv.data() + (r * k + i) * d;
      Real* yr = ov.data() + r * d;
      for (std::size_t j = 0; j < d; ++j) yr[j] += g * xi[j];
    }
  }
  if (rec) {
    NodePtr<Real> gn = gates.shared_node(), xn = outputs.shared_node(),
                  on = out.shared_node();
    record<Real>("expert_mix", {gates, outputs}, out, [gn, xn, on, rows, k, d] {
      for (std::size_t r = 0; r < rows; ++r) {
        const Real* gy = on->grad.data() + r * d;
        for (std::size_t i = 0; i < k; ++i) {
          const std::size_t base = (r * k + i) * d;
          if (gn->requires_grad) {
            Real acc = 0;
            for (std::size_t j = 0; j < d; ++j) acc += gy[j] * xn->values[base + j];
            gn->grad[r * k + i] += acc;
          }
          if (xn->requires_grad) {
            const Real g = gn->values[r * k + i];
            for (std::size_t j = 0; j < d; ++j) xn->grad[base + j] += g * gy[j];
          }
        }
      }
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x) {
  const bool rec = should_record<Real>({&x});
  Tensor<Real> out = make_output<Real>({1}, rec);
  Real acc = 0;
  for (Real v : x.values()) acc += v;
  out[0] = acc;
  if (rec) {
    NodePtr<Real> xn = x.shared_node(), on = out.shared_node();
    record<Real>("sum", {x}, out, [xn, on] {
      for (auto& g : xn->grad) g += on->grad[0];
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x) {
  const bool rec = should_record<Real>({&x});
  Tensor<Real> out = make_output<Real>({1}, rec);
  Real acc = 0;
  for (Real v : x.values()) acc += v;
  const Real n = static_cast<Real>(x.numel());
  out[0] = acc / n;
  if (rec) {
    NodePtr<Real> xn = x.shared_node(), on = out.shared_node();
    record<Real>("mean", {x}, out, [xn, on, n] {
      const Real g = on->grad[0] / n;
      for (auto& v : xn->grad) v += g;
    });
  }
  return out;
}

template <typename Real>
std::vector<Tensor<Real>> apply_primitive(Primitive op,
                                          std::span<const Tensor<Real>> in,
                                          const PrimitiveAttrs& attrs) {
  auto one = [](Tensor<Real> t) { return std::vector<Tensor<Real>>{std::move(t)}; };
  auto x = [&](std::size_t i) -> const Tensor<Real>& { return input_at(in, i, op); };
  switch (op) {
    case Primitive::matmul: return one(matmul(x(0), x(1)));
    case Primitive::add: return one(add(x(0), x(1)));
    case Primitive::subtract: return one(subtract(x(0), x(1)));
    case Primitive::elementwise_mul: return one(mul(x(0), x(1)));
    case Primitive::scale:
      return one(in.size() > 1 ? scale(x(0), x(1)) : scale(x(0), attrs.factor));
    case Primitive::concat_last_dim: return one(concat_last_dim(in));
    case Primitive::split_last_dim: return split_last_dim(x(0), attrs.parts);
    case Primitive::softmax_last_dim: return one(softmax_last_dim(x(0)));
    case Primitive::log_softmax_last_dim: return one(log_softmax_last_dim(x(0)));
    case Primitive::layer_norm:
      return one(layer_norm(x(0), x(1), x(2), attrs.epsilon));
    case Primitive::dropout:
      return one(dropout(x(0), attrs.rate, attrs.training, attrs.dropout_key));
    case Primitive::cos: return one(cos(x(0)));
    case Primitive::exp: return one(exp(x(0)));
    case Primitive::log: return one(log(x(0)));
    case Primitive::gelu: return one(gelu(x(0)));
    case Primitive::softplus: return one(softplus(x(0)));
    case Primitive::embedding_lookup:
      return one(embedding_lookup(x(0), std::span<const std::int64_t>(attrs.indices),
                                  attrs.index_shape, attrs.padding_index));
    case Primitive::cosine_similarity:
      return one(cosine_similarity(x(0), x(1), attrs.epsilon));
    case Primitive::masked_fill:
      return one(masked_fill(x(0), std::span<const std::uint8_t>(attrs.mask),
                             attrs.fill));
    case Primitive::transpose_last_two: return one(transpose_last_two(x(0)));
    case Primitive::take_step: return one(take_step(x(0), attrs.position));
    case Primitive::expert_mix: return one(expert_mix(x(0), x(1)));
    case Primitive::mean: return one(mean(x(0)));
    case Primitive::sum: return one(sum(x(0)));
  }
  throw std::invalid_argument("unknown primitive id " +
                              std::to_string(static_cast<int>(op)));
}

#define HM4SR_INSTANTIATE_OPS(Real)                                              \
  template std::vector<Tensor<Real>> apply_primitive(                           \
      Primitive, std::span<const Tensor<Real>>, const PrimitiveAttrs&);         \
  template Tensor<Real> matmul(const Tensor<Real>&, const Tensor<Real>&);       \
  template Tensor<Real> add(const Tensor<Real>&, const Tensor<Real>&);          \
  template Tensor<Real> subtract(const Tensor<Real>&, const Tensor<Real>&);     \
  template Tensor<Real> mul(const Tensor<Real>&, const Tensor<Real>&);          \
  template Tensor<Real> scale(const Tensor<Real>&, double);                     \
  template Tensor<Real> scale(const Tensor<Real>&, const Tensor<Real>&);        \
  template Tensor<Real> concat_last_dim(std::span<const Tensor<Real>>);         \
  template std::vector<Tensor<Real>> split_last_dim(const Tensor<Real>&,        \
                                                    std::size_t);               \
  template Tensor<Real> softmax_last_dim(const Tensor<Real>&);                  \
  template Tensor<Real> log_softmax_last_dim(const Tensor<Real>&);              \
  template Tensor<Real> layer_norm(const Tensor<Real>&, const Tensor<Real>&,    \
                                   const Tensor<Real>&, double);                \
  template Tensor<Real> dropout(const Tensor<Real>&, double, bool,              \
                                std::uint64_t);                                 \
  template Tensor<Real> cos(const Tensor<Real>&);                               \
  template Tensor<Real> exp(const Tensor<Real>&);                               \
  template Tensor<Real> log(const Tensor<Real>&);                               \
  template Tensor<Real> gelu(const Tensor<Real>&);                              \
  template Tensor<Real> softplus(const Tensor<Real>&);                          \
  template Tensor<Real> embedding_lookup(const Tensor<Real>&,                   \
                                         std::span<const std::int64_t>,         \
                                         const Shape&, std::int64_t);           \
  template Tensor<Real> cosine_similarity(const Tensor<Real>&,                  \
                                          const Tensor<Real>&, double);         \
  template Tensor<Real> masked_fill(const Tensor<Real>&,                        \
                                    std::span<const std::uint8_t>, double);     \
  template Tensor<Real> transpose_last_two(const Tensor<Real>&);                \
  template Tensor<Real> take_step(const Tensor<Real>&, std::size_t);            \
  template Tensor<Real> expert_mix(const Tensor<Real>&, const Tensor<Real>&);   \
  template Tensor<Real> mean(const Tensor<Real>&);                              \
  template Tensor<Real> sum(const Tensor<Real>&);

HM4SR_INSTANTIATE_OPS(float)
HM4SR_INSTANTIATE_OPS(double)

#undef HM4SR_INSTANTIATE_OPS

}  // namespace hm4sr::ops
