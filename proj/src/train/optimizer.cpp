// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#include "hm4sr/train/optimizer.hpp"

#include <cmath>

namespace hm4sr {

template <typename Real>
Adam<Real>::Adam(ParamStore<Real>& params, AdamOptions options)
    : params_(params), options_(options) {
  for (const auto& e : params_.entries()) {
    m_.emplace_back(e.tensor.numel(), 0.0);
    v_.emplace_back(e.tensor.numel(), 0.0);
  }
}

template <typename Real>
void Adam<Real>::step() {
  ++steps_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  auto& entries = params_.entries();
  for (std::size_t t = 0; t < entries.size(); ++t) {
    auto values = entries[t].tensor.values();
    auto grad = entries[t].tensor.grad();
    auto& m = m_[t];
    auto& v = v_[t];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double update = options_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.epsilon);
      values[i] = static_cast<Real>(values[i] - update);
    }
  }
}

template <typename Real>
double global_grad_norm(const ParamStore<Real>& params) {
  double sq = 0.0;
  for (const auto& e : params.entries())
    for (Real g : e.tensor.grad()) sq += static_cast<double>(g) * g;
  return std::sqrt(sq);
}

template <typename Real>
double clip_grad_norm(ParamStore<Real>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm <= 0.0 || !(norm > max_norm)) return norm;
  const double factor = max_norm / norm;
  for (auto& e : params.entries())
    for (Real& g : e.tensor.grad()) g = static_cast<Real>(g * factor);
  return norm;
}

template class Adam<float>;
template class Adam<double>;
template double global_grad_norm(const ParamStore<float>&);
template double global_grad_norm(const ParamStore<double>&);
template double clip_grad_norm(ParamStore<float>&, double);
template double clip_grad_norm(ParamStore<double>&, double);

}  // namespace hm4sr
