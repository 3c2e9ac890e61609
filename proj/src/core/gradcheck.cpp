// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#include "hm4sr/core/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hm4sr {

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& t : tensors) w = std::max(w, t.max_rel_error);
  return w;
}

namespace {

template <typename Real>
Real evaluate(const std::function<Tensor<Real>()>& loss_fn) {
  Tensor<Real> loss = loss_fn();
  if (loss.numel() != 1) {
    throw ShapeError("grad_check: loss is not scalar, shape " +
                     shape_to_string(loss.shape()));
  }
  return loss.item();
}

}  // namespace

template <typename Real>
GradCheckReport grad_check(const std::function<Tensor<Real>()>& loss_fn,
                           std::span<NamedTensor<Real>> params,
                           const GradCheckOptions& options) {
  if (!(options.step > 0.0)) {
    throw std::invalid_argument("grad_check: step must be positive");
  }
  for (auto& p : params) {
    if (!p.tensor.requires_grad()) p.tensor.set_requires_grad(true);
    p.tensor.zero_grad();
  }

  Tape<Real> tape;
  Real recorded = 0;
  {
    TapeScope<Real> scope(tape);
    Tensor<Real> loss = loss_fn();
    recorded = loss.item();
    tape.backward(loss);
  }
  const Real first = evaluate(loss_fn);
  const Real second = evaluate(loss_fn);
  if (first != second || first != recorded) {
    throw std::runtime_error(
        "grad_check: loss function is not deterministic (repeated "
        "evaluations differ)");
  }

  GradCheckReport report;
  report.tolerance = options.tolerance;
  report.passed = true;
  const Real h = static_cast<Real>(options.step);
  for (auto& p : params) {
    GradCheckEntry entry;
    entry.name = p.name;
    entry.size = p.tensor.numel();
    auto values = p.tensor.values();
    std::vector<Real> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const Real saved = values[i];
      values[i] = saved + h;
      const Real up = evaluate(loss_fn);
      values[i] = saved - h;
      const Real down = evaluate(loss_fn);
      values[i] = saved;
      const double numeric = (static_cast<double>(up) - down) / (2.0 * options.step);
      const double a = analytic[i];
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max({std::abs(a), std::abs(numeric),
                                     options.denominator_floor});
      const double rel = abs_err / denom;
      if (rel > entry.max_rel_error) {
        entry.max_rel_error = rel;
        entry.worst_index = i;
      }
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
    }
    if (!(entry.max_rel_error <= options.tolerance)) report.passed = false;
    report.tensors.push_back(std::move(entry));
  }
  return report;
}

template GradCheckReport grad_check<float>(const std::function<Tensor<float>()>&,
                                           std::span<NamedTensor<float>>,
                                           const GradCheckOptions&);
template GradCheckReport grad_check<double>(
    const std::function<Tensor<double>()>&, std::span<NamedTensor<double>>,
    const GradCheckOptions&);

}  // namespace hm4sr
