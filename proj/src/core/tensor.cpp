// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#include "hm4sr/core/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace hm4sr {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) {
    if (extent == 0) throw ShapeError("tensor extents must be positive");
    n *= extent;
  }
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

template <typename Real>
Tensor<Real> Tensor<Real>::zeros(Shape shape, bool requires_grad) {
  return filled(std::move(shape), Real(0), requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::filled(Shape shape, Real value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from_values(std::move(shape), std::vector<Real>(n, value),
                     requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::from_values(Shape shape, std::vector<Real> values,
                                       bool requires_grad) {
  if (shape.empty()) throw ShapeError("tensor shape must have rank >= 1");
  const std::size_t n = shape_numel(shape);
  if (n != values.size()) {
    throw ShapeError("shape " + shape_to_string(shape) + " needs " +
                     std::to_string(n) + " values, got " +
                     std::to_string(values.size()));
  }
  auto node = std::make_shared<TensorNode<Real>>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  Tensor t(std::move(node));
  t.set_requires_grad(requires_grad);
  return t;
}

template <typename Real>
Tensor<Real> Tensor<Real>::scalar(Real value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

template <typename Real>
Real Tensor<Real>::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_to_string(shape()));
  }
  return node_->values[0];
}

template <typename Real>
void Tensor<Real>::set_requires_grad(bool flag) {
  node_->requires_grad = flag;
  if (flag) {
    node_->grad.assign(node_->values.size(), Real(0));
  } else {
    node_->grad.clear();
    node_->grad.shrink_to_fit();
  }
}

template <typename Real>
void Tensor<Real>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), Real(0));
}

template <typename Real>
Tensor<Real> Tensor<Real>::clone() const {
  auto node = std::make_shared<TensorNode<Real>>(*node_);
  return Tensor(std::move(node));
}

template <typename Real>
Tensor<Real> Tensor<Real>::detach() const {
  return from_values(node_->shape, node_->values, false);
}

namespace {

template <typename Real>
Tape<Real>*& tape_slot() noexcept {
  thread_local Tape<Real>* slot = nullptr;
  return slot;
}

}  // namespace

template <typename Real>
Tape<Real>* active_tape() noexcept {
  return tape_slot<Real>();
}

template <typename Real>
TapeScope<Real>::TapeScope(Tape<Real>& tape) : previous_(tape_slot<Real>()) {
  tape_slot<Real>() = &tape;
}

template <typename Real>
TapeScope<Real>::~TapeScope() {
  tape_slot<Real>() = previous_;
}

template <typename Real>
bool should_record(std::initializer_list<const Tensor<Real>*> inputs) {
  if (active_tape<Real>() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor<Real>* t) { return t->requires_grad(); });
}

template <typename Real>
void Tape<Real>::record(std::string_view op, std::vector<Tensor<Real>> inputs,
                        const Tensor<Real>& output, BackwardFn backward) {
  Entry entry;
  entry.op = std::string(op);
  entry.inputs.reserve(inputs.size());
  for (auto& t : inputs) entry.inputs.push_back(t.shared_node());
  entry.output = output.shared_node();
  entry.backward = std::move(backward);
  entries_.push_back(std::move(entry));
}

template <typename Real>
void Tape<Real>::backward(Tensor<Real>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " +
                     (loss.defined() ? shape_to_string(loss.shape())
                                     : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    clear();
    return;
  }
  loss.grad()[0] += Real(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    it->backward();
  }
  clear();
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template class TapeScope<float>;
template class TapeScope<double>;
template Tape<float>* active_tape<float>() noexcept;
template Tape<double>* active_tape<double>() noexcept;
template bool should_record<float>(std::initializer_list<const Tensor<float>*>);
template bool should_record<double>(
    std::initializer_list<const Tensor<double>*>);

}  // namespace hm4sr
