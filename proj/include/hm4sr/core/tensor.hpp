// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors with an optional gradient accumulator, and the
// tape that records primitive applications for reverse-mode differentiation.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hm4sr {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename Real>
struct TensorNode {
  Shape shape;
  std::vector<Real> values;
  std::vector<Real> grad;  // empty unless requires_grad
  bool requires_grad = false;
};

/// Shared handle to a dense tensor. Copies alias the same storage; use
/// clone() for an independent copy.
template <typename Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, Real value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<Real> values,
                            bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->values.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t last_dim() const { return node_->shape.back(); }

  std::span<Real> values() { return node_->values; }
  std::span<const Real> values() const { return node_->values; }
  std::span<Real> grad() { return node_->grad; }
  std::span<const Real> grad() const { return node_->grad; }

  Real item() const;
  Real& operator[](std::size_t i) { return node_->values[i]; }
  Real operator[](std::size_t i) const { return node_->values[i]; }

  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  void set_requires_grad(bool flag);
  void zero_grad();

  Tensor clone() const;
  Tensor detach() const;

  TensorNode<Real>* node() const noexcept { return node_.get(); }
  const std::shared_ptr<TensorNode<Real>>& shared_node() const noexcept {
    return node_;
  }

 private:
  explicit Tensor(std::shared_ptr<TensorNode<Real>> node)
      : node_(std::move(node)) {}

  std::shared_ptr<TensorNode<Real>> node_;
};

/// Ordered record of primitive applications. Backward replays it in reverse
/// and then clears it.
template <typename Real>
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  struct Entry {
    std::string op;
    std::vector<std::shared_ptr<TensorNode<Real>>> inputs;
    std::shared_ptr<TensorNode<Real>> output;
    BackwardFn backward;
  };

  void record(std::string_view op, std::vector<Tensor<Real>> inputs,
              const Tensor<Real>& output, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and propagates. Rejects non-scalar losses.
  void backward(Tensor<Real>& loss);

  std::size_t size() const noexcept { return entries_.size(); }
  void clear() noexcept { entries_.clear(); }

 private:
  std::vector<Entry> entries_;
};

/// Active tape of the calling thread, or nullptr when nothing is recorded.
template <typename Real>
Tape<Real>* active_tape() noexcept;

/// Makes `tape` the active tape of this thread for the scope's lifetime.
template <typename Real>
class TapeScope {
 public:
  explicit TapeScope(Tape<Real>& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<Real>* previous_;
};

/// Convenience for ops: true when the result must be recorded.
template <typename Real>
bool should_record(std::initializer_list<const Tensor<Real>*> inputs);

}  // namespace hm4sr
