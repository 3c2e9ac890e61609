// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "hm4sr/core/tensor.hpp"

namespace hm4sr {

template <typename Real>
struct NamedTensor {
  std::string name;
  Tensor<Real> tensor;
};

/// Trainable tensors keyed by canonical name, kept in registration order.
template <typename Real>
class ParamStore {
 public:
  Tensor<Real>& add(const std::string& name, Tensor<Real> tensor) {
    if (index_.count(name)) {
      throw std::invalid_argument("duplicate parameter '" + name + "'");
    }
    tensor.set_requires_grad(true);
    index_[name] = entries_.size();
    entries_.push_back({name, std::move(tensor)});
    return entries_.back().tensor;
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  Tensor<Real>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) {
      throw std::out_of_range("no parameter named '" + name + "'");
    }
    return entries_[it->second].tensor;
  }
  const Tensor<Real>& at(const std::string& name) const {
    return const_cast<ParamStore*>(this)->at(name);
  }

  std::vector<NamedTensor<Real>>& entries() noexcept { return entries_; }
  const std::vector<NamedTensor<Real>>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  std::size_t total_values() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  /// Deep copy of every value, for snapshots.
  std::vector<std::vector<Real>> snapshot() const {
    std::vector<std::vector<Real>> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) {
      out.emplace_back(e.tensor.values().begin(), e.tensor.values().end());
    }
    return out;
  }

  void restore(const std::vector<std::vector<Real>>& snap) {
    if (snap.size() != entries_.size()) {
      throw std::invalid_argument("snapshot has wrong tensor count");
    }
    for (std::size_t i = 0; i < snap.size(); ++i) {
      auto dst = entries_[i].tensor.values();
      if (snap[i].size() != dst.size()) {
        throw std::invalid_argument("snapshot size mismatch for '" +
                                    entries_[i].name + "'");
      }
      std::copy(snap[i].begin(), snap[i].end(), dst.begin());
    }
  }

 private:
  std::vector<NamedTensor<Real>> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace hm4sr
