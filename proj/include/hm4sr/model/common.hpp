// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "hm4sr/core/param_store.hpp"
#include "hm4sr/core/rng.hpp"
#include "hm4sr/model/config.hpp"

namespace hm4sr {

enum class Modality : std::size_t { id = 0, txt = 1, img = 2 };

inline constexpr std::array<Modality, 3> kModalities{Modality::id, Modality::txt,
                                                     Modality::img};

constexpr std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::id: return "id";
    case Modality::txt: return "txt";
    case Modality::img: return "img";
  }
  return "?";
}

/// One tensor per modality; inactive modalities hold an undefined tensor.
template <typename Real>
using PerModality = std::array<Tensor<Real>, 3>;

template <typename Real>
Tensor<Real>& at(PerModality<Real>& p, Modality m) {
  return p[static_cast<std::size_t>(m)];
}
template <typename Real>
const Tensor<Real>& at(const PerModality<Real>& p, Modality m) {
  return p[static_cast<std::size_t>(m)];
}

/// Modalities in (id, txt, img) order that the config keeps.
std::vector<Modality> active_modalities(const ModelConfig& config);

/// Where a forward pass is in training; keys dropout and placeholder draws.
struct StepContext {
  bool training = false;
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;

  std::uint64_t key(std::string_view site) const {
    return site_key(seed, epoch, step, site);
  }
};

/// Parameter initializer. Each tensor draws from a stream keyed by its name,
/// so a tensor gets the same values whatever else the model contains.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : seed_(seed) {}

  template <typename Real>
  Tensor<Real> normal(std::string_view name, Shape shape, double stddev) const {
    std::mt19937_64 rng(mix_key(seed_, fnv1a(name)));
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<Real> values(shape_numel(shape));
    for (auto& v : values) v = static_cast<Real>(stddev > 0 ? dist(rng) : 0.0);
    return Tensor<Real>::from_values(std::move(shape), std::move(values));
  }

 private:
  std::uint64_t seed_;
};

/// Registers a tensor drawn from normal(0, stddev).
template <typename Real>
Tensor<Real> add_normal(ParamStore<Real>& params, const Initializer& init,
                        const std::string& name, Shape shape, double stddev) {
  return params.add(name, init.normal<Real>(name, std::move(shape), stddev));
}

}  // namespace hm4sr
