// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint layout: a UTF-8 manifest with one "name\tdtype\td0,d1,..." line
// per tensor, an empty line, then every tensor's raw little-endian values in
// manifest order. dtype is "f32" or "f64".

#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "hm4sr/core/param_store.hpp"

namespace hm4sr {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Real>
void save_checkpoint(const std::filesystem::path& path,
                     std::span<const NamedTensor<Real>> tensors);

/// Reads every tensor; values are converted to Real if the stored dtype
/// differs.
template <typename Real>
std::vector<NamedTensor<Real>> load_checkpoint(const std::filesystem::path& path);

/// Overwrites `params` from the file. Names, order and shapes must match.
/// Nothing is modified unless the whole file validates.
template <typename Real>
void restore_checkpoint(const std::filesystem::path& path, ParamStore<Real>& params);

}  // namespace hm4sr
