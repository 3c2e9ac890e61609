// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#include "hm4sr/model/item_representation.hpp"

#include <numeric>

#include "hm4sr/core/ops.hpp"

namespace hm4sr {

std::vector<Modality> active_modalities(const ModelConfig& config) {
  std::vector<Modality> out{Modality::id};
  if (config.use_text) out.push_back(Modality::txt);
  if (config.use_image) out.push_back(Modality::img);
  return out;
}

namespace {

template <typename Real>
Tensor<Real> frozen_table(const data::Dataset& dataset, const data::FeatureMatrix& m,
                          const char* what) {
  const std::size_t n = dataset.n_items(), dim = m.dim();
  if (dim == 0) throw data::DataError(std::string(what) + " features have width 0");
  std::vector<Real> values((n + 1) * dim, Real(0));
  for (std::size_t i = 1; i <= n; ++i) {
    const std::string& token = dataset.token_of(static_cast<std::int32_t>(i));
    if (!m.contains(token)) {
      throw data::DataError(std::string(what) + " features have no row for item '" + token +
                            "'");
    }
    auto row = m.row(token);
    std::copy(row.begin(), row.end(), values.begin() + i * dim);
  }
  return Tensor<Real>::from_values({n + 1, dim}, std::move(values));
}

}  // namespace

template <typename Real>
FeatureStore<Real> FeatureStore<Real>::from_matrices(const data::Dataset& dataset,
                                                     const data::FeatureMatrix* txt,
                                                     const data::FeatureMatrix* img) {
  FeatureStore store;
  if (txt) store.txt = frozen_table<Real>(dataset, *txt, "text");
  if (img) store.img = frozen_table<Real>(dataset, *img, "image");
  return store;
}

template <typename Real>
ItemRepresentation<Real>::ItemRepresentation(ParamStore<Real>& params,
                                             const ModelConfig& config,
                                             FeatureStore<Real> features,
                                             std::size_t n_items, const Initializer& init)
    : active_(active_modalities(config)), features_(std::move(features)), n_items_(n_items) {
  const std::size_t d = config.d;
  const double sd = config.init_std;
  auto table = init.normal<Real>("item.id_table", {n_items + 1, d}, sd);
  std::fill_n(table.values().begin(), d, Real(0));
  id_table_ = params.add("item.id_table", table);
  if (config.use_text) {
    if (!features_.txt.defined()) throw std::invalid_argument("text features are missing");
    w_txt_ = add_normal(params, init, "item.txt.W", {features_.txt.last_dim(), d}, sd);
    b_txt_ = params.add("item.txt.b", Tensor<Real>::zeros({d}));
  }
  if (config.use_image) {
    if (!features_.img.defined()) throw std::invalid_argument("image features are missing");
    w_img_ = add_normal(params, init, "item.img.W", {features_.img.last_dim(), d}, sd);
    b_img_ = params.add("item.img.b", Tensor<Real>::zeros({d}));
  }
  pos_table_ = add_normal(params, init, "item.pos_table", {config.max_len, d}, sd);
}

template <typename Real>
Tensor<Real> ItemRepresentation<Real>::project_one(Modality m,
                                                   std::span<const std::int64_t> indices,
                                                   const Shape& index_shape) const {
  for (std::int64_t i : indices) {
    if (i < 0 || static_cast<std::size_t>(i) > n_items_) {
      throw std::out_of_range("item index " + std::to_string(i) + " outside [0, " +
                              std::to_string(n_items_) + "]");
    }
  }
  switch (m) {
    case Modality::id:
      return ops::embedding_lookup(id_table_, indices, index_shape, 0);
    case Modality::txt:
      return ops::add(
          ops::matmul(ops::embedding_lookup(features_.txt, indices, index_shape), w_txt_),
          b_txt_);
    case Modality::img:
      return ops::add(
          ops::matmul(ops::embedding_lookup(features_.img, indices, index_shape), w_img_),
          b_img_);
  }
  return {};
}

template <typename Real>
PerModality<Real> ItemRepresentation<Real>::project(std::span<const std::int64_t> indices,
                                                    const Shape& index_shape) const {
  PerModality<Real> out;
  for (Modality m : active_) at(out, m) = project_one(m, indices, index_shape);
  return out;
}

template <typename Real>
PerModality<Real> ItemRepresentation<Real>::catalog() const {
  std::vector<std::int64_t> items(n_items_);
  std::iota(items.begin(), items.end(), std::int64_t{1});
  return project(items, {n_items_});
}

template <typename Real>
Tensor<Real> ItemRepresentation<Real>::add_position(const Tensor<Real>& x) const {
  if (x.rank() != 3 || x.last_dim() != pos_table_.last_dim()) {
    throw ShapeError("add_position expects [B, L, d], got " + shape_to_string(x.shape()));
  }
  const std::size_t B = x.dim(0), L = x.dim(1);
  if (L > pos_table_.dim(0)) {
    throw ShapeError("sequence length " + std::to_string(L) + " exceeds position table");
  }
  std::vector<std::int64_t> positions(B * L);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < L; ++i) positions[b * L + i] = static_cast<std::int64_t>(i);
  return ops::add(x, ops::embedding_lookup(pos_table_, positions, {B, L}));
}

template <typename Real>
Tensor<Real> ItemRepresentation<Real>::id_rows(std::span<const std::int64_t> items) const {
  return project_one(Modality::id, items, {items.size()});
}

template struct FeatureStore<float>;
template struct FeatureStore<double>;
template class ItemRepresentation<float>;
template class ItemRepresentation<double>;

}  // namespace hm4sr
