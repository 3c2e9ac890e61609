// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#include "hm4sr/train/gradcheck_suite.hpp"

#include <stdexcept>
#include <string>

#include "hm4sr/core/ops.hpp"
#include "hm4sr/data/synth.hpp"
#include "hm4sr/train/experiment.hpp"

namespace hm4sr {

namespace {

using T = Tensor<double>;

/// sum(x * r) with a fixed random r, so every output coordinate matters.
/// Rows flagged in `skip` (one flag per row of the last axis) get weight 0.
T probe(const T& x, const Initializer& init, const std::string& name, double scale = 1.0,
        std::span<const std::uint8_t> skip = {}) {
  T weights = init.normal<double>(name, x.shape(), scale);
  const std::size_t d = x.last_dim();
  for (std::size_t r = 0; r < skip.size(); ++r)
    if (skip[r]) std::fill_n(weights.values().begin() + r * d, d, 0.0);
  return ops::sum(ops::mul(x, weights));
}

T accumulate(const T& acc, const T& term) { return acc.defined() ? ops::add(acc, term) : term; }

GradCheckReport check(ParamStore<double>& params, const std::function<T()>& loss,
                      const GradCheckOptions& options) {
  return grad_check<double>(loss, params.entries(), options);
}

}  // namespace

TinySetup tiny_setup(std::uint64_t seed) {
  data::SynthConfig sc;
  sc.n_users = 12;
  sc.n_items = 20;
  sc.n_categories = 3;
  sc.d_txt = 6;
  sc.d_img = 5;
  sc.min_len = 4;
  sc.max_len = 9;
  sc.min_item_degree = 2;
  sc.seed = seed;
  const data::SynthData synth = data::synth_generate(sc);

  TinySetup out;
  out.dataset = data::build_dataset(synth.log, synth.catalog);
  out.txt = synth.txt;
  out.img = synth.img;
  ModelConfig& m = out.config.model;
  m.d = 8;
  m.max_len = 6;
  m.n_layers = 1;
  m.n_heads = 1;
  m.dropout = 0.0;
  m.k1 = 2;
  m.k2 = 2;
  m.mu = 10.0;
  m.p_max = 200;
  m.beta = 0.5;
  m.init_std = 0.2;
  out.config.train.precision = Precision::f64;
  out.config.train.seed = seed;

  const auto splits = data::split_leave_one_out(out.dataset, m.max_len);
  std::vector<data::Example> picked{splits.valid.at(0), splits.valid.at(1)};
  for (std::size_t want : {1u, 3u}) {
    for (const auto& ex : splits.train) {
      if (ex.items.size() == want) {
        picked.push_back(ex);
        break;
      }
    }
  }
  out.batch = data::make_batch(picked, out.dataset, m.max_len);
  return out;
}

GradCheckReport run_gradcheck(std::string_view module, std::uint64_t seed,
                              const GradCheckOptions& options) {
  const TinySetup setup = tiny_setup(seed);
  const ModelConfig& mc = setup.config.model;
  const data::SequenceBatch& batch = setup.batch;
  const std::size_t B = batch.batch_size, L = batch.max_len, d = mc.d;
  const Initializer init(seed ^ 0x5eedULL);
  std::vector<std::uint8_t> pad(B * L);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < L; ++i) pad[b * L + i] = batch.is_pad(b, i);

  auto random_streams = [&](const char* tag) {
    PerModality<double> e;
    for (Modality m : active_modalities(mc))
      at(e, m) = init.normal<double>(std::string(tag) + std::string(modality_name(m)),
                                     {B, L, d}, 1.0);
    return e;
  };

  ParamStore<double> params;
  if (module == "item") {
    auto features = FeatureStore<double>::from_matrices(setup.dataset, &setup.txt, &setup.img);
    ItemRepresentation<double> rep(params, mc, features, setup.dataset.n_items(), init);
    return check(params, [&] {
      T loss;
      const auto x = rep.project(batch.item_indices, {B, L});
      const auto cat = rep.catalog();
      for (Modality m : active_modalities(mc)) {
        const std::string n(modality_name(m));
        // The padding row is gradient-free by design, so pad slots are not probed.
        loss = accumulate(loss,
                          probe(rep.add_position(at(x, m)), init, "probe.seq." + n, 1.0, pad));
        loss = accumulate(loss, probe(at(cat, m), init, "probe.cat." + n));
      }
      return loss;
    }, options);
  }
  if (module == "imoe") {
    InteractiveMoe<double> moe(params, mc, init);
    const auto e = random_streams("input.");
    return check(params, [&] {
      T loss;
      const auto out = moe.forward(e);
      for (Modality m : active_modalities(mc))
        loss = accumulate(loss, probe(at(out, m), init, "probe." + std::string(modality_name(m))));
      return loss;
    }, options);
  }
  if (module == "tmoe") {
    TemporalMoe<double> moe(params, mc, init);
    const auto e = random_streams("input.");
    return check(params, [&] {
      const auto time = moe.time_inputs(batch, setup.dataset.min_timestamp);
      T loss = probe(time.r1, init, "probe.r1");
      const auto out = moe.forward(e, time.gate_input);
      for (Modality m : active_modalities(mc))
        loss = accumulate(loss, probe(at(out, m), init, "probe." + std::string(modality_name(m))));
      return loss;
    }, options);
  }
  if (module == "encoder") {
    ModelConfig ec = mc;
    ec.n_heads = 2;
    SequenceEncoder<double> enc(params, ec, "txt", init);
    const T s = init.normal<double>("input.seq", {B, L, d}, 1.0);
    const StepContext ctx{};
    return check(params, [&] {
      // Small probe weights keep the loss near 1, so rounding noise stays
      // well below the zero gradient of the key bias.
      return ops::add(probe(enc.encode(s, pad, ctx, "enc"), init, "probe.h", 0.1),
                      probe(enc.hidden(s, pad, ctx, "enc"), init, "probe.hidden", 0.1));
    }, options);
  }
  if (module == "objectives") {
    const std::size_t N = setup.dataset.n_items(), C = batch.n_categories;
    const T scores = add_normal(params, init, "scores", {B, N}, 1.0);
    const T logits = add_normal(params, init, "cp_logits", {B, L, C}, 1.0);
    const T h_id = add_normal(params, init, "h_id", {B, d}, 1.0);
    const T targets = add_normal(params, init, "target_ids", {B, d}, 1.0);
    const T h_txt = add_normal(params, init, "h_txt", {B, d}, 1.0);
    const T h_txt_aug = add_normal(params, init, "h_txt_aug", {B, d}, 1.0);
    return check(params, [&] {
      const T main = main_loss(scores, batch.targets);
      const T cp = cp_loss(logits, batch.target_categories, pad);
      const T idcl = idcl_loss(h_id, targets, mc.tau);
      const T states[] = {h_txt, h_id};
      const T augmented[] = {h_txt_aug, targets};
      const T pcl = pcl_loss<double>(states, augmented);
      return total_loss(main, cp, idcl, pcl, 0.7, 0.5, 0.3);
    }, options);
  }
  if (module == "model") {
    LoadedData data{setup.dataset, setup.txt, setup.img};
    auto model = build_model<double>(setup.config, data);
    const StepContext ctx{true, seed, 1, 0};
    return grad_check<double>([&] { return model->loss(batch, ctx).total; },
                              model->params().entries(), options);
  }
  throw std::invalid_argument("unknown gradcheck module '" + std::string(module) + "'");
}

}  // namespace hm4sr
