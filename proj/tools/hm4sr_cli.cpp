// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: data preparation, synthetic data, training,
// evaluation, gradient checks and timestamp histograms.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "hm4sr/core/checkpoint.hpp"
#include "hm4sr/data/synth.hpp"
#include "hm4sr/train/experiment.hpp"
#include "hm4sr/train/gradcheck_suite.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace hm4sr;

namespace {

constexpr const char* kCheckpointFile = "model.ckpt";
constexpr const char* kConfigFile = "config.txt";
constexpr const char* kMetricsFile = "metrics.jsonl";
constexpr const char* kSummaryFile = "summary.json";

nlohmann::ordered_json metrics_json(const RankingMetrics& m) {
  nlohmann::ordered_json j;
  j["ndcg@5"] = m.ndcg5;
  j["ndcg@10"] = m.ndcg10;
  j["mrr@5"] = m.mrr5;
  j["mrr@10"] = m.mrr10;
  j["count"] = m.count;
  return j;
}

int cmd_prepare(const fs::path& interactions, const fs::path& items, const fs::path& txt,
                const fs::path& img, int kcore, const fs::path& out) {
  const data::InteractionLog filtered = data::kcore_filter(data::load_interactions(interactions), kcore);
  if (filtered.empty()) throw data::DataError("no interactions survive the k-core filter");
  std::set<std::string> kept;
  for (const auto& r : filtered.flatten()) kept.insert(r.item);

  const data::ItemCatalog catalog = data::load_items(items);
  data::ItemCatalog kept_catalog;
  kept_catalog.n_categories = catalog.n_categories;
  for (const auto& item : kept) {
    auto it = catalog.categories.find(item);
    kept_catalog.categories[item] = it == catalog.categories.end() ? std::vector<int>{} : it->second;
  }
  auto subset = [&](const fs::path& path) {
    const data::FeatureMatrix all = data::read_hmft(path);
    data::FeatureMatrix out_m(all.dim());
    for (const auto& item : kept) {
      if (!all.contains(item)) {
        throw data::DataError(path.string() + " has no row for item '" + item + "'");
      }
      out_m.append(item, all.row(item));
    }
    return out_m;
  };
  fs::create_directories(out);
  data::write_interactions(out / data::DataDirLayout::interactions, filtered);
  data::write_items(out / data::DataDirLayout::items, kept_catalog);
  data::write_hmft(out / data::DataDirLayout::txt_features, subset(txt));
  data::write_hmft(out / data::DataDirLayout::img_features, subset(img));
  const std::string stats = data::stats_to_json(data::compute_stats(filtered));
  std::ofstream(out / data::DataDirLayout::stats) << stats << '\n';
  std::cout << stats << '\n';
  return 0;
}

int cmd_train(const fs::path& data_dir, const std::string& config_path, const fs::path& out,
              const std::string& variant) {
  RunConfig config = config_path.empty() ? RunConfig{} : load_config(config_path);
  apply_variant(config.model, variant);
  config.validate();
  const LoadedData data = load_data_dir(data_dir, config.model);
  fs::create_directories(out);
  std::ofstream(out / kConfigFile) << config_to_text(config);
  std::ofstream metrics(out / kMetricsFile, std::ios::app);

  TrainHooks hooks;
  hooks.on_epoch = [&](const MetricsReport& r) {
    const std::string line = to_json_line(r);
    std::cout << line << std::endl;
    metrics << line << std::endl;
  };

  auto run = [&](auto tag) {
    using Real = decltype(tag);
    auto model = build_model<Real>(config, data);
    const auto mode = config.train.per_target ? data::TrainTargets::per_target
                                              : data::TrainTargets::last_only;
    const auto splits = data::split_leave_one_out(data.dataset, config.model.max_len, mode);
    const TrainResult result = train(*model, data.dataset, splits, config.train, hooks);
    save_checkpoint<Real>(out / kCheckpointFile, model->params().entries());
    const EvalOptions eval{config.train.eval_batch_size, config.train.eval_threads};
    nlohmann::ordered_json summary;
    summary["variant"] = variant;
    summary["best_epoch"] = result.best_epoch;
    summary["epochs_run"] = result.history.size();
    summary["stopped_early"] = result.stopped_early;
    summary["valid"] = metrics_json(evaluate(*model, data.dataset, splits.valid, eval));
    summary["test"] = metrics_json(evaluate(*model, data.dataset, splits.test, eval));
    std::ofstream(out / kSummaryFile) << summary.dump(2) << '\n';
    std::cerr << summary.dump() << '\n';
  };
  if (config.train.precision == Precision::f64) run(double{});
  else run(float{});
  return 0;
}

int cmd_eval(const fs::path& data_dir, const fs::path& checkpoint, std::string config_path,
             const std::string& split) {
  if (config_path.empty()) config_path = (checkpoint.parent_path() / kConfigFile).string();
  const RunConfig config = load_config(config_path);
  const LoadedData data = load_data_dir(data_dir, config.model);
  const auto splits = data::split_leave_one_out(data.dataset, config.model.max_len);
  const std::vector<data::Example>* examples = nullptr;
  if (split == "test") examples = &splits.test;
  else if (split == "valid") examples = &splits.valid;
  else if (split == "train") examples = &splits.train;
  else throw std::invalid_argument("unknown split '" + split + "'");

  auto run = [&](auto tag) {
    using Real = decltype(tag);
    auto model = build_model<Real>(config, data);
    restore_checkpoint<Real>(checkpoint, model->params());
    const EvalOptions eval{config.train.eval_batch_size, config.train.eval_threads};
    nlohmann::ordered_json j = metrics_json(evaluate(*model, data.dataset, *examples, eval));
    j["split"] = split;
    std::cout << j.dump() << '\n';
  };
  if (config.train.precision == Precision::f64) run(double{});
  else run(float{});
  return 0;
}

int cmd_gradcheck(const std::string& module) {
  std::vector<std::string> modules;
  if (module.empty() || module == "all") {
    for (auto m : kGradcheckModules) modules.emplace_back(m);
  } else {
    modules.push_back(module);
  }
  bool ok = true;
  for (const auto& m : modules) {
    const GradCheckReport report = run_gradcheck(m);
    for (const auto& t : report.tensors) {
      std::printf("%-12s %-32s n=%-6zu max_rel=%.3e\n", m.c_str(), t.name.c_str(), t.size,
                  t.max_rel_error);
    }
    std::printf("%-12s %s (worst %.3e, tolerance %.0e)\n", m.c_str(),
                report.passed ? "PASS" : "FAIL", report.worst(), report.tolerance);
    ok = ok && report.passed;
  }
  return ok ? 0 : 1;
}

int cmd_histogram(const fs::path& data_dir, int bins) {
  const auto log = data::load_interactions(data_dir / data::DataDirLayout::interactions);
  const auto counts = data::time_histogram(log, bins);
  for (std::size_t i = 0; i < counts.size(); ++i) std::cout << i << '\t' << counts[i] << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-modal sequential recommender with hierarchical mixture of experts"};
  app.require_subcommand(1);

  fs::path interactions, items, txt, img, out, data_dir, checkpoint;
  int kcore = 5;
  auto* prepare = app.add_subcommand("prepare", "Filter raw files into a data directory");
  prepare->add_option("--interactions", interactions)->required();
  prepare->add_option("--items", items)->required();
  prepare->add_option("--txt-features", txt)->required();
  prepare->add_option("--img-features", img)->required();
  prepare->add_option("--kcore", kcore)->capture_default_str();
  prepare->add_option("--out", out)->required();

  data::SynthConfig sc;
  auto* synth = app.add_subcommand("synth", "Write a synthetic data directory");
  synth->add_option("--users", sc.n_users)->capture_default_str();
  synth->add_option("--items", sc.n_items)->capture_default_str();
  synth->add_option("--seed", sc.seed)->capture_default_str();
  synth->add_option("--categories", sc.n_categories)->capture_default_str();
  synth->add_option("--d-txt", sc.d_txt)->capture_default_str();
  synth->add_option("--d-img", sc.d_img)->capture_default_str();
  synth->add_option("--min-len", sc.min_len)->capture_default_str();
  synth->add_option("--max-len", sc.max_len)->capture_default_str();
  synth->add_flag("--drift", sc.drift);
  synth->add_option("--out", out)->required();

  std::string config_path, variant = "full", split = "test", module;
  auto* train_cmd = app.add_subcommand("train", "Train, writing metrics and a checkpoint");
  train_cmd->add_option("--data", data_dir)->required();
  train_cmd->add_option("--config", config_path);
  train_cmd->add_option("--out", out)->required();
  train_cmd->add_option("--variant", variant)->capture_default_str();

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--data", data_dir)->required();
  eval_cmd->add_option("--checkpoint", checkpoint)->required();
  eval_cmd->add_option("--config", config_path, "defaults to config.txt beside the checkpoint");
  eval_cmd->add_option("--split", split)->capture_default_str();

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradcheck->add_option("--module", module, "item, imoe, tmoe, encoder, objectives, model or all");

  int bins = 30;
  auto* histogram = app.add_subcommand("histogram", "Interaction counts per time slice");
  histogram->add_option("--data", data_dir)->required();
  histogram->add_option("--bins", bins)->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (prepare->parsed()) return cmd_prepare(interactions, items, txt, img, kcore, out);
    if (synth->parsed()) {
      data::write_synth(data::synth_generate(sc), out);
      return 0;
    }
    if (train_cmd->parsed()) return cmd_train(data_dir, config_path, out, variant);
    if (eval_cmd->parsed()) return cmd_eval(data_dir, checkpoint, config_path, split);
    if (gradcheck->parsed()) return cmd_gradcheck(module);
    if (histogram->parsed()) return cmd_histogram(data_dir, bins);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
