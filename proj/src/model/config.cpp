// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#include "hm4sr/model/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace hm4sr {

TimeVariant parse_time_variant(std::string_view text) {
  if (text == "both") return TimeVariant::both;
  if (text == "interval_only") return TimeVariant::interval_only;
  if (text == "absolute_only") return TimeVariant::absolute_only;
  if (text == "cos_interval") return TimeVariant::cos_interval;
  throw std::invalid_argument("unknown time variant '" + std::string(text) + "'");
}

std::string_view to_string(TimeVariant v) {
  switch (v) {
    case TimeVariant::both: return "both";
    case TimeVariant::interval_only: return "interval_only";
    case TimeVariant::absolute_only: return "absolute_only";
    case TimeVariant::cos_interval: return "cos_interval";
  }
  return "both";
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw std::invalid_argument("config: bad value '" + std::string(value) + "' for key '" +
                              std::string(key) + "'");
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, value);
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value);
}

std::string fmt_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

struct Field {
  std::string_view key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define HM4SR_SIZE(KEY, MEMBER)                                                      \
  Field{KEY, [](RunConfig& c, std::string_view v) { c.MEMBER = parse_number<std::size_t>(KEY, v); }, \
        [](const RunConfig& c) { return std::to_string(c.MEMBER); }}
#define HM4SR_U64(KEY, MEMBER)                                                       \
  Field{KEY, [](RunConfig& c, std::string_view v) { c.MEMBER = parse_number<std::uint64_t>(KEY, v); }, \
        [](const RunConfig& c) { return std::to_string(c.MEMBER); }}
#define HM4SR_REAL(KEY, MEMBER)                                                      \
  Field{KEY, [](RunConfig& c, std::string_view v) { c.MEMBER = parse_number<double>(KEY, v); }, \
        [](const RunConfig& c) { return fmt_double(c.MEMBER); }}
#define HM4SR_BOOL(KEY, MEMBER)                                                      \
  Field{KEY, [](RunConfig& c, std::string_view v) { c.MEMBER = parse_bool(KEY, v); },  \
        [](const RunConfig& c) { return std::string(c.MEMBER ? "true" : "false"); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      HM4SR_SIZE("d", model.d),
      HM4SR_SIZE("L", model.max_len),
      HM4SR_SIZE("n_layers", model.n_layers),
      HM4SR_SIZE("n_heads", model.n_heads),
      HM4SR_REAL("dropout", model.dropout),
      HM4SR_BOOL("causal", model.causal),
      HM4SR_SIZE("k1", model.k1),
      HM4SR_SIZE("k2", model.k2),
      HM4SR_REAL("mu", model.mu),
      HM4SR_REAL("freq", model.freq),
      HM4SR_SIZE("P_max", model.p_max),
      Field{"time_variant",
            [](RunConfig& c, std::string_view v) { c.model.time_variant = parse_time_variant(v); },
            [](const RunConfig& c) { return std::string(to_string(c.model.time_variant)); }},
      HM4SR_REAL("alpha_init", model.alpha_init),
      Field{"score_with",
            [](RunConfig& c, std::string_view v) {
              if (v == "initial") c.model.score_with = ScoreSource::initial;
              else if (v == "interactive") c.model.score_with = ScoreSource::interactive;
              else bad_value("score_with", v);
            },
            [](const RunConfig& c) {
              return std::string(c.model.score_with == ScoreSource::initial ? "initial"
                                                                            : "interactive");
            }},
      HM4SR_REAL("tau", model.tau),
      HM4SR_REAL("beta", model.beta),
      HM4SR_REAL("lambda1", model.lambda1),
      HM4SR_REAL("lambda2", model.lambda2),
      HM4SR_REAL("lambda3", model.lambda3),
      HM4SR_BOOL("enable_imoe", model.enable_imoe),
      HM4SR_BOOL("enable_tmoe", model.enable_tmoe),
      HM4SR_BOOL("enable_cp", model.enable_cp),
      HM4SR_BOOL("enable_idcl", model.enable_idcl),
      HM4SR_BOOL("enable_pcl", model.enable_pcl),
      HM4SR_BOOL("use_text", model.use_text),
      HM4SR_BOOL("use_image", model.use_image),
      HM4SR_REAL("init_std", model.init_std),
      HM4SR_REAL("lr", train.lr),
      HM4SR_SIZE("batch_size", train.batch_size),
      HM4SR_SIZE("epochs", train.epochs),
      HM4SR_SIZE("patience", train.patience),
      HM4SR_U64("seed", train.seed),
      HM4SR_REAL("grad_clip", train.grad_clip),
      HM4SR_BOOL("per_target", train.per_target),
      HM4SR_SIZE("eval_threads", train.eval_threads),
      HM4SR_SIZE("eval_batch_size", train.eval_batch_size),
      Field{"precision",
            [](RunConfig& c, std::string_view v) {
              if (v == "f32") c.train.precision = Precision::f32;
              else if (v == "f64") c.train.precision = Precision::f64;
              else bad_value("precision", v);
            },
            [](const RunConfig& c) {
              return std::string(c.train.precision == Precision::f32 ? "f32" : "f64");
            }},
  };
  return table;
}

#undef HM4SR_SIZE
#undef HM4SR_U64
#undef HM4SR_REAL
#undef HM4SR_BOOL

}  // namespace

void RunConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("config: ") + what);
  };
  require(model.d >= 1, "d must be >= 1");
  require(model.max_len >= 1, "L must be >= 1");
  require(model.n_heads >= 1 && model.d % model.n_heads == 0,
          "d must be divisible by n_heads");
  require(model.n_layers >= 1, "n_layers must be >= 1");
  require(model.dropout >= 0.0 && model.dropout < 1.0, "dropout must lie in [0, 1)");
  require(model.k1 >= 1 && model.k2 >= 1, "k1 and k2 must be >= 1");
  require(model.mu > 0.0, "mu must be positive");
  require(model.freq > 1.0, "freq must exceed 1");
  require(model.p_max >= 1, "P_max must be >= 1");
  require(model.tau > 0.0, "tau must be positive");
  require(model.beta >= 0.0 && model.beta < 1.0, "beta must lie in [0, 1)");
  require(model.lambda1 >= 0.0 && model.lambda2 >= 0.0 && model.lambda3 >= 0.0,
          "loss weights must be >= 0");
  require(model.init_std >= 0.0, "init_std must be >= 0");
  require(train.lr >= 0.0, "lr must be >= 0");
  require(train.batch_size >= 1 && train.eval_batch_size >= 1, "batch sizes must be >= 1");
  require(train.eval_threads >= 1, "eval_threads must be >= 1");
  require(train.grad_clip >= 0.0, "grad_clip must be >= 0");
}

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(config, value);
      return;
    }
  }
  throw std::invalid_argument("config: unknown key '" + std::string(key) + "'");
}

RunConfig parse_config(std::string_view text) {
  RunConfig config;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                  " is not 'key = value'");
    }
    set_config_value(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_text(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) {
    out += std::string(f.key) + " = " + f.get(config) + "\n";
  }
  return out;
}

}  // namespace hm4sr
