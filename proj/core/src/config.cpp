// Copyright 2026 The svlp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "svlp/config.hpp"

#include <functional>
#include <type_traits>

#include "svlp/error.hpp"

namespace svlp {

std::string_view mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::kSvlp:
      return "svlp";
    case TrainMode::kFt:
      return "ft";
    case TrainMode::kJt:
      return "jt";
  }
  return "?";
}

TrainMode parse_mode(std::string_view name) {
  if (name == "svlp") return TrainMode::kSvlp;
  if (name == "ft") return TrainMode::kFt;
  if (name == "jt") return TrainMode::kJt;
  throw ConfigError("unknown mode '" + std::string(name) + "' (svlp, ft, jt)");
}

void Ablation::set(std::string_view flag) {
  if (flag == "no-da") {
    no_da = true;
  } else if (flag == "no-ds") {
    no_ds = true;
  } else if (flag == "no-mix") {
    no_mix = true;
  } else if (flag == "no-fixed") {
    no_fixed = true;
  } else if (flag == "no-visual") {
    no_visual = true;
  } else if (flag == "no-sewc") {
    no_sewc = true;
  } else {
    throw ConfigError("unknown ablation '" + std::string(flag) +
                      "' (no-da, no-ds, no-mix, no-fixed, no-visual, no-sewc)");
  }
}

TrainConfig TrainConfig::for_profile(std::string_view profile) {
  TrainConfig c;
  if (profile == "toy") {
    c.profile = "toy";
  } else if (profile == "paper") {
    c.profile = "paper";
    c.lr = 1e-5;
    c.weight_decay = 1e-5;
  } else {
    throw ConfigError("unknown profile '" + std::string(profile) + "' (toy, paper)");
  }
  return c;
}

void TrainConfig::validate() const {
  if (encoder.vocab != TokenTable::standard().size()) {
    throw ConfigError("model.vocab must equal the token table size " + std::to_string(TokenTable::standard().size()));
  }
  encoder.validate(visual_len, n_ctx);
  if (!(lr > 0)) throw ConfigError("train.lr must be positive");
  if (!(weight_decay >= 0)) throw ConfigError("train.weight_decay must be non-negative");
  if (batch == 0 || iterations == 0 || eval_batch == 0) throw ConfigError("train.batch, iterations, eval_batch must be positive");
  if (!(p >= 0 && p <= 1)) throw ConfigError("sewc.p must lie in [0, 1]");
  if (!(sewc_lambda >= 0)) throw ConfigError("sewc.lambda must be non-negative");
  if (fisher_samples == 0) throw ConfigError("sewc.fisher_samples must be positive");
  if (k == 0) throw ConfigError("routing.k must be positive");
  if (kmeans.max_iterations == 0 || !(kmeans.tolerance >= 0)) throw ConfigError("bad routing k-means settings");
  try {
    (void)threshold_policy();
  } catch (const UsageError& e) {
    throw ConfigError(std::string("data.threshold: ") + e.what());
  }
  if (prompt_config().families.count() == 0) throw ConfigError("every prompt family is ablated");
}

PromptConfig TrainConfig::prompt_config() const {
  PromptConfig pc;
  pc.visual_len = visual_len;
  pc.n_ctx = n_ctx;
  pc.warm_start = warm_start_prompts;
  if (mode == TrainMode::kSvlp) {
    pc.use_visual = !ablation.no_visual;
    pc.families.enabled = {!ablation.no_da, !ablation.no_ds, !ablation.no_mix, !ablation.no_fixed};
  } else {
    pc.families.enabled = {true, false, false, true};
  }
  return pc;
}

SewcOptions TrainConfig::sewc_options() const {
  SewcOptions o;
  o.lambda = ablation.no_sewc ? 0.0 : sewc_lambda;
  o.sum_selected_only = sewc_sum_selected_only;
  return o;
}

std::string TrainConfig::tag() const {
  std::string t(mode_name(mode));
  const std::pair<bool, const char*> flags[] = {
      {ablation.no_da, "no-da"},       {ablation.no_ds, "no-ds"},         {ablation.no_mix, "no-mix"},
      {ablation.no_fixed, "no-fixed"}, {ablation.no_visual, "no-visual"}, {ablation.no_sewc, "no-sewc"}};
  for (const auto& [on, name] : flags) {
    if (on) t += std::string("+") + name;
  }
  return t;
}

namespace {

// Visits every (section, key, field) of a config in rendering order.
template <typename C, typename F>
void config_fields(C& c, F&& f) {
  f("model", "width", c.encoder.width);
  f("model", "embed_dim", c.encoder.embed_dim);
  f("model", "depth", c.encoder.depth);
  f("model", "heads", c.encoder.heads);
  f("model", "patch", c.encoder.patch);
  f("model", "image_side", c.encoder.image_side);
  f("model", "channels", c.encoder.channels);
  f("model", "vocab", c.encoder.vocab);
  f("model", "max_seq", c.encoder.max_seq);
  f("model", "visual_len", c.visual_len);
  f("model", "n_ctx", c.n_ctx);
  f("model", "warm_start_prompts", c.warm_start_prompts);
  f("train", "profile", c.profile);
  f("train", "mode", c.mode);
  f("train", "lr", c.lr);
  f("train", "weight_decay", c.weight_decay);
  f("train", "batch", c.batch);
  f("train", "iterations", c.iterations);
  f("train", "warmup", c.warmup);
  f("train", "seed", c.seed);
  f("train", "eval_batch", c.eval_batch);
  f("train", "no_da", c.ablation.no_da);
  f("train", "no_ds", c.ablation.no_ds);
  f("train", "no_mix", c.ablation.no_mix);
  f("train", "no_fixed", c.ablation.no_fixed);
  f("train", "no_visual", c.ablation.no_visual);
  f("sewc", "p", c.p);
  f("sewc", "lambda", c.sewc_lambda);
  f("sewc", "no_sewc", c.ablation.no_sewc);
  f("sewc", "fisher_samples", c.fisher_samples);
  f("sewc", "sum_selected_only", c.sewc_sum_selected_only);
  f("routing", "k", c.k);
  f("routing", "max_iterations", c.kmeans.max_iterations);
  f("routing", "tolerance", c.kmeans.tolerance);
  f("data", "threshold", c.threshold);
}

}  // namespace

TrainConfig parse_config(const IniDocument& doc) {
  TrainConfig cfg;
  if (const IniSection* train = doc.find("train")) {
    if (const std::string* prof = train->find("profile")) cfg = TrainConfig::for_profile(*prof);
  }
  for (const auto& sec : doc.sections) {
    if (sec.name != "model" && sec.name != "train" && sec.name != "sewc" && sec.name != "routing" &&
        sec.name != "data") {
      throw ConfigError("unknown section [" + sec.name + "]");
    }
    for (const auto& [key, value] : sec.values) {
      bool known = false;
      const std::string what = sec.name + "." + key;
      config_fields(cfg, [&](std::string_view s, std::string_view k, auto& field) {
        if (s != sec.name || k != key) return;
        known = true;
        using F = std::decay_t<decltype(field)>;
        if constexpr (std::is_same_v<F, bool>) {
          field = ini_bool(value, what);
        } else if constexpr (std::is_same_v<F, double>) {
          field = ini_f64(value, what);
        } else if constexpr (std::is_same_v<F, std::string>) {
          field = value;
        } else if constexpr (std::is_same_v<F, TrainMode>) {
          field = parse_mode(value);
        } else {
          field = static_cast<F>(ini_u64(value, what));
        }
      });
      if (!known) throw ConfigError("unknown key '" + key + "' in [" + sec.name + "]");
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig parse_config_text(std::string_view text) { return parse_config(IniDocument::parse(text)); }

IniDocument render_config(const TrainConfig& cfg) {
  IniDocument doc;
  TrainConfig c = cfg;
  config_fields(c, [&](std::string_view s, std::string_view k, auto& field) {
    using F = std::decay_t<decltype(field)>;
    std::string v;
    if constexpr (std::is_same_v<F, bool>) {
      v = ini_format(field);
    } else if constexpr (std::is_same_v<F, double>) {
      v = ini_format(field);
    } else if constexpr (std::is_same_v<F, std::string>) {
      v = field;
    } else if constexpr (std::is_same_v<F, TrainMode>) {
      v = std::string(mode_name(field));
    } else {
      v = std::to_string(field);
    }
    doc.section(s).values.emplace_back(std::string(k), v);
  });
  return doc;
}

}  // namespace svlp
