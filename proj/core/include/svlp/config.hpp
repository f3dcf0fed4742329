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

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "svlp/encoders.hpp"
#include "svlp/ini.hpp"
#include "svlp/map.hpp"
#include "svlp/metrics.hpp"
#include "svlp/routing.hpp"
#include "svlp/sewc.hpp"

namespace svlp {

enum class TrainMode { kSvlp, kFt, kJt };
std::string_view mode_name(TrainMode mode);
TrainMode parse_mode(std::string_view name);

struct Ablation {
  bool no_da = false;
  bool no_ds = false;
  bool no_mix = false;
  bool no_fixed = false;
  bool no_visual = false;
  bool no_sewc = false;

  // "no-da", "no-ds", "no-mix", "no-fixed", "no-visual", "no-sewc".
  void set(std::string_view flag);
  bool any() const { return no_da || no_ds || no_mix || no_fixed || no_visual || no_sewc; }
  friend bool operator==(const Ablation&, const Ablation&) = default;
};

struct TrainConfig {
  std::string profile = "toy";
  TrainMode mode = TrainMode::kSvlp;
  EncoderConfig encoder;
  std::size_t visual_len = 16;
  std::size_t n_ctx = 16;
  bool warm_start_prompts = true;

  double lr = 1e-4;
  double weight_decay = 1e-5;
  std::size_t batch = 8;
  std::size_t iterations = 500;  // per domain; jt runs iterations x domains
  std::size_t warmup = 0;        // linear learning-rate ramp at the start of each domain
  std::uint64_t seed = 1;
  std::size_t eval_batch = 50;
  Ablation ablation;

  double p = 0.5;
  double sewc_lambda = 1.0;
  std::size_t fisher_samples = 256;
  bool sewc_sum_selected_only = false;

  std::size_t k = 5;
  KMeansOptions kmeans;

  std::string threshold = "eer";

  // "toy" (lr 1e-4) or "paper" (lr 1e-5, weight decay 1e-5).
  static TrainConfig for_profile(std::string_view profile);

  void validate() const;
  // Prompt layout for the mode: svlp honours the ablation flags, ft and jt use
  // one shared visual prompt, the shared context and the fixed family.
  PromptConfig prompt_config() const;
  SewcOptions sewc_options() const;
  ThresholdPolicy threshold_policy() const { return ThresholdPolicy::parse(threshold); }
  // Mode plus ablation flags, e.g. "svlp+no-da".
  std::string tag() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Sections [model], [train], [sewc], [routing], [data]. A [train] profile key
// is applied first; every other key overrides it. Unknown sections or keys
// throw ConfigError.
TrainConfig parse_config(const IniDocument& doc);
TrainConfig parse_config_text(std::string_view text);
IniDocument render_config(const TrainConfig& cfg);

}  // namespace svlp
