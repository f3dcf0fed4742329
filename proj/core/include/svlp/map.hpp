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

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "svlp/encoders.hpp"
#include "svlp/rng.hpp"
#include "svlp/tape.hpp"

namespace svlp {

// Prompt families, in storage order everywhere (alpha included).
enum class Family : std::size_t { kDa = 0, kDs = 1, kMix = 2, kFixed = 3 };
inline constexpr std::size_t kNumFamilies = 4;
std::string_view family_name(std::size_t k);

// Which families take part in aggregation. Disabled families get weight 0 and
// the softmax runs over the remaining alpha entries.
struct FamilyMask {
  std::array<bool, kNumFamilies> enabled{true, true, true, true};
  bool operator[](std::size_t k) const { return enabled[k]; }
  std::size_t count() const;
  friend bool operator==(const FamilyMask&, const FamilyMask&) = default;
};

struct PromptConfig {
  std::size_t visual_len = 16;  // L_v
  std::size_t n_ctx = 16;       // N_ctx
  bool use_visual = true;
  bool warm_start = true;  // new domain prompts copy the previous domain's
  FamilyMask families;
  friend bool operator==(const PromptConfig&, const PromptConfig&) = default;
};

// Checkpoint names of the prompt bank.
std::string visual_prompt_name(int domain);
std::string ds_prompt_name(int domain);
std::string alpha_name(int domain);
inline constexpr const char* kDaPromptName = "prompt.da";
inline constexpr const char* kLogitScaleName = "logit_scale";

// The bank lives inside the ParameterStore under the names above; this class
// owns the bookkeeping: registration, warm start and freezing.
template <typename T>
class PromptBank {
 public:
  PromptBank(PromptConfig cfg, std::size_t width) : cfg_(cfg), width_(width) {}

  const PromptConfig& config() const { return cfg_; }

  // D_A ~ N(0, 0.02) and logit_scale = ln(10).
  void init_shared(ParameterStore<T>& store, CounterRng& rng) const;
  // Adds D_V(t), D_S(t) and alpha(t). With warm start the prompts copy domain
  // t-1 when it exists; otherwise N(0, 0.02). alpha(t) starts at zero.
  void register_domain(ParameterStore<T>& store, int domain, CounterRng& rng) const;
  void freeze_domain(ParameterStore<T>& store, int domain) const;
  bool has_domain(const ParameterStore<T>& store, int domain) const;
  // Registered domain ids in ascending order.
  std::vector<int> domains(const ParameterStore<T>& store) const;

 private:
  PromptConfig cfg_;
  std::size_t width_;
};

// A family's per-class sequences, packed [kNumClasses * seq_len, C] with the
// spoof row block first.
template <typename T>
struct FamilySequences {
  Var<T> embeddings;
  std::size_t seq_len = 0;
};

template <typename T>
std::array<FamilySequences<T>, kNumFamilies> build_families(Tape<T>& tape, const ParameterStore<T>& store,
                                                             const DualEncoder<T>& encoder, int domain);

// tau * <f_img / |f_img|, f_txt,c / |f_txt,c|> with tau = exp(logit_scale).
// image_features [B, C_out], text_features [N_cls, C_out] -> [B, N_cls].
template <typename T>
Var<T> family_logit(Var<T> image_features, Var<T> text_features, Var<T> logit_scale);

// sum_k softmax(alpha)_k * logits[k] over enabled families.
template <typename T>
Var<T> aggregate(std::span<const Var<T>> family_logits, Var<T> alpha, const FamilyMask& mask = {});

// Mean cross-entropy of the aggregated logits; labels are 0 = spoof, 1 = real.
template <typename T>
Var<T> map_loss(Var<T> aggregated, std::span<const int> labels);

// Encoder plus prompt bank: the full forward path for one domain's prompts.
template <typename T>
class MapModel {
 public:
  MapModel(EncoderConfig enc, PromptConfig prompts);

  const DualEncoder<T>& encoder() const { return encoder_; }
  const PromptBank<T>& bank() const { return bank_; }
  const PromptConfig& prompts() const { return bank_.config(); }

  void init_parameters(ParameterStore<T>& store, CounterRng& rng) const;

  // Per-family text features [N_cls, C_out]; disabled families are left unbound.
  std::array<Var<T>, kNumFamilies> text_features(Tape<T>& tape, const ParameterStore<T>& store, int domain) const;
  // Image features [B, C_out] with D_V(domain) inserted (unless visual prompts are off).
  Var<T> image_features(Tape<T>& tape, const ParameterStore<T>& store, const Tensor<T>& pixels, int domain) const;
  // Aggregated logits [B, N_cls].
  Var<T> logits(Tape<T>& tape, const ParameterStore<T>& store, const Tensor<T>& pixels, int domain) const;
  // Same, reusing text features computed earlier on the same tape.
  Var<T> logits_with(Tape<T>& tape, const ParameterStore<T>& store, const Tensor<T>& pixels, int domain,
                     const std::array<Var<T>, kNumFamilies>& text) const;
  Var<T> loss(Tape<T>& tape, const ParameterStore<T>& store, const Tensor<T>& pixels, std::span<const int> labels,
              int domain) const;
  // Prompt-free, L2-normalized image embedding used by routing.
  Var<T> routing_embedding(Tape<T>& tape, const ParameterStore<T>& store, const Tensor<T>& pixels) const;

 private:
  DualEncoder<T> encoder_;
  PromptBank<T> bank_;
};

extern template class PromptBank<float>;
extern template class PromptBank<double>;
extern template class MapModel<float>;
extern template class MapModel<double>;

}  // namespace svlp
