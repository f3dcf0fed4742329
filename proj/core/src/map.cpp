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

#include "svlp/map.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace svlp {

std::string_view family_name(std::size_t k) {
  static constexpr std::array<std::string_view, kNumFamilies> kNames{"da", "ds", "mix", "fixed"};
  return kNames.at(k);
}

std::size_t FamilyMask::count() const {
  return static_cast<std::size_t>(std::count(enabled.begin(), enabled.end(), true));
}

std::string visual_prompt_name(int domain) { return "prompt.visual." + std::to_string(domain); }
std::string ds_prompt_name(int domain) { return "prompt.ds." + std::to_string(domain); }
std::string alpha_name(int domain) { return "alpha." + std::to_string(domain); }

namespace {

template <typename T>
Tensor<T> normal_tensor(Shape shape, CounterRng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.storage()) v = static_cast<T>(rng.normal(0.0, 0.02));
  return t;
}

}  // namespace

template <typename T>
void PromptBank<T>::init_shared(ParameterStore<T>& store, CounterRng& rng) const {
  store.add(kDaPromptName, normal_tensor<T>({cfg_.n_ctx, width_}, rng));
  store.add(kLogitScaleName, Tensor<T>::scalar(static_cast<T>(std::log(10.0))));
}

template <typename T>
void PromptBank<T>::register_domain(ParameterStore<T>& store, int domain, CounterRng& rng) const {
  if (domain < 1) throw UsageError("domain ids start at 1");
  if (has_domain(store, domain)) throw UsageError("domain " + std::to_string(domain) + " already registered");
  const bool warm = cfg_.warm_start && has_domain(store, domain - 1);
  auto visual = warm ? store.get(visual_prompt_name(domain - 1)) : normal_tensor<T>({cfg_.visual_len, width_}, rng);
  auto ds = warm ? store.get(ds_prompt_name(domain - 1)) : normal_tensor<T>({cfg_.n_ctx, width_}, rng);
  store.add(visual_prompt_name(domain), std::move(visual));
  store.add(ds_prompt_name(domain), std::move(ds));
  store.add(alpha_name(domain), Tensor<T>({kNumFamilies}));
}

template <typename T>
void PromptBank<T>::freeze_domain(ParameterStore<T>& store, int domain) const {
  store.set_frozen(visual_prompt_name(domain), true);
  store.set_frozen(ds_prompt_name(domain), true);
  store.set_frozen(alpha_name(domain), true);
}

template <typename T>
bool PromptBank<T>::has_domain(const ParameterStore<T>& store, int domain) const {
  return store.contains(alpha_name(domain));
}

template <typename T>
std::vector<int> PromptBank<T>::domains(const ParameterStore<T>& store) const {
  std::vector<int> out;
  for (const auto& e : store.entries()) {
    if (!e.name.starts_with("alpha.")) continue;
    int d = 0;
    const char* first = e.name.data() + 6;
    const char* last = e.name.data() + e.name.size();
    if (std::from_chars(first, last, d).ptr == last) out.push_back(d);
  }
  std::sort(out.begin(), out.end());
  return out;
}

template <typename T>
std::array<FamilySequences<T>, kNumFamilies> build_families(Tape<T>& tape, const ParameterStore<T>& store,
                                                             const DualEncoder<T>& encoder, int domain) {
  if (!store.contains(alpha_name(domain))) throw UsageError("unknown domain id " + std::to_string(domain));
  const TokenTable& tok = encoder.tokens();
  const int sos_id[1] = {TokenTable::kSos};
  const int eos_id[1] = {TokenTable::kEos};
  auto sos = encoder.embed_tokens(tape, store, sos_id);
  auto eos = encoder.embed_tokens(tape, store, eos_id);
  auto da = tape.param(store, kDaPromptName);
  auto ds = tape.param(store, ds_prompt_name(domain));

  std::array<FamilySequences<T>, kNumFamilies> out;
  std::array<std::vector<Var<T>>, kNumFamilies> rows;
  for (int c = 0; c < static_cast<int>(kNumClasses); ++c) {
    const int cls_id[1] = {tok.id(class_name(c))};
    auto e_c = encoder.embed_tokens(tape, store, cls_id);
    for (auto v : {sos, da, e_c, eos}) rows[0].push_back(v);
    for (auto v : {sos, ds, e_c, eos}) rows[1].push_back(v);
    for (auto v : {sos, da, ds, e_c, eos}) rows[2].push_back(v);
    rows[3].push_back(encoder.embed_tokens(tape, store, tok.tokenize_fixed(class_name(c))));
  }
  for (std::size_t k = 0; k < kNumFamilies; ++k) {
    out[k].embeddings = concat_rows(rows[k]);
    out[k].seq_len = out[k].embeddings.value().rows() / kNumClasses;
  }
  return out;
}

template <typename T>
Var<T> family_logit(Var<T> image_features, Var<T> text_features, Var<T> logit_scale) {
  auto cos = matmul_nt(l2_normalize(image_features), l2_normalize(text_features));
  return scale_by(cos, exp(logit_scale));
}

template <typename T>
Var<T> aggregate(std::span<const Var<T>> family_logits, Var<T> alpha, const FamilyMask& mask) {
  if (family_logits.size() != kNumFamilies) throw ShapeError("aggregate expects one logit block per family");
  if (alpha.value().size() != kNumFamilies) throw ShapeError("alpha must have one entry per family");
  if (mask.count() == 0) throw UsageError("aggregate: every family is disabled");
  Var<T> weights;
  std::vector<std::size_t> enabled;
  for (std::size_t k = 0; k < kNumFamilies; ++k) {
    if (mask[k]) enabled.push_back(k);
  }
  if (enabled.size() == kNumFamilies) {
    weights = softmax(alpha);
  } else {
    std::vector<Var<T>> parts;
    for (std::size_t k : enabled) parts.push_back(pick(alpha, k));
    weights = softmax(concat_rows(parts), 0);
  }
  Var<T> agg;
  for (std::size_t j = 0; j < enabled.size(); ++j) {
    const std::size_t k = enabled[j];
    if (!family_logits[k].valid()) throw UsageError("aggregate: missing logits for an enabled family");
    auto term = scale_by(family_logits[k], pick(weights, j));
    agg = agg.valid() ? add(agg, term) : term;
  }
  return agg;
}

template <typename T>
Var<T> map_loss(Var<T> aggregated, std::span<const int> labels) {
  if (aggregated.value().cols() != kNumClasses) throw ShapeError("map_loss expects [B, 2] logits");
  return cross_entropy(aggregated, labels);
}

template <typename T>
MapModel<T>::MapModel(EncoderConfig enc, PromptConfig prompts)
    : encoder_(enc, TokenTable::standard()), bank_(prompts, enc.width) {
  enc.validate(prompts.visual_len, prompts.n_ctx);
  if (prompts.families.count() == 0) throw ConfigError("at least one prompt family must stay enabled");
}

template <typename T>
void MapModel<T>::init_parameters(ParameterStore<T>& store, CounterRng& rng) const {
  encoder_.init_parameters(store, rng);
  store.set_frozen("class_embedding", true);
  bank_.init_shared(store, rng);
}

template <typename T>
std::array<Var<T>, kNumFamilies> MapModel<T>::text_features(Tape<T>& tape, const ParameterStore<T>& store,
                                                            int domain) const {
  auto fams = build_families(tape, store, encoder_, domain);
  std::array<Var<T>, kNumFamilies> out;
  for (std::size_t k = 0; k < kNumFamilies; ++k) {
    if (!prompts().families[k]) continue;
    out[k] = encoder_.encode_text(tape, store, fams[k].embeddings, kNumClasses, fams[k].seq_len);
  }
  return out;
}

template <typename T>
Var<T> MapModel<T>::image_features(Tape<T>& tape, const ParameterStore<T>& store, const Tensor<T>& pixels,
                                   int domain) const {
  std::optional<Var<T>> prompt;
  if (prompts().use_visual) prompt = tape.param(store, visual_prompt_name(domain));
  return encoder_.encode_images(tape, store, pixels, prompt);
}

template <typename T>
Var<T> MapModel<T>::logits_with(Tape<T>& tape, const ParameterStore<T>& store, const Tensor<T>& pixels, int domain,
                                const std::array<Var<T>, kNumFamilies>& text) const {
  auto img = image_features(tape, store, pixels, domain);
  auto scale = tape.param(store, kLogitScaleName);
  std::array<Var<T>, kNumFamilies> fam;
  for (std::size_t k = 0; k < kNumFamilies; ++k) {
    if (prompts().families[k]) fam[k] = family_logit(img, text[k], scale);
  }
  return aggregate<T>(fam, tape.param(store, alpha_name(domain)), prompts().families);
}

template <typename T>
Var<T> MapModel<T>::logits(Tape<T>& tape, const ParameterStore<T>& store, const Tensor<T>& pixels,
                           int domain) const {
  return logits_with(tape, store, pixels, domain, text_features(tape, store, domain));
}

template <typename T>
Var<T> MapModel<T>::loss(Tape<T>& tape, const ParameterStore<T>& store, const Tensor<T>& pixels,
                         std::span<const int> labels, int domain) const {
  return map_loss(logits(tape, store, pixels, domain), labels);
}

template <typename T>
Var<T> MapModel<T>::routing_embedding(Tape<T>& tape, const ParameterStore<T>& store, const Tensor<T>& pixels) const {
  return l2_normalize(encoder_.encode_images(tape, store, pixels, std::nullopt));
}

#define SVLP_INSTANTIATE_MAP(T)                                                                              \
  template class PromptBank<T>;                                                                              \
  template class MapModel<T>;                                                                                \
  template std::array<FamilySequences<T>, kNumFamilies> build_families(Tape<T>&, const ParameterStore<T>&,   \
                                                                       const DualEncoder<T>&, int);          \
  template Var<T> family_logit(Var<T>, Var<T>, Var<T>);                                                      \
  template Var<T> aggregate(std::span<const Var<T>>, Var<T>, const FamilyMask&);                             \
  template Var<T> map_loss(Var<T>, std::span<const int>);

SVLP_INSTANTIATE_MAP(float)
SVLP_INSTANTIATE_MAP(double)

}  // namespace svlp
