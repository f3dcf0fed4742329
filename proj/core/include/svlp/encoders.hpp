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
#include <optional>
#include <span>
#include <string>

#include "svlp/rng.hpp"
#include "svlp/tape.hpp"
#include "svlp/tokens.hpp"

namespace svlp {

struct EncoderConfig {
  std::size_t width = 64;       // C, token width
  std::size_t embed_dim = 64;   // C_out, shared embedding width
  std::size_t depth = 2;        // transformer blocks per encoder
  std::size_t heads = 4;
  std::size_t patch = 8;
  std::size_t image_side = 32;
  std::size_t channels = 1;
  std::size_t vocab = 10;       // size of the fixed token table
  std::size_t max_seq = 40;

  std::size_t patches() const { return (image_side / patch) * (image_side / patch); }
  std::size_t patch_dim() const { return channels * patch * patch; }
  // Throws ConfigError unless the config can host `prompt_len` visual prompt
  // tokens and text sequences with `n_ctx` context rows per learned context.
  void validate(std::size_t prompt_len, std::size_t n_ctx) const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

// Miniature CLIP-style dual encoder: a pre-LN patch transformer over
// [CLS | visual prompt | patches] and a token transformer read out at [eos],
// both projected into a shared embed_dim space.
//
// Positional rows of the image table: 0 is [CLS], 1..P are the patches in
// raster order, P+1.. are the prompt slots. Patches keep their rows whether or
// not a prompt is present. Text positions follow the sequence index.
template <typename T>
class DualEncoder {
 public:
  DualEncoder(EncoderConfig cfg, TokenTable tokens);

  const EncoderConfig& config() const { return cfg_; }
  const TokenTable& tokens() const { return tokens_; }

  // Registers image.*, text.* and class_embedding. Weights ~ N(0, 0.02),
  // layer-norm gains 1, biases 0.
  void init_parameters(ParameterStore<T>& store, CounterRng& rng) const;

  // pixels: [B, channels*side*side] (or [channels, side, side] for one image).
  // prompt: [L_v, C] shared by the whole batch, or absent. Returns [B, C_out],
  // not normalized.
  Var<T> encode_images(Tape<T>& tape, const ParameterStore<T>& store, const Tensor<T>& pixels,
                       std::optional<Var<T>> prompt) const;

  // sequences: [n_seq * seq_len, C] embeddings, each starting with [sos] and
  // ending with [eos]. Returns [n_seq, C_out] read at the [eos] position.
  Var<T> encode_text(Tape<T>& tape, const ParameterStore<T>& store, Var<T> sequences, std::size_t n_seq,
                     std::size_t seq_len) const;

  // [ids.size(), C] rows from the word table or the frozen class embedding.
  Var<T> embed_tokens(Tape<T>& tape, const ParameterStore<T>& store, std::span<const int> ids) const;

  std::size_t image_seq_len(std::size_t prompt_len) const { return 1 + prompt_len + cfg_.patches(); }
  // Patch matrix [B*P, patch_dim] for a pixel batch.
  Tensor<T> extract_patches(const Tensor<T>& pixels) const;

 private:
  Var<T> transformer(Tape<T>& tape, const ParameterStore<T>& store, const std::string& prefix, Var<T> x,
                     std::size_t n_seq, std::size_t seq_len) const;

  EncoderConfig cfg_;
  TokenTable tokens_;
};

extern template class DualEncoder<float>;
extern template class DualEncoder<double>;

}  // namespace svlp
