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

#include "svlp/encoders.hpp"

#include <string>

namespace svlp {

void EncoderConfig::validate(std::size_t prompt_len, std::size_t n_ctx) const {
  auto fail = [](const std::string& msg) { throw ConfigError("encoder config: " + msg); };
  if (width == 0 || embed_dim == 0 || depth == 0 || heads == 0) fail("sizes must be positive");
  if (width % heads != 0) fail("width must be divisible by heads");
  if (patch == 0 || image_side == 0 || image_side % patch != 0) fail("image_side must be divisible by patch");
  if (channels == 0) fail("channels must be positive");
  if (vocab != TokenTable::standard().size()) fail("vocab must equal the fixed token table size");
  if (max_seq < 1 + prompt_len + patches()) fail("max_seq too small for the visual prompt and patches");
  if (max_seq < 2 * n_ctx + 3) fail("max_seq too small for the mixed text prompt");
}

template <typename T>
DualEncoder<T>::DualEncoder(EncoderConfig cfg, TokenTable tokens) : cfg_(cfg), tokens_(std::move(tokens)) {
  if (cfg_.vocab != tokens_.size()) throw ConfigError("encoder vocab does not match the token table");
}

template <typename T>
void DualEncoder<T>::init_parameters(ParameterStore<T>& store, CounterRng& rng) const {
  const std::size_t C = cfg_.width;
  auto normal = [&](Shape shape) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.storage()) v = static_cast<T>(rng.normal(0.0, 0.02));
    return t;
  };
  auto blocks = [&](const std::string& prefix) {
    for (std::size_t b = 0; b < cfg_.depth; ++b) {
      const std::string p = prefix + ".block" + std::to_string(b) + ".";
      store.add(p + "ln1.gain", Tensor<T>({C}, T(1)));
      store.add(p + "ln1.bias", Tensor<T>({C}));
      store.add(p + "attn.qkv.weight", normal({C, 3 * C}));
      store.add(p + "attn.qkv.bias", Tensor<T>({3 * C}));
      store.add(p + "attn.out.weight", normal({C, C}));
      store.add(p + "attn.out.bias", Tensor<T>({C}));
      store.add(p + "ln2.gain", Tensor<T>({C}, T(1)));
      store.add(p + "ln2.bias", Tensor<T>({C}));
      store.add(p + "mlp.fc1.weight", normal({C, 4 * C}));
      store.add(p + "mlp.fc1.bias", Tensor<T>({4 * C}));
      store.add(p + "mlp.fc2.weight", normal({4 * C, C}));
      store.add(p + "mlp.fc2.bias", Tensor<T>({C}));
    }
    store.add(prefix + ".ln_final.gain", Tensor<T>({C}, T(1)));
    store.add(prefix + ".ln_final.bias", Tensor<T>({C}));
    store.add(prefix + ".proj", normal({C, cfg_.embed_dim}));
  };

  store.add("image.patch.weight", normal({cfg_.patch_dim(), C}));
  store.add("image.patch.bias", Tensor<T>({C}));
  store.add("image.cls", normal({1, C}));
  store.add("image.pos", normal({cfg_.max_seq, C}));
  store.add("image.ln_pre.gain", Tensor<T>({C}, T(1)));
  store.add("image.ln_pre.bias", Tensor<T>({C}));
  blocks("image");

  store.add("text.token_embedding", normal({tokens_.word_rows(), C}));
  store.add("text.pos", normal({cfg_.max_seq, C}));
  blocks("text");

  store.add("class_embedding", normal({kNumClasses, C}));
}

template <typename T>
Tensor<T> DualEncoder<T>::extract_patches(const Tensor<T>& pixels) const {
  const std::size_t side = cfg_.image_side, ps = cfg_.patch, ch = cfg_.channels;
  const std::size_t per_image = ch * side * side;
  if (pixels.size() == 0 || pixels.size() % per_image != 0) {
    throw ShapeError("encode_images: pixel tensor " + shape_str(pixels.shape()) + " is not a batch of [" +
                     std::to_string(ch) + "," + std::to_string(side) + "," + std::to_string(side) + "] images");
  }
  const std::size_t batch = pixels.size() / per_image;
  const std::size_t grid = side / ps;
  Tensor<T> out({batch * grid * grid, cfg_.patch_dim()});
  T* dst = out.data();
  for (std::size_t b = 0; b < batch; ++b) {
    const T* img = pixels.data() + b * per_image;
    for (std::size_t gy = 0; gy < grid; ++gy) {
      for (std::size_t gx = 0; gx < grid; ++gx) {
        for (std::size_t c = 0; c < ch; ++c) {
          for (std::size_t y = 0; y < ps; ++y) {
            const T* src = img + c * side * side + (gy * ps + y) * side + gx * ps;
            dst = std::transform(src, src + ps, dst, [](T v) { return (v - T(0.5)) * T(2); });
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
Var<T> DualEncoder<T>::transformer(Tape<T>& tape, const ParameterStore<T>& store, const std::string& prefix,
                                   Var<T> x, std::size_t n_seq, std::size_t seq_len) const {
  auto p = [&](const std::string& name) { return tape.param(store, prefix + name); };
  for (std::size_t b = 0; b < cfg_.depth; ++b) {
    const std::string blk = ".block" + std::to_string(b) + ".";
    auto h = layer_norm(x, p(blk + "ln1.gain"), p(blk + "ln1.bias"));
    auto qkv = add(matmul(h, p(blk + "attn.qkv.weight")), p(blk + "attn.qkv.bias"));
    auto att = attention(qkv, n_seq, seq_len, cfg_.heads);
    x = add(x, add(matmul(att, p(blk + "attn.out.weight")), p(blk + "attn.out.bias")));
    h = layer_norm(x, p(blk + "ln2.gain"), p(blk + "ln2.bias"));
    auto m = gelu(add(matmul(h, p(blk + "mlp.fc1.weight")), p(blk + "mlp.fc1.bias")));
    x = add(x, add(matmul(m, p(blk + "mlp.fc2.weight")), p(blk + "mlp.fc2.bias")));
  }
  return x;
}

template <typename T>
Var<T> DualEncoder<T>::encode_images(Tape<T>& tape, const ParameterStore<T>& store, const Tensor<T>& pixels,
                                     std::optional<Var<T>> prompt) const {
  const std::size_t C = cfg_.width;
  const std::size_t P = cfg_.patches();
  std::size_t prompt_len = 0;
  if (prompt) {
    const Tensor<T>& pv = prompt->value();
    if (pv.cols() != C || pv.ndim() != 2) {
      throw ShapeError("visual prompt must be [L_v, " + std::to_string(C) + "], got " + shape_str(pv.shape()));
    }
    prompt_len = pv.rows();
  }
  const std::size_t L = image_seq_len(prompt_len);
  if (L > cfg_.max_seq) throw ShapeError("image sequence exceeds max_seq");

  Tensor<T> patches = extract_patches(pixels);
  const std::size_t batch = patches.rows() / P;
  auto tokens = add(matmul(tape.constant(std::move(patches)), tape.param(store, "image.patch.weight")),
                    tape.param(store, "image.patch.bias"));
  auto cls = tape.param(store, "image.cls");

  std::vector<Var<T>> pieces;
  std::vector<std::size_t> pos;
  pieces.reserve(3 * batch);
  pos.reserve(batch * L);
  for (std::size_t b = 0; b < batch; ++b) {
    pieces.push_back(cls);
    pos.push_back(0);
    if (prompt) {
      pieces.push_back(*prompt);
      for (std::size_t k = 0; k < prompt_len; ++k) pos.push_back(1 + P + k);
    }
    pieces.push_back(batch == 1 ? tokens : slice_rows(tokens, b * P, P));
    for (std::size_t k = 0; k < P; ++k) pos.push_back(1 + k);
  }
  auto x = add(concat_rows(pieces), gather_rows(tape.param(store, "image.pos"), std::move(pos)));
  x = layer_norm(x, tape.param(store, "image.ln_pre.gain"), tape.param(store, "image.ln_pre.bias"));
  x = transformer(tape, store, "image", x, batch, L);

  std::vector<std::size_t> cls_rows(batch);
  for (std::size_t b = 0; b < batch; ++b) cls_rows[b] = b * L;
  auto out = layer_norm(gather_rows(x, std::move(cls_rows)), tape.param(store, "image.ln_final.gain"),
                        tape.param(store, "image.ln_final.bias"));
  return matmul(out, tape.param(store, "image.proj"));
}

template <typename T>
Var<T> DualEncoder<T>::encode_text(Tape<T>& tape, const ParameterStore<T>& store, Var<T> sequences,
                                   std::size_t n_seq, std::size_t seq_len) const {
  if (seq_len > cfg_.max_seq) {
    throw ShapeError("text sequence length " + std::to_string(seq_len) + " exceeds max_seq " +
                     std::to_string(cfg_.max_seq));
  }
  if (sequences.value().rows() != n_seq * seq_len || sequences.value().cols() != cfg_.width) {
    throw ShapeError("encode_text: sequences " + shape_str(sequences.shape()) + " do not hold " +
                     std::to_string(n_seq) + " x " + std::to_string(seq_len) + " tokens");
  }
  std::vector<std::size_t> pos(n_seq * seq_len);
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = i % seq_len;
  auto x = add(sequences, gather_rows(tape.param(store, "text.pos"), std::move(pos)));
  x = transformer(tape, store, "text", x, n_seq, seq_len);
  std::vector<std::size_t> eos_rows(n_seq);
  for (std::size_t s = 0; s < n_seq; ++s) eos_rows[s] = s * seq_len + seq_len - 1;
  auto out = layer_norm(gather_rows(x, std::move(eos_rows)), tape.param(store, "text.ln_final.gain"),
                        tape.param(store, "text.ln_final.bias"));
  return matmul(out, tape.param(store, "text.proj"));
}

template <typename T>
Var<T> DualEncoder<T>::embed_tokens(Tape<T>& tape, const ParameterStore<T>& store, std::span<const int> ids) const {
  std::vector<Var<T>> pieces;
  std::size_t i = 0;
  while (i < ids.size()) {
    const bool is_class = tokens_.is_class_token(ids[i]);
    std::vector<std::size_t> rows;
    while (i < ids.size() && tokens_.is_class_token(ids[i]) == is_class) rows.push_back(tokens_.row_of(ids[i++]));
    auto table = tape.param(store, is_class ? "class_embedding" : "text.token_embedding");
    pieces.push_back(gather_rows(table, std::move(rows)));
  }
  if (pieces.empty()) throw ShapeError("embed_tokens: empty token sequence");
  return pieces.size() == 1 ? pieces.front() : concat_rows(pieces);
}

template class DualEncoder<float>;
template class DualEncoder<double>;

}  // namespace svlp
