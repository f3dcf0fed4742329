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
#include <functional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "svlp/parameter_store.hpp"
#include "svlp/tensor.hpp"

namespace svlp {

template <typename T>
class Tape;

// Handle to a value recorded on a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  int id() const { return id_; }
  Tape<T>* tape() const { return tape_; }
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

// Dense gradient over the flat index space of a ParameterStore. Indices past
// the end read as zero.
template <typename T>
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::size_t n) : g_(n, T(0)) {}

  T operator[](std::size_t i) const { return i < g_.size() ? g_[i] : T(0); }
  T& mut(std::size_t i) { return g_[i]; }
  std::size_t size() const { return g_.size(); }
  std::span<const T> span() const { return g_; }

 private:
  std::vector<T> g_;
};

// Reverse-mode tape. Nodes are appended in evaluation order, which is a
// topological order, so backward is a single reverse sweep. One tape serves
// one loss; after backward() it is consumed until clear().
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // A value that never receives gradient.
  Var<T> constant(Tensor<T> value);

  // Binds a store entry. Frozen entries come back as constants, so they never
  // enter the gradient graph. Repeated binds of one entry share a node.
  Var<T> param(const ParameterStore<T>& store, std::string_view name);

  // Records an op result. `inputs` are node ids; `fn` receives the node id and
  // must add into the grads of the inputs that require grad.
  Var<T> push(Tensor<T> value, std::vector<int> inputs, BackwardFn fn, std::string_view op);

  const Tensor<T>& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  // Gradient accumulator of a node, allocated as zeros on first use.
  Tensor<T>& grad(int id);

  Gradients<T> backward(Var<T> loss);

  void clear();
  bool consumed() const { return consumed_; }
  std::size_t node_count() const { return nodes_.size(); }
  const ParameterStore<T>* store() const { return store_; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<int> inputs;
    BackwardFn backward;
    long param_entry = -1;
    bool requires_grad = false;
  };

  const ParameterStore<T>* store_ = nullptr;
  std::vector<Node> nodes_;
  std::unordered_map<std::size_t, int> param_nodes_;
  bool consumed_ = false;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

// ---------------------------------------------------------------------------
// Differentiable primitives. All matrices are row-major; "rows" below refers
// to the matrix view of a tensor (leading dimensions collapsed).
// ---------------------------------------------------------------------------

// [m,k] x [k,n] -> [m,n]
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);
// [m,k] x [n,k]^T -> [m,n]
template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b);
template <typename T>
Var<T> transpose(Var<T> a);
// Same-shape sum, or b broadcast over the rows of a when b has a.cols()
// elements.
template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, T c);
// a * s where s holds a single element.
template <typename T>
Var<T> scale_by(Var<T> a, Var<T> s);
template <typename T>
Var<T> exp(Var<T> a);
template <typename T>
Var<T> square(Var<T> a);
template <typename T>
Var<T> sum(Var<T> a);
// Normalizes the last axis; gain and bias have a.cols() elements.
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5));
// axis is 0 or the last axis of a 2-D tensor (-1 and 1 are equivalent).
template <typename T>
Var<T> softmax(Var<T> x, int axis = -1);
template <typename T>
Var<T> gelu(Var<T> x);
// Each row scaled to unit Euclidean norm. A zero row is a NumericError.
template <typename T>
Var<T> l2_normalize(Var<T> x);
template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts);
template <typename T>
Var<T> slice_rows(Var<T> x, std::size_t start, std::size_t count);
// out.row(i) = x.row(index[i]); backward scatters additively.
template <typename T>
Var<T> gather_rows(Var<T> x, std::vector<std::size_t> index);
// Single element as a [1] tensor.
template <typename T>
Var<T> pick(Var<T> x, std::size_t i);
// Mean softmax cross-entropy of logits [n, classes] against labels (n of them).
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> labels);
// Multi-head self-attention over n_seq independent sequences of length
// seq_len packed row-wise. qkv is [n_seq*seq_len, 3C] holding Q|K|V column
// blocks; output is [n_seq*seq_len, C].
template <typename T>
Var<T> attention(Var<T> qkv, std::size_t n_seq, std::size_t seq_len, std::size_t heads);

}  // namespace svlp
