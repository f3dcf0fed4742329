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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "svlp/tensor.hpp"

namespace svlp {

class Checkpoint;

// True for the names that make up the consolidated backbone: every image- and
// text-encoder tensor, embeddings included. Prompts, alpha, the temperature
// and the class-name embeddings are outside this set.
bool is_backbone_name(std::string_view name);

// A contiguous run of penalizable coordinates: global indices
// [global_offset, global_offset + length) map to S-coordinates
// [s_offset, s_offset + length).
struct PenalizableRange {
  std::size_t entry;
  std::size_t global_offset;
  std::size_t s_offset;
  std::size_t length;
};

// Named tensors laid out on one flat index space. Entries keep their
// insertion order; a tensor's global offset is fixed when it is added and never
// moves afterwards, so indices over the backbone stay valid as domains add
// prompt tensors.
template <typename T>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    std::size_t offset = 0;
    bool frozen = false;
  };

  std::size_t add(std::string name, Tensor<T> value);

  bool contains(std::string_view name) const { return find(name).has_value(); }
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  Tensor<T>& get(std::string_view name) { return entries_[index_of(name)].value; }
  const Tensor<T>& get(std::string_view name) const { return entries_[index_of(name)].value; }

  Entry& entry(std::size_t i) { return entries_.at(i); }
  const Entry& entry(std::size_t i) const { return entries_.at(i); }
  std::span<const Entry> entries() const { return entries_; }
  std::size_t entry_count() const { return entries_.size(); }

  void set_frozen(std::string_view name, bool frozen) { entries_[index_of(name)].frozen = frozen; }
  bool frozen(std::string_view name) const { return entries_[index_of(name)].frozen; }

  // Total number of scalars, M_total.
  std::size_t size() const { return total_; }

  std::size_t global_index(std::string_view name, std::size_t element) const;
  // Inverse of global_index: (entry index, element offset).
  std::pair<std::size_t, std::size_t> locate(std::size_t global) const;

  T value_at(std::size_t global) const;
  void set_value_at(std::size_t global, T v);

  // The penalizable set S as ranges, in flat-index order.
  const std::vector<PenalizableRange>& penalizable_ranges() const { return ranges_; }
  // |S|
  std::size_t penalizable_size() const { return s_total_; }
  // S as explicit sorted global indices.
  std::vector<std::size_t> penalizable_indices() const;
  // Values of theta restricted to S, in S order.
  std::vector<T> gather_penalizable() const;

  void save(Checkpoint& ckpt) const;
  // Replaces the contents with every entry of `ckpt` accepted by `keep`.
  void load(const Checkpoint& ckpt, const std::function<bool(std::string_view)>& keep);

  template <typename U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out;
    for (const auto& e : entries_) {
      out.add(e.name, e.value.template cast<U>());
      if (e.frozen) out.set_frozen(e.name, true);
    }
    return out;
  }

 private:
  void rebuild_ranges();

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> by_name_;
  std::vector<PenalizableRange> ranges_;
  std::size_t total_ = 0;
  std::size_t s_total_ = 0;
};

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;

}  // namespace svlp
