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

#include "svlp/parameter_store.hpp"

#include <algorithm>
#include <sstream>

#include "svlp/checkpoint.hpp"

namespace svlp {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

bool is_backbone_name(std::string_view name) {
  return name.starts_with("image.") || name.starts_with("text.");
}

template <typename T>
std::size_t ParameterStore<T>::add(std::string name, Tensor<T> value) {
  if (by_name_.contains(name)) throw UsageError("parameter '" + name + "' already exists");
  if (!value.all_finite()) throw NumericError("parameter '" + name + "' has non-finite values");
  const std::size_t idx = entries_.size();
  by_name_.emplace(name, idx);
  Entry e;
  e.name = std::move(name);
  e.offset = total_;
  total_ += value.size();
  e.value = std::move(value);
  entries_.push_back(std::move(e));
  rebuild_ranges();
  return idx;
}

template <typename T>
std::optional<std::size_t> ParameterStore<T>::find(std::string_view name) const {
  auto it = by_name_.find(std::string(name));
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

template <typename T>
std::size_t ParameterStore<T>::index_of(std::string_view name) const {
  auto idx = find(name);
  if (!idx) throw UsageError("unknown parameter '" + std::string(name) + "'");
  return *idx;
}

template <typename T>
std::size_t ParameterStore<T>::global_index(std::string_view name, std::size_t element) const {
  const Entry& e = entries_[index_of(name)];
  if (element >= e.value.size()) throw UsageError("element offset out of range for '" + e.name + "'");
  return e.offset + element;
}

template <typename T>
std::pair<std::size_t, std::size_t> ParameterStore<T>::locate(std::size_t global) const {
  if (global >= total_) throw UsageError("global index out of range");
  auto it = std::upper_bound(entries_.begin(), entries_.end(), global,
                             [](std::size_t g, const Entry& e) { return g < e.offset; });
  // Skip back over zero-sized entries sharing the same offset.
  auto idx = static_cast<std::size_t>(std::distance(entries_.begin(), it)) - 1;
  while (entries_[idx].value.size() == 0) --idx;
  return {idx, global - entries_[idx].offset};
}

template <typename T>
T ParameterStore<T>::value_at(std::size_t global) const {
  auto [e, off] = locate(global);
  return entries_[e].value[off];
}

template <typename T>
void ParameterStore<T>::set_value_at(std::size_t global, T v) {
  auto [e, off] = locate(global);
  entries_[e].value[off] = v;
}

template <typename T>
void ParameterStore<T>::rebuild_ranges() {
  ranges_.clear();
  s_total_ = 0;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const Entry& e = entries_[i];
    if (!is_backbone_name(e.name) || e.value.size() == 0) continue;
    ranges_.push_back({i, e.offset, s_total_, e.value.size()});
    s_total_ += e.value.size();
  }
}

template <typename T>
std::vector<std::size_t> ParameterStore<T>::penalizable_indices() const {
  std::vector<std::size_t> out;
  out.reserve(s_total_);
  for (const auto& r : ranges_) {
    for (std::size_t k = 0; k < r.length; ++k) out.push_back(r.global_offset + k);
  }
  return out;
}

template <typename T>
std::vector<T> ParameterStore<T>::gather_penalizable() const {
  std::vector<T> out;
  out.reserve(s_total_);
  for (const auto& r : ranges_) {
    const auto& v = entries_[r.entry].value;
    out.insert(out.end(), v.storage().begin(), v.storage().end());
  }
  return out;
}

template <typename T>
void ParameterStore<T>::save(Checkpoint& ckpt) const {
  for (const auto& e : entries_) ckpt.put(e.name, e.value);
}

template <typename T>
void ParameterStore<T>::load(const Checkpoint& ckpt,
                             const std::function<bool(std::string_view)>& keep) {
  entries_.clear();
  by_name_.clear();
  ranges_.clear();
  total_ = 0;
  s_total_ = 0;
  for (const Blob& b : ckpt.blobs()) {
    if (b.dtype == DType::kU8 || !keep(b.name)) continue;
    add(b.name, ckpt.tensor<T>(b.name));
  }
}

template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace svlp
