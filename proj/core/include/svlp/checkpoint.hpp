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
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "svlp/tensor.hpp"

namespace svlp {

// On-disk element types. Code 2 carries raw bytes: index masks and the text
// metadata block.
enum class DType : std::uint8_t { kF32 = 0, kF64 = 1, kU8 = 2 };

struct Blob {
  std::string name;
  DType dtype = DType::kF32;
  Shape dims;
  std::vector<std::uint8_t> bytes;  // little-endian payload
};

// Ordered collection of named blobs in the "SVLP" container format:
//   magic "SVLP", version u32, entry count u32, then per entry
//   {name length u32, name UTF-8, dtype u8, ndim u32, dims u32 x ndim, data}.
// All integers and floats are little-endian; data is row-major.
class Checkpoint {
 public:
  static constexpr std::uint32_t kVersion = 1;

  template <typename T>
  void put(std::string name, const Tensor<T>& tensor);
  void put_mask(std::string name, const std::vector<std::uint8_t>& mask);
  void put_text(std::string name, std::string_view text);

  bool contains(std::string_view name) const { return find(name) != nullptr; }
  const Blob* find(std::string_view name) const;
  const Blob& at(std::string_view name) const;

  // Converts from the stored float type if needed.
  template <typename T>
  Tensor<T> tensor(std::string_view name) const;
  std::vector<std::uint8_t> mask(std::string_view name) const;
  std::string text(std::string_view name) const;

  const std::vector<Blob>& blobs() const { return blobs_; }

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  void put_blob(Blob blob);
  std::vector<Blob> blobs_;
};

extern template void Checkpoint::put<float>(std::string, const Tensor<float>&);
extern template void Checkpoint::put<double>(std::string, const Tensor<double>&);
extern template Tensor<float> Checkpoint::tensor<float>(std::string_view) const;
extern template Tensor<double> Checkpoint::tensor<double>(std::string_view) const;

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace svlp
