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

#include "svlp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "svlp/error.hpp"

namespace svlp {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'S', 'V', 'L', 'P'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (pos_ + n > bytes_.size()) {
      throw FormatError(std::string("truncated checkpoint while reading ") + what + ": expected " +
                        std::to_string(pos_ + n) + " bytes, file has " +
                        std::to_string(bytes_.size()));
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::vector<std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    std::vector<std::uint8_t> out(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::size_t dtype_width(DType d) {
  switch (d) {
    case DType::kF32: return 4;
    case DType::kF64: return 8;
    case DType::kU8: return 1;
  }
  throw FormatError("unknown dtype");
}

}  // namespace

void Checkpoint::put_blob(Blob blob) {
  for (auto& b : blobs_) {
    if (b.name == blob.name) {
      b = std::move(blob);
      return;
    }
  }
  blobs_.push_back(std::move(blob));
}

template <typename T>
void Checkpoint::put(std::string name, const Tensor<T>& tensor) {
  Blob b;
  b.name = std::move(name);
  b.dtype = std::is_same_v<T, float> ? DType::kF32 : DType::kF64;
  b.dims = tensor.shape();
  b.bytes.resize(tensor.size() * sizeof(T));
  if (!b.bytes.empty()) std::memcpy(b.bytes.data(), tensor.data(), b.bytes.size());
  put_blob(std::move(b));
}

void Checkpoint::put_mask(std::string name, const std::vector<std::uint8_t>& mask) {
  put_blob(Blob{std::move(name), DType::kU8, {mask.size()}, mask});
}

void Checkpoint::put_text(std::string name, std::string_view text) {
  put_blob(Blob{std::move(name), DType::kU8, {text.size()},
                std::vector<std::uint8_t>(text.begin(), text.end())});
}

const Blob* Checkpoint::find(std::string_view name) const {
  for (const auto& b : blobs_) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

const Blob& Checkpoint::at(std::string_view name) const {
  const Blob* b = find(name);
  if (!b) throw FormatError("checkpoint has no entry '" + std::string(name) + "'");
  return *b;
}

template <typename T>
Tensor<T> Checkpoint::tensor(std::string_view name) const {
  const Blob& b = at(name);
  const std::size_t n = shape_numel(b.dims);
  std::vector<T> data(n);
  if (b.dtype == DType::kF32) {
    std::vector<float> raw(n);
    if (n) std::memcpy(raw.data(), b.bytes.data(), n * sizeof(float));
    std::copy(raw.begin(), raw.end(), data.begin());
  } else if (b.dtype == DType::kF64) {
    std::vector<double> raw(n);
    if (n) std::memcpy(raw.data(), b.bytes.data(), n * sizeof(double));
    std::copy(raw.begin(), raw.end(), data.begin());
  } else {
    throw FormatError("entry '" + b.name + "' is not a float tensor");
  }
  return Tensor<T>(b.dims, std::move(data));
}

std::vector<std::uint8_t> Checkpoint::mask(std::string_view name) const {
  const Blob& b = at(name);
  if (b.dtype != DType::kU8) throw FormatError("entry '" + b.name + "' is not a u8 mask");
  return b.bytes;
}

std::string Checkpoint::text(std::string_view name) const {
  auto m = mask(name);
  return std::string(m.begin(), m.end());
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(blobs_.size()));
  for (const auto& b : blobs_) {
    put_u32(out, static_cast<std::uint32_t>(b.name.size()));
    out.insert(out.end(), b.name.begin(), b.name.end());
    out.push_back(static_cast<std::uint8_t>(b.dtype));
    put_u32(out, static_cast<std::uint32_t>(b.dims.size()));
    for (std::size_t d : b.dims) put_u32(out, static_cast<std::uint32_t>(d));
    out.insert(out.end(), b.bytes.begin(), b.bytes.end());
  }
  return out;
}

Checkpoint Checkpoint::deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad checkpoint magic");
  r.take(4, "magic");
  const std::uint32_t version = r.u32("version");
  if (version != kVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kVersion) + ")");
  }
  const std::uint32_t count = r.u32("entry count");
  Checkpoint ckpt;
  for (std::uint32_t i = 0; i < count; ++i) {
    Blob b;
    const std::uint32_t name_len = r.u32("name length");
    auto name = r.take(name_len, "name");
    b.name.assign(name.begin(), name.end());
    const std::uint8_t dt = r.u8("dtype");
    if (dt > 2) throw FormatError("entry '" + b.name + "' has unknown dtype " + std::to_string(dt));
    b.dtype = static_cast<DType>(dt);
    const std::uint32_t ndim = r.u32("ndim");
    for (std::uint32_t d = 0; d < ndim; ++d) b.dims.push_back(r.u32("dims"));
    b.bytes = r.take(shape_numel(b.dims) * dtype_width(b.dtype), "tensor data");
    ckpt.blobs_.push_back(std::move(b));
  }
  if (r.pos() != bytes.size()) throw FormatError("trailing bytes after checkpoint entries");
  return ckpt;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void Checkpoint::save(const std::filesystem::path& path) const { write_file_bytes(path, serialize()); }

Checkpoint Checkpoint::load(const std::filesystem::path& path) { return deserialize(read_file_bytes(path)); }

template void Checkpoint::put<float>(std::string, const Tensor<float>&);
template void Checkpoint::put<double>(std::string, const Tensor<double>&);
template Tensor<float> Checkpoint::tensor<float>(std::string_view) const;
template Tensor<double> Checkpoint::tensor<double>(std::string_view) const;

}  // namespace svlp
