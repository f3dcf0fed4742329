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
#include <string>
#include <string_view>
#include <vector>

#include "svlp/ini.hpp"

namespace svlp {

enum class ArtifactKind { kGrating, kFlatPatch, kBorderFrame };
std::string_view artifact_name(ArtifactKind kind);
ArtifactKind parse_artifact(std::string_view name);

struct ArtifactSpec {
  ArtifactKind kind = ArtifactKind::kGrating;
  double frequency = 4;    // grating cycles per image side
  double orientation = 0;  // grating angle, radians
  double size = 0.4;       // flat patch side / border width, fraction of the image side
  double intensity = 0.3;  // blend strength; 0 leaves the bona fide pattern untouched
  friend bool operator==(const ArtifactSpec&, const ArtifactSpec&) = default;
};

struct DomainTransform {
  double brightness = 0;  // additive offset
  double contrast = 1;    // scale about 0.5
  double noise = 0.02;    // additive Gaussian sigma
  double tint = 1;        // multiplicative channel gain
  friend bool operator==(const DomainTransform&, const DomainTransform&) = default;
};

struct DomainSpec {
  std::string name;
  std::uint64_t seed = 1;
  std::size_t n_train = 400;
  std::size_t n_test = 200;
  std::size_t side = 32;
  std::size_t channels = 1;
  std::size_t blobs_min = 2;
  std::size_t blobs_max = 5;
  double radius_min = 2.5;
  double radius_max = 6;
  ArtifactSpec artifact;
  DomainTransform transform;
  double real_fraction = 0.5;

  void validate() const;
  friend bool operator==(const DomainSpec&, const DomainSpec&) = default;
};

// Images [n, channels, side, side] in [0, 1] with labels 0 = spoof, 1 = real.
struct DomainDataset {
  std::string name;
  std::string split;
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_size() const { return channels * height * width; }
  const float* sample(std::size_t i) const { return pixels.data() + i * sample_size(); }
  // Datasets compare by content; name and split are not part of the file.
  bool same_content(const DomainDataset& other) const;
};

struct DatasetPair {
  DomainDataset train;
  DomainDataset test;
};

// Deterministic in the spec alone. Sample i of a split draws from its own
// counter stream, so counts can change without reshuffling earlier samples.
DatasetPair generate(const DomainSpec& spec);

// "SVDS" | version u32 | n u32 | c u32 | h u32 | w u32 | n*c*h*w f32 | n u8,
// little-endian.
inline constexpr std::uint32_t kDatasetVersion = 1;
std::vector<std::uint8_t> serialize_dataset(const DomainDataset& ds);
DomainDataset deserialize_dataset(const std::vector<std::uint8_t>& bytes);
void write_dataset(const DomainDataset& ds, const std::filesystem::path& path);
DomainDataset read_dataset(const std::filesystem::path& path);

struct Preset {
  std::string name;
  std::string description;
  std::vector<DomainSpec> domains;
};

const std::vector<Preset>& presets();
const Preset& find_preset(std::string_view name);  // UsageError listing the valid names
std::string preset_names();

// Domain specs from an INI file: one [domain.<name>] section per domain, keys
// named after DomainSpec fields (artifact.kind, transform.noise, ...).
std::vector<DomainSpec> parse_domain_specs(const IniDocument& doc);
IniDocument render_domain_specs(const std::vector<DomainSpec>& specs);

// <root>/<domain>/{train,test}.svds plus <root>/manifest.txt.
void write_domain_dir(const std::filesystem::path& root, const std::vector<DomainSpec>& specs);
std::vector<std::string> read_manifest(const std::filesystem::path& root);
DatasetPair load_domain(const std::filesystem::path& root, const std::string& name);

}  // namespace svlp
