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

#include "svlp/synthdata.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "svlp/checkpoint.hpp"
#include "svlp/error.hpp"
#include "svlp/rng.hpp"

namespace svlp {

namespace {

constexpr double kPi = std::numbers::pi;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(p[b]) << (8 * b);
  return v;
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) throw FormatError(std::string("dataset ") + what + " does not fit in u32");
  return static_cast<std::uint32_t>(v);
}

bool is_real_sample(std::size_t i, double fraction) {
  return std::floor(static_cast<double>(i + 1) * fraction) > std::floor(static_cast<double>(i) * fraction);
}

// Smooth multi-blob pattern, row-major side x side.
std::vector<double> bona_fide(const DomainSpec& spec, CounterRng& rng) {
  const std::size_t side = spec.side;
  std::vector<double> img(side * side, rng.uniform(0.3, 0.5));
  const std::size_t blobs = spec.blobs_min + static_cast<std::size_t>(rng.below(spec.blobs_max - spec.blobs_min + 1));
  for (std::size_t b = 0; b < blobs; ++b) {
    const double cx = rng.uniform(0, static_cast<double>(side));
    const double cy = rng.uniform(0, static_cast<double>(side));
    const double r = rng.uniform(spec.radius_min, spec.radius_max);
    const double amp = rng.uniform(-0.35, 0.45);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
        img[y * side + x] += amp * std::exp(-(dx * dx + dy * dy) / (2 * r * r));
      }
    }
  }
  return img;
}

void apply_artifact(const DomainSpec& spec, std::vector<double>& img, CounterRng& rng) {
  const ArtifactSpec& a = spec.artifact;
  const std::size_t side = spec.side;
  const double s = static_cast<double>(side);
  switch (a.kind) {
    case ArtifactKind::kGrating: {
      const double phase = rng.uniform(0, 2 * kPi);
      const double theta = a.orientation + rng.uniform(-0.15, 0.15);
      const double freq = a.frequency * rng.uniform(0.9, 1.1);
      const double c = std::cos(theta), sn = std::sin(theta);
      for (std::size_t y = 0; y < side; ++y) {
        for (std::size_t x = 0; x < side; ++x) {
          const double u = (static_cast<double>(x) * c + static_cast<double>(y) * sn) / s;
          img[y * side + x] += a.intensity * 0.5 * std::sin(2 * kPi * freq * u + phase);
        }
      }
      break;
    }
    case ArtifactKind::kFlatPatch: {
      const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(a.size * s)));
      const std::size_t span = side > w ? side - w + 1 : 1;
      const std::size_t x0 = static_cast<std::size_t>(rng.below(span));
      const std::size_t y0 = static_cast<std::size_t>(rng.below(span));
      const double level = rng.uniform(0.85, 1.0);
      for (std::size_t y = y0; y < std::min(side, y0 + w); ++y) {
        for (std::size_t x = x0; x < std::min(side, x0 + w); ++x) {
          double& v = img[y * side + x];
          v = (1 - a.intensity) * v + a.intensity * level;
        }
      }
      break;
    }
    case ArtifactKind::kBorderFrame: {
      const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(a.size * s)));
      const double level = rng.uniform(0.7, 1.0);
      for (std::size_t y = 0; y < side; ++y) {
        for (std::size_t x = 0; x < side; ++x) {
          const bool edge = x < w || y < w || x + w >= side || y + w >= side;
          if (!edge) continue;
          double& v = img[y * side + x];
          v = (1 - a.intensity) * v + a.intensity * level;
        }
      }
      break;
    }
  }
}

DomainDataset generate_split(const DomainSpec& spec, std::size_t n, std::uint64_t split_tag, const char* split) {
  DomainDataset ds;
  ds.name = spec.name;
  ds.split = split;
  ds.channels = spec.channels;
  ds.height = spec.side;
  ds.width = spec.side;
  ds.pixels.resize(n * ds.sample_size());
  ds.labels.resize(n);
  const CounterRng root(spec.seed);
  const DomainTransform& tf = spec.transform;
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng(root.fork_key((split_tag << 40) ^ i));
    const bool real = is_real_sample(i, spec.real_fraction);
    ds.labels[i] = real ? 1 : 0;
    std::vector<double> img = bona_fide(spec, rng);
    if (!real) apply_artifact(spec, img, rng);
    float* out = ds.pixels.data() + i * ds.sample_size();
    for (std::size_t c = 0; c < spec.channels; ++c) {
      for (std::size_t p = 0; p < img.size(); ++p) {
        double v = tf.contrast * (img[p] - 0.5) + 0.5 + tf.brightness;
        v = v * tf.tint + tf.noise * rng.normal();
        out[c * img.size() + p] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return ds;
}

}  // namespace

std::string_view artifact_name(ArtifactKind kind) {
  switch (kind) {
    case ArtifactKind::kGrating:
      return "grating";
    case ArtifactKind::kFlatPatch:
      return "flat_patch";
    case ArtifactKind::kBorderFrame:
      return "border_frame";
  }
  return "?";
}

ArtifactKind parse_artifact(std::string_view name) {
  if (name == "grating") return ArtifactKind::kGrating;
  if (name == "flat_patch") return ArtifactKind::kFlatPatch;
  if (name == "border_frame") return ArtifactKind::kBorderFrame;
  throw ConfigError("unknown artifact kind '" + std::string(name) + "' (grating, flat_patch, border_frame)");
}

void DomainSpec::validate() const {
  const std::string who = "domain '" + name + "': ";
  if (name.empty() || name.find_first_of("/\\ \t,") != std::string::npos) throw ConfigError(who + "bad name");
  if (side == 0 || channels == 0) throw ConfigError(who + "zero-size image");
  if (n_train == 0 || n_test == 0) throw ConfigError(who + "empty sample counts");
  if (blobs_min > blobs_max) throw ConfigError(who + "blobs_min exceeds blobs_max");
  if (!(radius_min > 0) || radius_min > radius_max) throw ConfigError(who + "bad radius range");
  if (!(real_fraction > 0 && real_fraction < 1)) throw ConfigError(who + "real_fraction must lie in (0, 1)");
  if (!(artifact.intensity >= 0) || !(artifact.size > 0 && artifact.size <= 1)) {
    throw ConfigError(who + "bad artifact parameters");
  }
  if (!(transform.noise >= 0)) throw ConfigError(who + "negative noise");
}

bool DomainDataset::same_content(const DomainDataset& other) const {
  return channels == other.channels && height == other.height && width == other.width &&
         labels == other.labels && pixels.size() == other.pixels.size() &&
         std::memcmp(pixels.data(), other.pixels.data(), pixels.size() * sizeof(float)) == 0;
}

DatasetPair generate(const DomainSpec& spec) {
  spec.validate();
  return {generate_split(spec, spec.n_train, 1, "train"), generate_split(spec, spec.n_test, 2, "test")};
}

std::vector<std::uint8_t> serialize_dataset(const DomainDataset& ds) {
  if (ds.pixels.size() != ds.size() * ds.sample_size()) throw ShapeError("dataset pixel count mismatch");
  std::vector<std::uint8_t> out{'S', 'V', 'D', 'S'};
  put_u32(out, kDatasetVersion);
  put_u32(out, checked_u32(ds.size(), "count"));
  put_u32(out, checked_u32(ds.channels, "channels"));
  put_u32(out, checked_u32(ds.height, "height"));
  put_u32(out, checked_u32(ds.width, "width"));
  out.reserve(out.size() + ds.pixels.size() * 4 + ds.labels.size());
  for (float f : ds.pixels) put_u32(out, std::bit_cast<std::uint32_t>(f));
  out.insert(out.end(), ds.labels.begin(), ds.labels.end());
  return out;
}

DomainDataset deserialize_dataset(const std::vector<std::uint8_t>& bytes) {
  constexpr std::size_t kHeader = 24;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "SVDS", 4) != 0) throw FormatError("dataset: bad magic");
  if (bytes.size() < kHeader) {
    throw FormatError("dataset: truncated header, expected " + std::to_string(kHeader) + " bytes, file has " +
                      std::to_string(bytes.size()));
  }
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kDatasetVersion) {
    throw FormatError("dataset: version " + std::to_string(version) + " not supported (expected " +
                      std::to_string(kDatasetVersion) + ")");
  }
  DomainDataset ds;
  const std::size_t n = get_u32(bytes.data() + 8);
  ds.channels = get_u32(bytes.data() + 12);
  ds.height = get_u32(bytes.data() + 16);
  ds.width = get_u32(bytes.data() + 20);
  const std::size_t expected = kHeader + n * ds.sample_size() * 4 + n;
  if (bytes.size() != expected) {
    throw FormatError("dataset: expected " + std::to_string(expected) + " bytes, file has " +
                      std::to_string(bytes.size()));
  }
  ds.pixels.resize(n * ds.sample_size());
  const std::uint8_t* p = bytes.data() + kHeader;
  for (float& f : ds.pixels) {
    f = std::bit_cast<float>(get_u32(p));
    p += 4;
  }
  ds.labels.assign(p, p + n);
  for (auto l : ds.labels) {
    if (l > 1) throw FormatError("dataset: label byte " + std::to_string(l) + " out of range");
  }
  return ds;
}

void write_dataset(const DomainDataset& ds, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_dataset(ds));
}

DomainDataset read_dataset(const std::filesystem::path& path) {
  try {
    return deserialize_dataset(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

namespace {

DomainSpec make(std::string name, std::uint64_t seed, std::size_t n_train, std::size_t n_test, ArtifactSpec a,
                DomainTransform t) {
  DomainSpec s;
  s.name = std::move(name);
  s.seed = seed;
  s.n_train = n_train;
  s.n_test = n_test;
  s.artifact = a;
  s.transform = t;
  return s;
}

ArtifactSpec grating(double freq, double orientation, double intensity) {
  return {ArtifactKind::kGrating, freq, orientation, 0.4, intensity};
}
ArtifactSpec patch(double size, double intensity) { return {ArtifactKind::kFlatPatch, 0, 0, size, intensity}; }
ArtifactSpec frame(double size, double intensity) { return {ArtifactKind::kBorderFrame, 0, 0, size, intensity}; }

DomainSpec blobs(DomainSpec s, std::size_t lo, std::size_t hi, double r_lo, double r_hi) {
  s.blobs_min = lo;
  s.blobs_max = hi;
  s.radius_min = r_lo;
  s.radius_max = r_hi;
  return s;
}

// Domains differ in background statistics (blob layout, brightness, contrast,
// noise) as well as in the artifact, so prompt-free embeddings carry the domain.
std::vector<Preset> build_presets() {
  std::vector<Preset> out;
  out.push_back({"protocol-synth-4",
                 "four domains with escalating artifact difficulty",
                 {
                     make("grating-coarse", 1101, 400, 200, grating(4, 0, 0.40), {0.08, 1.00, 0.00, 1.0}),
                     blobs(make("flat-patch", 1202, 400, 200, patch(0.40, 0.70), {-0.30, 0.60, 0.01, 1.0}), 1, 2, 6, 9),
                     make("border-frame", 1303, 400, 200, frame(0.10, 0.55), {0.35, 1.00, 0.12, 1.0}),
                     blobs(make("grating-fine", 1404, 400, 200, grating(10, kPi / 4, 0.25), {-0.10, 0.70, 0.06, 1.0}),
                           6, 9, 1.5, 3),
                 }});
  out.push_back({"protocol-synth-8",
                 "eight-domain long sequence",
                 {
                     make("g8-coarse", 2101, 320, 160, grating(4, 0, 0.40), {0.08, 1.00, 0.00, 1.0}),
                     blobs(make("p8-large", 2202, 320, 160, patch(0.45, 0.70), {-0.30, 0.60, 0.01, 1.0}), 1, 2, 6, 9),
                     make("f8-thin", 2303, 320, 160, frame(0.08, 0.60), {0.35, 1.00, 0.12, 1.0}),
                     blobs(make("g8-diagonal", 2404, 320, 160, grating(8, kPi / 4, 0.30), {-0.10, 0.70, 0.06, 1.0}),
                           6, 9, 1.5, 3),
                     blobs(make("p8-small", 2505, 320, 160, patch(0.28, 0.80), {0.20, 1.30, 0.03, 1.0}), 3, 5, 4, 6),
                     blobs(make("f8-thick", 2606, 320, 160, frame(0.16, 0.45), {-0.20, 0.90, 0.09, 1.0}), 1, 3, 3, 5),
                     blobs(make("g8-vertical", 2707, 320, 160, grating(6, kPi / 2, 0.30), {0.00, 0.50, 0.02, 1.0}),
                           4, 6, 2, 4),
                     make("g8-fine", 2808, 320, 160, grating(11, 3 * kPi / 4, 0.25), {0.15, 0.80, 0.15, 1.0}),
                 }});
  out.push_back({"synth-unseen",
                 "held-out domain for generalization probes",
                 {make("unseen-mixed", 3101, 200, 200, grating(7, kPi / 3, 0.35), {0.05, 0.85, 0.05, 1.0})}});
  return out;
}

template <typename F>
void spec_fields(DomainSpec& s, F&& f) {
  f("seed", s.seed);
  f("n_train", s.n_train);
  f("n_test", s.n_test);
  f("side", s.side);
  f("channels", s.channels);
  f("blobs_min", s.blobs_min);
  f("blobs_max", s.blobs_max);
  f("radius_min", s.radius_min);
  f("radius_max", s.radius_max);
  f("artifact.kind", s.artifact.kind);
  f("artifact.frequency", s.artifact.frequency);
  f("artifact.orientation", s.artifact.orientation);
  f("artifact.size", s.artifact.size);
  f("artifact.intensity", s.artifact.intensity);
  f("transform.brightness", s.transform.brightness);
  f("transform.contrast", s.transform.contrast);
  f("transform.noise", s.transform.noise);
  f("transform.tint", s.transform.tint);
  f("real_fraction", s.real_fraction);
}

}  // namespace

const std::vector<Preset>& presets() {
  static const std::vector<Preset> all = build_presets();
  return all;
}

std::string preset_names() {
  std::string out;
  for (const auto& p : presets()) out += (out.empty() ? "" : ", ") + p.name;
  return out;
}

const Preset& find_preset(std::string_view name) {
  for (const auto& p : presets()) {
    if (p.name == name) return p;
  }
  throw UsageError("unknown preset '" + std::string(name) + "'; valid presets: " + preset_names());
}

std::vector<DomainSpec> parse_domain_specs(const IniDocument& doc) {
  std::vector<DomainSpec> out;
  for (const auto& sec : doc.sections) {
    const std::string prefix = "domain.";
    if (sec.name.rfind(prefix, 0) != 0) throw ConfigError("unknown section [" + sec.name + "]");
    DomainSpec s;
    s.name = sec.name.substr(prefix.size());
    for (const auto& [key, value] : sec.values) {
      bool known = false;
      const std::string what = sec.name + "." + key;
      spec_fields(s, [&](std::string_view name, auto& field) {
        if (name != key) return;
        known = true;
        using F = std::decay_t<decltype(field)>;
        if constexpr (std::is_same_v<F, ArtifactKind>) {
          field = parse_artifact(value);
        } else if constexpr (std::is_same_v<F, double>) {
          field = ini_f64(value, what);
        } else {
          field = static_cast<F>(ini_u64(value, what));
        }
      });
      if (!known) throw ConfigError("unknown key '" + key + "' in [" + sec.name + "]");
    }
    s.validate();
    out.push_back(std::move(s));
  }
  if (out.empty()) throw ConfigError("spec file defines no [domain.<name>] sections");
  return out;
}

IniDocument render_domain_specs(const std::vector<DomainSpec>& specs) {
  IniDocument doc;
  for (DomainSpec s : specs) {
    IniSection& sec = doc.section("domain." + s.name);
    spec_fields(s, [&](std::string_view name, auto& field) {
      using F = std::decay_t<decltype(field)>;
      std::string v;
      if constexpr (std::is_same_v<F, ArtifactKind>) {
        v = std::string(artifact_name(field));
      } else if constexpr (std::is_same_v<F, double>) {
        v = ini_format(field);
      } else {
        v = std::to_string(field);
      }
      sec.values.emplace_back(std::string(name), v);
    });
  }
  return doc;
}

void write_domain_dir(const std::filesystem::path& root, const std::vector<DomainSpec>& specs) {
  std::string manifest;
  for (const auto& spec : specs) {
    const DatasetPair pair = generate(spec);
    std::error_code ec;
    std::filesystem::create_directories(root / spec.name, ec);
    if (ec) throw IoError("cannot create " + (root / spec.name).string() + ": " + ec.message());
    write_dataset(pair.train, root / spec.name / "train.svds");
    write_dataset(pair.test, root / spec.name / "test.svds");
    manifest += spec.name + '\n';
  }
  write_file_bytes(root / "manifest.txt", std::vector<std::uint8_t>(manifest.begin(), manifest.end()));
}

std::vector<std::string> read_manifest(const std::filesystem::path& root) {
  const auto bytes = read_file_bytes(root / "manifest.txt");
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (std::find(names.begin(), names.end(), line) != names.end()) {
      throw FormatError("manifest lists '" + line + "' twice");
    }
    names.push_back(line);
  }
  if (names.empty()) throw FormatError((root / "manifest.txt").string() + ": no domains listed");
  return names;
}

DatasetPair load_domain(const std::filesystem::path& root, const std::string& name) {
  DatasetPair p{read_dataset(root / name / "train.svds"), read_dataset(root / name / "test.svds")};
  p.train.name = p.test.name = name;
  p.train.split = "train";
  p.test.split = "test";
  return p;
}

}  // namespace svlp
