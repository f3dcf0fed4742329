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

#include "svlp/ini.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "svlp/error.hpp"

namespace svlp {

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

}  // namespace

const std::string* IniSection::find(std::string_view key) const {
  for (const auto& [k, v] : values) {
    if (k == key) return &v;
  }
  return nullptr;
}

const IniSection* IniDocument::find(std::string_view name) const {
  for (const auto& s : sections) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

IniSection& IniDocument::section(std::string_view name) {
  for (auto& s : sections) {
    if (s.name == name) return s;
  }
  sections.push_back({std::string(name), {}});
  return sections.back();
}

IniDocument IniDocument::parse(std::string_view text) {
  IniDocument doc;
  IniSection* current = nullptr;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view raw = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      const std::string name(trim(line.substr(1, line.size() - 2)));
      if (name.empty()) throw ConfigError(where + "empty section name");
      if (doc.find(name)) throw ConfigError(where + "duplicate section [" + name + "]");
      doc.sections.push_back({name, {}});
      current = &doc.sections.back();
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    if (!current) throw ConfigError(where + "key outside of any section");
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError(where + "empty key");
    if (current->find(key)) throw ConfigError(where + "duplicate key '" + key + "' in [" + current->name + "]");
    current->values.emplace_back(key, std::string(trim(line.substr(eq + 1))));
  }
  return doc;
}

std::string IniDocument::render() const {
  std::string out;
  for (std::size_t i = 0; i < sections.size(); ++i) {
    if (i) out += '\n';
    out += '[' + sections[i].name + "]\n";
    for (const auto& [k, v] : sections[i].values) out += k + " = " + v + '\n';
  }
  return out;
}

std::uint64_t ini_u64(const std::string& value, std::string_view what) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size() || value.empty()) {
    throw ConfigError(std::string(what) + ": expected a non-negative integer, got '" + value + "'");
  }
  return v;
}

double ini_f64(const std::string& value, std::string_view what) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size() || value.empty() || !std::isfinite(v)) {
    throw ConfigError(std::string(what) + ": expected a finite number, got '" + value + "'");
  }
  return v;
}

bool ini_bool(const std::string& value, std::string_view what) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(std::string(what) + ": expected true or false, got '" + value + "'");
}

std::string ini_format(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace svlp
