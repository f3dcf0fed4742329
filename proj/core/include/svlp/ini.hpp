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

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace svlp {

// Minimal INI: "[section]" headers, "key = value" lines, '#' or ';' comments.
// Order is preserved; duplicate sections or keys are errors.
struct IniSection {
  std::string name;
  std::vector<std::pair<std::string, std::string>> values;

  const std::string* find(std::string_view key) const;
};

struct IniDocument {
  std::vector<IniSection> sections;

  static IniDocument parse(std::string_view text);
  std::string render() const;
  const IniSection* find(std::string_view name) const;
  IniSection& section(std::string_view name);  // creates on first use
};

// Value conversions; `what` names the key in the ConfigError message.
std::uint64_t ini_u64(const std::string& value, std::string_view what);
double ini_f64(const std::string& value, std::string_view what);
bool ini_bool(const std::string& value, std::string_view what);
// Shortest text that parses back to the same double.
std::string ini_format(double v);
inline std::string ini_format(bool v) { return v ? "true" : "false"; }

}  // namespace svlp
