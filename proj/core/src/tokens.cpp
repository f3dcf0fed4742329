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

#include "svlp/tokens.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "svlp/error.hpp"

namespace svlp {

namespace {
constexpr std::string_view kFixedTemplate = "This is a photo of {} face.";
}

std::string_view class_name(int cls) {
  switch (cls) {
    case kSpoof: return "spoof";
    case kReal: return "real";
  }
  throw UsageError("class index " + std::to_string(cls) + " out of range");
}

int class_index(std::string_view name) {
  if (name == "spoof") return kSpoof;
  if (name == "real") return kReal;
  throw UsageError("unknown class name '" + std::string(name) + "' (expected real or spoof)");
}

TokenTable TokenTable::standard() {
  TokenTable t;
  t.words_ = {"[sos]", "[eos]", "this", "is", "a", "photo", "of", "face", "spoof", "real"};
  return t;
}

TokenTable TokenTable::parse(std::string_view serialized) {
  TokenTable t;
  std::string cur;
  for (char c : serialized) {
    if (c == ',') {
      t.words_.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) t.words_.push_back(cur);
  if (t.words_.size() < 2 + kNumClasses || t.words_[0] != "[sos]" || t.words_[1] != "[eos]" ||
      t.words_[t.words_.size() - 2] != "spoof" || t.words_.back() != "real") {
    throw FormatError("malformed token table '" + std::string(serialized) + "'");
  }
  return t;
}

int TokenTable::id(std::string_view word) const {
  auto it = std::find(words_.begin(), words_.end(), word);
  if (it == words_.end()) throw UsageError("unknown token '" + std::string(word) + "'");
  return static_cast<int>(it - words_.begin());
}

bool TokenTable::is_class_token(int id) const {
  return id >= static_cast<int>(word_rows()) && id < static_cast<int>(words_.size());
}

std::size_t TokenTable::row_of(int id) const {
  if (id < 0 || id >= static_cast<int>(words_.size())) throw UsageError("token id out of range");
  if (is_class_token(id)) return static_cast<std::size_t>(class_index(words_[static_cast<std::size_t>(id)]));
  return static_cast<std::size_t>(id);
}

std::vector<int> TokenTable::tokenize(std::string_view text) const {
  std::vector<int> out{kSos};
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) {
    std::string clean;
    for (char c : word) {
      if (std::ispunct(static_cast<unsigned char>(c))) continue;
      clean.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (!clean.empty()) out.push_back(id(clean));
  }
  out.push_back(kEos);
  return out;
}

std::vector<int> TokenTable::tokenize_fixed(std::string_view name) const {
  class_index(name);
  std::string sentence(kFixedTemplate);
  sentence.replace(sentence.find("{}"), 2, name);
  return tokenize(sentence);
}

std::string TokenTable::serialize() const {
  std::string out;
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (i) out.push_back(',');
    out += words_[i];
  }
  return out;
}

}  // namespace svlp
