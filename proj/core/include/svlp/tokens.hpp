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
#include <string>
#include <string_view>
#include <vector>

namespace svlp {

// Class indices double as labels: 0 = spoof, 1 = real.
inline constexpr int kSpoof = 0;
inline constexpr int kReal = 1;
inline constexpr std::size_t kNumClasses = 2;

std::string_view class_name(int cls);
int class_index(std::string_view name);  // throws UsageError on unknown names

// Closed vocabulary: [sos], [eos], the words of the fixed sentence and the two
// class names. Class-name tokens resolve to rows of the frozen class
// embedding; every other token has a row in the trainable word table.
class TokenTable {
 public:
  static constexpr int kSos = 0;
  static constexpr int kEos = 1;

  static TokenTable standard();
  static TokenTable parse(std::string_view serialized);

  std::size_t size() const { return words_.size(); }
  // Rows of the trainable word table (all non-class tokens).
  std::size_t word_rows() const { return words_.size() - kNumClasses; }
  const std::vector<std::string>& words() const { return words_; }

  int id(std::string_view word) const;
  bool is_class_token(int id) const;
  // Class index of a class-name token, or the word-table row otherwise.
  std::size_t row_of(int id) const;

  // Lower-cases, strips punctuation and splits on whitespace; unknown words
  // are an error. [sos] and [eos] are added around the result.
  std::vector<int> tokenize(std::string_view text) const;
  // "This is a photo of {class} face." for class_name in {real, spoof}.
  std::vector<int> tokenize_fixed(std::string_view class_name) const;

  // Comma-separated word list, the sidecar form stored in checkpoints.
  std::string serialize() const;

  friend bool operator==(const TokenTable&, const TokenTable&) = default;

 private:
  std::vector<std::string> words_;
};

}  // namespace svlp
