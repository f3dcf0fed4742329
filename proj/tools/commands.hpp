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

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace svlp::cli {

// Stable exit codes.
inline constexpr int kOk = 0;
inline constexpr int kVerifyFailed = 1;
inline constexpr int kUsage = 2;
inline constexpr int kIo = 3;
inline constexpr int kNumeric = 4;

struct GenDataArgs {
  std::string preset;
  std::filesystem::path spec;
  std::filesystem::path out;
  bool force = false;
};

struct TrainArgs {
  std::filesystem::path config;
  std::filesystem::path data;
  std::filesystem::path out;
  std::optional<std::string> mode;
  std::vector<std::string> ablate;
  std::vector<std::string> overrides;  // section.key=value
  std::filesystem::path jt_ref;
  bool force = false;
  bool quiet = false;
};

struct EvalArgs {
  std::filesystem::path ckpt;
  std::filesystem::path data;
  std::filesystem::path out;
  std::vector<std::string> domains;
  std::string threshold;
  std::string routing = "auto";
  std::filesystem::path jt_ref;
  std::size_t jobs = 1;
};

int gen_data(const GenDataArgs& args, std::ostream& out);
int train(const TrainArgs& args, std::ostream& out);
int eval(const EvalArgs& args, std::ostream& out);
int verify(const std::string& suite, std::ostream& out);

}  // namespace svlp::cli
