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

#include <string>
#include <string_view>
#include <vector>

namespace svlp {

struct CheckResult {
  std::string name;
  double value = 0;      // measured error (or 0/1 for exact checks)
  double tolerance = 0;  // pass iff value < tolerance (value == 0 for exact checks)
  bool passed = false;
};

// Developer self-checks against independent oracles:
//   grad    finite differences on the full training loss in 64-bit mode
//   sewc    dense multi-center EWC sum, brute-force Fisher, penalty gradient
//   metrics exhaustive HTER/EER/AUC scans and the delta_m reference rows
std::vector<CheckResult> run_verify_suite(std::string_view suite);

}  // namespace svlp
