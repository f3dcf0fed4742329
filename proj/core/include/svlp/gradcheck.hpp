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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>

#include "svlp/error.hpp"
#include "svlp/tape.hpp"

namespace svlp {

template <typename T>
using LossFn = std::function<Var<T>(Tape<T>&, const ParameterStore<T>&)>;

template <typename T>
struct GradCheckReport {
  T max_rel_error = 0;
  std::size_t worst_index = 0;
  T worst_analytic = 0;
  T worst_numeric = 0;
  std::size_t checked = 0;
};

// Compares reverse-mode gradients against central differences on the sampled
// global indices. Relative error per index is
// |g_a - g_fd| / max(floor, |g_a| + |g_fd|). Central differences of an O(1)
// loss resolve gradients only to about 1e-11 at eps = 1e-5 in double, so the
// default floor of 1e-7 turns the check into an absolute one for gradients
// too small to measure. The loss is evaluated twice up front; differing values
// mean loss_fn is not deterministic.
template <typename T>
GradCheckReport<T> finite_diff_check(const LossFn<T>& loss_fn, ParameterStore<T>& store, T eps,
                                     std::span<const std::size_t> sample, T floor = T(1e-7)) {
  if (!(eps > T(0))) throw UsageError("finite_diff_check: eps must be positive");
  auto eval = [&]() {
    Tape<T> tape;
    return loss_fn(tape, store).value()[0];
  };
  Gradients<T> analytic;
  T first = 0;
  {
    Tape<T> tape;
    Var<T> loss = loss_fn(tape, store);
    first = loss.value()[0];
    analytic = tape.backward(loss);
  }
  if (eval() != first) throw UsageError("finite_diff_check: loss_fn is not deterministic");

  GradCheckReport<T> report;
  for (std::size_t idx : sample) {
    const T orig = store.value_at(idx);
    store.set_value_at(idx, orig + eps);
    const T up = eval();
    store.set_value_at(idx, orig - eps);
    const T down = eval();
    store.set_value_at(idx, orig);
    const T numeric = (up - down) / (T(2) * eps);
    const T a = analytic[idx];
    const T rel = std::abs(a - numeric) / std::max(floor, std::abs(a) + std::abs(numeric));
    if (report.checked == 0 || rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = idx;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
    ++report.checked;
  }
  return report;
}

}  // namespace svlp
