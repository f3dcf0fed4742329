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

#include "svlp/sewc.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace svlp {

template <typename T>
QuantileSelection<T> quantile_threshold(std::span<const T> values, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw UsageError("quantile_threshold: p must lie in (0, 1], got " + std::to_string(p));
  if (values.empty()) throw UsageError("quantile_threshold: no values");
  const std::size_t m = values.size();
  const double q = 1.0 - p;
  // ceil(q*M) with a little slack so that e.g. (1-0.7)*10 counts as 3.
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(m) - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, m);
  std::vector<T> sorted(values.begin(), values.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1), sorted.end());
  QuantileSelection<T> out;
  out.tau = sorted[rank - 1];
  for (std::size_t i = 0; i < m; ++i) {
    if (values[i] >= out.tau) out.indices.push_back(i);
  }
  return out;
}

IndexSet union_important(std::span<const IndexSet> sets) {
  IndexSet out;
  for (const auto& s : sets) {
    IndexSet merged;
    merged.reserve(out.size() + s.size());
    std::set_union(out.begin(), out.end(), s.begin(), s.end(), std::back_inserter(merged));
    out = std::move(merged);
  }
  return out;
}

std::vector<std::uint8_t> to_mask(const IndexSet& set, std::size_t size) {
  std::vector<std::uint8_t> mask(size, 0);
  for (std::size_t i : set) mask.at(i) = 1;
  return mask;
}

IndexSet from_mask(std::span<const std::uint8_t> mask) {
  IndexSet out;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) out.push_back(i);
  }
  return out;
}

template <typename T>
FisherSnapshot<T> estimate_fisher(const ParameterStore<T>& store, int domain, std::size_t n_samples,
                                  const SampleLossFn<T>& per_sample_loss) {
  if (n_samples == 0) throw UsageError("estimate_fisher: no samples");
  const auto& ranges = store.penalizable_ranges();
  std::vector<double> acc(store.penalizable_size(), 0.0);
  for (std::size_t n = 0; n < n_samples; ++n) {
    Tape<T> tape;
    Var<T> loss = per_sample_loss(tape, n);
    Gradients<T> g = tape.backward(loss);
    if (g.size() == 0) continue;
    for (const auto& r : ranges) {
      for (std::size_t k = 0; k < r.length; ++k) {
        const double gi = static_cast<double>(g[r.global_offset + k]);
        if (!std::isfinite(gi)) throw NumericError("estimate_fisher: non-finite gradient");
        acc[r.s_offset + k] += gi * gi;
      }
    }
  }
  FisherSnapshot<T> snap;
  snap.domain = domain;
  snap.fisher.resize(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) snap.fisher[i] = static_cast<T>(acc[i] / static_cast<double>(n_samples));
  snap.theta_star = store.gather_penalizable();
  return snap;
}

template <typename T>
ConsolidationState<T>::ConsolidationState(double p) : p_(p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("SEWC selection fraction p must lie in [0, 1]");
}

template <typename T>
void ConsolidationState<T>::add_snapshot(FisherSnapshot<T> snapshot) {
  IndexSet set;
  if (p_ > 0.0) set = quantile_threshold<T>(snapshot.fisher, p_).indices;
  restore(std::move(snapshot), std::move(set));
}

template <typename T>
void ConsolidationState<T>::restore(FisherSnapshot<T> snapshot, IndexSet per_domain_set) {
  if (!snapshots_.empty() && snapshot.fisher.size() != snapshots_.front().fisher.size()) {
    throw ShapeError("snapshot size does not match earlier snapshots");
  }
  if (snapshot.fisher.size() != snapshot.theta_star.size()) throw ShapeError("snapshot arrays differ in size");
  for (T f : snapshot.fisher) {
    if (!(f >= T(0))) throw NumericError("Fisher entries must be finite and nonnegative");
  }
  for (std::size_t i : per_domain_set) {
    if (i >= snapshot.fisher.size()) throw ShapeError("selected index outside S");
  }
  const IndexSet parts[2] = {cumulative_, per_domain_set};
  cumulative_ = union_important(parts);
  history_.push_back(cumulative_);
  sets_.push_back(std::move(per_domain_set));
  snapshots_.push_back(std::move(snapshot));
}

namespace {

// Walks I in step with the store's penalizable ranges, calling
// fn(s_index, entry, offset, theta_i).
template <typename T, typename Fn>
void for_each_selected(const ParameterStore<T>& store, const IndexSet& selected, Fn&& fn) {
  const auto& ranges = store.penalizable_ranges();
  std::size_t r = 0;
  for (std::size_t s : selected) {
    while (r < ranges.size() && s >= ranges[r].s_offset + ranges[r].length) ++r;
    if (r == ranges.size()) throw ShapeError("selected index outside the store's penalizable set");
    const std::size_t off = s - ranges[r].s_offset;
    fn(s, ranges[r].entry, off, store.entry(ranges[r].entry).value[off]);
  }
}

template <typename T>
void check_state(const ParameterStore<T>& store, const ConsolidationState<T>& state) {
  for (const auto& snap : state.snapshots()) {
    if (snap.fisher.size() != store.penalizable_size()) {
      throw ShapeError("snapshot of domain " + std::to_string(snap.domain) + " covers " +
                       std::to_string(snap.fisher.size()) + " indices, store has |S| = " +
                       std::to_string(store.penalizable_size()));
    }
  }
}

// Per-domain membership lookup for the sum_selected_only variant.
template <typename T>
std::vector<std::vector<std::uint8_t>> membership(const ConsolidationState<T>& state, std::size_t m) {
  std::vector<std::vector<std::uint8_t>> out;
  for (const auto& set : state.per_domain_sets()) out.push_back(to_mask(set, m));
  return out;
}

}  // namespace

template <typename T>
double sewc_penalty_value(const ParameterStore<T>& store, const ConsolidationState<T>& state,
                          const SewcOptions& opts) {
  if (state.domains() == 0 || state.cumulative().empty()) return 0.0;
  check_state(store, state);
  const auto& snaps = state.snapshots();
  std::vector<std::vector<std::uint8_t>> member;
  if (opts.sum_selected_only) member = membership(state, store.penalizable_size());
  double total = 0.0;
  for_each_selected(store, state.cumulative(), [&](std::size_t s, std::size_t, std::size_t, T theta) {
    for (std::size_t j = 0; j < snaps.size(); ++j) {
      if (opts.sum_selected_only && !member[j][s]) continue;
      const double d = static_cast<double>(theta) - static_cast<double>(snaps[j].theta_star[s]);
      total += static_cast<double>(snaps[j].fisher[s]) * d * d;
    }
  });
  return 0.5 * opts.lambda * total;
}

template <typename T>
Var<T> sewc_penalty(Tape<T>& tape, const ParameterStore<T>& store, const ConsolidationState<T>& state,
                    const SewcOptions& opts) {
  if (state.domains() == 0 || state.cumulative().empty()) return tape.constant(Tensor<T>::scalar(T(0)));
  check_state(store, state);
  const auto& ranges = store.penalizable_ranges();
  std::vector<int> inputs;
  std::vector<int> node_of_entry(store.entry_count(), -1);
  for (const auto& r : ranges) {
    const int id = tape.param(store, store.entry(r.entry).name).id();
    node_of_entry[r.entry] = id;
    inputs.push_back(id);
  }
  const double value = sewc_penalty_value(store, state, opts);
  return tape.push(Tensor<T>::scalar(static_cast<T>(value)), std::move(inputs),
                   [&store, &state, opts, node_of_entry](Tape<T>& t, int self) {
    const double g = static_cast<double>(t.grad(self)[0]) * opts.lambda;
    const auto& snaps = state.snapshots();
    std::vector<std::vector<std::uint8_t>> member;
    if (opts.sum_selected_only) member = membership(state, store.penalizable_size());
    for_each_selected(store, state.cumulative(), [&](std::size_t s, std::size_t entry, std::size_t off, T theta) {
      const int node = node_of_entry[entry];
      if (!t.requires_grad(node)) return;
      double d = 0.0;
      for (std::size_t j = 0; j < snaps.size(); ++j) {
        if (opts.sum_selected_only && !member[j][s]) continue;
        d += static_cast<double>(snaps[j].fisher[s]) *
             (static_cast<double>(theta) - static_cast<double>(snaps[j].theta_star[s]));
      }
      t.grad(node)[off] += static_cast<T>(g * d);
    });
  }, "sewc_penalty");
}

template <typename T>
double dense_ewc_penalty(const ParameterStore<T>& store, std::span<const FisherSnapshot<T>> snapshots) {
  const std::vector<T> theta = store.gather_penalizable();
  double total = 0.0;
  for (const auto& snap : snapshots) {
    if (snap.fisher.size() != theta.size() || snap.theta_star.size() != theta.size()) {
      throw ShapeError("dense_ewc_penalty: snapshot does not cover S");
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double d = static_cast<double>(theta[i]) - static_cast<double>(snap.theta_star[i]);
      total += static_cast<double>(snap.fisher[i]) * d * d;
    }
  }
  return 0.5 * total;
}

#define SVLP_INSTANTIATE_SEWC(T)                                                                              \
  template QuantileSelection<T> quantile_threshold(std::span<const T>, double);                               \
  template FisherSnapshot<T> estimate_fisher(const ParameterStore<T>&, int, std::size_t, const SampleLossFn<T>&); \
  template class ConsolidationState<T>;                                                                       \
  template Var<T> sewc_penalty(Tape<T>&, const ParameterStore<T>&, const ConsolidationState<T>&,              \
                               const SewcOptions&);                                                           \
  template double sewc_penalty_value(const ParameterStore<T>&, const ConsolidationState<T>&, const SewcOptions&); \
  template double dense_ewc_penalty(const ParameterStore<T>&, std::span<const FisherSnapshot<T>>);

SVLP_INSTANTIATE_SEWC(float)
SVLP_INSTANTIATE_SEWC(double)

}  // namespace svlp
