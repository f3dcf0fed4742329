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
#include <functional>
#include <span>
#include <vector>

#include "svlp/tape.hpp"

namespace svlp {

// Index sets below are S-coordinates: positions in [0, |S|) along the
// penalizable ranges of a ParameterStore, kept sorted and unique.
using IndexSet = std::vector<std::size_t>;

// Diagonal Fisher and optimum of one finished domain, dense over S.
template <typename T>
struct FisherSnapshot {
  int domain = 0;
  std::vector<T> fisher;
  std::vector<T> theta_star;
};

template <typename T>
struct QuantileSelection {
  T tau = 0;
  IndexSet indices;
};

// tau = smallest value such that at least a fraction q = 1 - p of the entries
// are <= tau: the value at ascending rank ceil(q*M) (the minimum when q = 0).
// J = { i : values[i] >= tau }. Requires 0 < p <= 1.
template <typename T>
QuantileSelection<T> quantile_threshold(std::span<const T> values, double p);

IndexSet union_important(std::span<const IndexSet> sets);

std::vector<std::uint8_t> to_mask(const IndexSet& set, std::size_t size);
IndexSet from_mask(std::span<const std::uint8_t> mask);

// Per-sample loss for the Fisher estimate; called with sample = 0..n-1.
template <typename T>
using SampleLossFn = std::function<Var<T>(Tape<T>&, std::size_t sample)>;

// F_i = (1/n) sum_samples (dL/dtheta_i)^2 over i in S, one backward pass per
// sample, accumulated in sample order. theta_star is the current theta on S.
template <typename T>
FisherSnapshot<T> estimate_fisher(const ParameterStore<T>& store, int domain, std::size_t n_samples,
                                  const SampleLossFn<T>& per_sample_loss);

// Snapshots, per-domain top-p sets J and their running union I. p = 0 keeps
// every J empty, which switches consolidation off.
template <typename T>
class ConsolidationState {
 public:
  explicit ConsolidationState(double p = 0.5);

  double p() const { return p_; }
  // Derives J from the snapshot's Fisher and grows I.
  void add_snapshot(FisherSnapshot<T> snapshot);
  // Restores a persisted domain without re-deriving its set.
  void restore(FisherSnapshot<T> snapshot, IndexSet per_domain_set);

  const std::vector<FisherSnapshot<T>>& snapshots() const { return snapshots_; }
  const std::vector<IndexSet>& per_domain_sets() const { return sets_; }
  // I^(t) for the latest t; empty before the first snapshot.
  const IndexSet& cumulative() const { return cumulative_; }
  // I^(t) after each recorded domain.
  const std::vector<IndexSet>& cumulative_history() const { return history_; }
  std::size_t domains() const { return snapshots_.size(); }

 private:
  double p_;
  std::vector<FisherSnapshot<T>> snapshots_;
  std::vector<IndexSet> sets_;
  IndexSet cumulative_;
  std::vector<IndexSet> history_;
};

struct SewcOptions {
  double lambda = 1.0;
  // Alternative reading: for index i only sum the domains j with i in J^(j).
  bool sum_selected_only = false;
};

// lambda/2 * sum_{i in I} sum_{j} F_{j,i} (theta_i - theta*_{j,i})^2, recorded
// on the tape. A constant zero when no domain is consolidated or I is empty.
template <typename T>
Var<T> sewc_penalty(Tape<T>& tape, const ParameterStore<T>& store, const ConsolidationState<T>& state,
                    const SewcOptions& opts = {});

// Value-only evaluation of the same sum.
template <typename T>
double sewc_penalty_value(const ParameterStore<T>& store, const ConsolidationState<T>& state,
                          const SewcOptions& opts = {});

// 1/2 sum_j sum_{i in S} F_{j,i} (theta_i - theta*_{j,i})^2: the multi-center
// prior over every coordinate.
template <typename T>
double dense_ewc_penalty(const ParameterStore<T>& store, std::span<const FisherSnapshot<T>> snapshots);

extern template class ConsolidationState<float>;
extern template class ConsolidationState<double>;

}  // namespace svlp
