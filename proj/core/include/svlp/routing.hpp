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
#include <map>
#include <span>

#include "svlp/tensor.hpp"

namespace svlp {

struct KMeansOptions {
  std::size_t max_iterations = 100;
  double tolerance = 1e-6;  // stop once no centroid moves farther than this
  friend bool operator==(const KMeansOptions&, const KMeansOptions&) = default;
};

// Lloyd's algorithm with k-means++ seeding drawn from CounterRng(seed).
// features: [n, d]; returns [k, d]. Squared Euclidean distance; nearest-centroid
// ties go to the lower index. An empty cluster is reseeded at the point farthest
// from its own centroid. Throws UsageError with fewer than k distinct points.
template <typename T>
Tensor<T> build_prototypes(const Tensor<T>& features, std::size_t k, std::uint64_t seed,
                           const KMeansOptions& opts = {});

struct RouteResult {
  int domain = 0;
  std::size_t centroid = 0;
  double distance = 0;  // squared Euclidean
};

// Per-domain prototype sets, frozen once added.
template <typename T>
class PrototypeBank {
 public:
  void add(int domain, Tensor<T> centroids);
  bool contains(int domain) const { return banks_.contains(domain); }
  const Tensor<T>& at(int domain) const;
  const std::map<int, Tensor<T>>& banks() const { return banks_; }
  bool empty() const { return banks_.empty(); }

  // Nearest centroid over every domain's prototypes; ties go to the lowest
  // domain id, then the lowest centroid index.
  RouteResult route(std::span<const T> embedding) const;

 private:
  std::map<int, Tensor<T>> banks_;
};

extern template class PrototypeBank<float>;
extern template class PrototypeBank<double>;

}  // namespace svlp
