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

#include "svlp/routing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "svlp/rng.hpp"

namespace svlp {

namespace {

template <typename T>
double sq_dist(const T* a, const T* b, std::size_t d) {
  double s = 0;
  for (std::size_t i = 0; i < d; ++i) {
    const double x = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += x * x;
  }
  return s;
}

template <typename T>
std::size_t count_distinct_rows(const Tensor<T>& x) {
  std::vector<std::span<const T>> rows;
  for (std::size_t r = 0; r < x.rows(); ++r) rows.push_back(x.row(r));
  auto less = [](std::span<const T> a, std::span<const T> b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
  };
  std::sort(rows.begin(), rows.end(), less);
  auto eq = [](std::span<const T> a, std::span<const T> b) { return std::equal(a.begin(), a.end(), b.begin()); };
  return static_cast<std::size_t>(std::unique(rows.begin(), rows.end(), eq) - rows.begin());
}

}  // namespace

template <typename T>
Tensor<T> build_prototypes(const Tensor<T>& features, std::size_t k, std::uint64_t seed, const KMeansOptions& opts) {
  const std::size_t n = features.rows(), d = features.cols();
  if (k == 0) throw UsageError("build_prototypes: k must be positive");
  if (n < k || count_distinct_rows(features) < k) {
    throw UsageError("build_prototypes: need at least " + std::to_string(k) + " distinct feature vectors");
  }
  CounterRng rng(seed);
  std::vector<double> cent(k * d);
  auto set_centroid = [&](std::size_t c, std::size_t point) {
    for (std::size_t i = 0; i < d; ++i) cent[c * d + i] = static_cast<double>(features.at(point, i));
  };
  auto dist_to = [&](std::size_t point, std::size_t c) {
    double s = 0;
    for (std::size_t i = 0; i < d; ++i) {
      const double x = static_cast<double>(features.at(point, i)) - cent[c * d + i];
      s += x * x;
    }
    return s;
  };

  // k-means++ seeding.
  set_centroid(0, static_cast<std::size_t>(rng.below(n)));
  std::vector<double> best(n);
  for (std::size_t p = 0; p < n; ++p) best[p] = dist_to(p, 0);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0;
    for (double b : best) total += b;
    std::size_t pick = n;
    double u = rng.uniform() * total;
    for (std::size_t p = 0; p < n; ++p) {
      if (best[p] <= 0) continue;
      pick = p;
      if (u < best[p]) break;
      u -= best[p];
    }
    set_centroid(c, pick);
    for (std::size_t p = 0; p < n; ++p) best[p] = std::min(best[p], dist_to(p, c));
  }

  std::vector<std::size_t> assign(n);
  std::vector<double> next(k * d);
  std::vector<std::size_t> counts(k);
  for (std::size_t iter = 0; iter < opts.max_iterations; ++iter) {
    for (std::size_t p = 0; p < n; ++p) {
      std::size_t arg = 0;
      double bd = dist_to(p, 0);
      for (std::size_t c = 1; c < k; ++c) {
        const double dd = dist_to(p, c);
        if (dd < bd) bd = dd, arg = c;
      }
      assign[p] = arg;
      best[p] = bd;
    }
    std::fill(next.begin(), next.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t p = 0; p < n; ++p) {
      ++counts[assign[p]];
      for (std::size_t i = 0; i < d; ++i) next[assign[p] * d + i] += static_cast<double>(features.at(p, i));
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        const auto far = static_cast<std::size_t>(std::max_element(best.begin(), best.end()) - best.begin());
        for (std::size_t i = 0; i < d; ++i) next[c * d + i] = static_cast<double>(features.at(far, i));
        best[far] = 0;
        continue;
      }
      for (std::size_t i = 0; i < d; ++i) next[c * d + i] /= static_cast<double>(counts[c]);
    }
    double moved = 0;
    for (std::size_t c = 0; c < k; ++c) {
      double s = 0;
      for (std::size_t i = 0; i < d; ++i) s += (next[c * d + i] - cent[c * d + i]) * (next[c * d + i] - cent[c * d + i]);
      moved = std::max(moved, std::sqrt(s));
    }
    cent.swap(next);
    if (moved < opts.tolerance) break;
  }

  Tensor<T> out({k, d});
  for (std::size_t i = 0; i < k * d; ++i) out[i] = static_cast<T>(cent[i]);
  return out;
}

template <typename T>
void PrototypeBank<T>::add(int domain, Tensor<T> centroids) {
  if (banks_.contains(domain)) throw UsageError("prototypes for domain " + std::to_string(domain) + " are frozen");
  if (centroids.ndim() != 2 || centroids.rows() == 0) throw ShapeError("prototype bank must be [k, C_out]");
  if (!banks_.empty() && banks_.begin()->second.cols() != centroids.cols()) {
    throw ShapeError("prototype width differs from existing banks");
  }
  if (!centroids.all_finite()) throw NumericError("prototype centroids must be finite");
  banks_.emplace(domain, std::move(centroids));
}

template <typename T>
const Tensor<T>& PrototypeBank<T>::at(int domain) const {
  auto it = banks_.find(domain);
  if (it == banks_.end()) throw UsageError("no prototypes for domain " + std::to_string(domain));
  return it->second;
}

template <typename T>
RouteResult PrototypeBank<T>::route(std::span<const T> embedding) const {
  if (banks_.empty()) throw UsageError("route: no prototype banks");
  RouteResult best;
  best.distance = std::numeric_limits<double>::infinity();
  for (const auto& [domain, cents] : banks_) {
    if (embedding.size() != cents.cols()) throw ShapeError("route: embedding width mismatch");
    for (std::size_t c = 0; c < cents.rows(); ++c) {
      const double dd = sq_dist(embedding.data(), cents.data() + c * cents.cols(), cents.cols());
      if (dd < best.distance) best = {domain, c, dd};
    }
  }
  return best;
}

template Tensor<float> build_prototypes(const Tensor<float>&, std::size_t, std::uint64_t, const KMeansOptions&);
template Tensor<double> build_prototypes(const Tensor<double>&, std::size_t, std::uint64_t, const KMeansOptions&);
template class PrototypeBank<float>;
template class PrototypeBank<double>;

}  // namespace svlp
