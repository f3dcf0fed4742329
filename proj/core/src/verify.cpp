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

#include "svlp/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "svlp/error.hpp"
#include "svlp/gradcheck.hpp"
#include "svlp/map.hpp"
#include "svlp/metrics.hpp"
#include "svlp/rng.hpp"
#include "svlp/sewc.hpp"

namespace svlp {

namespace {

CheckResult below(std::string name, double value, double tol) { return {std::move(name), value, tol, value < tol}; }

CheckResult exact(std::string name, bool ok) { return {std::move(name), ok ? 0.0 : 1.0, 0.0, ok}; }

std::vector<CheckResult> grad_suite() {
  EncoderConfig enc;
  enc.width = 16;
  enc.embed_dim = 8;
  enc.depth = 2;
  enc.heads = 2;
  enc.patch = 4;
  enc.image_side = 8;
  enc.max_seq = 16;
  PromptConfig pc;
  pc.visual_len = 2;
  pc.n_ctx = 3;
  MapModel<double> model(enc, pc);
  ParameterStore<double> store;
  CounterRng rng(7);
  model.init_parameters(store, rng);
  model.bank().register_domain(store, 1, rng);
  model.bank().freeze_domain(store, 1);
  model.bank().register_domain(store, 2, rng);
  // Off-init values so no parameter sits at a symmetric point.
  for (std::size_t i = 0; i < store.size(); ++i) store.set_value_at(i, store.value_at(i) + rng.normal(0, 0.05));

  ConsolidationState<double> state(0.5);
  FisherSnapshot<double> snap{1, {}, store.gather_penalizable()};
  for (auto& v : snap.theta_star) v += rng.normal(0, 0.05);
  snap.fisher.resize(snap.theta_star.size());
  for (auto& f : snap.fisher) f = rng.uniform();
  state.add_snapshot(std::move(snap));

  Tensor<double> pixels({3, enc.image_side * enc.image_side});
  for (auto& v : pixels.storage()) v = rng.uniform();
  const int labels[3] = {0, 1, 1};
  LossFn<double> loss = [&](Tape<double>& tape, const ParameterStore<double>& s) {
    return add(model.loss(tape, s, pixels, labels, 2), sewc_penalty(tape, s, state));
  };

  std::vector<std::size_t> trainable;
  for (const auto& e : store.entries()) {
    if (e.frozen) continue;
    for (std::size_t i = 0; i < e.value.size(); ++i) trainable.push_back(e.offset + i);
  }
  std::vector<std::size_t> sample;
  const std::size_t want = 256;
  for (std::size_t k = 0; k < want && k < trainable.size(); ++k) sample.push_back(trainable[k * trainable.size() / want]);
  sample.push_back(store.global_index(kLogitScaleName, 0));
  for (std::size_t k = 0; k < kNumFamilies; ++k) sample.push_back(store.global_index(alpha_name(2), k));
  const auto report = finite_diff_check<double>(loss, store, 1e-5, sample);
  return {below("grad: L_MAP + L_SEWC vs central differences (" + std::to_string(report.checked) + " coords)",
                report.max_rel_error, 1e-4)};
}

ParameterStore<double> random_store(CounterRng& rng) {
  ParameterStore<double> store;
  const char* names[] = {"image.a", "prompt.da", "text.b", "logit_scale", "image.c"};
  const std::size_t sizes[] = {7, 3, 5, 1, 4};
  for (int i = 0; i < 5; ++i) {
    Tensor<double> t({sizes[i]});
    for (auto& v : t.storage()) v = rng.normal();
    store.add(names[i], std::move(t));
  }
  return store;
}

std::vector<CheckResult> sewc_suite() {
  std::vector<CheckResult> out;
  CounterRng rng(11);
  ParameterStore<double> store = random_store(rng);
  const std::size_t m = store.penalizable_size();
  std::vector<FisherSnapshot<double>> snaps;
  for (int j = 1; j <= 3; ++j) {
    FisherSnapshot<double> s{j, std::vector<double>(m), std::vector<double>(m)};
    for (std::size_t i = 0; i < m; ++i) {
      s.fisher[i] = rng.uniform();
      s.theta_star[i] = rng.normal();
    }
    snaps.push_back(std::move(s));
  }
  ConsolidationState<double> full(1.0);
  for (const auto& s : snaps) full.add_snapshot(s);

  // Independent dense sum over explicit global indices.
  const auto idx = store.penalizable_indices();
  double dense = 0;
  for (const auto& s : snaps) {
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const double d = store.value_at(idx[i]) - s.theta_star[i];
      dense += 0.5 * s.fisher[i] * d * d;
    }
  }
  Tape<double> tape;
  const double sewc = sewc_penalty(tape, store, full).value()[0];
  out.push_back(below("sewc: p = 1 penalty vs dense EWC sum", std::abs(sewc - dense), 1e-12));
  out.push_back(exact("sewc: no consolidated domain gives exactly 0",
                      sewc_penalty_value(store, ConsolidationState<double>(0.5)) == 0.0));

  ConsolidationState<double> half(0.5);
  for (const auto& s : snaps) half.add_snapshot(s);
  LossFn<double> pen = [&](Tape<double>& t, const ParameterStore<double>& s) { return sewc_penalty(t, s, half); };
  const auto all = [&] {
    std::vector<std::size_t> v(store.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
    return v;
  }();
  // Quadratic: central differences are exact up to roundoff.
  const auto g = finite_diff_check<double>(pen, store, 1e-4, all);
  double worst_abs = 0;
  {
    Tape<double> t;
    const Gradients<double> grads = t.backward(sewc_penalty(t, store, half));
    std::vector<bool> in_i(m, false);
    for (std::size_t i : half.cumulative()) in_i[i] = true;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      double expect = 0;
      if (in_i[i]) {
        for (const auto& s : snaps) expect += s.fisher[i] * (store.value_at(idx[i]) - s.theta_star[i]);
      }
      worst_abs = std::max(worst_abs, std::abs(grads[idx[i]] - expect));
    }
  }
  out.push_back(below("sewc: penalty gradient vs central differences", g.max_rel_error, 1e-6));
  out.push_back(below("sewc: penalty gradient vs closed form", worst_abs, 1e-12));

  // Fisher on a tiny logistic model against a brute-force per-sample average
  // of squared fourth-order central differences.
  ParameterStore<double> tiny;
  Tensor<double> w({3, 2}), b({2});
  for (auto& v : w.storage()) v = rng.normal(0, 0.5);
  for (auto& v : b.storage()) v = rng.normal(0, 0.5);
  tiny.add("image.w", w);
  tiny.add("image.b", b);
  std::vector<Tensor<double>> xs;
  std::vector<int> ys;
  for (int n = 0; n < 5; ++n) {
    Tensor<double> x({1, 3});
    for (auto& v : x.storage()) v = rng.normal();
    xs.push_back(x);
    ys.push_back(n % 2);
  }
  auto sample_loss = [&](Tape<double>& t, const ParameterStore<double>& s, std::size_t n) {
    const int y[1] = {ys[n]};
    return cross_entropy(add(matmul(t.constant(xs[n]), t.param(s, "image.w")), t.param(s, "image.b")),
                         std::span<const int>(y));
  };
  const auto snap = estimate_fisher<double>(tiny, 1, 5, [&](Tape<double>& t, std::size_t n) { return sample_loss(t, tiny, n); });
  double worst = 0;
  for (std::size_t i = 0; i < tiny.size(); ++i) {
    double acc = 0;
    for (std::size_t n = 0; n < 5; ++n) {
      auto f = [&](double delta) {
        const double orig = tiny.value_at(i);
        tiny.set_value_at(i, orig + delta);
        Tape<double> t;
        const double v = sample_loss(t, tiny, n).value()[0];
        tiny.set_value_at(i, orig);
        return v;
      };
      const double h = 1e-3;
      const double d = (8 * (f(h) - f(-h)) - (f(2 * h) - f(-2 * h))) / (12 * h);
      acc += d * d;
    }
    worst = std::max(worst, std::abs(snap.fisher[i] - acc / 5));
  }
  out.push_back(below("sewc: Fisher vs brute-force squared-gradient average", worst, 1e-10));
  return out;
}

std::vector<CheckResult> metrics_suite() {
  std::vector<CheckResult> out;
  const double q1[] = {0.0043, 0.0233}, b1[] = {0.0043, 0.0};
  const double q2[] = {0.0607, 0.0}, b2[] = {0.0043, 0.0};
  out.push_back(below("metrics: delta_m reference row 1.17%", std::abs(delta_m(q1, b1) * 100 - 1.17), 0.005));
  out.push_back(below("metrics: delta_m reference row 2.83%", std::abs(delta_m(q2, b2) * 100 - 2.83), 0.005));

  CounterRng rng(5);
  bool hter_ok = true, eer_ok = true;
  double auc_err = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 4 + rng.below(30);
    ScoreSet s(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i].score = static_cast<double>(rng.below(8)) / 8;  // coarse grid forces ties
      s[i].label = i < 2 ? static_cast<int>(i) : static_cast<int>(rng.below(2));
    }
    std::vector<double> vals;
    for (const auto& r : s) vals.push_back(r.score);
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    std::vector<double> cands{-std::numeric_limits<double>::infinity()};
    for (std::size_t i = 0; i + 1 < vals.size(); ++i) cands.push_back(vals[i] + (vals[i + 1] - vals[i]) / 2);
    cands.push_back(std::numeric_limits<double>::infinity());
    double best_gap = 2, best_thr = 0;
    for (double thr : cands) {
      double fa = 0, fr = 0, ns = 0, nr = 0;
      for (const auto& r : s) {
        if (r.label == 0) ns += 1, fa += r.score >= thr;
        if (r.label == 1) nr += 1, fr += r.score < thr;
      }
      const double gap = std::abs(fa / ns - fr / nr);
      if (gap < best_gap) best_gap = gap, best_thr = thr;
      hter_ok = hter_ok && hter(s, thr) == (fa / ns + fr / nr) / 2;
    }
    eer_ok = eer_ok && eer_threshold(s) == best_thr;
    double wins = 0, pairs = 0;
    for (const auto& a : s) {
      for (const auto& c : s) {
        if (a.label != 1 || c.label != 0) continue;
        pairs += 1;
        wins += a.score > c.score ? 1.0 : a.score == c.score ? 0.5 : 0.0;
      }
    }
    auc_err = std::max(auc_err, std::abs(auc(s) - wins / pairs));
  }
  out.push_back(exact("metrics: hter vs exhaustive count (100 sets)", hter_ok));
  out.push_back(exact("metrics: eer_threshold vs exhaustive scan (100 sets)", eer_ok));
  out.push_back(below("metrics: auc vs pairwise oracle (100 sets)", auc_err, 1e-12));
  return out;
}

}  // namespace

std::vector<CheckResult> run_verify_suite(std::string_view suite) {
  if (suite == "grad") return grad_suite();
  if (suite == "sewc") return sewc_suite();
  if (suite == "metrics") return metrics_suite();
  if (suite == "all") {
    std::vector<CheckResult> out;
    for (const char* s : {"grad", "sewc", "metrics"}) {
      auto part = run_verify_suite(s);
      out.insert(out.end(), part.begin(), part.end());
    }
    return out;
  }
  throw UsageError("unknown suite '" + std::string(suite) + "' (grad, sewc, metrics, all)");
}

}  // namespace svlp
