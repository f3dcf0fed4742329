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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "svlp/error.hpp"
#include "svlp/metrics.hpp"
#include "svlp/rng.hpp"

namespace svlp {
namespace {

ScoreSet random_set(CounterRng& rng, std::size_t n, int grid) {
  ScoreSet s(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i].score = grid > 0 ? static_cast<double>(rng.below(grid)) / grid : rng.uniform();
    s[i].label = i < 2 ? static_cast<int>(i) : static_cast<int>(rng.below(2));
  }
  return s;
}

double count_hter(const ScoreSet& s, double thr) {
  double fa = 0, fr = 0, ns = 0, nr = 0;
  for (const auto& r : s) {
    if (r.label == 0) ns += 1, fa += r.score >= thr ? 1 : 0;
    if (r.label == 1) nr += 1, fr += r.score < thr ? 1 : 0;
  }
  return 0.5 * (fa / ns + fr / nr);
}

double pairwise_auc(const ScoreSet& s) {
  double wins = 0, pairs = 0;
  for (const auto& a : s) {
    if (a.label != 1) continue;
    for (const auto& b : s) {
      if (b.label != 0) continue;
      pairs += 1;
      wins += a.score > b.score ? 1.0 : a.score == b.score ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

TEST(Hter, PerfectAndInverted) {
  ScoreSet s{{0.9, 1}, {0.9, 1}, {0.1, 0}, {0.1, 0}};
  EXPECT_EQ(hter(s, 0.5), 0.0);
  for (auto& r : s) r.label = 1 - r.label;
  EXPECT_EQ(hter(s, 0.5), 1.0);
}

TEST(Hter, AcceptsAtTheThreshold) {
  const ScoreSet s{{0.5, 1}, {0.5, 0}};
  const auto e = error_rates(s, 0.5);
  EXPECT_EQ(e.far, 1.0);
  EXPECT_EQ(e.frr, 0.0);
}

TEST(Hter, MatchesCountingOracle) {
  CounterRng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = random_set(rng, 20, 0);
    const double thr = rng.uniform();
    EXPECT_EQ(hter(s, thr), count_hter(s, thr));
  }
}

TEST(Hter, OneClassSetIsError) {
  const ScoreSet s{{0.2, 1}, {0.7, 1}};
  EXPECT_THROW(hter(s, 0.5), UsageError);
  EXPECT_THROW(auc(s), UsageError);
  EXPECT_THROW(eer_threshold(s), UsageError);
  const ScoreSet bad{{NAN, 1}, {0.1, 0}};
  EXPECT_THROW(hter(bad, 0.5), NumericError);
}

TEST(Eer, SeparatedScoresGiveTheMidpoint) {
  const ScoreSet s{{0.8, 1}, {0.9, 1}, {0.1, 0}, {0.3, 0}};
  EXPECT_DOUBLE_EQ(eer_threshold(s), 0.55);
  EXPECT_EQ(hter(s, eer_threshold(s)), 0.0);
}

TEST(Eer, AllEqualScores) {
  const ScoreSet s{{0.4, 1}, {0.4, 0}, {0.4, 0}};
  // Both sentinels give |FAR - FRR| = 1; the smaller one wins.
  EXPECT_EQ(eer_threshold(s), -std::numeric_limits<double>::infinity());
  EXPECT_EQ(hter(s, eer_threshold(s)), 0.5);
}

TEST(Eer, MatchesExhaustiveScan) {
  CounterRng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_set(rng, 4 + rng.below(47), trial % 2 == 0 ? 8 : 0);
    std::vector<double> v;
    for (const auto& r : s) v.push_back(r.score);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    std::vector<double> cands{-std::numeric_limits<double>::infinity()};
    for (std::size_t i = 0; i + 1 < v.size(); ++i) cands.push_back(v[i] + (v[i + 1] - v[i]) / 2);
    cands.push_back(std::numeric_limits<double>::infinity());
    double best_gap = 3, best = 0;
    for (double thr : cands) {
      const auto e = error_rates(s, thr);
      const double gap = std::abs(e.far - e.frr);
      if (gap < best_gap) best_gap = gap, best = thr;
    }
    EXPECT_EQ(eer_threshold(s), best);
    const auto at = error_rates(s, eer_threshold(s));
    EXPECT_LE(std::abs(at.far - at.frr), best_gap);
  }
}

TEST(Auc, PerfectAndAllTied) {
  EXPECT_EQ(auc(ScoreSet{{0.9, 1}, {0.2, 0}, {0.1, 0}}), 1.0);
  EXPECT_EQ(auc(ScoreSet{{0.5, 1}, {0.5, 0}, {0.5, 0}}), 0.5);
}

TEST(Auc, MatchesPairwiseOracle) {
  CounterRng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_set(rng, 30, trial % 3 == 0 ? 5 : 0);
    EXPECT_NEAR(auc(s), pairwise_auc(s), 1e-12);
  }
}

TEST(Auc, InvariantUnderMonotoneTransforms) {
  CounterRng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    auto s = random_set(rng, 25, trial % 2 == 0 ? 6 : 0);
    const double base = auc(s);
    auto t = s;
    for (auto& r : t) r.score = std::exp(3 * r.score) / 50;
    EXPECT_EQ(auc(t), base);
    for (auto& r : t) r.score = r.score * r.score * r.score + 0.25;
    EXPECT_EQ(auc(t), base);
  }
}

TEST(DeltaM, ReferenceRows) {
  const double q1[] = {0.0043, 0.0233}, b1[] = {0.0043, 0.0};
  const double q2[] = {0.0607, 0.0}, b2[] = {0.0043, 0.0};
  EXPECT_NEAR(delta_m(q1, b1) * 100, 1.17, 0.005);
  EXPECT_NEAR(delta_m(q1, b1), 0.01165, 1e-12);
  EXPECT_NEAR(delta_m(q2, b2) * 100, 2.83, 0.005);
  EXPECT_EQ(delta_m(q1, q1), 0.0);
}

TEST(DeltaM, LinearInEachIncrementalEntry) {
  CounterRng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> q(4), b(4);
    for (std::size_t t = 0; t < 4; ++t) q[t] = rng.uniform(), b[t] = rng.uniform(0, 0.9);
    const std::size_t t = rng.below(4);
    const double base = delta_m(q, b);
    auto q2 = q;
    q2[t] += 0.1;
    auto q3 = q;
    q3[t] += 0.2;
    EXPECT_NEAR(delta_m(q3, b) - delta_m(q2, b), delta_m(q2, b) - base, 1e-12);
    EXPECT_NEAR(delta_m(q2, b) - base, 0.1 / (4 * (1 - b[t])), 1e-12);
  }
}

TEST(DeltaM, Errors) {
  const double a[] = {0.1, 0.2}, one[] = {0.1, 1.0}, short_b[] = {0.1};
  EXPECT_THROW(delta_m(a, short_b), UsageError);
  EXPECT_THROW(delta_m(a, one), UsageError);
  EXPECT_THROW(delta_m(std::span<const double>(), std::span<const double>()), UsageError);
}

TEST(RoutingAccuracy, PerTrueDomain) {
  const ScoreSet s{{0.1, 0, 1, 1}, {0.2, 1, 1, 2}, {0.3, 0, 2, 2}, {0.4, 1, 2, 2}};
  const auto acc = routing_accuracy(s);
  EXPECT_EQ(acc.at(1), 0.5);
  EXPECT_EQ(acc.at(2), 1.0);
  EXPECT_THROW(routing_accuracy(ScoreSet{{0.1, 0, 1, -1}}), UsageError);
}

TEST(Threshold, PolicyParsing) {
  EXPECT_EQ(ThresholdPolicy::parse("eer").mode, ThresholdMode::kEer);
  const auto f = ThresholdPolicy::parse("fixed:0.25");
  EXPECT_EQ(f.mode, ThresholdMode::kFixed);
  EXPECT_EQ(f.value, 0.25);
  EXPECT_EQ(ThresholdPolicy::parse(f.str()).value, 0.25);
  EXPECT_THROW(ThresholdPolicy::parse("fixed:abc"), UsageError);
  EXPECT_THROW(ThresholdPolicy::parse("dev"), UsageError);
}

TEST(Report, CsvRoundTripAndRecount) {
  CounterRng rng(6);
  std::vector<std::pair<std::string, ScoreSet>> logs;
  EvalReport report;
  for (int d = 1; d <= 3; ++d) {
    auto s = random_set(rng, 40, 0);
    for (auto& r : s) r.domain = d, r.routed = static_cast<int>(1 + rng.below(3));
    report.domains.push_back(evaluate_domain("dom" + std::to_string(d), d, s, ThresholdPolicy{}));
    logs.emplace_back("dom" + std::to_string(d), s);
  }
  std::stringstream csv;
  write_report_csv(csv, report);
  const auto back = read_report_csv(csv);
  ASSERT_EQ(back.domains.size(), 3u);
  std::stringstream log;
  write_score_log(log, logs);
  const auto relog = read_score_log(log);
  ASSERT_EQ(relog.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& a = report.domains[i];
    const auto& b = back.domains[i];
    EXPECT_EQ(a.name, b.name);
    EXPECT_EQ(a.n_real, b.n_real);
    EXPECT_EQ(a.n_spoof, b.n_spoof);
    EXPECT_EQ(a.threshold, b.threshold);
    EXPECT_EQ(a.hter, b.hter);
    EXPECT_EQ(a.auc, b.auc);
    EXPECT_EQ(a.routing_acc, b.routing_acc);
    // Recount from the persisted per-sample log.
    const auto& s = relog[i].second;
    EXPECT_EQ(count_hter(s, eer_threshold(s)), b.hter);
    EXPECT_EQ(routing_accuracy(s).at(static_cast<int>(i + 1)), *b.routing_acc);
  }
}

TEST(Report, MissingRoutingAndBadInput) {
  EvalReport report;
  report.domains.push_back(evaluate_domain("x", 1, ScoreSet{{0.7, 1}, {0.2, 0}}, ThresholdPolicy{}));
  EXPECT_FALSE(report.domains[0].routing_acc);
  std::stringstream csv;
  write_report_csv(csv, report);
  EXPECT_NE(csv.str().find(",\n"), std::string::npos);
  EXPECT_FALSE(read_report_csv(csv).domains[0].routing_acc);

  std::stringstream bad("domain,hter\nx,0.1\n");
  EXPECT_THROW(read_report_csv(bad), FormatError);
  std::stringstream short_row("domain,n_real,n_spoof,threshold,hter,auc,routing_acc\nx,1,1\n");
  EXPECT_THROW(read_report_csv(short_row), FormatError);
}

TEST(Report, TextUsesTwoDecimalPercents) {
  EvalReport report;
  report.tag = "svlp";
  report.domains.push_back(evaluate_domain("x", 1, ScoreSet{{0.7, 1, 1, 1}, {0.2, 0, 1, 1}}, ThresholdPolicy{}));
  report.delta_m = 0.01165;
  std::stringstream os;
  write_report_text(os, report);
  EXPECT_NE(os.str().find("100.00"), std::string::npos);
  EXPECT_NE(os.str().find("delta_m%: 1.17"), std::string::npos);
  EXPECT_EQ(format_percent(0.0233), "2.33");
}

}  // namespace
}  // namespace svlp
