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
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace svlp {

// One evaluated sample. score is the probability of "real"; label follows the
// class convention (0 spoof, 1 real); routed is -1 when no routing happened.
struct ScoreRecord {
  double score = 0;
  int label = 0;
  int domain = 0;
  int routed = -1;
};

using ScoreSet = std::vector<ScoreRecord>;

struct ErrorRates {
  double far = 0;  // spoofs accepted
  double frr = 0;  // reals rejected
  double hter() const { return 0.5 * (far + frr); }
};

// Accept as real iff score >= threshold. Needs at least one real and one spoof.
ErrorRates error_rates(std::span<const ScoreRecord> scores, double threshold);
double hter(std::span<const ScoreRecord> scores, double threshold);

// Candidates are -inf, +inf and the midpoints between consecutive distinct
// scores; returns the one minimizing |FAR - FRR|, the smallest on ties.
double eer_threshold(std::span<const ScoreRecord> scores);

// P(real score > spoof score), ties counted one half.
double auc(std::span<const ScoreRecord> scores);

// Mean of (q_t - b_t) / (1 - b_t) as a fraction (multiply by 100 for percent).
double delta_m(std::span<const double> hter_incremental, std::span<const double> hter_joint);

// Per true domain, fraction routed to that domain.
std::map<int, double> routing_accuracy(std::span<const ScoreRecord> scores);

enum class ThresholdMode { kEer, kFixed };

struct ThresholdPolicy {
  ThresholdMode mode = ThresholdMode::kEer;
  double value = 0.5;
  // "eer" or "fixed:<v>"
  static ThresholdPolicy parse(const std::string& spec);
  std::string str() const;
};

struct DomainResult {
  std::string name;
  int domain = 0;
  std::size_t n_real = 0;
  std::size_t n_spoof = 0;
  double threshold = 0;
  double hter = 0;
  double auc = 0;
  std::optional<double> routing_acc;
  bool unseen = false;
};

struct EvalReport {
  std::string tag;  // run mode plus any ablation flags
  std::vector<DomainResult> domains;
  std::optional<double> delta_m;  // fraction

  const DomainResult* find(const std::string& name) const;
};

// Scores one domain's records under the threshold policy.
DomainResult evaluate_domain(const std::string& name, int domain, std::span<const ScoreRecord> scores,
                             const ThresholdPolicy& policy);

// "domain,n_real,n_spoof,threshold,hter,auc,routing_acc" then one row per
// domain; rates as fractions with 17 significant digits, empty routing_acc
// when no routing took place.
void write_report_csv(std::ostream& os, const EvalReport& report);
EvalReport read_report_csv(std::istream& is);
// Human-readable table, percentages with two decimals.
void write_report_text(std::ostream& os, const EvalReport& report);

// "domain,domain_id,index,label,score,routed" per sample.
void write_score_log(std::ostream& os, const std::vector<std::pair<std::string, ScoreSet>>& per_domain);
std::vector<std::pair<std::string, ScoreSet>> read_score_log(std::istream& is);

std::string format_percent(double fraction);

}  // namespace svlp
