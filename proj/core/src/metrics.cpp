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

#include "svlp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "svlp/error.hpp"

namespace svlp {

namespace {

struct ClassCounts {
  std::size_t real = 0;
  std::size_t spoof = 0;
};

ClassCounts count_classes(std::span<const ScoreRecord> scores) {
  ClassCounts c;
  for (const auto& s : scores) {
    if (!std::isfinite(s.score)) throw NumericError("score is not finite");
    if (s.label == 1) {
      ++c.real;
    } else if (s.label == 0) {
      ++c.spoof;
    } else {
      throw UsageError("label out of range: " + std::to_string(s.label));
    }
  }
  if (c.real == 0 || c.spoof == 0) throw UsageError("score set needs at least one real and one spoof sample");
  return c;
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw FormatError("bad number '" + s + "'");
  }
  if (pos != s.size()) throw FormatError("bad number '" + s + "'");
  return v;
}

std::size_t parse_count(const std::string& s) {
  const double v = parse_double(s);
  if (v < 0 || v != std::floor(v)) throw FormatError("bad count '" + s + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace

ErrorRates error_rates(std::span<const ScoreRecord> scores, double threshold) {
  const ClassCounts c = count_classes(scores);
  std::size_t false_accept = 0, false_reject = 0;
  for (const auto& s : scores) {
    const bool accept = s.score >= threshold;
    if (s.label == 0 && accept) ++false_accept;
    if (s.label == 1 && !accept) ++false_reject;
  }
  return {static_cast<double>(false_accept) / static_cast<double>(c.spoof),
          static_cast<double>(false_reject) / static_cast<double>(c.real)};
}

double hter(std::span<const ScoreRecord> scores, double threshold) { return error_rates(scores, threshold).hter(); }

double eer_threshold(std::span<const ScoreRecord> scores) {
  const ClassCounts c = count_classes(scores);
  std::vector<std::pair<double, int>> sorted;
  sorted.reserve(scores.size());
  for (const auto& s : scores) sorted.emplace_back(s.score, s.label);
  std::sort(sorted.begin(), sorted.end());

  // Sweep thresholds upward. Below every score: all accepted.
  std::size_t accepted_spoof = c.spoof, rejected_real = 0;
  auto gap = [&] {
    return std::abs(static_cast<double>(accepted_spoof) / static_cast<double>(c.spoof) -
                    static_cast<double>(rejected_real) / static_cast<double>(c.real));
  };
  double best_thr = -std::numeric_limits<double>::infinity();
  double best_gap = gap();
  std::size_t i = 0;
  while (i < sorted.size()) {
    const double v = sorted[i].first;
    while (i < sorted.size() && sorted[i].first == v) {
      if (sorted[i].second == 0) {
        --accepted_spoof;
      } else {
        ++rejected_real;
      }
      ++i;
    }
    const double thr = i < sorted.size() ? v + (sorted[i].first - v) / 2 : std::numeric_limits<double>::infinity();
    const double g = gap();
    if (g < best_gap) best_gap = g, best_thr = thr;
  }
  return best_thr;
}

double auc(std::span<const ScoreRecord> scores) {
  const ClassCounts c = count_classes(scores);
  std::vector<std::pair<double, int>> sorted;
  sorted.reserve(scores.size());
  for (const auto& s : scores) sorted.emplace_back(s.score, s.label);
  std::sort(sorted.begin(), sorted.end());
  // Rank sum of the reals with tied groups sharing their mean rank (1-based).
  double rank_sum = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    std::size_t reals = 0;
    while (j < sorted.size() && sorted[j].first == sorted[i].first) reals += sorted[j++].second == 1;
    const double mean_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2;
    rank_sum += mean_rank * static_cast<double>(reals);
    i = j;
  }
  const double nr = static_cast<double>(c.real), ns = static_cast<double>(c.spoof);
  return (rank_sum - nr * (nr + 1) / 2) / (nr * ns);
}

double delta_m(std::span<const double> hter_incremental, std::span<const double> hter_joint) {
  if (hter_incremental.size() != hter_joint.size()) throw UsageError("delta_m: length mismatch");
  if (hter_joint.empty()) throw UsageError("delta_m: no tasks");
  double s = 0;
  for (std::size_t t = 0; t < hter_joint.size(); ++t) {
    if (!(hter_joint[t] < 1)) throw UsageError("delta_m: reference HTER must be below 1");
    s += (hter_incremental[t] - hter_joint[t]) / (1 - hter_joint[t]);
  }
  return s / static_cast<double>(hter_joint.size());
}

std::map<int, double> routing_accuracy(std::span<const ScoreRecord> scores) {
  std::map<int, std::pair<std::size_t, std::size_t>> tally;
  for (const auto& s : scores) {
    if (s.routed < 0) throw UsageError("routing_accuracy: sample without a routed domain");
    auto& [hit, total] = tally[s.domain];
    hit += s.routed == s.domain;
    ++total;
  }
  std::map<int, double> out;
  for (const auto& [d, ht] : tally) out[d] = static_cast<double>(ht.first) / static_cast<double>(ht.second);
  return out;
}

ThresholdPolicy ThresholdPolicy::parse(const std::string& spec) {
  if (spec == "eer") return {};
  const std::string prefix = "fixed:";
  if (spec.rfind(prefix, 0) == 0) {
    ThresholdPolicy p;
    p.mode = ThresholdMode::kFixed;
    try {
      p.value = parse_double(spec.substr(prefix.size()));
    } catch (const FormatError&) {
      throw UsageError("bad threshold '" + spec + "'");
    }
    return p;
  }
  throw UsageError("threshold must be 'eer' or 'fixed:<v>', got '" + spec + "'");
}

std::string ThresholdPolicy::str() const { return mode == ThresholdMode::kEer ? "eer" : "fixed:" + fmt17(value); }

const DomainResult* EvalReport::find(const std::string& name) const {
  for (const auto& d : domains) {
    if (d.name == name) return &d;
  }
  return nullptr;
}

DomainResult evaluate_domain(const std::string& name, int domain, std::span<const ScoreRecord> scores,
                             const ThresholdPolicy& policy) {
  const ClassCounts c = count_classes(scores);
  DomainResult r;
  r.name = name;
  r.domain = domain;
  r.n_real = c.real;
  r.n_spoof = c.spoof;
  r.threshold = policy.mode == ThresholdMode::kEer ? eer_threshold(scores) : policy.value;
  r.hter = hter(scores, r.threshold);
  r.auc = auc(scores);
  bool routed = !scores.empty();
  std::size_t hits = 0;
  for (const auto& s : scores) {
    routed = routed && s.routed >= 0;
    hits += s.routed == domain;
  }
  if (routed) r.routing_acc = static_cast<double>(hits) / static_cast<double>(scores.size());
  return r;
}

void write_report_csv(std::ostream& os, const EvalReport& report) {
  os << "domain,n_real,n_spoof,threshold,hter,auc,routing_acc\n";
  for (const auto& d : report.domains) {
    os << d.name << ',' << d.n_real << ',' << d.n_spoof << ',' << fmt17(d.threshold) << ',' << fmt17(d.hter) << ','
       << fmt17(d.auc) << ',' << (d.routing_acc ? fmt17(*d.routing_acc) : "") << '\n';
  }
}

EvalReport read_report_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || split_csv(line) != split_csv("domain,n_real,n_spoof,threshold,hter,auc,routing_acc")) {
    throw FormatError("report: missing or wrong header");
  }
  EvalReport r;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto f = split_csv(line);
    if (f.size() != 7) throw FormatError("report: expected 7 fields in '" + line + "'");
    DomainResult d;
    d.name = f[0];
    d.domain = static_cast<int>(r.domains.size());
    d.n_real = parse_count(f[1]);
    d.n_spoof = parse_count(f[2]);
    d.threshold = parse_double(f[3]);
    d.hter = parse_double(f[4]);
    d.auc = parse_double(f[5]);
    if (!f[6].empty()) d.routing_acc = parse_double(f[6]);
    r.domains.push_back(std::move(d));
  }
  return r;
}

std::string format_percent(double fraction) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", fraction * 100);
  return buf;
}

void write_report_text(std::ostream& os, const EvalReport& report) {
  if (!report.tag.empty()) os << "run: " << report.tag << '\n';
  os << std::left << std::setw(16) << "domain" << std::right << std::setw(8) << "real" << std::setw(8) << "spoof"
     << std::setw(12) << "threshold" << std::setw(9) << "HTER%" << std::setw(9) << "AUC%" << std::setw(11)
     << "route%" << '\n';
  for (const auto& d : report.domains) {
    char thr[32];
    std::snprintf(thr, sizeof thr, "%.4f", d.threshold);
    std::string name = d.name + (d.unseen ? " (unseen)" : "");
    os << std::left << std::setw(16) << name << std::right << std::setw(8) << d.n_real << std::setw(8) << d.n_spoof
       << std::setw(12) << thr << std::setw(9) << format_percent(d.hter) << std::setw(9) << format_percent(d.auc)
       << std::setw(11) << (d.routing_acc ? format_percent(*d.routing_acc) : "-") << '\n';
  }
  if (report.delta_m) os << "delta_m%: " << format_percent(*report.delta_m) << '\n';
}

void write_score_log(std::ostream& os, const std::vector<std::pair<std::string, ScoreSet>>& per_domain) {
  os << "domain,domain_id,index,label,score,routed\n";
  for (const auto& [name, set] : per_domain) {
    for (std::size_t i = 0; i < set.size(); ++i) {
      os << name << ',' << set[i].domain << ',' << i << ',' << set[i].label << ',' << fmt17(set[i].score) << ',' << set[i].routed << '\n';
    }
  }
}

std::vector<std::pair<std::string, ScoreSet>> read_score_log(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "domain,domain_id,index,label,score,routed") {
    throw FormatError("score log: missing or wrong header");
  }
  std::vector<std::pair<std::string, ScoreSet>> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto f = split_csv(line);
    if (f.size() != 6) throw FormatError("score log: expected 6 fields in '" + line + "'");
    if (out.empty() || out.back().first != f[0]) out.emplace_back(f[0], ScoreSet{});
    ScoreRecord r;
    r.domain = static_cast<int>(parse_double(f[1]));
    r.label = static_cast<int>(parse_double(f[3]));
    r.score = parse_double(f[4]);
    r.routed = static_cast<int>(parse_double(f[5]));
    out.back().second.push_back(r);
  }
  return out;
}

}  // namespace svlp
