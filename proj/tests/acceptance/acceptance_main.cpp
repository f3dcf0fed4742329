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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
// when any criterion fails. Every reference value is recomputed here from an
// independent oracle rather than read back from the library.

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "svlp/checkpoint.hpp"
#include "svlp/gradcheck.hpp"
#include "svlp/metrics.hpp"
#include "svlp/rng.hpp"
#include "svlp/sewc.hpp"
#include "svlp/synthdata.hpp"
#include "svlp/trainer.hpp"

namespace {

namespace fs = std::filesystem;
using namespace svlp;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string pct(double fraction) { return fmt("%.2f", fraction * 100); }

class Board {
 public:
  void record(int id, const std::string& title, bool pass, const std::string& detail) {
    std::printf("%s  [%2d] %s: %s\n", pass ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
    std::fflush(stdout);
    ++total_;
    passed_ += pass ? 1 : 0;
  }
  void note(const std::string& title, bool pass, const std::string& detail) {
    std::printf("%s  [ +] %s: %s\n", pass ? "PASS" : "FAIL", title.c_str(), detail.c_str());
    std::fflush(stdout);
  }
  int total() const { return total_; }
  int passed() const { return passed_; }

 private:
  int total_ = 0;
  int passed_ = 0;
};

void progress(const std::string& line) {
  std::cerr << "[acceptance] " << line << std::endl;
}

// ---------------------------------------------------------------- arithmetic

void delta_m_rows(Board& board) {
  // Reference rows, HTER as fractions: (incremental, joint).
  const double q1[] = {0.0043, 0.0233}, b1[] = {0.0043, 0.0};
  const double q2[] = {0.0607, 0.0}, b2[] = {0.0043, 0.0};
  const double d1 = delta_m(q1, b1) * 100, d2 = delta_m(q2, b2) * 100;
  // Hand expansion of the normalized mean gap.
  const double o1 = 100 * ((0.0043 - 0.0043) / (1 - 0.0043) + 0.0233 / 1.0) / 2;
  const double o2 = 100 * ((0.0607 - 0.0043) / (1 - 0.0043) + 0.0) / 2;
  const bool pass = std::abs(d1 - 1.17) <= 0.005 && std::abs(d2 - 2.83) <= 0.005 && std::abs(d1 - o1) < 1e-12 &&
                    std::abs(d2 - o2) < 1e-12;
  board.record(1, "delta_m arithmetic", pass,
               "row1 " + fmt("%.4f", d1) + "% (want 1.17 +- 0.005), row2 " + fmt("%.4f", d2) + "% (want 2.83 +- 0.005)");
}

void gradient_fidelity(Board& board) {
  const TrainConfig cfg;  // toy profile model in 64-bit
  MapModel<double> model(cfg.encoder, cfg.prompt_config());
  ParameterStore<double> store;
  CounterRng rng(2024);
  model.init_parameters(store, rng);
  model.bank().register_domain(store, 1, rng);
  model.bank().freeze_domain(store, 1);
  model.bank().register_domain(store, 2, rng);
  for (std::size_t i = 0; i < store.size(); ++i) store.set_value_at(i, store.value_at(i) + rng.normal(0, 0.02));

  // One consolidated domain. The Fisher scale keeps the penalty near the size
  // of L_MAP so neither term drowns the other in the differences.
  ConsolidationState<double> state(cfg.p);
  FisherSnapshot<double> snap{1, {}, store.gather_penalizable()};
  for (auto& v : snap.theta_star) v += rng.normal(0, 0.05);
  snap.fisher.resize(snap.theta_star.size());
  for (auto& f : snap.fisher) f = rng.uniform(0, 2e-3);
  state.add_snapshot(std::move(snap));

  const std::size_t side = cfg.encoder.image_side;
  Tensor<double> pixels({4, side * side});
  for (auto& v : pixels.storage()) v = rng.uniform();
  const int labels[4] = {0, 1, 1, 0};
  const SewcOptions opts = cfg.sewc_options();
  LossFn<double> loss = [&](Tape<double>& tape, const ParameterStore<double>& s) {
    return add(model.loss(tape, s, pixels, labels, 2), sewc_penalty(tape, s, state, opts));
  };

  std::vector<std::size_t> trainable;
  for (const auto& e : store.entries()) {
    if (e.frozen) continue;
    for (std::size_t i = 0; i < e.value.size(); ++i) trainable.push_back(e.offset + i);
  }
  std::vector<std::size_t> sample;
  for (std::size_t k = 0; k < 240; ++k) sample.push_back(trainable[rng.below(trainable.size())]);
  sample.push_back(store.global_index(kLogitScaleName, 0));
  for (std::size_t k = 0; k < kNumFamilies; ++k) sample.push_back(store.global_index(alpha_name(2), k));
  std::sort(sample.begin(), sample.end());
  sample.erase(std::unique(sample.begin(), sample.end()), sample.end());
  const auto rep = finite_diff_check<double>(loss, store, 1e-5, sample);
  board.record(2, "gradient fidelity", rep.checked >= 200 && rep.max_rel_error < 1e-4,
               "max rel err " + fmt("%.3e", rep.max_rel_error) + " over " + std::to_string(rep.checked) +
                   " coords of L_MAP + L_SEWC (tol 1e-4); worst index " + std::to_string(rep.worst_index) + " analytic " + fmt("%.3e", rep.worst_analytic) + " numeric " + fmt("%.3e", rep.worst_numeric));
}

ParameterStore<double> random_store(CounterRng& rng) {
  ParameterStore<double> store;
  const char* names[] = {"image.w", "prompt.visual.1", "text.w", "logit_scale", "image.b", "text.b"};
  for (const char* n : names) {
    Tensor<double> t({1 + rng.below(12)});
    for (auto& v : t.storage()) v = rng.normal();
    store.add(n, std::move(t));
  }
  return store;
}

std::vector<FisherSnapshot<double>> random_snapshots(const ParameterStore<double>& store, CounterRng& rng, int n) {
  std::vector<FisherSnapshot<double>> out;
  const std::size_t m = store.penalizable_size();
  for (int j = 1; j <= n; ++j) {
    FisherSnapshot<double> s{j, std::vector<double>(m), std::vector<double>(m)};
    for (std::size_t i = 0; i < m; ++i) {
      s.fisher[i] = rng.uniform() * rng.uniform();
      s.theta_star[i] = rng.normal();
    }
    out.push_back(std::move(s));
  }
  return out;
}

// Penalizable coordinates by name prefix, independent of the store's own
// bookkeeping of S.
std::vector<std::size_t> s_coordinates(const ParameterStore<double>& store) {
  std::vector<std::size_t> out;
  for (const auto& e : store.entries()) {
    if (e.name.rfind("image.", 0) != 0 && e.name.rfind("text.", 0) != 0) continue;
    for (std::size_t i = 0; i < e.value.size(); ++i) out.push_back(e.offset + i);
  }
  return out;
}

void sewc_equivalence(Board& board) {
  CounterRng rng(31);
  double worst = 0;
  bool zero_ok = true;
  for (int trial = 0; trial < 25; ++trial) {
    const auto store = random_store(rng);
    const auto snaps = random_snapshots(store, rng, 3);
    const auto s = s_coordinates(store);
    double dense = 0;
    for (const auto& snap : snaps) {
      for (std::size_t i = 0; i < s.size(); ++i) {
        const double d = store.value_at(s[i]) - snap.theta_star[i];
        dense += 0.5 * snap.fisher[i] * d * d;
      }
    }
    ConsolidationState<double> full(1.0);
    for (const auto& snap : snaps) full.add_snapshot(snap);
    Tape<double> tape;
    const double on_tape = sewc_penalty(tape, store, full).value()[0];
    worst = std::max({worst, std::abs(on_tape - dense), std::abs(sewc_penalty_value(store, full) - dense)});

    // Training the first domain: nothing is consolidated yet.
    ConsolidationState<double> none(1.0);
    Tape<double> t1;
    zero_ok = zero_ok && sewc_penalty(t1, store, none).value()[0] == 0.0 && sewc_penalty_value(store, none) == 0.0;
  }
  board.record(3, "SEWC/EWC equivalence", worst < 1e-12 && zero_ok,
               "p = 1 max |sewc - dense| " + fmt("%.2e", worst) + " over 25 states x 3 snapshots (tol 1e-12); t = 1 penalty " +
                   (zero_ok ? "exactly 0" : "NOT 0"));
}

void fisher_oracle(Board& board) {
  // Softmax regression with 3 inputs and 2 classes: 8 parameters.
  CounterRng rng(41);
  ParameterStore<double> store;
  Tensor<double> w({3, 2}), b({2});
  for (auto& v : w.storage()) v = rng.normal(0, 0.7);
  for (auto& v : b.storage()) v = rng.normal(0, 0.7);
  store.add("image.w", w);
  store.add("image.b", b);
  const int n = 5;
  std::vector<std::array<double, 3>> xs(n);
  std::vector<int> ys(n);
  for (int i = 0; i < n; ++i) {
    for (auto& v : xs[i]) v = rng.normal();
    ys[i] = static_cast<int>(rng.below(2));
  }
  const auto snap = estimate_fisher<double>(store, 1, n, [&](Tape<double>& tape, std::size_t i) {
    Tensor<double> x({1, 3});
    std::copy(xs[i].begin(), xs[i].end(), x.storage().begin());
    const int y[1] = {ys[i]};
    return cross_entropy(add(matmul(tape.constant(x), tape.param(store, "image.w")), tape.param(store, "image.b")),
                         std::span<const int>(y));
  });

  // Closed form: dL/dz = softmax(z) - onehot(y); dW = x^T dz, db = dz.
  std::vector<double> oracle(8, 0.0);
  for (int i = 0; i < n; ++i) {
    double z[2];
    for (int c = 0; c < 2; ++c) {
      z[c] = b.storage()[c];
      for (int r = 0; r < 3; ++r) z[c] += xs[i][r] * w.storage()[r * 2 + c];
    }
    const double mx = std::max(z[0], z[1]);
    const double e0 = std::exp(z[0] - mx), e1 = std::exp(z[1] - mx);
    const double dz[2] = {e0 / (e0 + e1) - (ys[i] == 0), e1 / (e0 + e1) - (ys[i] == 1)};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 2; ++c) oracle[r * 2 + c] += xs[i][r] * dz[c] * xs[i][r] * dz[c] / n;
    }
    for (int c = 0; c < 2; ++c) oracle[6 + c] += dz[c] * dz[c] / n;
  }
  double worst = 0;
  for (std::size_t k = 0; k < 8; ++k) worst = std::max(worst, std::abs(snap.fisher[k] - oracle[k]));
  board.record(4, "Fisher oracle", snap.fisher.size() == 8 && worst < 1e-10,
               "max |F - closed form| " + fmt("%.2e", worst) + " on 8 params x 5 samples (tol 1e-10)");
}

void quantile_union(Board& board) {
  CounterRng rng(51);
  bool size_ok = true, union_ok = true, mono_ok = true;
  std::string first_bad;
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t m = 5 + rng.below(300);
    std::vector<double> values(m);
    std::iota(values.begin(), values.end(), 0.0);
    for (std::size_t i = m - 1; i > 0; --i) std::swap(values[i], values[rng.below(i + 1)]);
    for (auto& v : values) v = v * 0.37 + 1e-3;
    for (int k = 1; k <= 10; ++k) {
      const double p = k / 10.0;
      // M - ceil((1 - p) M) + 1 in integer arithmetic; p = 1 means J = S.
      const std::size_t ceil_q = ((10 - k) * m + 9) / 10;
      const std::size_t want = std::min(m, m - ceil_q + 1);
      const auto sel = quantile_threshold<double>(values, p);
      if (sel.indices.size() != want) {
        size_ok = false;
        if (first_bad.empty()) first_bad = "M=" + std::to_string(m) + " p=" + fmt("%.1f", p);
      }
    }
  }
  for (int trial = 0; trial < 10; ++trial) {
    const auto store = random_store(rng);
    const auto snaps = random_snapshots(store, rng, 6);
    double prev = -1;
    for (int k = 0; k <= 20; ++k) {
      ConsolidationState<double> st(k / 20.0);
      for (const auto& s : snaps) st.add_snapshot(s);
      const auto& hist = st.cumulative_history();
      for (std::size_t t = 1; t < hist.size(); ++t) {
        union_ok = union_ok && std::includes(hist[t].begin(), hist[t].end(), hist[t - 1].begin(), hist[t - 1].end());
      }
      const double pen = sewc_penalty_value(store, st);
      mono_ok = mono_ok && pen >= prev;
      prev = pen;
    }
  }
  board.record(5, "quantile and union properties", size_ok && union_ok && mono_ok,
               std::string("|J| formula ") + (size_ok ? "holds" : "fails at " + first_bad) +
                   " (30 sets x 10 p); I^(t) monotone " + (union_ok ? "yes" : "NO") + "; penalty nondecreasing in p " +
                   (mono_ok ? "yes" : "NO"));
}

void metric_oracles(Board& board) {
  CounterRng rng(61);
  bool hter_ok = true, eer_ok = true, auc_ok = true, inv_ok = true;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 4 + rng.below(40);
    ScoreSet s(n);
    const int grid = trial % 2 == 0 ? 6 : 0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i].score = grid ? static_cast<double>(rng.below(grid)) / grid : rng.uniform();
      s[i].label = i < 2 ? static_cast<int>(i) : static_cast<int>(rng.below(2));
    }
    std::vector<double> v;
    for (const auto& r : s) v.push_back(r.score);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    std::vector<double> cands{-std::numeric_limits<double>::infinity()};
    for (std::size_t i = 0; i + 1 < v.size(); ++i) cands.push_back(v[i] + (v[i + 1] - v[i]) / 2);
    cands.push_back(std::numeric_limits<double>::infinity());
    double best_gap = 2, best = 0;
    for (double thr : cands) {
      double fa = 0, fr = 0, ns = 0, nr = 0;
      for (const auto& r : s) {
        if (r.label == 0) ns += 1, fa += r.score >= thr ? 1 : 0;
        if (r.label == 1) nr += 1, fr += r.score < thr ? 1 : 0;
      }
      hter_ok = hter_ok && hter(s, thr) == (fa / ns + fr / nr) / 2;
      const double gap = std::abs(fa / ns - fr / nr);
      if (gap < best_gap) best_gap = gap, best = thr;
    }
    eer_ok = eer_ok && eer_threshold(s) == best;
    double wins = 0, pairs = 0;
    for (const auto& a : s) {
      for (const auto& c : s) {
        if (a.label != 1 || c.label != 0) continue;
        pairs += 1;
        wins += a.score > c.score ? 1.0 : a.score == c.score ? 0.5 : 0.0;
      }
    }
    const double base = auc(s);
    auc_ok = auc_ok && base == wins / pairs;
    auto t = s;
    for (auto& r : t) r.score = std::exp(4 * r.score) - 7;
    inv_ok = inv_ok && auc(t) == base;
  }
  board.record(10, "metric oracles", hter_ok && eer_ok && auc_ok && inv_ok,
               std::string("100 sets: hter ") + (hter_ok ? "exact" : "MISMATCH") + ", eer " + (eer_ok ? "exact" : "MISMATCH") +
                   ", auc " + (auc_ok ? "exact" : "MISMATCH") + ", monotone invariance " + (inv_ok ? "holds" : "FAILS"));
}

// ------------------------------------------------------------ training runs

fs::path make_data(const fs::path& work, const std::string& preset) {
  const fs::path dir = work / ("data-" + preset);
  fs::remove_all(dir);
  write_domain_dir(dir, find_preset(preset).domains);
  return dir;
}

SequenceResult run(const std::string& label, const TrainConfig& cfg, const fs::path& data, const fs::path& out,
                   const std::optional<EvalReport>& joint) {
  progress("training " + label + " (" + cfg.tag() + ")");
  const auto t0 = std::chrono::steady_clock::now();
  SequenceOptions opts;
  opts.data_root = data;
  opts.out_dir = out;
  opts.joint_reference = joint;
  if (!out.empty()) fs::remove_all(out);
  auto res = train_sequence(cfg, opts);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ostringstream txt;
  write_report_text(txt, res.steps.back());
  progress(label + " done in " + fmt("%.0f", secs) + " s\n" + txt.str());
  return res;
}

double mean_hter(const EvalReport& r) {
  double s = 0;
  for (const auto& d : r.domains) s += d.hter;
  return s / static_cast<double>(r.domains.size());
}

std::string read_bytes(const fs::path& p) {
  const auto b = read_file_bytes(p);
  return std::string(b.begin(), b.end());
}

// Softmax regression on standardized train embeddings, scored on the test
// embeddings. Standardizing matters: the normalized embeddings spread over a
// few hundredths, which plain gradient descent would badly underfit.
double linear_probe(const std::vector<Tensor<float>>& train, const std::vector<Tensor<float>>& test) {
  const std::size_t k = train.size(), d = train[0].cols();
  std::size_t n = 0;
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (const auto& t : train) {
    for (std::size_t r = 0; r < t.rows(); ++r, ++n) {
      for (std::size_t j = 0; j < d; ++j) mu[j] += t.at(r, j);
    }
  }
  for (auto& m : mu) m /= static_cast<double>(n);
  for (const auto& t : train) {
    for (std::size_t r = 0; r < t.rows(); ++r) {
      for (std::size_t j = 0; j < d; ++j) sd[j] += (t.at(r, j) - mu[j]) * (t.at(r, j) - mu[j]) / static_cast<double>(n);
    }
  }
  for (auto& s : sd) s = std::sqrt(s) + 1e-12;

  std::vector<double> w((d + 1) * k, 0.0), g(w.size()), z(k), x(d);
  auto logits = [&](const Tensor<float>& t, std::size_t r) {
    for (std::size_t j = 0; j < d; ++j) x[j] = (t.at(r, j) - mu[j]) / sd[j];
    for (std::size_t c = 0; c < k; ++c) {
      z[c] = w[d * k + c];
      for (std::size_t j = 0; j < d; ++j) z[c] += x[j] * w[j * k + c];
    }
  };
  for (int epoch = 0; epoch < 2000; ++epoch) {
    std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t r = 0; r < train[c].rows(); ++r) {
        logits(train[c], r);
        const double mx = *std::max_element(z.begin(), z.end());
        double sum = 0;
        for (auto& v : z) sum += (v = std::exp(v - mx));
        for (std::size_t q = 0; q < k; ++q) {
          const double dz = (z[q] / sum - (q == c)) / static_cast<double>(n);
          for (std::size_t j = 0; j < d; ++j) g[j * k + q] += x[j] * dz;
          g[d * k + q] += dz;
        }
      }
    }
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= 0.5 * g[i];
  }
  std::size_t right = 0, total = 0;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t r = 0; r < test[c].rows(); ++r, ++total) {
      logits(test[c], r);
      right += static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin()) == c ? 1 : 0;
    }
  }
  return static_cast<double>(right) / static_cast<double>(total);
}

void synth4_suite(Board& board, const fs::path& work) {
  const fs::path data = make_data(work, "protocol-synth-4");
  const auto names = read_manifest(data);
  const TrainConfig base = TrainConfig::for_profile("toy");

  TrainConfig jt_cfg = base;
  jt_cfg.mode = TrainMode::kJt;
  const auto jt = run("jt", jt_cfg, data, work / "s4-jt", std::nullopt);
  const EvalReport joint = jt.steps.back();

  const auto t0 = std::chrono::steady_clock::now();
  const auto svlp = run("svlp", base, data, work / "s4-svlp", joint);
  const double svlp_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  TrainConfig ft_cfg = base;
  ft_cfg.mode = TrainMode::kFt;
  const auto ft = run("ft", ft_cfg, data, work / "s4-ft", joint);

  // 6. Prompt bytes of every finished domain, checked in the step checkpoints.
  {
    bool bytes_ok = true;
    std::size_t compared = 0;
    for (std::size_t t = 2; t <= names.size(); ++t) {
      const auto now = Checkpoint::load(work / "s4-svlp" / ("step" + std::to_string(t) + ".ckpt"));
      for (int j = 1; j < static_cast<int>(t); ++j) {
        const auto then = Checkpoint::load(work / "s4-svlp" / ("step" + std::to_string(j) + ".ckpt"));
        for (const auto& name : {visual_prompt_name(j), ds_prompt_name(j), alpha_name(j)}) {
          bytes_ok = bytes_ok && now.at(name).bytes == then.at(name).bytes;
          ++compared;
        }
      }
    }
    bool first_zero = true;
    for (const auto& l : svlp.losses) first_zero = first_zero && (l.domain != 1 || l.sewc_loss == 0.0);
    board.record(6, "freezing and rehearsal-free audits",
                 bytes_ok && svlp.frozen_prompts_stable && svlp.audit_violations == 0 && svlp.audit_reads > 0 && first_zero,
                 std::to_string(compared) + " frozen prompt tensors " + (bytes_ok ? "bitwise unchanged" : "CHANGED") +
                     "; " + std::to_string(svlp.audit_reads) + " tagged reads, " +
                     std::to_string(svlp.audit_violations) + " past-domain reads");
  }

  // 7. Forgetting direction.
  {
    const auto& s = svlp.steps.back();
    const auto& f = ft.steps.back();
    const bool pass = s.delta_m && f.delta_m && *s.delta_m < *f.delta_m && s.domains[0].hter < f.domains[0].hter;
    board.record(7, "directional forgetting", pass,
                 "delta_m% svlp " + pct(*s.delta_m) + " vs ft " + pct(*f.delta_m) + "; first-domain HTER% svlp " +
                     pct(s.domains[0].hter) + " vs ft " + pct(f.domains[0].hter) + "; svlp run " +
                     fmt("%.0f", svlp_secs) + " s, " + std::to_string(names.size()) + " checkpoints");
  }

  // 11. Determinism: a second identical run.
  {
    run("svlp (repeat)", base, data, work / "s4-svlp-repeat", joint);
    std::vector<std::string> files{"step" + std::to_string(names.size()) + ".ckpt", "final.report.csv", "losses.csv"};
    for (std::size_t t = 1; t <= names.size(); ++t) {
      files.push_back("step" + std::to_string(t) + ".report.csv");
      files.push_back("step" + std::to_string(t) + ".scores.csv");
    }
    std::string differ;
    for (const auto& f : files) {
      if (read_bytes(work / "s4-svlp" / f) != read_bytes(work / "s4-svlp-repeat" / f)) differ += " " + f;
    }
    board.record(11, "determinism", differ.empty(),
                 differ.empty() ? std::to_string(files.size()) + " checkpoint and CSV files bitwise identical"
                                : "differs:" + differ);
  }

  // 12. Routing against oracle routing on the final model.
  {
    const Trainer trainer(base);
    std::vector<DatasetPair> pairs;
    for (const auto& n : names) pairs.push_back(load_domain(data, n));
    std::vector<EvalTarget> targets;
    for (std::size_t i = 0; i < names.size(); ++i) targets.push_back({names[i], static_cast<int>(i + 1), &pairs[i].test});
    const auto oracle_scores = trainer.score(svlp.state, targets, RoutingMode::kOracle);
    const EvalReport oracle = make_report(base.tag(), oracle_scores, targets, base.threshold_policy());
    const EvalReport& routed = svlp.steps.back();
    bool route_ok = true;
    std::string accs;
    for (const auto& d : routed.domains) {
      const double a = d.routing_acc.value_or(0);
      route_ok = route_ok && a > 0.9;
      accs += (accs.empty() ? "" : "/") + pct(a);
    }
    const double gap = mean_hter(routed) - mean_hter(oracle);
    board.record(12, "routing sanity", route_ok && gap < 0.03,
                 "routing acc% " + accs + " (want > 90 each); mean HTER% routed " + pct(mean_hter(routed)) +
                     " vs oracle " + pct(mean_hter(oracle)) + " (gap " + pct(gap) + ", want < 3.00)");

    // Domain separability of the prompt-free embeddings that routing uses, for
    // the final model and for the untrained backbone.
    auto probe = [&](const ParameterStore<float>& store) {
      std::vector<Tensor<float>> tr, te;
      for (const auto& p : pairs) {
        tr.push_back(trainer.routing_embeddings(store, p.train));
        te.push_back(trainer.routing_embeddings(store, p.test));
      }
      return linear_probe(tr, te);
    };
    const double final_acc = probe(svlp.state.store);
    const double init_acc = probe(trainer.init_state().store);
    board.note("embedding linear probe", final_acc > 0.9,
               "domain accuracy% " + pct(final_acc) + " on final-model test embeddings (want > 90); untrained backbone " +
                   pct(init_acc));
  }
}

void synth8_suite(Board& board, const fs::path& work) {
  const fs::path data = make_data(work, "protocol-synth-8");
  const TrainConfig base = TrainConfig::for_profile("toy");
  TrainConfig jt_cfg = base;
  jt_cfg.mode = TrainMode::kJt;
  const EvalReport joint = run("jt", jt_cfg, data, work / "s8-jt", std::nullopt).steps.back();

  // 8. Selection-ratio sweep.
  std::map<double, EvalReport> sweep;
  for (double p : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    TrainConfig cfg = base;
    cfg.p = p;
    sweep[p] = run("svlp p=" + fmt("%.2f", p), cfg, data, work / ("s8-p" + fmt("%.2f", p)), joint).steps.back();
  }
  {
    bool mono = true;
    std::string last, first;
    double prev = -1;
    for (const auto& [p, r] : sweep) {
      const double h = r.domains.back().hter;
      mono = mono && h >= prev;
      prev = h;
      last += (last.empty() ? "" : "/") + pct(h);
      first += (first.empty() ? "" : "/") + pct(r.domains.front().hter);
    }
    const double f0 = sweep[0.0].domains.front().hter, f5 = sweep[0.5].domains.front().hter,
                 f1 = sweep[1.0].domains.front().hter;
    board.record(8, "p-sweep shape", mono && f5 <= f0 && f5 <= f1,
                 "p = 0/.25/.5/.75/1: last-domain HTER% " + last + " (want nondecreasing), first-domain HTER% " + first +
                     " (want p=.5 <= both ends)");
  }

  // 9. MAP component ablations against the unablated p = 0.5 run.
  {
    const double ref = *sweep[0.5].delta_m;
    std::vector<std::pair<double, std::string>> rise;
    for (const char* flag : {"no-da", "no-ds", "no-mix", "no-fixed", "no-visual"}) {
      TrainConfig cfg = base;
      cfg.ablation.set(flag);
      const auto r = run(std::string("svlp ") + flag, cfg, data, work / (std::string("s8-") + flag), joint).steps.back();
      rise.emplace_back(*r.delta_m - ref, flag);
    }
    std::sort(rise.begin(), rise.end(), std::greater<>());
    std::string order;
    for (const auto& [d, f] : rise) order += (order.empty() ? "" : ", ") + f + " " + fmt("%+.2f", d * 100);
    const bool top = rise[0].second == "no-da";
    const bool top2 = top || rise[1].second == "no-da";
    board.record(9, "MAP ablation direction", top2,
                 std::string(top ? "no-da is the largest" : top2 ? "no-da is second (within tolerance)" : "no-da not in top two") +
                     "; delta_m% rise vs unablated " + pct(ref) + ": " + order);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria for the svlp engine"};
  std::string suite = "default";
  fs::path work = fs::temp_directory_path() / "svlp-acceptance";
  app.add_option("--suite", suite, "fast (no training), default (adds protocol-synth-4 runs), slow (protocol-synth-8 sweeps) or all")
      ->check(CLI::IsMember({"fast", "default", "slow", "all"}));
  app.add_option("--work", work, "Scratch directory for generated data and runs");
  CLI11_PARSE(app, argc, argv);

  Board board;
  try {
    fs::create_directories(work);
    const bool fast = suite != "slow";
    if (fast) {
      delta_m_rows(board);
      gradient_fidelity(board);
      sewc_equivalence(board);
      fisher_oracle(board);
      quantile_union(board);
      metric_oracles(board);
    }
    if (suite == "default" || suite == "all") synth4_suite(board, work);
    if (suite == "slow" || suite == "all") synth8_suite(board, work);
  } catch (const std::exception& e) {
    std::printf("FAIL  aborted: %s\n", e.what());
    return 1;
  }
  std::printf("acceptance (%s): %d/%d criteria passed\n", suite.c_str(), board.passed(), board.total());
  return board.passed() == board.total() ? 0 : 1;
}
