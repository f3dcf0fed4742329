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

#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "svlp/checkpoint.hpp"
#include "svlp/config.hpp"
#include "svlp/error.hpp"
#include "svlp/synthdata.hpp"
#include "svlp/trainer.hpp"
#include "svlp/verify.hpp"

namespace svlp::cli {

namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

// Refuses to reuse a non-empty directory unless forced.
void prepare_out_dir(const fs::path& dir, bool force) {
  std::error_code ec;
  if (fs::exists(dir, ec) && !fs::is_empty(dir, ec) && !force) {
    throw IoError("output directory " + dir.string() + " is not empty (use --force)");
  }
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

EvalReport read_joint_reference(const fs::path& run) {
  std::istringstream in(read_text(run / "final.report.csv"));
  return read_report_csv(in);
}

}  // namespace

int gen_data(const GenDataArgs& args, std::ostream& out) {
  std::vector<DomainSpec> specs;
  if (!args.preset.empty() == !args.spec.empty()) throw UsageError("give exactly one of --preset or --spec");
  if (!args.preset.empty()) {
    specs = find_preset(args.preset).domains;
  } else {
    specs = parse_domain_specs(IniDocument::parse(read_text(args.spec)));
  }
  prepare_out_dir(args.out, args.force);
  write_domain_dir(args.out, specs);
  for (const auto& s : specs) out << s.name << ": " << s.n_train << " train, " << s.n_test << " test\n";
  out << "manifest: " << (args.out / "manifest.txt").string() << '\n';
  return kOk;
}

int train(const TrainArgs& args, std::ostream& out) {
  IniDocument doc;
  if (!args.config.empty()) doc = IniDocument::parse(read_text(args.config));
  for (const auto& o : args.overrides) {
    const auto dot = o.find('.');
    const auto eq = o.find('=');
    if (dot == std::string::npos || eq == std::string::npos || dot > eq) {
      throw UsageError("--set expects section.key=value, got '" + o + "'");
    }
    IniSection& sec = doc.section(o.substr(0, dot));
    const std::string key = o.substr(dot + 1, eq - dot - 1);
    auto it = std::find_if(sec.values.begin(), sec.values.end(), [&](const auto& kv) { return kv.first == key; });
    if (it != sec.values.end()) {
      it->second = o.substr(eq + 1);
    } else {
      sec.values.emplace_back(key, o.substr(eq + 1));
    }
  }
  TrainConfig cfg = parse_config(doc);
  if (args.mode) cfg.mode = parse_mode(*args.mode);
  for (const auto& a : args.ablate) cfg.ablation.set(a);
  cfg.validate();

  SequenceOptions opts;
  opts.data_root = args.data;
  opts.out_dir = args.out;
  if (!args.jt_ref.empty()) opts.joint_reference = read_joint_reference(args.jt_ref);
  if (!args.quiet) opts.log = [&](const std::string& line) { out << line << std::flush; };
  prepare_out_dir(args.out, args.force);

  const SequenceResult result = train_sequence(cfg, opts);
  const EvalReport& last = result.steps.back();
  out << "final (" << last.tag << "):\n";
  write_report_text(out, last);
  out << "run directory: " << args.out.string() << '\n';
  return kOk;
}

int eval(const EvalArgs& args, std::ostream& out) {
  TrainConfig cfg;
  const RunState state = Trainer::from_checkpoint(Checkpoint::load(args.ckpt), &cfg);
  if (!args.threshold.empty()) cfg.threshold = args.threshold;
  const ThresholdPolicy policy = cfg.threshold_policy();
  const Trainer trainer(cfg);

  std::vector<std::string> names = args.domains.empty() ? read_manifest(args.data) : args.domains;
  std::vector<DatasetPair> data;
  for (const auto& n : names) data.push_back(load_domain(args.data, n));
  std::vector<EvalTarget> targets;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto it = std::find(state.domains.begin(), state.domains.end(), names[i]);
    const int id = it == state.domains.end() ? 0 : static_cast<int>(it - state.domains.begin()) + 1;
    targets.push_back({names[i], id, &data[i].test});
  }

  RoutingMode routing = trainer.default_routing();
  if (args.routing == "oracle") {
    routing = RoutingMode::kOracle;
  } else if (args.routing == "prototypes") {
    routing = RoutingMode::kPrototypes;
  } else if (args.routing != "auto") {
    throw UsageError("--routing must be auto, prototypes or oracle");
  }
  if (routing == RoutingMode::kPrototypes && state.prototypes.empty()) {
    throw UsageError("checkpoint holds no prototypes; its mode evaluates with shared prompts");
  }

  // Targets are independent; each worker scores a strided subset.
  std::vector<std::pair<std::string, ScoreSet>> scores(targets.size());
  const std::size_t jobs = std::max<std::size_t>(1, std::min(args.jobs, targets.size()));
  std::vector<std::exception_ptr> errors(jobs);
  auto work = [&](std::size_t w) {
    try {
      for (std::size_t i = w; i < targets.size(); i += jobs) {
        scores[i] = trainer.score(state, std::span<const EvalTarget>(&targets[i], 1), routing).front();
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < jobs; ++w) threads.emplace_back(work, w);
  work(0);
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  EvalReport report = make_report(cfg.tag(), scores, targets, policy);
  if (!args.jt_ref.empty()) attach_delta_m(report, read_joint_reference(args.jt_ref));

  const fs::path dir = args.out.empty() ? args.ckpt.parent_path() / ("eval-" + args.ckpt.stem().string()) : args.out;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::ostringstream csv, txt, log;
  write_report_csv(csv, report);
  write_report_text(txt, report);
  write_score_log(log, scores);
  write_text(dir / "eval.report.csv", csv.str());
  write_text(dir / "eval.report.txt", txt.str());
  write_text(dir / "eval.scores.csv", log.str());
  out << txt.str() << "report: " << (dir / "eval.report.csv").string() << '\n';
  return kOk;
}

int verify(const std::string& suite, std::ostream& out) {
  const auto results = run_verify_suite(suite);
  bool ok = true;
  for (const auto& r : results) {
    char line[256];
    std::snprintf(line, sizeof line, "%s  %-64s %.3e (tol %.1e)\n", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                  r.value, r.tolerance);
    out << line;
    ok = ok && r.passed;
  }
  return ok ? kOk : kVerifyFailed;
}

}  // namespace svlp::cli
