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

// svlp: data generation, training, evaluation and self-verification.

#include <CLI11.hpp>
#include <iostream>

#include "commands.hpp"
#include "svlp/error.hpp"
#include "svlp/synthdata.hpp"

namespace {

constexpr const char* kConfigHelp = R"(Config file (INI). Defaults shown; every key is optional.
  [model]   width=64 embed_dim=64 depth=2 heads=4 patch=8 image_side=32 channels=1
            vocab=10 max_seq=40 visual_len=16 n_ctx=16 warm_start_prompts=true
  [train]   profile=toy (toy: lr 1e-4; paper: lr 1e-5) mode=svlp lr=0.0001
            weight_decay=1e-05 batch=8 iterations=500 warmup=0 seed=1 eval_batch=50
            no_da no_ds no_mix no_fixed no_visual = false
  [sewc]    p=0.5 lambda=1 no_sewc=false fisher_samples=256 sum_selected_only=false
  [routing] k=5 max_iterations=100 tolerance=1e-06
  [data]    threshold=eer (or fixed:<v>))";

}  // namespace

int main(int argc, char** argv) {
  using namespace svlp;
  CLI::App app{"Rehearsal-free domain-incremental face anti-spoofing engine"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "svlp 0.1.0");

  cli::GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic multi-domain dataset directory");
  gen_cmd->add_option("--preset", gen.preset, "Preset name: " + preset_names());
  gen_cmd->add_option("--spec", gen.spec, "INI file with [domain.<name>] sections");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_flag("--force", gen.force, "Write into a non-empty directory");

  cli::TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train over the manifest's domain sequence");
  train_cmd->footer(kConfigHelp);
  train_cmd->add_option("--config", tr.config, "Config file");
  train_cmd->add_option("--data", tr.data, "Dataset directory with manifest.txt")->required();
  train_cmd->add_option("--out", tr.out, "Run directory")->required();
  train_cmd->add_option("--mode", tr.mode, "svlp, ft or jt (overrides the config)");
  train_cmd->add_option("--ablate", tr.ablate, "no-da, no-ds, no-mix, no-fixed, no-visual, no-sewc (repeatable)");
  train_cmd->add_option("--set", tr.overrides, "Config override section.key=value (repeatable)");
  train_cmd->add_option("--jt-ref", tr.jt_ref, "Joint-training run directory; adds delta_m to reports");
  train_cmd->add_flag("--force", tr.force, "Reuse a non-empty run directory");
  train_cmd->add_flag("--quiet", tr.quiet, "Only print the final summary");

  cli::EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--data", ev.data, "Dataset directory")->required();
  eval_cmd->add_option("--domains", ev.domains, "Domain subset (default: the manifest)")->delimiter(',');
  eval_cmd->add_option("--threshold", ev.threshold, "eer or fixed:<v> (default: the checkpoint config)");
  eval_cmd->add_option("--routing", ev.routing, "auto, prototypes or oracle");
  eval_cmd->add_option("--jt-ref", ev.jt_ref, "Joint-training run directory for delta_m");
  eval_cmd->add_option("--out", ev.out, "Report directory (default: eval-<ckpt> next to the checkpoint)");
  eval_cmd->add_option("--jobs", ev.jobs, "Parallel evaluation workers")->check(CLI::PositiveNumber);

  std::string suite = "all";
  auto* verify_cmd = app.add_subcommand("verify", "Run the oracle self-checks");
  verify_cmd->add_option("--suite", suite, "grad, sewc, metrics or all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : cli::kUsage;
  }

  try {
    if (*gen_cmd) return cli::gen_data(gen, std::cout);
    if (*train_cmd) return cli::train(tr, std::cout);
    if (*eval_cmd) return cli::eval(ev, std::cout);
    if (*verify_cmd) return cli::verify(suite, std::cout);
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return cli::kNumeric;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return cli::kIo;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kUsage;
  } catch (const std::exception& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return cli::kIo;
  }
  return cli::kUsage;
}
