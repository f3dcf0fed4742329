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
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "svlp/checkpoint.hpp"
#include "svlp/config.hpp"
#include "svlp/map.hpp"
#include "svlp/metrics.hpp"
#include "svlp/parameter_store.hpp"
#include "svlp/routing.hpp"
#include "svlp/sewc.hpp"
#include "svlp/synthdata.hpp"

namespace svlp {

// Guards the rehearsal-free contract: every sample read on the training path
// reports its domain tag, and reads of any domain outside the active set are
// counted (and rejected).
class RehearsalAudit {
 public:
  void activate(std::vector<int> domains);
  // Throws UsageError on a read outside the active set.
  void record_read(int domain, std::size_t count = 1);
  std::size_t reads() const { return reads_; }
  std::size_t violations() const { return violations_; }

 private:
  std::vector<int> active_;
  std::size_t reads_ = 0;
  std::size_t violations_ = 0;
};

// A dataset bound to the domain id it trains or evaluates under.
struct TaggedDataset {
  int domain = 0;
  const DomainDataset* data = nullptr;
};

struct AdamState {
  std::vector<float> m;
  std::vector<float> v;
  std::size_t step = 0;
};

struct RunState {
  ParameterStore<float> store;
  ConsolidationState<float> consolidation;
  PrototypeBank<float> prototypes;
  std::vector<std::string> domains;  // trained domain names; id = position + 1
  AdamState adam;
};

struct LossRecord {
  int domain = 0;
  std::size_t iteration = 0;
  double map_loss = 0;
  double sewc_loss = 0;
};

enum class RoutingMode {
  kPrototypes,  // nearest prototype picks the domain prompts
  kOracle,      // the sample's true domain id
  kShared,      // domain 1 for everything (ft and jt)
};

struct EvalTarget {
  std::string name;
  int domain = 0;  // true id, or 0 for a domain the model never saw
  const DomainDataset* data = nullptr;
};

// Builds the model for a config and runs the per-domain training loop, domain
// finalization and evaluation.
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);

  const TrainConfig& config() const { return cfg_; }
  const MapModel<float>& model() const { return model_; }

  RunState init_state() const;

  // Prompt-bank domain the mode trains under for sequence position `domain`.
  int prompt_domain(int domain) const { return cfg_.mode == TrainMode::kSvlp ? domain : 1; }

  // Registers domain prompts (svlp), then runs cfg.iterations AdamW steps on
  // L_MAP + L_SEWC. `data` may hold several tagged sets (jt pooling); batches
  // follow a seeded per-epoch shuffle.
  std::vector<LossRecord> train_domain(RunState& state, int domain, std::span<const TaggedDataset> data,
                                       RehearsalAudit& audit) const;

  // svlp: Fisher snapshot, top-p selection, prototypes, prompt freezing.
  void finalize_domain(RunState& state, int domain, const TaggedDataset& train, RehearsalAudit& audit) const;

  // Diagonal Fisher of L_MAP at the current parameters over the first
  // min(n, fisher_samples) samples.
  FisherSnapshot<float> fisher(const RunState& state, int domain, const TaggedDataset& train,
                               RehearsalAudit& audit) const;

  // Prompt-free normalized embeddings [n, C_out].
  Tensor<float> routing_embeddings(const ParameterStore<float>& store, const DomainDataset& data) const;

  // Scores and routes every sample of every target.
  std::vector<std::pair<std::string, ScoreSet>> score(const RunState& state, std::span<const EvalTarget> targets,
                                                      RoutingMode routing) const;

  RoutingMode default_routing() const {
    return cfg_.mode == TrainMode::kSvlp ? RoutingMode::kPrototypes : RoutingMode::kShared;
  }

  // Checkpoint round trip of a run state, including config and domain names.
  Checkpoint to_checkpoint(const RunState& state) const;
  static RunState from_checkpoint(const Checkpoint& ckpt, TrainConfig* cfg_out);

 private:
  void check_images(const DomainDataset& data) const;
  Tensor<float> batch_pixels(const DomainDataset& data, std::span<const std::size_t> idx) const;
  void adam_step(RunState& state, const Gradients<float>& grads) const;

  TrainConfig cfg_;
  MapModel<float> model_;
};

EvalReport make_report(const std::string& tag, const std::vector<std::pair<std::string, ScoreSet>>& scores,
                       std::span<const EvalTarget> targets, const ThresholdPolicy& policy);

// Fills report.delta_m from a joint-training reference report, matching
// domains by name. Throws UsageError when a domain is missing.
void attach_delta_m(EvalReport& report, const EvalReport& joint);

struct SequenceOptions {
  std::filesystem::path data_root;
  std::filesystem::path out_dir;  // empty: nothing is written
  std::optional<EvalReport> joint_reference;
  std::function<void(const std::string&)> log;  // progress lines
};

struct SequenceResult {
  RunState state;
  std::vector<EvalReport> steps;  // after each trained domain (one for jt)
  std::vector<LossRecord> losses;
  // Per step: the prompt tensors of earlier domains were bitwise unchanged.
  bool frozen_prompts_stable = true;
  std::size_t audit_reads = 0;
  std::size_t audit_violations = 0;
};

// Algorithm driver over the manifest: svlp and ft train domain by domain with
// cumulative evaluation; jt pools every domain (sorted by name) and trains
// once. Writes step<t>.ckpt, step<t>.report.{csv,txt}, step<t>.scores.csv,
// losses.csv, final.report.csv and run.meta into out_dir.
SequenceResult train_sequence(const TrainConfig& cfg, const SequenceOptions& opts);

// Prompt entries (D_V, D_S, alpha) of the given domain ids.
std::vector<std::string> domain_prompt_names(std::span<const int> domains);

}  // namespace svlp
