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

#include "svlp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "svlp/error.hpp"
#include "svlp/rng.hpp"
#include "svlp/tape.hpp"

namespace svlp {

namespace {

// Stream tags for the run's counter generator.
constexpr std::uint64_t kInitTag = 0x10;
constexpr std::uint64_t kPromptTag = 0x100;
constexpr std::uint64_t kShuffleTag = 0x200;
constexpr std::uint64_t kKMeansTag = 0x300;

constexpr float kBeta1 = 0.9f;
constexpr float kBeta2 = 0.999f;
constexpr float kAdamEps = 1e-8f;

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? std::string(1, sep) : "") + parts[i];
  return out;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

double real_probability(float spoof_logit, float real_logit) {
  return 1.0 / (1.0 + std::exp(static_cast<double>(spoof_logit) - static_cast<double>(real_logit)));
}

}  // namespace

void RehearsalAudit::activate(std::vector<int> domains) {
  std::sort(domains.begin(), domains.end());
  active_ = std::move(domains);
}

void RehearsalAudit::record_read(int domain, std::size_t count) {
  reads_ += count;
  if (!std::binary_search(active_.begin(), active_.end(), domain)) {
    violations_ += count;
    throw UsageError("rehearsal-free violation: training path read a sample of domain " + std::to_string(domain));
  }
}

Trainer::Trainer(TrainConfig cfg) : cfg_(std::move(cfg)), model_((cfg_.validate(), cfg_.encoder), cfg_.prompt_config()) {}

RunState Trainer::init_state() const {
  RunState s{ParameterStore<float>{}, ConsolidationState<float>(cfg_.p), PrototypeBank<float>{}, {}, {}};
  CounterRng rng(CounterRng(cfg_.seed).fork_key(kInitTag));
  model_.init_parameters(s.store, rng);
  return s;
}

void Trainer::check_images(const DomainDataset& data) const {
  if (data.channels != cfg_.encoder.channels || data.height != cfg_.encoder.image_side ||
      data.width != cfg_.encoder.image_side) {
    throw ShapeError("dataset '" + data.name + "' images do not match the encoder input size");
  }
}

Tensor<float> Trainer::batch_pixels(const DomainDataset& data, std::span<const std::size_t> idx) const {
  check_images(data);
  const std::size_t d = data.sample_size();
  Tensor<float> out({idx.size(), d});
  for (std::size_t r = 0; r < idx.size(); ++r) std::copy_n(data.sample(idx[r]), d, out.data() + r * d);
  return out;
}

void Trainer::adam_step(RunState& state, const Gradients<float>& grads) const {
  AdamState& a = state.adam;
  const std::size_t n = state.store.size();
  if (a.m.size() != n) {
    a.m.assign(n, 0.0f);
    a.v.assign(n, 0.0f);
  }
  ++a.step;
  const float bc1 = 1.0f - std::pow(kBeta1, static_cast<float>(a.step));
  const float bc2 = 1.0f - std::pow(kBeta2, static_cast<float>(a.step));
  float lr = static_cast<float>(cfg_.lr);
  if (a.step <= cfg_.warmup) lr *= static_cast<float>(a.step) / static_cast<float>(cfg_.warmup + 1);
  const float wd = static_cast<float>(cfg_.weight_decay);
  for (std::size_t e = 0; e < state.store.entry_count(); ++e) {
    auto& entry = state.store.entry(e);
    if (entry.frozen) continue;
    float* theta = entry.value.data();
    for (std::size_t i = 0; i < entry.value.size(); ++i) {
      const std::size_t gi = entry.offset + i;
      const float g = grads[gi];
      a.m[gi] = kBeta1 * a.m[gi] + (1.0f - kBeta1) * g;
      a.v[gi] = kBeta2 * a.v[gi] + (1.0f - kBeta2) * g * g;
      const float mhat = a.m[gi] / bc1, vhat = a.v[gi] / bc2;
      theta[i] -= lr * (mhat / (std::sqrt(vhat) + kAdamEps) + wd * theta[i]);
    }
  }
}

std::vector<LossRecord> Trainer::train_domain(RunState& state, int domain, std::span<const TaggedDataset> data,
                                              RehearsalAudit& audit) const {
  if (data.empty()) throw UsageError("train_domain: no data");
  const int pd = prompt_domain(domain);
  const CounterRng root(cfg_.seed);
  if (!model_.bank().has_domain(state.store, pd)) {
    CounterRng rng(root.fork_key(kPromptTag + static_cast<std::uint64_t>(pd)));
    model_.bank().register_domain(state.store, pd, rng);
  }
  if (state.store.frozen(alpha_name(pd))) throw UsageError("domain " + std::to_string(pd) + " is already trained");

  std::vector<int> tags;
  std::vector<std::pair<std::size_t, std::size_t>> pool;  // (set, sample)
  for (std::size_t s = 0; s < data.size(); ++s) {
    check_images(*data[s].data);
    tags.push_back(data[s].domain);
    for (std::size_t i = 0; i < data[s].data->size(); ++i) pool.emplace_back(s, i);
  }
  if (pool.empty()) throw UsageError("train_domain: empty dataset");
  audit.activate(tags);
  state.adam = AdamState{};

  CounterRng shuffle(root.fork_key(kShuffleTag + static_cast<std::uint64_t>(domain)));
  std::vector<std::size_t> order(pool.size());
  std::size_t cursor = order.size();
  const std::size_t iterations = cfg_.mode == TrainMode::kJt ? cfg_.iterations * data.size() : cfg_.iterations;
  const SewcOptions sewc = cfg_.sewc_options();

  std::vector<LossRecord> losses;
  losses.reserve(iterations);
  Tape<float> tape;
  std::vector<int> labels(cfg_.batch);
  for (std::size_t it = 0; it < iterations; ++it) {
    // Gather the batch, reshuffling at each epoch boundary.
    std::vector<std::pair<std::size_t, std::size_t>> picks;
    while (picks.size() < cfg_.batch) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
        cursor = 0;
      }
      picks.push_back(pool[order[cursor++]]);
    }
    Tensor<float> pixels({cfg_.batch, cfg_.encoder.channels * cfg_.encoder.image_side * cfg_.encoder.image_side});
    for (std::size_t b = 0; b < picks.size(); ++b) {
      const TaggedDataset& src = data[picks[b].first];
      audit.record_read(src.domain);
      std::copy_n(src.data->sample(picks[b].second), pixels.cols(), pixels.data() + b * pixels.cols());
      labels[b] = src.data->labels[picks[b].second];
    }

    tape.clear();
    auto text = model_.text_features(tape, state.store, pd);
    Var<float> lmap = map_loss(model_.logits_with(tape, state.store, pixels, pd, text), labels);
    Var<float> total = lmap;
    double penalty = 0;
    if (cfg_.mode == TrainMode::kSvlp) {
      Var<float> pen = sewc_penalty(tape, state.store, state.consolidation, sewc);
      penalty = pen.value()[0];
      total = add(lmap, pen);
    }
    const Gradients<float> grads = tape.backward(total);
    adam_step(state, grads);
    losses.push_back({domain, it, static_cast<double>(lmap.value()[0]), penalty});
  }
  return losses;
}

FisherSnapshot<float> Trainer::fisher(const RunState& state, int domain, const TaggedDataset& train,
                                      RehearsalAudit& audit) const {
  audit.activate({train.domain});
  const std::size_t n = std::min(train.data->size(), cfg_.fisher_samples);
  const int pd = prompt_domain(domain);
  return estimate_fisher<float>(state.store, domain, n, [&](Tape<float>& tape, std::size_t i) {
    audit.record_read(train.domain);
    const std::size_t idx[1] = {i};
    const int label[1] = {train.data->labels[i]};
    return model_.loss(tape, state.store, batch_pixels(*train.data, idx), label, pd);
  });
}

Tensor<float> Trainer::routing_embeddings(const ParameterStore<float>& store, const DomainDataset& data) const {
  Tensor<float> out({data.size(), cfg_.encoder.embed_dim});
  Tape<float> tape;
  for (std::size_t start = 0; start < data.size(); start += cfg_.eval_batch) {
    const std::size_t end = std::min(data.size(), start + cfg_.eval_batch);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    tape.clear();
    const Var<float> emb = model_.routing_embedding(tape, store, batch_pixels(data, idx));
    std::copy(emb.value().storage().begin(), emb.value().storage().end(), out.data() + start * out.cols());
  }
  return out;
}

void Trainer::finalize_domain(RunState& state, int domain, const TaggedDataset& train, RehearsalAudit& audit) const {
  if (cfg_.mode != TrainMode::kSvlp) return;
  state.consolidation.add_snapshot(fisher(state, domain, train, audit));
  audit.activate({train.domain});
  audit.record_read(train.domain, train.data->size());
  const Tensor<float> emb = routing_embeddings(state.store, *train.data);
  const CounterRng root(cfg_.seed);
  state.prototypes.add(domain, build_prototypes(emb, cfg_.k, root.fork_key(kKMeansTag + static_cast<std::uint64_t>(domain)),
                                                cfg_.kmeans));
  model_.bank().freeze_domain(state.store, domain);
}

std::vector<std::pair<std::string, ScoreSet>> Trainer::score(const RunState& state, std::span<const EvalTarget> targets,
                                                             RoutingMode routing) const {
  std::vector<std::pair<std::string, ScoreSet>> out;
  Tape<float> tape;
  for (const EvalTarget& target : targets) {
    const DomainDataset& data = *target.data;
    ScoreSet set(data.size());
    for (std::size_t start = 0; start < data.size(); start += cfg_.eval_batch) {
      const std::size_t end = std::min(data.size(), start + cfg_.eval_batch);
      std::vector<int> routed(end - start, -1);
      std::vector<int> use(end - start, 1);
      if (routing == RoutingMode::kPrototypes) {
        std::vector<std::size_t> idx(end - start);
        std::iota(idx.begin(), idx.end(), start);
        tape.clear();
        const Var<float> emb = model_.routing_embedding(tape, state.store, batch_pixels(data, idx));
        for (std::size_t r = 0; r < idx.size(); ++r) use[r] = routed[r] = state.prototypes.route(emb.value().row(r)).domain;
      } else if (routing == RoutingMode::kOracle) {
        if (target.domain < 1) throw UsageError("oracle routing needs a seen domain");
        std::fill(use.begin(), use.end(), target.domain);
        std::fill(routed.begin(), routed.end(), target.domain);
      }
      std::map<int, std::vector<std::size_t>> groups;
      for (std::size_t r = 0; r < use.size(); ++r) groups[use[r]].push_back(start + r);
      for (const auto& [d, idx] : groups) {
        tape.clear();
        const Var<float> logits = model_.logits(tape, state.store, batch_pixels(data, idx), d);
        for (std::size_t r = 0; r < idx.size(); ++r) {
          ScoreRecord& rec = set[idx[r]];
          rec.score = real_probability(logits.value().at(r, kSpoof), logits.value().at(r, kReal));
          rec.label = data.labels[idx[r]];
          rec.domain = target.domain;
          rec.routed = routed[idx[r] - start];
        }
      }
    }
    out.emplace_back(target.name, std::move(set));
  }
  return out;
}

Checkpoint Trainer::to_checkpoint(const RunState& state) const {
  Checkpoint ck;
  state.store.save(ck);
  ck.put_text("meta.config", render_config(cfg_).render());
  ck.put_text("meta.tokens", model_.encoder().tokens().serialize());
  ck.put_text("meta.domains", join(state.domains, '\n'));
  const std::size_t m = state.store.penalizable_size();
  const auto& snaps = state.consolidation.snapshots();
  for (std::size_t j = 0; j < snaps.size(); ++j) {
    const std::string id = std::to_string(snaps[j].domain);
    ck.put("fisher." + id, Tensor<float>({m}, snaps[j].fisher));
    ck.put("theta_star." + id, Tensor<float>({m}, snaps[j].theta_star));
    ck.put_mask("selected_set." + id, to_mask(state.consolidation.per_domain_sets()[j], m));
    ck.put_mask("important_set." + id, to_mask(state.consolidation.cumulative_history()[j], m));
  }
  for (const auto& [d, cents] : state.prototypes.banks()) ck.put("proto." + std::to_string(d), cents);
  return ck;
}

RunState Trainer::from_checkpoint(const Checkpoint& ckpt, TrainConfig* cfg_out) {
  const TrainConfig cfg = parse_config_text(ckpt.text("meta.config"));
  if (TokenTable::parse(ckpt.text("meta.tokens")).serialize() != TokenTable::standard().serialize()) {
    throw FormatError("checkpoint token table differs from the built-in table");
  }
  RunState s{ParameterStore<float>{}, ConsolidationState<float>(cfg.p), PrototypeBank<float>{}, {}, {}};
  auto is_state = [](std::string_view n) {
    for (const char* p : {"fisher.", "theta_star.", "proto.", "meta."}) {
      if (n.rfind(p, 0) == 0) return false;
    }
    return true;
  };
  s.store.load(ckpt, is_state);
  s.domains = split_lines(ckpt.text("meta.domains"));
  s.store.set_frozen("class_embedding", true);
  const Trainer t(cfg);
  for (int d = 1; d <= static_cast<int>(s.domains.size()); ++d) {
    const std::string id = std::to_string(d);
    if (cfg.mode == TrainMode::kSvlp) t.model().bank().freeze_domain(s.store, d);
    if (ckpt.contains("fisher." + id)) {
      FisherSnapshot<float> snap{d, ckpt.tensor<float>("fisher." + id).storage(),
                                 ckpt.tensor<float>("theta_star." + id).storage()};
      s.consolidation.restore(std::move(snap), from_mask(ckpt.mask("selected_set." + id)));
    }
    if (ckpt.contains("proto." + id)) s.prototypes.add(d, ckpt.tensor<float>("proto." + id));
  }
  if (cfg_out) *cfg_out = cfg;
  return s;
}

EvalReport make_report(const std::string& tag, const std::vector<std::pair<std::string, ScoreSet>>& scores,
                       std::span<const EvalTarget> targets, const ThresholdPolicy& policy) {
  EvalReport r;
  r.tag = tag;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    DomainResult d = evaluate_domain(scores[i].first, targets[i].domain, scores[i].second, policy);
    if (targets[i].domain < 1) {
      d.unseen = true;
      d.routing_acc.reset();
    }
    r.domains.push_back(std::move(d));
  }
  return r;
}

void attach_delta_m(EvalReport& report, const EvalReport& joint) {
  std::vector<double> q, b;
  for (const auto& d : report.domains) {
    if (d.unseen) continue;
    const DomainResult* ref = joint.find(d.name);
    if (!ref) throw UsageError("joint reference has no result for domain '" + d.name + "'");
    q.push_back(d.hter);
    b.push_back(ref->hter);
  }
  report.delta_m = delta_m(q, b);
}

std::vector<std::string> domain_prompt_names(std::span<const int> domains) {
  std::vector<std::string> out;
  for (int d : domains) {
    out.push_back(visual_prompt_name(d));
    out.push_back(ds_prompt_name(d));
    out.push_back(alpha_name(d));
  }
  return out;
}

namespace {

std::vector<std::pair<std::string, Tensor<float>>> snapshot_prompts(const ParameterStore<float>& store, int up_to) {
  std::vector<int> ids(static_cast<std::size_t>(std::max(0, up_to)));
  std::iota(ids.begin(), ids.end(), 1);
  std::vector<std::pair<std::string, Tensor<float>>> out;
  for (const auto& name : domain_prompt_names(ids)) {
    if (store.contains(name)) out.emplace_back(name, store.get(name));
  }
  return out;
}

void write_step(const std::filesystem::path& dir, std::size_t step, const Trainer& trainer, const RunState& state,
                const EvalReport& report, const std::vector<std::pair<std::string, ScoreSet>>& scores) {
  const std::string stem = "step" + std::to_string(step);
  trainer.to_checkpoint(state).save(dir / (stem + ".ckpt"));
  std::ostringstream csv, txt, log;
  write_report_csv(csv, report);
  write_report_text(txt, report);
  write_score_log(log, scores);
  write_text(dir / (stem + ".report.csv"), csv.str());
  write_text(dir / (stem + ".report.txt"), txt.str());
  write_text(dir / (stem + ".scores.csv"), log.str());
  write_text(dir / "final.report.csv", csv.str());
}

}  // namespace

SequenceResult train_sequence(const TrainConfig& cfg, const SequenceOptions& opts) {
  const Trainer trainer(cfg);
  const std::vector<std::string> manifest = read_manifest(opts.data_root);
  std::vector<DatasetPair> data;
  for (const auto& name : manifest) data.push_back(load_domain(opts.data_root, name));
  auto log = [&](const std::string& line) {
    if (opts.log) opts.log(line);
  };

  const bool write = !opts.out_dir.empty();
  if (write) {
    std::error_code ec;
    std::filesystem::create_directories(opts.out_dir, ec);
    if (ec) throw IoError("cannot create " + opts.out_dir.string() + ": " + ec.message());
    std::string meta = "svlp 0.1.0\nmode = " + std::string(mode_name(cfg.mode)) + "\ntag = " + cfg.tag() +
                       "\nseed = " + std::to_string(cfg.seed) + "\ndata = " + opts.data_root.string() +
                       "\nmanifest = " + join(manifest, ',') + "\n\n" + render_config(cfg).render();
    write_text(opts.out_dir / "run.meta", meta);
  }

  SequenceResult result{trainer.init_state(), {}, {}, true, 0, 0};
  RunState& state = result.state;
  RehearsalAudit audit;
  const ThresholdPolicy policy = cfg.threshold_policy();

  auto run_step = [&](std::size_t step, std::span<const TaggedDataset> train, std::vector<EvalTarget> targets) {
    std::vector<LossRecord> losses;
    try {
      losses = trainer.train_domain(state, static_cast<int>(step), train, audit);
    } catch (const NumericError&) {
      if (write) trainer.to_checkpoint(state).save(opts.out_dir / "failure.ckpt");
      throw;
    }
    result.losses.insert(result.losses.end(), losses.begin(), losses.end());
    trainer.finalize_domain(state, static_cast<int>(step), train.front(), audit);
    const auto scores = trainer.score(state, targets, trainer.default_routing());
    EvalReport report = make_report(cfg.tag(), scores, targets, policy);
    if (opts.joint_reference) attach_delta_m(report, *opts.joint_reference);
    if (write) write_step(opts.out_dir, step, trainer, state, report, scores);
    std::ostringstream txt;
    write_report_text(txt, report);
    log("step " + std::to_string(step) + "\n" + txt.str());
    result.steps.push_back(std::move(report));
  };

  if (cfg.mode == TrainMode::kJt) {
    std::vector<std::size_t> order(manifest.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return manifest[a] < manifest[b]; });
    std::vector<TaggedDataset> pooled;
    for (std::size_t i : order) pooled.push_back({static_cast<int>(i + 1), &data[i].train});
    std::vector<EvalTarget> targets;
    for (std::size_t i = 0; i < manifest.size(); ++i) targets.push_back({manifest[i], static_cast<int>(i + 1), &data[i].test});
    state.domains = manifest;
    run_step(1, pooled, targets);
  } else {
    for (std::size_t t = 1; t <= manifest.size(); ++t) {
      const auto before = snapshot_prompts(state.store, static_cast<int>(t) - 1);
      state.domains.push_back(manifest[t - 1]);
      const TaggedDataset train[1] = {{static_cast<int>(t), &data[t - 1].train}};
      std::vector<EvalTarget> targets;
      for (std::size_t j = 1; j <= t; ++j) targets.push_back({manifest[j - 1], static_cast<int>(j), &data[j - 1].test});
      run_step(t, train, targets);
      for (const auto& [name, value] : before) {
        if (!(state.store.get(name) == value)) result.frozen_prompts_stable = false;
      }
    }
  }
  if (write) {
    std::ostringstream csv;
    csv << "domain,iteration,map_loss,sewc_loss\n";
    for (const auto& l : result.losses) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%d,%zu,%.9g,%.9g\n", l.domain, l.iteration, l.map_loss, l.sewc_loss);
      csv << buf;
    }
    write_text(opts.out_dir / "losses.csv", csv.str());
  }
  result.audit_reads = audit.reads();
  result.audit_violations = audit.violations();
  return result;
}

}  // namespace svlp
