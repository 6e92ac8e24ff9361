// Copyright (c) 2026 The pcbreid Authors. All Rights Reserved.
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

#include "pcb/train.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

namespace pcb::train {

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::kPcbUniform: return "PCB_UNIFORM";
    case Phase::kRppClassifierOnly: return "RPP_CLASSIFIER_ONLY";
    case Phase::kRppFinetune: return "RPP_FINETUNE";
  }
  return "UNKNOWN";
}

Phase phase_from_string(const std::string& name) {
  if (name == "PCB_UNIFORM") return Phase::kPcbUniform;
  if (name == "RPP_CLASSIFIER_ONLY") return Phase::kRppClassifierOnly;
  if (name == "RPP_FINETUNE") return Phase::kRppFinetune;
  throw ConfigError("unknown training phase: " + name);
}

void Schedule::validate() const {
  if (base_lr <= 0.0 || rpp_lr <= 0.0) throw ConfigError("learning rates must be positive");
  if (total_epochs < 1) throw ConfigError("total_epochs must be positive");
  if (decay_epoch >= total_epochs) throw ConfigError("decay_epoch must be smaller than total_epochs");
  if (rpp_classifier_epochs < 0 || rpp_finetune_epochs < 0) throw ConfigError("epoch counts must be non-negative");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2 for batch normalization");
  if (pretrained_lr_scale <= 0.0) throw ConfigError("pretrained_lr_scale must be positive");
}

std::string EpochRecord::to_json_line() const {
  nlohmann::ordered_json j;
  j["phase"] = to_string(phase);
  j["epoch"] = epoch;
  j["lr"] = lr;
  j["mean_loss"] = mean_loss;
  j["empty_part_count"] = empty_part_count;
  return j.dump();
}

TrainingSet TrainingSet::from_manifest(const ingest::DatasetManifest& manifest) {
  TrainingSet set;
  for (const auto* s : manifest.split(ingest::Split::kTrain)) {
    set.images.push_back(s->pixels);
    set.labels.push_back(s->label);
  }
  if (set.images.empty()) throw DataError("dataset has no train split");
  set.num_classes = manifest.train_classes();
  set.stats = ingest::channel_stats(manifest, ingest::Split::kTrain);
  return set;
}

double pcb_loss(const Matrix& predictions, int label) {
  if (label < 0 || label >= predictions.cols()) {
    throw DataError("label " + std::to_string(label) + " outside [0, " + std::to_string(predictions.cols()) + ")");
  }
  double loss = 0.0;
  for (Eigen::Index i = 0; i < predictions.rows(); ++i) loss -= std::log(predictions(i, label));
  return loss;
}

double pcb_loss(std::span<const Matrix> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size() || predictions.empty()) throw ShapeError("prediction/label count mismatch");
  double total = 0.0;
  for (std::size_t b = 0; b < labels.size(); ++b) total += pcb_loss(predictions[b], labels[b]);
  return total / static_cast<double>(labels.size());
}

void sgd_update(ParamStore& params, double lr, const OptimizerConfig& optimizer, double pretrained_lr_scale) {
  if (lr < 0.0) throw ConfigError("learning rate must be non-negative");
  for (auto& [_, p] : params.params()) {
    if (p.frozen) continue;
    p.velocity = optimizer.momentum * p.velocity + p.grad + optimizer.weight_decay * p.value;
    p.value -= (p.pretrained ? lr * pretrained_lr_scale : lr) * p.velocity;
  }
}

PassOptions pass_options(Phase phase, const Model& model) {
  if (phase == Phase::kRppClassifierOnly) {
    return {NormMode::kRunning, NormMode::kRunning, true, false};
  }
  bool trunk_trainable = false;
  for (const auto& [name, p] : model.params().params()) {
    if (Model::is_backbone(name) && !p.frozen) trunk_trainable = true;
  }
  return {NormMode::kBatch, NormMode::kBatch, true, trunk_trainable};
}

StepResult run_step(TrainState& state, std::span<const Image* const> batch, std::span<const int> labels,
                    const TrainConfig& config, std::mt19937_64& rng) {
  state.model.params().zero_grad();
  const PassResult pass = state.model.train_pass(batch, labels, pass_options(state.phase, state.model), rng);
  sgd_update(state.model.params(), state.lr, config.optimizer, config.schedule.pretrained_lr_scale);
  ++state.steps;
  return {pass.loss, pass.empty_parts};
}

int phase_epochs(const TrainState& state, const TrainConfig& config) {
  const Schedule& s = config.schedule;
  switch (state.phase) {
    case Phase::kPcbUniform: return s.total_epochs;
    case Phase::kRppClassifierOnly: return s.rpp_classifier_epochs;
    case Phase::kRppFinetune: return state.joint ? s.total_epochs + s.rpp_epochs() : s.rpp_finetune_epochs;
  }
  return 0;
}

double phase_lr(const TrainState& state, const TrainConfig& config, int epoch) {
  const Schedule& s = config.schedule;
  const bool uniform_schedule = state.phase == Phase::kPcbUniform || (state.joint && epoch < s.total_epochs);
  if (uniform_schedule) return epoch < s.decay_epoch ? s.base_lr : s.base_lr * s.decay_factor;
  return s.rpp_lr;
}

void enter_phase(TrainState& state, Phase phase) {
  state.phase = phase;
  state.epoch = 0;
  state.best_loss = std::numeric_limits<double>::infinity();
  state.stale_epochs = 0;
  state.converged = false;
  ParamStore& params = state.model.params();
  if (phase == Phase::kRppClassifierOnly) {
    params.freeze_except(&Model::is_part_classifier);
  } else {
    params.unfreeze_all();
  }
  params.reset_velocity();
}

TrainState make_state(Model model, Phase phase, const TrainConfig& config, const ingest::ChannelStats& normalization) {
  config.schedule.validate();
  TrainState state{.model = std::move(model), .phase = phase, .rng_seed = config.seed, .normalization = normalization};
  enter_phase(state, phase);
  state.lr = phase_lr(state, config, 0);
  return state;
}

namespace {

std::mt19937_64 epoch_rng(std::uint64_t seed, Phase phase, int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(phase), static_cast<std::uint32_t>(epoch)};
  return std::mt19937_64(seq);
}

}  // namespace

std::vector<EpochRecord> train_phase(TrainState& state, const TrainingSet& data, const TrainConfig& config,
                                     int max_epochs, const EpochCallback& on_epoch) {
  const Schedule& s = config.schedule;
  std::vector<EpochRecord> log;
  const int budget = phase_epochs(state, config);
  const ingest::AugmentOptions augment{config.flip_prob, state.normalization};
  const int n = static_cast<int>(data.images.size());
  for (int run = 0; run < max_epochs && !state.converged && state.epoch < budget; ++run) {
    std::mt19937_64 rng = epoch_rng(state.rng_seed, state.phase, state.epoch);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    state.lr = phase_lr(state, config, state.epoch);

    double loss_sum = 0.0;
    int seen = 0;
    int empty = 0;
    for (int start = 0; start < n; start += s.batch_size) {
      const int count = std::min(s.batch_size, n - start);
      if (count < 2) break;
      std::vector<Image> images;
      std::vector<int> labels;
      images.reserve(count);
      for (int k = start; k < start + count; ++k) {
        images.push_back(ingest::augment(data.images[order[k]], augment, rng));
        labels.push_back(data.labels[order[k]]);
      }
      std::vector<const Image*> batch;
      for (const auto& im : images) batch.push_back(&im);
      StepResult step;
      try {
        step = run_step(state, batch, labels, config, rng);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (phase " + to_string(state.phase) + ", epoch " +
                           std::to_string(state.epoch) + ", step " + std::to_string(state.steps) + ")");
      }
      loss_sum += step.loss * count;
      seen += count;
      empty += step.empty_parts;
    }
    if (seen == 0) throw DataError("train split too small for one batch");

    EpochRecord record{state.phase, state.epoch, state.lr, loss_sum / seen, empty};
    const double improvement = state.best_loss - record.mean_loss;
    state.best_loss = std::min(state.best_loss, record.mean_loss);
    state.stale_epochs = improvement < config.convergence.min_improvement ? state.stale_epochs + 1 : 0;
    if (config.convergence.enabled && state.stale_epochs >= config.convergence.patience) state.converged = true;
    ++state.epoch;
    log.push_back(record);
    if (on_epoch) on_epoch(record, state);
  }
  return log;
}

std::uint64_t non_part_classifier_checksum(const Model& model) {
  return model.params().checksum([](const std::string& name) { return !Model::is_part_classifier(name); });
}

namespace {

void append(std::vector<EpochRecord>& into, const std::vector<EpochRecord>& more) {
  into.insert(into.end(), more.begin(), more.end());
}

void check_classes(const TrainingSet& data, const ModelConfig& config) {
  if (config.head.num_classes != data.num_classes) {
    throw ConfigError("model has " + std::to_string(config.head.num_classes) + " classes, train split has " +
                      std::to_string(data.num_classes));
  }
}

}  // namespace

InducedResult train_uniform(const TrainingSet& data, const ModelConfig& model_config, const TrainConfig& config,
                            const EpochCallback& on_epoch) {
  check_classes(data, model_config);
  if (model_config.rpp.enabled) throw ConfigError("uniform training expects a model without refined pooling");
  TrainState state = make_state(Model(model_config, config.seed), Phase::kPcbUniform, config, data.stats);
  auto log = train_phase(state, data, config, std::numeric_limits<int>::max(), on_epoch);
  InducedResult result{std::move(state.model), std::move(log)};
  result.checksum_after_uniform = non_part_classifier_checksum(result.model);
  return result;
}

InducedResult refine(const Model& pcb, const TrainingSet& data, const TrainConfig& config,
                     const EpochCallback& on_epoch) {
  check_classes(data, pcb.config());
  const std::uint64_t before = non_part_classifier_checksum(pcb);
  Model refined = rpp::build_rpp_head(pcb, true, std::nullopt,
                                      {pcb.config().rpp.normalize, pcb.config().rpp.epsilon});
  TrainState state = make_state(std::move(refined), Phase::kRppClassifierOnly, config, data.stats);
  std::vector<EpochRecord> log = train_phase(state, data, config, std::numeric_limits<int>::max(), on_epoch);
  const std::uint64_t after = non_part_classifier_checksum(state.model);
  const double first_loss = log.empty() ? std::nan("") : log.front().mean_loss;
  enter_phase(state, Phase::kRppFinetune);
  append(log, train_phase(state, data, config, std::numeric_limits<int>::max(), on_epoch));
  return {std::move(state.model), std::move(log), before, after, first_loss};
}

InducedResult train_without_induction(const TrainingSet& data, const ModelConfig& model_config,
                                      const TrainConfig& config, const EpochCallback& on_epoch) {
  check_classes(data, model_config);
  ModelConfig uniform = model_config;
  uniform.rpp = RppConfig{};
  Model fresh(uniform, config.seed);
  Model refined = rpp::build_rpp_head(fresh, false, std::nullopt,
                                      {model_config.rpp.normalize, model_config.rpp.epsilon});
  TrainState state = make_state(std::move(refined), Phase::kRppFinetune, config, data.stats);
  state.joint = true;
  state.lr = phase_lr(state, config, 0);
  auto log = train_phase(state, data, config, std::numeric_limits<int>::max(), on_epoch);
  return {std::move(state.model), std::move(log)};
}

InducedResult induced_training(const TrainingSet& data, const ModelConfig& model_config, const TrainConfig& config,
                               const EpochCallback& on_epoch) {
  if (config.no_induction) return train_without_induction(data, model_config, config, on_epoch);
  ModelConfig uniform = model_config;
  uniform.rpp = RppConfig{};
  uniform.rpp.normalize = model_config.rpp.normalize;
  uniform.rpp.epsilon = model_config.rpp.epsilon;
  InducedResult step1 = train_uniform(data, uniform, config, on_epoch);
  InducedResult rest = refine(step1.model, data, config, on_epoch);
  std::vector<EpochRecord> log = std::move(step1.log);
  append(log, rest.log);
  rest.log = std::move(log);
  return rest;
}

InducedResult resume(TrainState state, const TrainingSet& data, const TrainConfig& config, bool then_refine,
                     const EpochCallback& on_epoch) {
  check_classes(data, state.model.config());
  std::vector<EpochRecord> log = train_phase(state, data, config, std::numeric_limits<int>::max(), on_epoch);
  if (state.phase == Phase::kPcbUniform) {
    if (!then_refine) return {std::move(state.model), std::move(log), non_part_classifier_checksum(state.model)};
    InducedResult rest = refine(state.model, data, config, on_epoch);
    log.insert(log.end(), rest.log.begin(), rest.log.end());
    rest.log = std::move(log);
    return rest;
  }
  if (state.phase == Phase::kRppClassifierOnly) {
    enter_phase(state, Phase::kRppFinetune);
    append(log, train_phase(state, data, config, std::numeric_limits<int>::max(), on_epoch));
  }
  return {std::move(state.model), std::move(log)};
}

}  // namespace pcb::train
