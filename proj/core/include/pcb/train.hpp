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

#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcb/ingest.hpp"
#include "pcb/model.hpp"

namespace pcb::train {

enum class Phase {
  kPcbUniform,         // uniform stripes, everything trainable
  kRppClassifierOnly,  // only the part classifier moves
  kRppFinetune,        // refined pooling, everything trainable
};

std::string to_string(Phase phase);
Phase phase_from_string(const std::string& name);

struct Schedule {
  double base_lr = 0.05;
  int decay_epoch = 20;
  int total_epochs = 30;
  double decay_factor = 0.1;
  double rpp_lr = 0.005;
  int rpp_classifier_epochs = 6;
  int rpp_finetune_epochs = 6;
  double pretrained_lr_scale = 0.1;
  int batch_size = 64;

  int rpp_epochs() const { return rpp_classifier_epochs + rpp_finetune_epochs; }
  void validate() const;

  friend bool operator==(const Schedule&, const Schedule&) = default;
};

struct OptimizerConfig {
  double momentum = 0.9;
  double weight_decay = 5e-4;

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

/// A phase ends early once the epoch-mean loss improved by less than
/// `min_improvement` for `patience` consecutive epochs.
struct Convergence {
  bool enabled = true;
  double min_improvement = 1e-4;
  int patience = 3;

  friend bool operator==(const Convergence&, const Convergence&) = default;
};

struct TrainConfig {
  Schedule schedule;
  OptimizerConfig optimizer;
  Convergence convergence;
  double flip_prob = 0.5;
  std::uint64_t seed = 1;
  /// Train the refined head jointly from scratch (skips uniform training).
  bool no_induction = false;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// One JSON-lines training log record.
struct EpochRecord {
  Phase phase = Phase::kPcbUniform;
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  int empty_part_count = 0;

  std::string to_json_line() const;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainState {
  Model model;
  Phase phase = Phase::kPcbUniform;
  /// Completed epochs of the current phase.
  int epoch = 0;
  double lr = 0.0;
  std::uint64_t rng_seed = 1;
  std::uint64_t steps = 0;
  ingest::ChannelStats normalization;
  double best_loss = std::numeric_limits<double>::infinity();
  int stale_epochs = 0;
  bool converged = false;
  /// Joint refined-pooling training without a uniform phase.
  bool joint = false;
};

/// Train split in memory, unnormalized, with contiguous labels.
struct TrainingSet {
  std::vector<Image> images;
  std::vector<int> labels;
  int num_classes = 0;
  ingest::ChannelStats stats;

  static TrainingSet from_manifest(const ingest::DatasetManifest& manifest);
};

/// Sum over parts of cross-entropy for one sample; `predictions` holds one
/// probability row per part.
double pcb_loss(const Matrix& predictions, int label);
/// Mean of pcb_loss over a batch.
double pcb_loss(std::span<const Matrix> predictions, std::span<const int> labels);

/// SGD with momentum and weight decay over every non-frozen parameter:
/// v = m v + (g + wd w); w -= lr v. Pretrained parameters use lr * scale.
void sgd_update(ParamStore& params, double lr, const OptimizerConfig& optimizer, double pretrained_lr_scale);

/// Pass options implied by a phase (frozen trunk uses running statistics).
PassOptions pass_options(Phase phase, const Model& model);

struct StepResult {
  double loss = 0.0;
  int empty_parts = 0;
};

/// One optimizer step on an already augmented batch.
StepResult run_step(TrainState& state, std::span<const Image* const> batch, std::span<const int> labels,
                    const TrainConfig& config, std::mt19937_64& rng);

/// Learning rate of `epoch` within the state's phase.
double phase_lr(const TrainState& state, const TrainConfig& config, int epoch);
int phase_epochs(const TrainState& state, const TrainConfig& config);

/// Freeze mask, momentum reset and counters for entering `phase`.
void enter_phase(TrainState& state, Phase phase);

TrainState make_state(Model model, Phase phase, const TrainConfig& config, const ingest::ChannelStats& normalization);

using EpochCallback = std::function<void(const EpochRecord&, const TrainState&)>;

/// Runs epochs from state.epoch until the phase budget or convergence.
/// Every epoch derives its shuffling, augmentation and dropout randomness
/// from (seed, phase, epoch) only, so a restored state resumes exactly.
std::vector<EpochRecord> train_phase(TrainState& state, const TrainingSet& data, const TrainConfig& config,
                                     int max_epochs = std::numeric_limits<int>::max(),
                                     const EpochCallback& on_epoch = {});

struct InducedResult {
  Model model;
  std::vector<EpochRecord> log;
  std::uint64_t checksum_after_uniform = 0;
  std::uint64_t checksum_after_classifier_only = 0;
  /// Epoch-mean loss of the first classifier-only epoch.
  double first_classifier_epoch_loss = 0.0;
};

/// Uniform-partition training only (any head mode).
InducedResult train_uniform(const TrainingSet& data, const ModelConfig& model_config, const TrainConfig& config,
                            const EpochCallback& on_epoch = {});

/// Appends the part classifier to a uniformly trained model, trains it alone
/// with the rest frozen, then fine-tunes everything.
InducedResult refine(const Model& pcb, const TrainingSet& data, const TrainConfig& config,
                     const EpochCallback& on_epoch = {});

/// Refined head trained jointly from a fresh initialization.
InducedResult train_without_induction(const TrainingSet& data, const ModelConfig& model_config,
                                      const TrainConfig& config, const EpochCallback& on_epoch = {});

/// The full four-step procedure; with config.no_induction the uniform step
/// is skipped and the refined model is trained jointly instead.
InducedResult induced_training(const TrainingSet& data, const ModelConfig& model_config, const TrainConfig& config,
                               const EpochCallback& on_epoch = {});

/// Finishes the phase of a restored state, then runs the phases that follow
/// it. A uniform phase is followed by refinement only when `then_refine`.
InducedResult resume(TrainState state, const TrainingSet& data, const TrainConfig& config, bool then_refine,
                     const EpochCallback& on_epoch = {});

/// Checksum over every parameter and buffer that is not the part classifier.
std::uint64_t non_part_classifier_checksum(const Model& model);

}  // namespace pcb::train
