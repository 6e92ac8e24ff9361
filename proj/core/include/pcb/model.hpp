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
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pcb/backbone.hpp"
#include "pcb/partition.hpp"
#include "pcb/rpp.hpp"

namespace pcb {

struct RppConfig {
  /// Replace uniform stripe pooling with assign + soft_pool.
  bool enabled = false;
  bool normalize = true;
  bool bias = false;
  double epsilon = 1e-8;
  /// Set when the head was built from a PCB trained with uniform partition.
  bool induced = false;

  friend bool operator==(const RppConfig&, const RppConfig&) = default;
};

struct ModelConfig {
  backbone::BackboneConfig backbone = backbone::BackboneConfig::toy();
  partition::HeadConfig head;
  RppConfig rpp;

  /// Cross-field checks: input divisible by the down-sampling factor, rows
  /// of T divisible by p, no RPP on the IDE head.
  void validate() const;
  TensorShape tensor_shape() const { return backbone::output_shape(backbone); }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Per-pass switches the training phases need.
struct PassOptions {
  NormMode trunk_norm = NormMode::kBatch;
  NormMode head_norm = NormMode::kBatch;
  bool dropout = true;
  /// Skip the backbone backward pass (every trunk parameter is frozen).
  bool trunk_backward = true;
};

struct PassResult {
  double loss = 0.0;
  int empty_parts = 0;
};

/// Everything the inference path produces for one image.
struct Inference {
  ActivationTensor tensor;
  std::optional<rpp::PartAssignment> assignment;
  Matrix pooled;   // g, p x C
  Matrix reduced;  // h, p x r
  Matrix probs;    // one softmax row per classifier output
  int empty_parts = 0;
};

/// PCB-style network: backbone, pooling (uniform or refined), per-part
/// reduction and identity classifiers.
class Model {
 public:
  Model(ModelConfig config, std::uint64_t init_seed);

  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  /// Deep copy of configuration, parameters, buffers and freeze flags.
  Model clone() const;

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  /// Forward + backward over a labelled batch; accumulates into param grads.
  /// Returns the batch-mean summed cross-entropy.
  PassResult train_pass(std::span<const Image* const> images, std::span<const int> labels, const PassOptions& options,
                        std::mt19937_64& rng);

  /// Forward-only loss (no gradients, no running statistic updates unless
  /// options request batch normalization statistics).
  PassResult loss(std::span<const Image* const> images, std::span<const int> labels, const PassOptions& options,
                  std::mt19937_64& rng);

  Inference infer(const Image& image);
  std::vector<Inference> infer(std::span<const Image* const> images);

  /// Inference-mode parameters of the head as standalone maps.
  std::vector<partition::ReductionMap> reduction_maps() const;
  std::vector<partition::ClassifierMap> classifier_maps() const;
  rpp::PartClassifierParams part_classifier() const;

  int parts() const { return config_.head.effective_parts(); }
  int reduction_count() const;
  int classifier_count() const;

  static bool is_part_classifier(const std::string& name) { return name.starts_with("rpp."); }
  static bool is_backbone(const std::string& name) { return name.starts_with("backbone."); }

 private:
  void bind();
  PassResult run(std::span<const Image* const> images, std::span<const int> labels, const PassOptions& options,
                 std::mt19937_64& rng, bool backward, std::vector<Inference>* inference);

  ModelConfig config_;
  ParamStore store_;
  backbone::Backbone backbone_;
  std::vector<layers::Linear> reductions_;
  std::vector<layers::BatchNorm> reduction_norms_;
  std::vector<layers::Linear> classifiers_;
};

namespace rpp {

/// Copy every PCB parameter into a structurally identical model whose
/// uniform pooling is replaced by a zero-initialized part classifier.
/// `induced` records whether the source went through uniform training.
Model build_rpp_head(const Model& pcb, bool induced, std::optional<int> parts = std::nullopt,
                     SoftPoolOptions options = {});

}  // namespace rpp
}  // namespace pcb
