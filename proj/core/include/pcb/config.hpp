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

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pcb/diagnose.hpp"
#include "pcb/ingest.hpp"
#include "pcb/model.hpp"
#include "pcb/retrieval.hpp"
#include "pcb/train.hpp"

namespace pcb {

using Json = nlohmann::ordered_json;

namespace backbone {
void to_json(Json& j, const StageSpec& s);
void from_json(const Json& j, StageSpec& s);
void to_json(Json& j, const BackboneConfig& c);
void from_json(const Json& j, BackboneConfig& c);
}  // namespace backbone

namespace partition {
void to_json(Json& j, const HeadConfig& c);
void from_json(const Json& j, HeadConfig& c);
}  // namespace partition

void to_json(Json& j, const RppConfig& c);
void from_json(const Json& j, RppConfig& c);
void to_json(Json& j, const ModelConfig& c);
void from_json(const Json& j, ModelConfig& c);

namespace train {
void to_json(Json& j, const Schedule& s);
void from_json(const Json& j, Schedule& s);
void to_json(Json& j, const OptimizerConfig& c);
void from_json(const Json& j, OptimizerConfig& c);
void to_json(Json& j, const Convergence& c);
void from_json(const Json& j, Convergence& c);
void to_json(Json& j, const TrainConfig& c);
void from_json(const Json& j, TrainConfig& c);
}  // namespace train

namespace ingest {
void to_json(Json& j, const SyntheticOptions& o);
void from_json(const Json& j, SyntheticOptions& o);
void to_json(Json& j, const ChannelStats& s);
void from_json(const Json& j, ChannelStats& s);
}  // namespace ingest

namespace diagnose {
void to_json(Json& j, const CollapseOptions& o);
void from_json(const Json& j, CollapseOptions& o);
}  // namespace diagnose

/// The training setups the CLI exposes.
enum class TrainMode { kIDE, kPCB, kVariant1, kVariant2, kRPP, kRPPNoInduction };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& name);

struct EvalConfig {
  std::vector<int> ranks{1, 5, 10};
  retrieval::DescriptorKind kind = retrieval::DescriptorKind::kH;
  retrieval::Metric metric = retrieval::Metric::kCosine;

  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

void to_json(Json& j, const EvalConfig& c);
void from_json(const Json& j, EvalConfig& c);

/// Every module's settings as one document.
struct RunConfig {
  TrainMode mode = TrainMode::kPCB;
  ModelConfig model;
  train::TrainConfig train;
  ingest::SyntheticOptions synth;
  EvalConfig eval;
  diagnose::CollapseOptions diagnose;
  std::string dataset;
  /// Uniformly trained model a refined run starts from.
  std::string from;
  /// Trained model that extract, eval and diagnose read.
  std::string checkpoint;

  /// Sets the head mode and refined-pooling flags implied by `mode`.
  void apply_mode();
  /// Cross-field checks; throws ConfigError.
  void validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

void to_json(Json& j, const RunConfig& c);
void from_json(const Json& j, RunConfig& c);

/// Parses JSON, rejecting unknown keys and wrong types with ConfigError.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& config, const std::filesystem::path& path);

ModelConfig parse_model_config(const Json& j);

}  // namespace pcb
