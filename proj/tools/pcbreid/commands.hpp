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
#include <string>
#include <vector>

namespace pcb::cli {

struct CommonArgs {
  std::optional<std::string> config;
  std::optional<std::string> out_root;
  std::optional<std::string> run_name;
};

struct SynthArgs {
  CommonArgs common;
  std::optional<int> num_ids;
  std::optional<int> imgs_per_id;
  std::optional<int> bands;
  std::optional<int> shift_rows;
  std::optional<int> height;
  std::optional<int> width;
  std::optional<double> noise;
  std::optional<std::uint64_t> seed;
  /// Dataset directory; defaults to <run dir>/dataset.
  std::optional<std::string> dest;
  bool force = false;
};

struct TrainArgs {
  CommonArgs common;
  std::optional<std::string> dataset;
  std::optional<std::string> mode;
  std::optional<int> parts;
  std::optional<int> reduced_dim;
  std::optional<int> epochs;
  std::optional<int> decay_epoch;
  std::optional<int> rpp_classifier_epochs;
  std::optional<int> rpp_finetune_epochs;
  std::optional<int> batch_size;
  std::optional<double> lr;
  std::optional<double> rpp_lr;
  std::optional<double> dropout;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> from;
  std::optional<std::string> pretrained;
  std::optional<std::string> resume;
  bool no_induction = false;
  bool unnormalized_pool = false;
  bool no_early_stop = false;
};

struct EvalArgs {
  CommonArgs common;
  std::optional<std::string> checkpoint;
  std::optional<std::string> dataset;
  std::optional<std::string> kind;
  std::optional<std::string> metric;
  std::optional<std::vector<int>> ranks;
};

struct ExtractArgs {
  EvalArgs eval;
  std::string split = "all";
};

struct DiagnoseArgs {
  CommonArgs common;
  std::optional<std::string> checkpoint;
  std::optional<std::string> dataset;
  std::string split = "query";
  int limit = 16;
  int cell = 8;
  std::optional<double> empty_fraction;
  std::optional<double> duplicate_cosine;
};

struct SweepArgs {
  TrainArgs train;
  std::string param = "p";
  std::vector<std::string> values;
  std::vector<std::uint64_t> seeds{1};
  std::optional<std::string> kind;
  std::optional<std::vector<int>> ranks;
};

int cmd_synth(const SynthArgs& args);
int cmd_train(const TrainArgs& args);
int cmd_extract(const ExtractArgs& args);
int cmd_eval(const EvalArgs& args);
int cmd_diagnose(const DiagnoseArgs& args);
int cmd_sweep(const SweepArgs& args);

}  // namespace pcb::cli
