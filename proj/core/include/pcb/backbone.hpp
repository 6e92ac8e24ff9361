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

#include <random>
#include <vector>

#include "pcb/layers.hpp"

namespace pcb::backbone {

struct StageSpec {
  int out_channels = 0;
  /// 1 keeps resolution, 2 halves it.
  int downsample = 1;

  friend bool operator==(const StageSpec&, const StageSpec&) = default;
};

/// A stack of conv3x3 -> batch norm -> ReLU stages.
struct BackboneConfig {
  std::vector<StageSpec> stages;
  /// Run the last down-sampling stage at stride 1 instead of 2.
  bool halve_last_downsample = true;
  int input_height = 48;
  int input_width = 16;
  int input_channels = 3;

  /// The 4-stage, 12x4x64 toy trunk for 48x16 inputs.
  static BackboneConfig toy();

  /// Per-stage strides after applying `halve_last_downsample`.
  std::vector<int> effective_strides() const;
  int total_downsample() const;
  int output_channels() const;

  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

/// Shape forward() produces; throws ShapeError when the input size is not
/// divisible by the total down-sampling factor.
TensorShape output_shape(const BackboneConfig& config);

class Backbone {
 public:
  Backbone() = default;
  explicit Backbone(BackboneConfig config, std::string prefix = "backbone");

  void register_params(ParamStore& store, std::mt19937_64& rng) const;
  void bind(ParamStore& store);

  /// Stacked activations of the last stage.
  FeatureBatch forward(const std::vector<const Image*>& images, NormMode mode, bool keep_cache);
  /// Accumulates parameter gradients from dL/dT.
  void backward(const FeatureBatch& grad_output);

  ActivationTensor forward(const Image& image, NormMode mode = NormMode::kRunning);

  const BackboneConfig& config() const { return config_; }
  const std::string& prefix() const { return prefix_; }

 private:
  struct Stage {
    layers::Conv3x3 conv;
    layers::BatchNorm norm;
    Matrix output;  // post-ReLU, kept for backward
  };

  BackboneConfig config_;
  std::string prefix_;
  std::vector<Stage> stages_;
};

}  // namespace pcb::backbone
