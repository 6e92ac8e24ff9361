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

#include "generators.hpp"
#include "gradcheck.hpp"
#include "pcb/model.hpp"

namespace pcb::testing {

/// Model whose trunk emits a rows x cols x channels tensor from a
/// (2*rows) x (2*cols) input through two stages.
inline ModelConfig tiny_model_config(int rows, int cols, int channels, int parts, int classes) {
  ModelConfig c;
  c.backbone.stages = {{3, 1}, {channels, 2}};
  c.backbone.halve_last_downsample = false;
  c.backbone.input_height = 2 * rows;
  c.backbone.input_width = 2 * cols;
  c.head.parts = parts;
  c.head.reduced_dim = 4;
  c.head.num_classes = classes;
  return c;
}

/// Replaces every parameter with random values (the part classifier
/// included, so the assignment is not uniform).
inline void randomize(Model& model, Gen& gen, double scale = 0.8) {
  for (auto& [name, p] : model.params().params()) {
    const int r = static_cast<int>(p.value.rows());
    const int c = static_cast<int>(p.value.cols());
    p.value = name.ends_with(".gamma") ? gen.matrix(r, c, 0.5, 1.5) : gen.matrix(r, c, -scale, scale);
  }
}

/// Analytic vs central-difference gradients of the batch loss w.r.t. every
/// parameter, with batch-statistics normalization and no dropout.
inline GradReport check_model_gradients(Model& model, const std::vector<Image>& images, const std::vector<int>& labels) {
  std::vector<const Image*> batch;
  for (const auto& im : images) batch.push_back(&im);
  const PassOptions options{NormMode::kBatch, NormMode::kBatch, false, true};
  std::mt19937_64 rng(0);
  auto accumulate = [&] {
    model.params().zero_grad();
    model.train_pass(batch, labels, options, rng);
  };
  auto loss = [&] { return model.loss(batch, labels, options, rng).loss; };
  return check_parameters(model.params(), accumulate, loss);
}

}  // namespace pcb::testing
