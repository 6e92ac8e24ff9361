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

#include <optional>
#include <span>
#include <string>

#include "pcb/tensor.hpp"

namespace pcb::partition {

enum class HeadMode {
  kPCB,       // stripe pooling, one classifier per part
  kVariant1,  // classifier on the mean of the reduced part vectors
  kVariant2,  // stripe pooling, one classifier shared by all parts
  kIDE,       // global pooling, single classifier
};

std::string to_string(HeadMode mode);
HeadMode head_mode_from_string(const std::string& name);

struct HeadConfig {
  int parts = 6;
  int reduced_dim = 256;
  HeadMode mode = HeadMode::kPCB;
  int num_classes = 2;
  /// Dropout rate on the pooled part vectors during training.
  double dropout = 0.0;
  /// Batch normalization between the reduction map and the ReLU.
  bool reduce_norm = true;
  /// One reduction map for every part instead of one per part.
  bool shared_reduction = false;

  /// Part count the head actually uses (IDE always pools globally).
  int effective_parts() const { return mode == HeadMode::kIDE ? 1 : parts; }

  friend bool operator==(const HeadConfig&, const HeadConfig&) = default;
};

/// Stripe index of tensor row `row` under a uniform partition.
int stripe_of_row(int row, int rows, int parts);

/// p x C matrix whose row i is the mean fiber of horizontal stripe i
/// (rows [i*M/p, (i+1)*M/p), all columns), top to bottom.
Matrix uniform_pool(const ActivationTensor& t, int parts);

/// dL/dT for uniform_pool given dL/dg (p x C).
Matrix uniform_pool_backward(const Matrix& grad_parts, TensorShape shape);

/// Inference-mode normalization y = gamma * (z - mean) / sqrt(var + eps) + beta.
struct NormStats {
  RowVector gamma;
  RowVector beta;
  RowVector mean;
  RowVector var;
  double epsilon = 1e-5;

  RowVector apply(const RowVector& z) const;
};

/// One part's reduction y = relu(norm(A g + b)).
struct ReductionMap {
  Matrix weight;   // r x C
  RowVector bias;  // empty for no bias
  std::optional<NormStats> norm;
  bool rectify = true;
};

/// h[i] from g[i] through maps[i]; a single map is shared by every part.
Matrix reduce_dim(const Matrix& parts, std::span<const ReductionMap> maps);

struct ClassifierMap {
  Matrix weight;   // K x r
  RowVector bias;  // K
};

/// One softmax distribution per part (p x K); a single classifier is shared.
Matrix classify(const Matrix& reduced, std::span<const ClassifierMap> classifiers);

/// Softmax prediction from the mean of the part vectors.
RowVector variant1_head(const Matrix& reduced, const ClassifierMap& classifier);

struct IdeParams {
  ReductionMap reduction;
  ClassifierMap classifier;
};

/// Global pooling -> reduction -> classifier, inference mode (no dropout).
RowVector ide_head(const ActivationTensor& t, const IdeParams& params);

}  // namespace pcb::partition
