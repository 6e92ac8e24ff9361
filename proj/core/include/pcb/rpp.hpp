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

#include <vector>

#include "pcb/tensor.hpp"

namespace pcb::rpp {

/// Soft membership of every location over p parts; probs is (M*N) x p.
struct PartAssignment {
  int rows = 0;
  int cols = 0;
  Matrix probs;

  int parts() const { return static_cast<int>(probs.cols()); }
  /// Total soft mass per part (length p).
  RowVector masses() const { return probs.colwise().sum(); }
};

/// Linear part classifier over fibers; row i of weight scores part i.
struct PartClassifierParams {
  Matrix weight;   // p x C
  RowVector bias;  // empty unless the bias flag is on
};

struct SoftPoolOptions {
  /// Divide by the part's total weight (weighted mean) instead of M*N.
  bool normalize = true;
  double epsilon = 1e-8;
};

struct SoftPoolResult {
  Matrix parts;  // p x C
  std::vector<bool> empty;
  int empty_count = 0;
};

/// probs[f, i] = softmax_i(W_i . f + b_i), evaluated with max subtraction.
PartAssignment assign(const ActivationTensor& t, const PartClassifierParams& classifier);

/// One-hot assignment reproducing the uniform horizontal stripes.
PartAssignment stripe_assignment(int rows, int cols, int parts);

/// Weighted aggregation of fibers per part. Near-empty parts (total weight
/// < epsilon) yield a zero vector and are flagged.
SoftPoolResult soft_pool(const ActivationTensor& t, const PartAssignment& a, const SoftPoolOptions& options = {});

struct SoftPoolGrad {
  Matrix tensor;      // (M*N) x C
  Matrix assignment;  // (M*N) x p
};

SoftPoolGrad soft_pool_backward(const ActivationTensor& t, const PartAssignment& a, const SoftPoolResult& forward,
                                const Matrix& grad_parts, const SoftPoolOptions& options = {});

/// dL/dlogits from dL/dprobs through the row softmax.
Matrix assign_backward(const PartAssignment& a, const Matrix& grad_probs);

}  // namespace pcb::rpp
