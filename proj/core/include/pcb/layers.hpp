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
#include <string>
#include <vector>

#include "pcb/params.hpp"
#include "pcb/tensor.hpp"

namespace pcb {

/// A batch of equally-shaped activation grids stacked row-wise:
/// sample b, location (m, n) is row (b * rows + m) * cols + n.
struct FeatureBatch {
  int batch = 0;
  int rows = 0;
  int cols = 0;
  Matrix data;

  int channels() const { return static_cast<int>(data.cols()); }
  int locations() const { return rows * cols; }
  ActivationTensor sample(int b) const;
  static FeatureBatch stack(const std::vector<ActivationTensor>& tensors);
};

enum class NormMode {
  kBatch,    // normalize with batch statistics, update running statistics
  kRunning,  // normalize with running statistics (inference, frozen layers)
};

namespace layers {

/// 3x3 convolution, zero padding 1, no bias. Weight is (9 * in) x out with
/// row index (ky * 3 + kx) * in + c.
class Conv3x3 {
 public:
  Conv3x3() = default;
  Conv3x3(std::string name, int in_channels, int out_channels, int stride);

  void register_params(ParamStore& store, std::mt19937_64& rng) const;
  void bind(ParamStore& store);

  FeatureBatch forward(const FeatureBatch& x, bool keep_cache);
  /// Accumulates the weight gradient; returns the gradient w.r.t. the input
  /// when `want_input_grad` is set (an empty matrix otherwise).
  FeatureBatch backward(const FeatureBatch& dy, bool want_input_grad);

  int stride() const { return stride_; }
  int out_channels() const { return out_; }

 private:
  std::string name_;
  int in_ = 0;
  int out_ = 0;
  int stride_ = 1;
  Parameter* weight_ = nullptr;

  Matrix cols_;
  int in_rows_ = 0;
  int in_cols_ = 0;
  int batch_ = 0;
};

/// Per-channel batch normalization over the rows of a matrix.
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(std::string name, int channels);

  void register_params(ParamStore& store) const;
  void bind(ParamStore& store);

  Matrix forward(const Matrix& x, NormMode mode, bool keep_cache);
  Matrix backward(const Matrix& dy);

  static constexpr double kEpsilon = 1e-5;
  static constexpr double kMomentum = 0.1;

 private:
  std::string name_;
  int channels_ = 0;
  Parameter* gamma_ = nullptr;
  Parameter* beta_ = nullptr;
  Matrix* running_mean_ = nullptr;
  Matrix* running_var_ = nullptr;

  Matrix xhat_;
  RowVector inv_std_;
  NormMode mode_ = NormMode::kBatch;
};

/// Dense map y = W x (+ b) applied to each row; weight is out x in.
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int in_features, int out_features, bool bias, double init_std);

  void register_params(ParamStore& store, std::mt19937_64& rng) const;
  void bind(ParamStore& store);

  Matrix forward(const Matrix& x) const;
  /// `x` is the forward input; accumulates grads, returns dL/dx.
  Matrix backward(const Matrix& x, const Matrix& dy);

  const Matrix& weight() const { return weight_->value; }
  const Parameter* bias_param() const { return bias_; }
  bool has_bias() const { return has_bias_; }

 private:
  std::string name_;
  int in_ = 0;
  int out_ = 0;
  bool has_bias_ = false;
  double init_std_ = 0.0;
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
};

Matrix relu(const Matrix& x);
Matrix relu_backward(const Matrix& y, const Matrix& dy);

/// Row-wise numerically stable softmax.
Matrix softmax_rows(const Matrix& logits);

}  // namespace layers
}  // namespace pcb
