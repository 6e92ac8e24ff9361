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
#include <map>
#include <string>
#include <vector>

#include "pcb/tensor.hpp"

namespace pcb {

/// A named trainable array with its gradient and momentum buffer.
struct Parameter {
  Matrix value;
  Matrix grad;
  Matrix velocity;
  bool frozen = false;
  /// Loaded from a pretrain checkpoint; trained with a scaled learning rate.
  bool pretrained = false;

  Parameter() = default;
  explicit Parameter(Matrix v)
      : value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())),
        velocity(Matrix::Zero(value.rows(), value.cols())) {}
};

/// Ordered name -> array storage for parameters and non-trainable buffers
/// (normalization running statistics). Element addresses are stable.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Matrix value);
  Matrix& add_buffer(const std::string& name, Matrix value);

  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  Matrix& buffer(const std::string& name);
  const Matrix& buffer(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.contains(name); }

  std::map<std::string, Parameter>& params() { return params_; }
  const std::map<std::string, Parameter>& params() const { return params_; }
  std::map<std::string, Matrix>& buffers() { return buffers_; }
  const std::map<std::string, Matrix>& buffers() const { return buffers_; }

  void zero_grad();
  /// Freeze every parameter for which `keep_trainable` returns false.
  void freeze_except(const std::function<bool(const std::string&)>& keep_trainable);
  void unfreeze_all();
  void reset_velocity();

  /// Checksum over every parameter value (and buffers) whose name passes `filter`.
  std::uint64_t checksum(const std::function<bool(const std::string&)>& filter) const;

 private:
  std::map<std::string, Parameter> params_;
  std::map<std::string, Matrix> buffers_;
};

}  // namespace pcb
