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

#include <Eigen/Core>
#include <cstdint>
#include <span>

#include "pcb/error.hpp"

namespace pcb {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct TensorShape {
  int rows = 0;
  int cols = 0;
  int channels = 0;

  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

/// A rows x cols grid of channel fibers ("column vectors").
///
/// Storage is one matrix with a row per spatial location, in row-major
/// spatial order, so fiber (m, n) is row m * cols + n.
class ActivationTensor {
 public:
  ActivationTensor() = default;
  ActivationTensor(int rows, int cols, int channels);
  ActivationTensor(int rows, int cols, Matrix fibers);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int channels() const { return static_cast<int>(fibers_.cols()); }
  int locations() const { return rows_ * cols_; }
  TensorShape shape() const { return {rows_, cols_, channels()}; }

  double& at(int row, int col, int channel) { return fibers_(index(row, col), channel); }
  double at(int row, int col, int channel) const { return fibers_(index(row, col), channel); }

  auto fiber(int row, int col) { return fibers_.row(index(row, col)); }
  auto fiber(int row, int col) const { return fibers_.row(index(row, col)); }

  Matrix& fibers() { return fibers_; }
  const Matrix& fibers() const { return fibers_; }

  bool all_finite() const { return fibers_.allFinite(); }

 private:
  int index(int row, int col) const { return row * cols_ + col; }

  int rows_ = 0;
  int cols_ = 0;
  Matrix fibers_;
};

/// 3-channel float image; pixels is (height * width) x 3.
struct Image {
  int height = 0;
  int width = 0;
  Matrix pixels;

  Image() = default;
  Image(int h, int w) : height(h), width(w), pixels(Matrix::Zero(h * w, 3)) {}

  double& at(int y, int x, int c) { return pixels(y * width + x, c); }
  double at(int y, int x, int c) const { return pixels(y * width + x, c); }

  ActivationTensor as_tensor() const { return ActivationTensor(height, width, pixels); }

  friend bool operator==(const Image& a, const Image& b) {
    return a.height == b.height && a.width == b.width && a.pixels == b.pixels;
  }
};

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t checksum(const Matrix& m);

}  // namespace pcb
