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

#include "pcb/tensor.hpp"

#include <array>
#include <string>

namespace pcb {

namespace {

Matrix zero_fibers(int rows, int cols, int channels) {
  if (rows < 1 || cols < 1 || channels < 1) {
    throw ShapeError("activation tensor extents must be positive, got " + std::to_string(rows) + "x" +
                     std::to_string(cols) + "x" + std::to_string(channels));
  }
  return Matrix::Zero(static_cast<Eigen::Index>(rows) * cols, channels);
}

}  // namespace

ActivationTensor::ActivationTensor(int rows, int cols, int channels)
    : rows_(rows), cols_(cols), fibers_(zero_fibers(rows, cols, channels)) {}

ActivationTensor::ActivationTensor(int rows, int cols, Matrix fibers)
    : rows_(rows), cols_(cols), fibers_(std::move(fibers)) {
  if (rows < 1 || cols < 1 || fibers_.rows() != static_cast<Eigen::Index>(rows) * cols) {
    throw ShapeError("fiber matrix has " + std::to_string(fibers_.rows()) + " rows, expected " +
                     std::to_string(rows * cols));
  }
}

std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t checksum(const Matrix& m) {
  const std::array<Eigen::Index, 2> dims{m.rows(), m.cols()};
  const std::uint64_t h = fnv1a(std::as_bytes(std::span<const Eigen::Index>(dims)));
  return fnv1a(std::as_bytes(std::span<const double>(m.data(), static_cast<std::size_t>(m.size()))), h);
}

}  // namespace pcb
