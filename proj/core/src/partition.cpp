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

#include "pcb/partition.hpp"

#include <string>

#include "pcb/layers.hpp"

namespace pcb::partition {

std::string to_string(HeadMode mode) {
  switch (mode) {
    case HeadMode::kPCB: return "pcb";
    case HeadMode::kVariant1: return "variant1";
    case HeadMode::kVariant2: return "variant2";
    case HeadMode::kIDE: return "ide";
  }
  return "unknown";
}

HeadMode head_mode_from_string(const std::string& name) {
  if (name == "pcb") return HeadMode::kPCB;
  if (name == "variant1") return HeadMode::kVariant1;
  if (name == "variant2") return HeadMode::kVariant2;
  if (name == "ide") return HeadMode::kIDE;
  throw ConfigError("unknown head mode: " + name);
}

int stripe_of_row(int row, int rows, int parts) { return row / (rows / parts); }

namespace {

void check_partition(int rows, int parts) {
  if (parts < 1) throw ShapeError("part count must be at least 1");
  if (parts > rows) {
    throw ShapeError("cannot split " + std::to_string(rows) + " rows into " + std::to_string(parts) + " stripes");
  }
  if (rows % parts != 0) {
    throw ShapeError(std::to_string(rows) + " rows are not divisible into " + std::to_string(parts) + " stripes");
  }
}

}  // namespace

Matrix uniform_pool(const ActivationTensor& t, int parts) {
  check_partition(t.rows(), parts);
  const int stripe_rows = t.rows() / parts;
  const Eigen::Index block = static_cast<Eigen::Index>(stripe_rows) * t.cols();
  Matrix g(parts, t.channels());
  for (int i = 0; i < parts; ++i) {
    g.row(i) = t.fibers().middleRows(i * block, block).colwise().mean();
  }
  return g;
}

Matrix uniform_pool_backward(const Matrix& grad_parts, TensorShape shape) {
  const int parts = static_cast<int>(grad_parts.rows());
  check_partition(shape.rows, parts);
  const Eigen::Index block = static_cast<Eigen::Index>(shape.rows / parts) * shape.cols;
  Matrix grad(static_cast<Eigen::Index>(shape.rows) * shape.cols, shape.channels);
  for (int i = 0; i < parts; ++i) {
    grad.middleRows(i * block, block).rowwise() = grad_parts.row(i) / static_cast<double>(block);
  }
  return grad;
}

RowVector NormStats::apply(const RowVector& z) const {
  return (gamma.array() * (z - mean).array() / (var.array() + epsilon).sqrt() + beta.array()).matrix();
}

Matrix reduce_dim(const Matrix& parts, std::span<const ReductionMap> maps) {
  const Eigen::Index p = parts.rows();
  if (maps.size() != 1 && static_cast<Eigen::Index>(maps.size()) != p) {
    throw ShapeError("need one reduction map per part or a single shared map");
  }
  Matrix h;
  for (Eigen::Index i = 0; i < p; ++i) {
    const ReductionMap& map = maps.size() == 1 ? maps[0] : maps[i];
    if (map.weight.cols() != parts.cols()) throw ShapeError("reduction map input dimension mismatch");
    if (map.bias.size() != 0 && map.bias.size() != map.weight.rows()) throw ShapeError("reduction bias mismatch");
    if (i == 0) h.resize(p, map.weight.rows());
    if (map.weight.rows() != h.cols()) throw ShapeError("reduction maps disagree on output dimension");
    RowVector z = parts.row(i) * map.weight.transpose();
    if (map.bias.size() != 0) z += map.bias;
    if (map.norm) z = map.norm->apply(z);
    h.row(i) = map.rectify ? RowVector(z.cwiseMax(0.0)) : z;
  }
  return h;
}

namespace {

RowVector softmax(const RowVector& logits) { return layers::softmax_rows(Matrix(logits)).row(0); }

RowVector logits_of(const RowVector& x, const ClassifierMap& c) {
  if (c.weight.cols() != x.size()) throw ShapeError("classifier input dimension mismatch");
  if (c.bias.size() != c.weight.rows()) throw ShapeError("classifier bias mismatch");
  if (c.weight.rows() < 2) throw ShapeError("classifier needs at least 2 classes");
  return x * c.weight.transpose() + c.bias;
}

}  // namespace

Matrix classify(const Matrix& reduced, std::span<const ClassifierMap> classifiers) {
  const Eigen::Index p = reduced.rows();
  if (classifiers.size() != 1 && static_cast<Eigen::Index>(classifiers.size()) != p) {
    throw ShapeError("need one classifier per part or a single shared classifier");
  }
  Matrix probs;
  for (Eigen::Index i = 0; i < p; ++i) {
    const ClassifierMap& c = classifiers.size() == 1 ? classifiers[0] : classifiers[i];
    RowVector row = softmax(logits_of(reduced.row(i), c));
    if (i == 0) probs.resize(p, row.size());
    if (row.size() != probs.cols()) throw ShapeError("classifiers disagree on class count");
    probs.row(i) = row;
  }
  return probs;
}

RowVector variant1_head(const Matrix& reduced, const ClassifierMap& classifier) {
  if (reduced.rows() < 1) throw ShapeError("variant1 head needs at least one part");
  return softmax(logits_of(reduced.colwise().mean(), classifier));
}

RowVector ide_head(const ActivationTensor& t, const IdeParams& params) {
  const Matrix pooled = t.fibers().colwise().mean();
  const Matrix h = reduce_dim(pooled, std::span<const ReductionMap>(&params.reduction, 1));
  return softmax(logits_of(h.row(0), params.classifier));
}

}  // namespace pcb::partition
