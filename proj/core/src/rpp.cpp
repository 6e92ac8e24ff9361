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

#include "pcb/rpp.hpp"

#include "pcb/layers.hpp"
#include "pcb/partition.hpp"

namespace pcb::rpp {

PartAssignment assign(const ActivationTensor& t, const PartClassifierParams& classifier) {
  if (classifier.weight.cols() != t.channels()) {
    throw ShapeError("part classifier expects " + std::to_string(classifier.weight.cols()) + " channels, tensor has " +
                     std::to_string(t.channels()));
  }
  if (classifier.weight.rows() < 1) throw ShapeError("part classifier needs at least one part");
  Matrix logits = t.fibers() * classifier.weight.transpose();
  if (classifier.bias.size() != 0) {
    if (classifier.bias.size() != classifier.weight.rows()) throw ShapeError("part classifier bias mismatch");
    logits.rowwise() += classifier.bias;
  }
  const Matrix shifted = logits.colwise() - logits.rowwise().maxCoeff();
  if (!shifted.allFinite()) throw NumericError("non-finite part classifier logits");
  return {t.rows(), t.cols(), layers::softmax_rows(logits)};
}

PartAssignment stripe_assignment(int rows, int cols, int parts) {
  if (parts < 1 || rows < 1 || cols < 1 || rows % parts != 0) {
    throw ShapeError("stripe assignment needs rows divisible by parts");
  }
  PartAssignment a{rows, cols, Matrix::Zero(static_cast<Eigen::Index>(rows) * cols, parts)};
  for (int m = 0; m < rows; ++m) {
    const int stripe = partition::stripe_of_row(m, rows, parts);
    for (int n = 0; n < cols; ++n) a.probs(m * cols + n, stripe) = 1.0;
  }
  return a;
}

SoftPoolResult soft_pool(const ActivationTensor& t, const PartAssignment& a, const SoftPoolOptions& options) {
  if (a.rows != t.rows() || a.cols != t.cols() || a.probs.rows() != t.locations()) {
    throw ShapeError("assignment and tensor disagree on spatial shape");
  }
  SoftPoolResult out;
  out.parts = a.probs.transpose() * t.fibers();
  const RowVector mass = a.masses();
  out.empty.assign(a.parts(), false);
  for (int i = 0; i < a.parts(); ++i) {
    if (mass(i) < options.epsilon) {
      out.empty[i] = true;
      ++out.empty_count;
      out.parts.row(i).setZero();
    } else if (options.normalize) {
      out.parts.row(i) /= mass(i);
    } else {
      out.parts.row(i) /= static_cast<double>(t.locations());
    }
  }
  return out;
}

SoftPoolGrad soft_pool_backward(const ActivationTensor& t, const PartAssignment& a, const SoftPoolResult& forward,
                                const Matrix& grad_parts, const SoftPoolOptions& options) {
  const int p = a.parts();
  const RowVector mass = a.masses();
  // Per-part scale applied to the weighted sum; zero for empty parts.
  Matrix scaled = grad_parts;
  for (int i = 0; i < p; ++i) {
    if (forward.empty[i]) {
      scaled.row(i).setZero();
    } else {
      scaled.row(i) /= options.normalize ? mass(i) : static_cast<double>(t.locations());
    }
  }
  SoftPoolGrad grad;
  grad.tensor = a.probs * scaled;
  grad.assignment = t.fibers() * scaled.transpose();
  if (options.normalize) {
    // d(sum / mass)/d mass contributes -(g_i . dg_i) / mass_i to every location.
    for (int i = 0; i < p; ++i) {
      if (forward.empty[i]) continue;
      const double correction = forward.parts.row(i).dot(scaled.row(i));
      grad.assignment.col(i).array() -= correction;
    }
  }
  return grad;
}

Matrix assign_backward(const PartAssignment& a, const Matrix& grad_probs) {
  const Eigen::VectorXd inner = (grad_probs.array() * a.probs.array()).rowwise().sum();
  return (a.probs.array() * (grad_probs.colwise() - inner).array()).matrix();
}

}  // namespace pcb::rpp
