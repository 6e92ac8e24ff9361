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

#include "pcb/layers.hpp"

#include <cmath>
#include <cstring>

namespace pcb {

ActivationTensor FeatureBatch::sample(int b) const {
  const Eigen::Index n = locations();
  return ActivationTensor(rows, cols, Matrix(data.middleRows(b * n, n)));
}

FeatureBatch FeatureBatch::stack(const std::vector<ActivationTensor>& tensors) {
  if (tensors.empty()) throw ShapeError("cannot stack an empty batch");
  FeatureBatch out;
  out.batch = static_cast<int>(tensors.size());
  out.rows = tensors.front().rows();
  out.cols = tensors.front().cols();
  const Eigen::Index n = out.locations();
  out.data.resize(n * out.batch, tensors.front().channels());
  for (int b = 0; b < out.batch; ++b) {
    if (tensors[b].shape() != tensors.front().shape()) throw ShapeError("batch members differ in shape");
    out.data.middleRows(b * n, n) = tensors[b].fibers();
  }
  return out;
}

namespace layers {

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace

Conv3x3::Conv3x3(std::string name, int in_channels, int out_channels, int stride)
    : name_(std::move(name)), in_(in_channels), out_(out_channels), stride_(stride) {
  if (in_ < 1 || out_ < 1) throw ShapeError(name_ + ": channel counts must be positive");
  if (stride_ != 1 && stride_ != 2) throw ConfigError(name_ + ": stride must be 1 or 2");
}

void Conv3x3::register_params(ParamStore& store, std::mt19937_64& rng) const {
  store.add(name_ + ".weight", gaussian(9 * in_, out_, std::sqrt(2.0 / (9.0 * in_)), rng));
}

void Conv3x3::bind(ParamStore& store) { weight_ = &store.at(name_ + ".weight"); }

FeatureBatch Conv3x3::forward(const FeatureBatch& x, bool keep_cache) {
  if (x.channels() != in_) throw ShapeError(name_ + ": input channel mismatch");
  const int ho = (x.rows - 1) / stride_ + 1;
  const int wo = (x.cols - 1) / stride_ + 1;
  const Eigen::Index out_locations = static_cast<Eigen::Index>(ho) * wo;
  Matrix cols = Matrix::Zero(out_locations * x.batch, 9 * in_);
  const Eigen::Index in_locations = x.locations();
  for (int b = 0; b < x.batch; ++b) {
    const double* src = x.data.data() + b * in_locations * in_;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        double* dst = cols.data() + (b * out_locations + oy * wo + ox) * 9 * in_;
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * stride_ + ky - 1;
          if (iy < 0 || iy >= x.rows) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * stride_ + kx - 1;
            if (ix < 0 || ix >= x.cols) continue;
            std::memcpy(dst + (ky * 3 + kx) * in_, src + (iy * x.cols + ix) * in_, sizeof(double) * in_);
          }
        }
      }
    }
  }
  FeatureBatch y;
  y.batch = x.batch;
  y.rows = ho;
  y.cols = wo;
  y.data.noalias() = cols * weight_->value;
  if (keep_cache) {
    cols_ = std::move(cols);
    in_rows_ = x.rows;
    in_cols_ = x.cols;
    batch_ = x.batch;
  } else {
    cols_.resize(0, 0);
  }
  return y;
}

FeatureBatch Conv3x3::backward(const FeatureBatch& dy, bool want_input_grad) {
  if (cols_.size() == 0) throw ConfigError(name_ + ": backward without cached forward");
  weight_->grad.noalias() += cols_.transpose() * dy.data;
  FeatureBatch dx;
  if (!want_input_grad) return dx;
  const Matrix dcols = dy.data * weight_->value.transpose();
  dx.batch = batch_;
  dx.rows = in_rows_;
  dx.cols = in_cols_;
  const Eigen::Index in_locations = static_cast<Eigen::Index>(in_rows_) * in_cols_;
  const Eigen::Index out_locations = static_cast<Eigen::Index>(dy.rows) * dy.cols;
  dx.data = Matrix::Zero(in_locations * batch_, in_);
  for (int b = 0; b < batch_; ++b) {
    double* dst = dx.data.data() + b * in_locations * in_;
    for (int oy = 0; oy < dy.rows; ++oy) {
      for (int ox = 0; ox < dy.cols; ++ox) {
        const double* src = dcols.data() + (b * out_locations + oy * dy.cols + ox) * 9 * in_;
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * stride_ + ky - 1;
          if (iy < 0 || iy >= in_rows_) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * stride_ + kx - 1;
            if (ix < 0 || ix >= in_cols_) continue;
            double* d = dst + (iy * in_cols_ + ix) * in_;
            const double* s = src + (ky * 3 + kx) * in_;
            for (int c = 0; c < in_; ++c) d[c] += s[c];
          }
        }
      }
    }
  }
  return dx;
}

BatchNorm::BatchNorm(std::string name, int channels) : name_(std::move(name)), channels_(channels) {
  if (channels_ < 1) throw ShapeError(name_ + ": channel count must be positive");
}

void BatchNorm::register_params(ParamStore& store) const {
  store.add(name_ + ".gamma", Matrix::Ones(1, channels_));
  store.add(name_ + ".beta", Matrix::Zero(1, channels_));
  store.add_buffer(name_ + ".running_mean", Matrix::Zero(1, channels_));
  store.add_buffer(name_ + ".running_var", Matrix::Ones(1, channels_));
}

void BatchNorm::bind(ParamStore& store) {
  gamma_ = &store.at(name_ + ".gamma");
  beta_ = &store.at(name_ + ".beta");
  running_mean_ = &store.buffer(name_ + ".running_mean");
  running_var_ = &store.buffer(name_ + ".running_var");
}

Matrix BatchNorm::forward(const Matrix& x, NormMode mode, bool keep_cache) {
  if (x.cols() != channels_) throw ShapeError(name_ + ": channel mismatch");
  RowVector mean;
  RowVector var;
  if (mode == NormMode::kBatch) {
    if (x.rows() < 2) throw ShapeError(name_ + ": batch statistics need at least 2 rows");
    mean = x.colwise().mean();
    var = (x.rowwise() - mean).array().square().colwise().mean().matrix();
    const double n = static_cast<double>(x.rows());
    *running_mean_ = (1.0 - kMomentum) * *running_mean_ + kMomentum * mean;
    *running_var_ = (1.0 - kMomentum) * *running_var_ + kMomentum * var * (n / (n - 1.0));
  } else {
    mean = *running_mean_;
    var = *running_var_;
  }
  RowVector inv_std = (var.array() + kEpsilon).rsqrt().matrix();
  Matrix xhat = (x.rowwise() - mean).array().rowwise() * inv_std.array();
  Matrix y = (xhat.array().rowwise() * gamma_->value.row(0).array()).rowwise() + beta_->value.row(0).array();
  if (keep_cache) {
    xhat_ = std::move(xhat);
    inv_std_ = std::move(inv_std);
    mode_ = mode;
  }
  return y;
}

Matrix BatchNorm::backward(const Matrix& dy) {
  gamma_->grad.row(0) += (dy.array() * xhat_.array()).colwise().sum().matrix();
  beta_->grad.row(0) += dy.colwise().sum();
  const RowVector scale = (gamma_->value.row(0).array() * inv_std_.array()).matrix();
  if (mode_ == NormMode::kRunning) {
    return dy.array().rowwise() * scale.array();
  }
  const double n = static_cast<double>(dy.rows());
  const RowVector sum_dy = dy.colwise().sum();
  const RowVector sum_dy_xhat = (dy.array() * xhat_.array()).colwise().sum().matrix();
  Matrix centered = (n * dy.array()).rowwise() - sum_dy.array();
  centered.array() -= xhat_.array().rowwise() * sum_dy_xhat.array();
  return (centered.array().rowwise() * (scale.array() / n)).matrix();
}

Linear::Linear(std::string name, int in_features, int out_features, bool bias, double init_std)
    : name_(std::move(name)), in_(in_features), out_(out_features), has_bias_(bias), init_std_(init_std) {
  if (in_ < 1 || out_ < 1) throw ShapeError(name_ + ": feature counts must be positive");
}

void Linear::register_params(ParamStore& store, std::mt19937_64& rng) const {
  store.add(name_ + ".weight", gaussian(out_, in_, init_std_, rng));
  if (has_bias_) store.add(name_ + ".bias", Matrix::Zero(1, out_));
}

void Linear::bind(ParamStore& store) {
  weight_ = &store.at(name_ + ".weight");
  bias_ = has_bias_ ? &store.at(name_ + ".bias") : nullptr;
}

Matrix Linear::forward(const Matrix& x) const {
  if (x.cols() != in_) throw ShapeError(name_ + ": input dimension mismatch");
  Matrix y = x * weight_->value.transpose();
  if (bias_ != nullptr) y.rowwise() += bias_->value.row(0);
  return y;
}

Matrix Linear::backward(const Matrix& x, const Matrix& dy) {
  weight_->grad.noalias() += dy.transpose() * x;
  if (bias_ != nullptr) bias_->grad.row(0) += dy.colwise().sum();
  return dy * weight_->value;
}

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

Matrix relu_backward(const Matrix& y, const Matrix& dy) {
  return (y.array() > 0.0).select(dy, 0.0);
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out = logits.colwise() - logits.rowwise().maxCoeff();
  out = out.array().exp();
  out.array().colwise() /= out.rowwise().sum().array();
  return out;
}

}  // namespace layers
}  // namespace pcb
