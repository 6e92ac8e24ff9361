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

#include "pcb/backbone.hpp"

#include <string>

namespace pcb::backbone {

BackboneConfig BackboneConfig::toy() {
  BackboneConfig c;
  c.stages = {{8, 1}, {16, 2}, {32, 2}, {64, 2}};
  c.halve_last_downsample = true;
  c.input_height = 48;
  c.input_width = 16;
  return c;
}

std::vector<int> BackboneConfig::effective_strides() const {
  std::vector<int> strides;
  strides.reserve(stages.size());
  for (const auto& s : stages) strides.push_back(s.downsample);
  if (halve_last_downsample) {
    for (auto it = strides.rbegin(); it != strides.rend(); ++it) {
      if (*it == 2) {
        *it = 1;
        break;
      }
    }
  }
  return strides;
}

int BackboneConfig::total_downsample() const {
  int d = 1;
  for (int s : effective_strides()) d *= s;
  return d;
}

int BackboneConfig::output_channels() const { return stages.empty() ? input_channels : stages.back().out_channels; }

TensorShape output_shape(const BackboneConfig& config) {
  if (config.stages.empty()) throw ShapeError("backbone needs at least one stage");
  for (const auto& s : config.stages) {
    if (s.out_channels < 1) throw ShapeError("stage channel count must be positive");
    if (s.downsample != 1 && s.downsample != 2) throw ShapeError("stage downsample must be 1 or 2");
  }
  if (config.input_height < 1 || config.input_width < 1) throw ShapeError("input size must be positive");
  const int d = config.total_downsample();
  if (config.input_height % d != 0 || config.input_width % d != 0) {
    throw ShapeError("input " + std::to_string(config.input_height) + "x" + std::to_string(config.input_width) +
                     " is not divisible by the down-sampling factor " + std::to_string(d));
  }
  return {config.input_height / d, config.input_width / d, config.output_channels()};
}

Backbone::Backbone(BackboneConfig config, std::string prefix) : config_(std::move(config)), prefix_(std::move(prefix)) {
  output_shape(config_);
  const auto strides = config_.effective_strides();
  int in = config_.input_channels;
  for (std::size_t i = 0; i < config_.stages.size(); ++i) {
    const std::string name = prefix_ + ".stage" + std::to_string(i);
    const int out = config_.stages[i].out_channels;
    stages_.push_back({layers::Conv3x3(name + ".conv", in, out, strides[i]), layers::BatchNorm(name + ".bn", out), {}});
    in = out;
  }
}

void Backbone::register_params(ParamStore& store, std::mt19937_64& rng) const {
  for (const auto& s : stages_) {
    s.conv.register_params(store, rng);
    s.norm.register_params(store);
  }
}

void Backbone::bind(ParamStore& store) {
  for (auto& s : stages_) {
    s.conv.bind(store);
    s.norm.bind(store);
  }
}

FeatureBatch Backbone::forward(const std::vector<const Image*>& images, NormMode mode, bool keep_cache) {
  if (images.empty()) throw ShapeError("empty image batch");
  FeatureBatch x;
  x.batch = static_cast<int>(images.size());
  x.rows = config_.input_height;
  x.cols = config_.input_width;
  const Eigen::Index n = x.locations();
  x.data.resize(n * x.batch, config_.input_channels);
  for (int b = 0; b < x.batch; ++b) {
    const Image& im = *images[b];
    if (im.height != config_.input_height || im.width != config_.input_width) {
      throw ShapeError("image is " + std::to_string(im.height) + "x" + std::to_string(im.width) + ", backbone expects " +
                       std::to_string(config_.input_height) + "x" + std::to_string(config_.input_width));
    }
    x.data.middleRows(b * n, n) = im.pixels;
  }
  for (auto& s : stages_) {
    FeatureBatch y = s.conv.forward(x, keep_cache);
    y.data = layers::relu(s.norm.forward(y.data, mode, keep_cache));
    if (keep_cache) s.output = y.data;
    x = std::move(y);
  }
  if (!x.data.allFinite()) throw NumericError("backbone produced non-finite activations");
  return x;
}

void Backbone::backward(const FeatureBatch& grad_output) {
  FeatureBatch grad = grad_output;
  for (std::size_t i = stages_.size(); i-- > 0;) {
    auto& s = stages_[i];
    grad.data = s.norm.backward(layers::relu_backward(s.output, grad.data));
    grad = s.conv.backward(grad, i > 0);
  }
}

ActivationTensor Backbone::forward(const Image& image, NormMode mode) {
  return forward(std::vector<const Image*>{&image}, mode, false).sample(0);
}

}  // namespace pcb::backbone
