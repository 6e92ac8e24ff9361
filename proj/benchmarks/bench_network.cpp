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

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "pcb/layers.hpp"
#include "pcb/model.hpp"
#include "pcb/params.hpp"

namespace {

pcb::Image random_image(int height, int width, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  pcb::Image im(height, width);
  for (Eigen::Index k = 0; k < im.pixels.size(); ++k) im.pixels.data()[k] = u(rng);
  return im;
}

void BM_Conv3x3Forward(benchmark::State& state) {
  const int channels = static_cast<int>(state.range(0));
  pcb::ParamStore store;
  std::mt19937_64 rng(1);
  pcb::layers::Conv3x3 conv("conv", channels, channels, 1);
  conv.register_params(store, rng);
  conv.bind(store);
  std::normal_distribution<double> n;
  pcb::FeatureBatch x{8, 24, 8, pcb::Matrix(8 * 24 * 8, channels)};
  for (Eigen::Index k = 0; k < x.data.size(); ++k) x.data.data()[k] = n(rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x, false));
}
BENCHMARK(BM_Conv3x3Forward)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_ModelInfer(benchmark::State& state) {
  pcb::ModelConfig config;
  config.head.parts = 6;
  config.head.num_classes = 32;
  config.rpp.enabled = state.range(0) != 0;
  pcb::Model model(config, 3);
  std::mt19937_64 rng(4);
  std::vector<pcb::Image> images;
  for (int i = 0; i < 16; ++i) images.push_back(random_image(48, 16, rng));
  std::vector<const pcb::Image*> batch;
  for (const auto& im : images) batch.push_back(&im);
  for (auto _ : state) benchmark::DoNotOptimize(model.infer(batch));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(batch.size()));
}
BENCHMARK(BM_ModelInfer)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_TrainPass(benchmark::State& state) {
  pcb::ModelConfig config;
  config.head.parts = 6;
  config.head.num_classes = 32;
  pcb::Model model(config, 5);
  std::mt19937_64 rng(6);
  std::vector<pcb::Image> images;
  std::vector<int> labels;
  for (int i = 0; i < 32; ++i) {
    images.push_back(random_image(48, 16, rng));
    labels.push_back(i);
  }
  std::vector<const pcb::Image*> batch;
  for (const auto& im : images) batch.push_back(&im);
  const pcb::PassOptions options{pcb::NormMode::kBatch, pcb::NormMode::kBatch, false, true};
  for (auto _ : state) {
    model.params().zero_grad();
    benchmark::DoNotOptimize(model.train_pass(batch, labels, options, rng));
  }
}
BENCHMARK(BM_TrainPass)->Unit(benchmark::kMillisecond);

}  // namespace
