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

#include "pcb/partition.hpp"
#include "pcb/rpp.hpp"

namespace {

pcb::ActivationTensor random_tensor(int rows, int cols, int channels) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  pcb::Matrix m(rows * cols, channels);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
  return pcb::ActivationTensor(rows, cols, m);
}

void BM_UniformPool(benchmark::State& state) {
  const auto t = random_tensor(24, 8, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(pcb::partition::uniform_pool(t, 6));
}
BENCHMARK(BM_UniformPool)->Arg(64)->Arg(2048);

void BM_AssignSoftPool(benchmark::State& state) {
  const int channels = static_cast<int>(state.range(0));
  const auto t = random_tensor(24, 8, channels);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 0.1);
  pcb::Matrix w(6, channels);
  for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = n(rng);
  const pcb::rpp::PartClassifierParams weights{w, {}};
  for (auto _ : state) {
    const auto a = pcb::rpp::assign(t, weights);
    benchmark::DoNotOptimize(pcb::rpp::soft_pool(t, a));
  }
}
BENCHMARK(BM_AssignSoftPool)->Arg(64)->Arg(2048);

}  // namespace
