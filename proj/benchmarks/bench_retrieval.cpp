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

#include "pcb/retrieval.hpp"

namespace {

using pcb::retrieval::DescriptorKind;
using pcb::retrieval::LabeledDescriptor;

std::vector<LabeledDescriptor> random_rows(int count, int dim, int identities, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  std::uniform_int_distribution<int> id(0, identities - 1);
  std::uniform_int_distribution<int> cam(0, 5);
  std::vector<LabeledDescriptor> rows;
  for (int i = 0; i < count; ++i) {
    pcb::retrieval::Descriptor d;
    d.kind = DescriptorKind::kH;
    d.parts = 6;
    d.per_part_dim = dim / 6;
    d.values.resize(dim);
    for (int k = 0; k < dim; ++k) d.values[k] = n(rng);
    rows.push_back({std::move(d), id(rng), cam(rng), "img" + std::to_string(i)});
  }
  return rows;
}

void BM_Evaluate(benchmark::State& state) {
  const int gallery_size = static_cast<int>(state.range(0));
  const auto gallery = random_rows(gallery_size, 1536, 100, 1);
  const auto queries = random_rows(100, 1536, 100, 2);
  pcb::retrieval::GalleryIndex index(DescriptorKind::kH);
  for (const auto& g : gallery) index.add(g);
  const std::vector<int> ranks{1, 5, 10};
  for (auto _ : state) benchmark::DoNotOptimize(pcb::retrieval::evaluate(queries, index, ranks, nullptr));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(queries.size()));
}
BENCHMARK(BM_Evaluate)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

}  // namespace
