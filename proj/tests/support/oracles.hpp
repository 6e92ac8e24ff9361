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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "pcb/retrieval.hpp"

namespace pcb::testing {

/// Brute-force single-query cross-camera CMC/mAP for descriptors with
/// integer-valued components. Cosine similarities are compared exactly in
/// integer arithmetic, so ties are detected without rounding.
struct OracleResult {
  std::vector<double> cmc;
  double map = 0.0;
  int evaluated = 0;
  int skipped = 0;
};

namespace detail {

inline std::int64_t to_int(double v) { return static_cast<std::int64_t>(std::llround(v)); }

inline std::int64_t idot(const RowVector& a, const RowVector& b) {
  std::int64_t s = 0;
  for (Eigen::Index k = 0; k < a.size(); ++k) s += to_int(a[k]) * to_int(b[k]);
  return s;
}

/// Sign-preserving cos^2 as a fraction num / den with den = |q|^2 |g|^2.
struct CosKey {
  std::int64_t dot;
  std::int64_t norm2;

  /// *this > other in cosine similarity.
  bool greater(const CosKey& o) const {
    // cos = dot / sqrt(norm2 * q2); q2 cancels.
    if ((dot >= 0) != (o.dot >= 0)) return dot >= 0;
    const __int128 lhs = static_cast<__int128>(dot) * dot * o.norm2;
    const __int128 rhs = static_cast<__int128>(o.dot) * o.dot * norm2;
    return dot >= 0 ? lhs > rhs : lhs < rhs;
  }
  bool equal(const CosKey& o) const { return !greater(o) && !o.greater(*this); }
};

}  // namespace detail

inline OracleResult brute_force_evaluate(const std::vector<retrieval::LabeledDescriptor>& queries,
                                         const std::vector<retrieval::LabeledDescriptor>& gallery, int max_rank) {
  OracleResult out;
  out.cmc.assign(static_cast<std::size_t>(max_rank), 0.0);
  double ap_sum = 0.0;
  for (const auto& q : queries) {
    struct Item {
      detail::CosKey key;
      int identity;
      int camera;
      std::string path;
      std::size_t index;
    };
    std::vector<Item> items;
    for (std::size_t i = 0; i < gallery.size(); ++i) {
      const auto& g = gallery[i];
      items.push_back({{detail::idot(q.descriptor.values, g.descriptor.values),
                        detail::idot(g.descriptor.values, g.descriptor.values)},
                       g.identity, g.camera, g.path, i});
    }
    // Selection sort: repeatedly pick the best remaining item.
    std::vector<Item> ranked;
    while (!items.empty()) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < items.size(); ++i) {
        const Item& a = items[i];
        const Item& b = items[best];
        bool better = false;
        if (a.key.greater(b.key)) {
          better = true;
        } else if (a.key.equal(b.key)) {
          better = std::tie(a.identity, a.camera, a.path, a.index) < std::tie(b.identity, b.camera, b.path, b.index);
        }
        if (better) best = i;
      }
      ranked.push_back(items[best]);
      items.erase(items.begin() + static_cast<std::ptrdiff_t>(best));
    }
    std::vector<bool> hits;
    for (const Item& it : ranked) {
      if (it.identity == q.identity && it.camera == q.camera) continue;
      hits.push_back(it.identity == q.identity && it.identity >= 0);
    }
    int total = 0;
    for (bool h : hits) total += h ? 1 : 0;
    if (total == 0) {
      ++out.skipped;
      continue;
    }
    ++out.evaluated;
    std::size_t first = hits.size();
    for (std::size_t i = 0; i < hits.size(); ++i) {
      if (hits[i]) {
        first = i;
        break;
      }
    }
    for (int k = 1; k <= max_rank; ++k) {
      if (first < static_cast<std::size_t>(k)) out.cmc[static_cast<std::size_t>(k - 1)] += 1.0;
    }
    double precision_sum = 0.0;
    for (std::size_t i = 0; i < hits.size(); ++i) {
      if (!hits[i]) continue;
      int correct = 0;
      for (std::size_t j = 0; j <= i; ++j) correct += hits[j] ? 1 : 0;
      precision_sum += static_cast<double>(correct) / static_cast<double>(i + 1);
    }
    ap_sum += precision_sum / total;
  }
  if (out.evaluated > 0) {
    for (double& c : out.cmc) c /= out.evaluated;
    out.map = ap_sum / out.evaluated;
  }
  return out;
}

}  // namespace pcb::testing
