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

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <span>
#include <string>
#include <vector>

#include "pcb/ingest.hpp"
#include "pcb/model.hpp"

namespace pcb::retrieval {

/// G concatenates pooled part vectors, H the reduced ones.
enum class DescriptorKind { kG, kH };

std::string to_string(DescriptorKind kind);
DescriptorKind descriptor_kind_from_string(const std::string& name);

enum class Metric { kCosine, kEuclidean };

std::string to_string(Metric metric);
Metric metric_from_string(const std::string& name);

struct Descriptor {
  RowVector values;
  DescriptorKind kind = DescriptorKind::kH;
  int parts = 0;
  int per_part_dim = 0;

  int dim() const { return static_cast<int>(values.size()); }
  friend bool operator==(const Descriptor& a, const Descriptor& b) {
    return a.kind == b.kind && a.parts == b.parts && a.per_part_dim == b.per_part_dim && a.values == b.values;
  }
};

/// Concatenates part rows top to bottom.
Descriptor make_descriptor(const Inference& inference, DescriptorKind kind);

/// `image` must already be normalized; no flip is applied.
Descriptor extract_descriptor(Model& model, const Image& image, DescriptorKind kind);
std::vector<Descriptor> extract_descriptors(Model& model, std::span<const Image* const> images, DescriptorKind kind);

struct LabeledDescriptor {
  Descriptor descriptor;
  int identity = 0;
  int camera = 0;
  std::string path;
};

/// Immutable-after-build gallery of same-kind, same-dimension descriptors.
class GalleryIndex {
 public:
  explicit GalleryIndex(DescriptorKind kind, Metric metric = Metric::kCosine);

  /// Throws ConfigError on kind/dimension mismatch, DataError on a zero-norm
  /// descriptor under the cosine metric.
  void add(LabeledDescriptor entry);

  DescriptorKind kind() const { return kind_; }
  Metric metric() const { return metric_; }
  int dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<LabeledDescriptor>& entries() const { return entries_; }

  /// Similarity of the query to every entry (negated distance for Euclidean).
  std::vector<double> similarities(const Descriptor& query) const;

 private:
  DescriptorKind kind_;
  Metric metric_;
  int dim_ = -1;
  std::vector<LabeledDescriptor> entries_;
  std::vector<double> norms_;
};

/// Gallery indices by descending similarity; ties broken by the canonical
/// (identity, camera, path) key, then by position.
std::vector<int> rank(const Descriptor& query, const GalleryIndex& index);

struct EvalResult {
  /// cmc[k - 1] for k = 1..max rank.
  std::vector<double> cmc;
  double map = 0.0;
  int evaluated = 0;
  int skipped = 0;
  std::vector<std::string> skipped_queries;

  double cmc_at(int k) const;
  /// {"cmc": {"1": ...}, "mAP": ..., "evaluated": n, "skipped": m}
  std::string to_json(std::span<const int> ranks) const;
};

/// Single-query cross-camera protocol: same identity and same camera entries
/// are dropped, identity -1 never counts as a match, queries without any
/// remaining match are skipped and reported on `warnings` (null: silent).
EvalResult evaluate(std::span<const LabeledDescriptor> queries, const GalleryIndex& index, std::span<const int> ranks,
                    std::ostream* warnings = &std::cerr);

/// One entry per sample of `split`, in manifest order. Throws DataError when the split is empty.
std::vector<LabeledDescriptor> describe_split(const ingest::DatasetManifest& manifest, ingest::Split split,
                                              Model& model, DescriptorKind kind,
                                              const ingest::ChannelStats& normalization);

GalleryIndex build_index(const ingest::DatasetManifest& manifest, Model& model, DescriptorKind kind,
                         const ingest::ChannelStats& normalization, Metric metric = Metric::kCosine);

/// Raw little-endian float64 rows plus a JSON sidecar (kind, p,
/// per_part_dim, count, checkpoint hash and per-row labels).
void write_descriptors(std::span<const LabeledDescriptor> rows, const std::filesystem::path& bin_path,
                       const std::filesystem::path& sidecar_path, const std::string& checkpoint_hash);
std::vector<LabeledDescriptor> read_descriptors(const std::filesystem::path& bin_path,
                                                const std::filesystem::path& sidecar_path);

}  // namespace pcb::retrieval
