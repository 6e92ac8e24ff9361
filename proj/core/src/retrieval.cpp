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

#include "pcb/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <tuple>

namespace pcb::retrieval {

std::string to_string(DescriptorKind kind) { return kind == DescriptorKind::kG ? "G" : "H"; }

DescriptorKind descriptor_kind_from_string(const std::string& name) {
  if (name == "G" || name == "g") return DescriptorKind::kG;
  if (name == "H" || name == "h") return DescriptorKind::kH;
  throw ConfigError("descriptor kind must be G or H, got " + name);
}

std::string to_string(Metric metric) { return metric == Metric::kCosine ? "cosine" : "euclidean"; }

Metric metric_from_string(const std::string& name) {
  if (name == "cosine") return Metric::kCosine;
  if (name == "euclidean") return Metric::kEuclidean;
  throw ConfigError("metric must be cosine or euclidean, got " + name);
}

Descriptor make_descriptor(const Inference& inference, DescriptorKind kind) {
  const Matrix& parts = kind == DescriptorKind::kG ? inference.pooled : inference.reduced;
  Descriptor d;
  d.kind = kind;
  d.parts = static_cast<int>(parts.rows());
  d.per_part_dim = static_cast<int>(parts.cols());
  // Row-major storage: the flat buffer is already part 1..p concatenated.
  d.values = Eigen::Map<const RowVector>(parts.data(), parts.size());
  return d;
}

Descriptor extract_descriptor(Model& model, const Image& image, DescriptorKind kind) {
  return make_descriptor(model.infer(image), kind);
}

std::vector<Descriptor> extract_descriptors(Model& model, std::span<const Image* const> images, DescriptorKind kind) {
  std::vector<Descriptor> out;
  out.reserve(images.size());
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < images.size(); start += kChunk) {
    const auto chunk = images.subspan(start, std::min(kChunk, images.size() - start));
    for (const auto& inf : model.infer(chunk)) out.push_back(make_descriptor(inf, kind));
  }
  return out;
}

GalleryIndex::GalleryIndex(DescriptorKind kind, Metric metric) : kind_(kind), metric_(metric) {}

void GalleryIndex::add(LabeledDescriptor entry) {
  const Descriptor& d = entry.descriptor;
  if (d.kind != kind_) throw ConfigError("gallery of kind " + to_string(kind_) + " cannot take a " + to_string(d.kind) + " descriptor");
  if (d.dim() != d.parts * d.per_part_dim) throw ShapeError("descriptor length does not equal parts x per_part_dim");
  if (dim_ >= 0 && d.dim() != dim_) {
    throw ShapeError("descriptor dimension " + std::to_string(d.dim()) + " differs from gallery dimension " + std::to_string(dim_));
  }
  if (!d.values.allFinite()) throw NumericError("non-finite gallery descriptor: " + entry.path);
  const double norm = d.values.norm();
  if (metric_ == Metric::kCosine && norm == 0.0) throw DataError("zero-norm gallery descriptor: " + entry.path);
  dim_ = d.dim();
  norms_.push_back(norm);
  entries_.push_back(std::move(entry));
}

std::vector<double> GalleryIndex::similarities(const Descriptor& query) const {
  if (query.kind != kind_) throw ConfigError("query kind " + to_string(query.kind) + " differs from gallery kind " + to_string(kind_));
  if (dim_ >= 0 && query.dim() != dim_) throw ShapeError("query dimension differs from gallery dimension");
  std::vector<double> sims(entries_.size());
  if (metric_ == Metric::kCosine) {
    const double norm = query.values.norm();
    if (norm == 0.0) throw DataError("zero-norm query descriptor");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      sims[i] = entries_[i].descriptor.values.dot(query.values) / norms_[i] / norm;
    }
  } else {
    for (std::size_t i = 0; i < entries_.size(); ++i) sims[i] = -(entries_[i].descriptor.values - query.values).norm();
  }
  return sims;
}

std::vector<int> rank(const Descriptor& query, const GalleryIndex& index) {
  const std::vector<double> sims = index.similarities(query);
  const auto& entries = index.entries();
  std::vector<int> order(entries.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    const auto& ea = entries[a];
    const auto& eb = entries[b];
    return std::tie(ea.identity, ea.camera, ea.path, a) < std::tie(eb.identity, eb.camera, eb.path, b);
  });
  return order;
}

double EvalResult::cmc_at(int k) const {
  if (k < 1) throw ConfigError("CMC rank must be at least 1");
  if (cmc.empty()) return 0.0;
  return cmc[std::min<std::size_t>(k, cmc.size()) - 1];
}

std::string EvalResult::to_json(std::span<const int> ranks) const {
  nlohmann::ordered_json j;
  j["cmc"] = nlohmann::ordered_json::object();
  for (int k : ranks) j["cmc"][std::to_string(k)] = cmc_at(k);
  j["mAP"] = map;
  j["evaluated"] = evaluated;
  j["skipped"] = skipped;
  return j.dump(2);
}

EvalResult evaluate(std::span<const LabeledDescriptor> queries, const GalleryIndex& index, std::span<const int> ranks,
                    std::ostream* warnings) {
  if (ranks.empty()) throw ConfigError("at least one CMC rank is required");
  for (int k : ranks) {
    if (k < 1) throw ConfigError("CMC ranks must be positive");
  }
  const int max_rank = *std::max_element(ranks.begin(), ranks.end());
  EvalResult result;
  result.cmc.assign(max_rank, 0.0);
  double ap_sum = 0.0;
  const auto& entries = index.entries();
  for (const auto& q : queries) {
    const std::vector<int> order = rank(q.descriptor, index);
    int position = 0;
    int hits = 0;
    int first_hit = 0;
    double precision_sum = 0.0;
    for (int g : order) {
      const auto& e = entries[g];
      if (e.identity == q.identity && e.camera == q.camera) continue;
      ++position;
      if (e.identity >= 0 && e.identity == q.identity) {
        ++hits;
        if (first_hit == 0) first_hit = position;
        precision_sum += static_cast<double>(hits) / position;
      }
    }
    if (hits == 0) {
      ++result.skipped;
      result.skipped_queries.push_back(q.path);
      continue;
    }
    ++result.evaluated;
    ap_sum += precision_sum / hits;
    for (int k = first_hit; k <= max_rank; ++k) result.cmc[k - 1] += 1.0;
  }
  if (result.skipped > 0 && warnings != nullptr) {
    *warnings << "warning: " << result.skipped << " queries without a cross-camera match were skipped\n";
  }
  if (result.evaluated > 0) {
    for (double& c : result.cmc) c /= result.evaluated;
    result.map = ap_sum / result.evaluated;
  }
  return result;
}

std::vector<LabeledDescriptor> describe_split(const ingest::DatasetManifest& manifest, ingest::Split split,
                                              Model& model, DescriptorKind kind,
                                              const ingest::ChannelStats& normalization) {
  const auto samples = manifest.split(split);
  if (samples.empty()) throw DataError("dataset has an empty " + ingest::to_string(split) + " split");
  std::vector<Image> images;
  images.reserve(samples.size());
  for (const auto* s : samples) images.push_back(ingest::normalize(s->pixels, normalization));
  std::vector<const Image*> ptrs;
  for (const auto& im : images) ptrs.push_back(&im);
  std::vector<Descriptor> descriptors = extract_descriptors(model, ptrs, kind);
  std::vector<LabeledDescriptor> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.push_back({std::move(descriptors[i]), samples[i]->identity, samples[i]->camera, samples[i]->relative_path});
  }
  return out;
}

GalleryIndex build_index(const ingest::DatasetManifest& manifest, Model& model, DescriptorKind kind,
                         const ingest::ChannelStats& normalization, Metric metric) {
  GalleryIndex index(kind, metric);
  for (auto& entry : describe_split(manifest, ingest::Split::kGallery, model, kind, normalization)) {
    index.add(std::move(entry));
  }
  return index;
}

void write_descriptors(std::span<const LabeledDescriptor> rows, const std::filesystem::path& bin_path,
                       const std::filesystem::path& sidecar_path, const std::string& checkpoint_hash) {
  static_assert(std::endian::native == std::endian::little, "descriptor dumps assume a little-endian host");
  if (rows.empty()) throw DataError("no descriptors to write");
  const Descriptor& first = rows.front().descriptor;
  nlohmann::ordered_json side;
  side["kind"] = to_string(first.kind);
  side["p"] = first.parts;
  side["per_part_dim"] = first.per_part_dim;
  side["count"] = rows.size();
  side["dtype"] = "float64";
  side["checkpoint_hash"] = checkpoint_hash;
  side["rows"] = nlohmann::ordered_json::array();
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw DataError("cannot write " + bin_path.string());
  for (const auto& r : rows) {
    const Descriptor& d = r.descriptor;
    if (d.kind != first.kind || d.dim() != first.dim()) throw ShapeError("descriptor dump rows disagree in kind or dimension");
    bin.write(reinterpret_cast<const char*>(d.values.data()), static_cast<std::streamsize>(d.values.size() * sizeof(double)));
    side["rows"].push_back({{"path", r.path}, {"identity", r.identity}, {"camera", r.camera}});
  }
  if (!bin) throw DataError("failed writing " + bin_path.string());
  std::ofstream js(sidecar_path);
  if (!js) throw DataError("cannot write " + sidecar_path.string());
  js << side.dump(2) << '\n';
}

std::vector<LabeledDescriptor> read_descriptors(const std::filesystem::path& bin_path,
                                                const std::filesystem::path& sidecar_path) {
  std::ifstream js(sidecar_path);
  if (!js) throw DataError("cannot read " + sidecar_path.string());
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed descriptor sidecar " + sidecar_path.string() + ": " + e.what());
  }
  const DescriptorKind kind = descriptor_kind_from_string(side.at("kind").get<std::string>());
  const int parts = side.at("p").get<int>();
  const int per_part = side.at("per_part_dim").get<int>();
  const auto& meta = side.at("rows");
  const std::size_t count = side.at("count").get<std::size_t>();
  if (meta.size() != count) throw DataError("descriptor sidecar row count mismatch");
  const std::size_t dim = static_cast<std::size_t>(parts) * per_part;
  if (std::filesystem::file_size(bin_path) != count * dim * sizeof(double)) {
    throw DataError("descriptor file size does not match its sidecar: " + bin_path.string());
  }
  std::ifstream bin(bin_path, std::ios::binary);
  std::vector<LabeledDescriptor> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    LabeledDescriptor r;
    r.descriptor.kind = kind;
    r.descriptor.parts = parts;
    r.descriptor.per_part_dim = per_part;
    r.descriptor.values.resize(static_cast<Eigen::Index>(dim));
    bin.read(reinterpret_cast<char*>(r.descriptor.values.data()), static_cast<std::streamsize>(dim * sizeof(double)));
    r.path = meta[i].at("path").get<std::string>();
    r.identity = meta[i].at("identity").get<int>();
    r.camera = meta[i].at("camera").get<int>();
    out.push_back(std::move(r));
  }
  if (!bin) throw DataError("failed reading " + bin_path.string());
  return out;
}

}  // namespace pcb::retrieval
