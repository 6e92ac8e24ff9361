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

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcb/ingest.hpp"
#include "pcb/retrieval.hpp"
#include "pcb/rpp.hpp"

namespace pcb::diagnose {

enum class MapSource { kNearestPart, kRppArgmax };

std::string to_string(MapSource source);
MapSource map_source_from_string(const std::string& name);

/// Integer part label per location of T, row-major.
struct PartMap {
  int rows = 0;
  int cols = 0;
  int parts = 0;
  MapSource source = MapSource::kNearestPart;
  std::vector<int> labels;
  /// Cells whose label was assigned by fallback (zero-norm fiber).
  std::vector<bool> flagged;

  int at(int row, int col) const { return labels[static_cast<std::size_t>(row) * cols + col]; }
  /// Throws ShapeError when labels fall outside [0, parts) or sizes disagree.
  void validate() const;
  friend bool operator==(const PartMap&, const PartMap&) = default;
};

/// Label of each fiber = argmax_i cosine(f, g[i]), lowest i on ties. A
/// zero-norm fiber keeps its own uniform stripe and is flagged.
PartMap nearest_part_map(const ActivationTensor& tensor, const Matrix& parts);

/// Fraction of cells whose label differs from their uniform stripe.
double outlier_rate(const PartMap& map);

struct CollapseOptions {
  /// A part is empty when its soft mass is below this fraction of M*N.
  double empty_fraction = 0.01;
  /// Two parts duplicate each other when the cosine similarity of their
  /// assignment maps exceeds this value.
  double duplicate_cosine = 0.95;

  friend bool operator==(const CollapseOptions&, const CollapseOptions&) = default;
};

struct RppMapReport {
  PartMap map;
  /// Soft mass sum_f A_i(f) of every part.
  std::vector<double> masses;
  /// Argmax cell count of every part.
  std::vector<int> counts;
  std::vector<bool> empty;
  std::vector<std::pair<int, int>> duplicates;

  int empty_count() const;
  bool collapsed() const { return empty_count() > 0 || !duplicates.empty(); }
};

RppMapReport rpp_argmax_map(const rpp::PartAssignment& assignment, const CollapseOptions& options = {});

/// Ground-truth band boundaries in rows of T for a synthetic image of
/// `image_height` pixels and down-sampling factor `downsample`.
std::vector<double> band_boundaries(const ingest::BandLayout& layout, int image_height, int downsample);

/// Mean over boundaries k and columns of |#cells labeled < k - boundary_k|.
/// Needs one ground-truth boundary per internal part boundary.
double boundary_error(const PartMap& map, std::span<const double> boundaries);

/// boundary_error of the uniform stripe layout with the same shape.
double uniform_boundary_error(int rows, int cols, int parts, std::span<const double> boundaries);

/// PNG with one fixed palette color per part, `cell` pixels per location.
void write_png(const PartMap& map, const std::filesystem::path& path, int cell = 8);
/// Text grid: a "# source=<s> parts=<p>" header then one line of labels per row.
void write_grid(const PartMap& map, const std::filesystem::path& path);
PartMap read_grid(const std::filesystem::path& path);

struct ImageDiagnosis {
  std::string path;
  PartMap nearest;
  double outlier_rate = 0.0;
  /// Refined models only.
  std::optional<RppMapReport> refined;
  /// Set when the sample carries a band layout with one band per part.
  std::optional<double> boundary_error;
  std::optional<double> uniform_boundary_error;
};

struct ModelDiagnosis {
  std::vector<ImageDiagnosis> images;
  double mean_outlier_rate = 0.0;
  int collapsed_images = 0;
  int empty_flags = 0;
  int duplicate_flags = 0;
  std::optional<double> mean_boundary_error;
  std::optional<double> mean_uniform_boundary_error;

  std::string to_json() const;
};

/// Part maps of every sample: nearest-part map against the uniform stripes
/// of T, and for refined models the argmax map with collapse diagnostics and
/// the boundary error against the sample's ground-truth layout.
ModelDiagnosis analyze(Model& model, std::span<const ingest::ImageSample* const> samples,
                       const ingest::ChannelStats& normalization, const CollapseOptions& options = {});

struct SweepRow {
  std::string value;
  double rank1 = 0.0;
  double map = 0.0;
  int evaluated = 0;
  int skipped = 0;
  /// Number of empty-or-duplicate part diagnostics raised for this setting.
  int collapse_flags = 0;

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

struct SweepReport {
  std::string parameter;
  std::vector<SweepRow> rows;

  std::string to_json() const;
  static SweepReport from_json(const std::string& text);
  std::string to_csv() const;
  /// Rank-1 and mAP against the swept value.
  std::string to_svg() const;

  friend bool operator==(const SweepReport&, const SweepReport&) = default;
};

/// One row per (value, result); throws ConfigError on length mismatches.
SweepReport sweep_report(const std::string& parameter, std::span<const std::string> values,
                         std::span<const retrieval::EvalResult> results, std::span<const int> collapse_flags = {});

/// Writes sweep.json, sweep.csv and sweep.svg into `dir`.
void write_sweep(const SweepReport& report, const std::filesystem::path& dir);

}  // namespace pcb::diagnose
