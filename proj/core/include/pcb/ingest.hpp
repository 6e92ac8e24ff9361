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

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <regex>
#include <string>
#include <vector>

#include "pcb/tensor.hpp"

namespace pcb::ingest {

enum class Split { kTrain, kQuery, kGallery };

std::string to_string(Split split);
Split split_from_string(const std::string& name);

/// Ground-truth band layout of a synthetic image.
struct BandLayout {
  int bands = 0;
  /// Vertical content shift in pixel rows (positive moves content down).
  int shift_rows = 0;

  /// Pixel row where band `k` (1..bands-1) starts, canonical layout plus shift.
  double boundary_row(int k, int height) const;

  friend bool operator==(const BandLayout&, const BandLayout&) = default;
};

struct ImageSample {
  Image pixels;
  int identity = 0;
  int camera = 0;
  Split split = Split::kTrain;
  /// Path relative to the dataset root, e.g. "query/0005_c2_0001.png".
  std::string relative_path;
  /// Contiguous classifier label; set for train samples only.
  int label = -1;
  /// Queries without a cross-camera gallery match are not evaluable.
  bool evaluable = true;
  std::optional<BandLayout> layout;
};

struct DatasetManifest {
  std::string name;
  int num_identities = 0;
  std::vector<ImageSample> samples;
  /// label -> original identity of the train split.
  std::vector<int> train_identities;

  int train_classes() const { return static_cast<int>(train_identities.size()); }
  std::vector<const ImageSample*> split(Split which) const;
};

/// File-name convention with {identity}, {camera}, {seq} and {ext}
/// placeholders, e.g. "{identity:04d}_c{camera}_{seq}.{ext}".
class NamingConvention {
 public:
  struct Fields {
    int identity = 0;
    int camera = 0;
    std::string seq;
    std::string ext;
  };

  explicit NamingConvention(std::string pattern = kDefaultPattern);

  /// Throws ParseError naming the file when it does not match.
  Fields parse(const std::string& filename) const;
  std::string format(int identity, int camera, int seq, const std::string& ext) const;
  const std::string& pattern() const { return pattern_; }

  static constexpr const char* kDefaultPattern = "{identity:04d}_c{camera}_{seq:04d}.{ext}";

 private:
  std::string pattern_;
  std::regex regex_;
  std::vector<std::string> groups_;
};

/// Reads root/{train,query,gallery}/ image files.
DatasetManifest load_directory(const std::filesystem::path& root, const NamingConvention& convention = NamingConvention());

/// Writes every sample image under root (per relative_path) and root/manifest.json.
void write_dataset(const DatasetManifest& manifest, const std::filesystem::path& root);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& json_path);
/// Reads a manifest; image paths resolve against the manifest's directory.
DatasetManifest read_manifest(const std::filesystem::path& json_path, bool load_pixels = true);

Image read_image(const std::filesystem::path& path);
void write_image(const Image& image, const std::filesystem::path& path);

/// Remaps train identities to 0..K-1 (ascending original id) and flags
/// queries that lack a cross-camera gallery match.
void finalize(DatasetManifest& manifest);

struct SyntheticOptions {
  int num_ids = 64;
  int imgs_per_id = 20;
  int bands = 4;
  int shift_rows = 0;
  std::uint64_t seed = 7;
  int height = 48;
  int width = 16;
  /// Half-width of the additive uniform pixel noise.
  double noise = 0.05;

  friend bool operator==(const SyntheticOptions&, const SyntheticOptions&) = default;
};

/// 8-bit palette colors; identities are ordered band tuples of distinct colors.
inline constexpr std::array<std::array<int, 3>, 8> kPalette{{
    {230, 25, 75},
    {60, 180, 75},
    {255, 225, 25},
    {0, 130, 200},
    {245, 130, 48},
    {145, 30, 180},
    {70, 240, 240},
    {240, 50, 230},
}};

/// Number of distinct ordered band tuples the palette supports.
std::int64_t max_synthetic_identities(int bands);

/// Identity k is an ordered `bands`-tuple of distinct palette colors; identities
/// are grouped into cohorts that are permutations of one color set. Even k go to
/// the train split; for odd k the first image of each camera is a query and the
/// rest are gallery. Pixels are quantized to 8-bit levels.
DatasetManifest generate_synthetic(const SyntheticOptions& options);

/// Band color tuple (palette indices, top to bottom) of every identity.
std::vector<std::vector<int>> synthetic_identity_colors(const SyntheticOptions& options);

struct ChannelStats {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> std{1.0, 1.0, 1.0};
};

/// Per-channel pixel mean and standard deviation over one split.
ChannelStats channel_stats(const DatasetManifest& manifest, Split split = Split::kTrain);

struct AugmentOptions {
  double flip_prob = 0.5;
  ChannelStats normalization;
};

/// Mirror left-right with probability flip_prob, then (x - mean) / std.
Image augment(const Image& image, const AugmentOptions& options, std::mt19937_64& rng);
ImageSample augment(const ImageSample& sample, const AugmentOptions& options, std::mt19937_64& rng);

Image normalize(const Image& image, const ChannelStats& stats);
Image flip_horizontal(const Image& image);

}  // namespace pcb::ingest
