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

#include "pcb/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <set>
#include <sstream>
#include <variant>

namespace pcb::ingest {

namespace fs = std::filesystem;

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kQuery: return "query";
    case Split::kGallery: return "gallery";
  }
  return "unknown";
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "query") return Split::kQuery;
  if (name == "gallery") return Split::kGallery;
  throw DataError("unknown split: " + name);
}

double BandLayout::boundary_row(int k, int height) const {
  return static_cast<double>(k) * height / bands + shift_rows;
}

std::vector<const ImageSample*> DatasetManifest::split(Split which) const {
  std::vector<const ImageSample*> out;
  for (const auto& s : samples) {
    if (s.split == which) out.push_back(&s);
  }
  return out;
}

// --- naming convention ------------------------------------------------------

namespace {

struct Placeholder {
  std::string name;
  int width = 0;
};

std::vector<std::variant<std::string, Placeholder>> tokenize(const std::string& pattern) {
  std::vector<std::variant<std::string, Placeholder>> out;
  std::string literal;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] != '{') {
      literal += pattern[i];
      continue;
    }
    const std::size_t close = pattern.find('}', i);
    if (close == std::string::npos) throw ConfigError("unterminated placeholder in naming pattern: " + pattern);
    if (!literal.empty()) out.emplace_back(std::exchange(literal, {}));
    std::string body = pattern.substr(i + 1, close - i - 1);
    Placeholder ph;
    if (const auto colon = body.find(':'); colon != std::string::npos) {
      const std::string spec = body.substr(colon + 1);
      body = body.substr(0, colon);
      if (spec.size() >= 2 && spec.front() == '0' && spec.back() == 'd') ph.width = std::stoi(spec.substr(1));
    }
    if (body != "identity" && body != "camera" && body != "seq" && body != "ext") {
      throw ConfigError("unknown placeholder {" + body + "} in naming pattern");
    }
    ph.name = body;
    out.emplace_back(ph);
    i = close;
  }
  if (!literal.empty()) out.emplace_back(literal);
  return out;
}

std::string escape_regex(const std::string& s) {
  static const std::string special = R"(\^$.|?*+()[]{})";
  std::string out;
  for (char c : s) {
    if (special.find(c) != std::string::npos) out += '\\';
    out += c;
  }
  return out;
}

std::string pad(int value, int width) {
  std::string digits = std::to_string(std::abs(value));
  if (static_cast<int>(digits.size()) < width) digits.insert(0, width - digits.size(), '0');
  return value < 0 ? "-" + digits : digits;
}

}  // namespace

NamingConvention::NamingConvention(std::string pattern) : pattern_(std::move(pattern)) {
  std::string re;
  bool has_identity = false;
  bool has_camera = false;
  for (const auto& tok : tokenize(pattern_)) {
    if (const auto* lit = std::get_if<std::string>(&tok)) {
      re += escape_regex(*lit);
      continue;
    }
    const auto& ph = std::get<Placeholder>(tok);
    groups_.push_back(ph.name);
    if (ph.name == "identity") {
      re += "(-?[0-9]+)";
      has_identity = true;
    } else if (ph.name == "camera") {
      re += "([0-9]+)";
      has_camera = true;
    } else {
      re += "([A-Za-z0-9]+)";
    }
  }
  if (!has_identity || !has_camera) throw ConfigError("naming pattern needs {identity} and {camera}: " + pattern_);
  regex_ = std::regex(re);
}

NamingConvention::Fields NamingConvention::parse(const std::string& filename) const {
  std::smatch m;
  if (!std::regex_match(filename, m, regex_)) {
    throw ParseError("file name '" + filename + "' does not match convention " + pattern_);
  }
  Fields f;
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    const std::string v = m[static_cast<int>(g) + 1].str();
    if (groups_[g] == "identity") f.identity = std::stoi(v);
    else if (groups_[g] == "camera") f.camera = std::stoi(v);
    else if (groups_[g] == "seq") f.seq = v;
    else f.ext = v;
  }
  return f;
}

std::string NamingConvention::format(int identity, int camera, int seq, const std::string& ext) const {
  std::string out;
  for (const auto& tok : tokenize(pattern_)) {
    if (const auto* lit = std::get_if<std::string>(&tok)) {
      out += *lit;
      continue;
    }
    const auto& ph = std::get<Placeholder>(tok);
    if (ph.name == "identity") out += pad(identity, ph.width);
    else if (ph.name == "camera") out += pad(camera, ph.width);
    else if (ph.name == "seq") out += pad(seq, ph.width);
    else out += ext;
  }
  return out;
}

// --- image files --------------------------------------------------------------

Image read_image(const fs::path& path) {
  const cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("cannot read image " + path.string());
  Image im(bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      for (int c = 0; c < 3; ++c) im.at(y, x, c) = row[x][2 - c] / 255.0;
    }
  }
  return im;
}

void write_image(const Image& image, const fs::path& path) {
  cv::Mat bgr(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image.at(y, x, c), 0.0, 1.0);
        row[x][2 - c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), bgr)) throw DataError("cannot write image " + path.string());
}

// --- manifests ------------------------------------------------------------------

void finalize(DatasetManifest& manifest) {
  std::set<int> all_ids;
  std::set<int> train_ids;
  for (const auto& s : manifest.samples) {
    all_ids.insert(s.identity);
    if (s.split == Split::kTrain) train_ids.insert(s.identity);
  }
  manifest.num_identities = static_cast<int>(all_ids.size());
  manifest.train_identities.assign(train_ids.begin(), train_ids.end());
  std::map<int, int> label_of;
  for (std::size_t i = 0; i < manifest.train_identities.size(); ++i) {
    label_of[manifest.train_identities[i]] = static_cast<int>(i);
  }
  std::set<std::pair<int, int>> gallery_id_cam;
  for (const auto& s : manifest.samples) {
    if (s.split == Split::kGallery) gallery_id_cam.insert({s.identity, s.camera});
  }
  for (auto& s : manifest.samples) {
    s.label = s.split == Split::kTrain ? label_of.at(s.identity) : -1;
    if (s.split != Split::kQuery) continue;
    s.evaluable = false;
    if (s.identity < 0) continue;
    for (auto it = gallery_id_cam.lower_bound({s.identity, 0});
         it != gallery_id_cam.end() && it->first == s.identity; ++it) {
      if (it->second != s.camera) s.evaluable = true;
    }
  }
}

DatasetManifest load_directory(const fs::path& root, const NamingConvention& convention) {
  if (!fs::is_directory(root)) throw DataError("dataset root is not a directory: " + root.string());
  DatasetManifest manifest;
  manifest.name = root.filename().string();
  for (Split split : {Split::kTrain, Split::kQuery, Split::kGallery}) {
    const fs::path dir = root / to_string(split);
    if (!fs::is_directory(dir)) throw DataError("missing split directory " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      std::string ext = entry.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
      if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(entry.path());
    }
    if (files.empty()) throw DataError("split '" + to_string(split) + "' is empty under " + root.string());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const auto fields = convention.parse(f.filename().string());
      ImageSample s;
      s.identity = fields.identity;
      s.camera = fields.camera;
      s.split = split;
      s.relative_path = to_string(split) + "/" + f.filename().string();
      s.pixels = read_image(f);
      manifest.samples.push_back(std::move(s));
    }
  }
  finalize(manifest);
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& json_path) {
  nlohmann::ordered_json doc;
  doc["name"] = manifest.name;
  doc["num_identities"] = manifest.num_identities;
  auto& samples = doc["samples"] = nlohmann::ordered_json::array();
  for (const auto& s : manifest.samples) {
    nlohmann::ordered_json j;
    j["relative_path"] = s.relative_path;
    j["identity"] = s.identity;
    j["camera"] = s.camera;
    j["split"] = to_string(s.split);
    if (s.layout) j["layout"] = {{"bands", s.layout->bands}, {"shift_rows", s.layout->shift_rows}};
    samples.push_back(std::move(j));
  }
  if (json_path.has_parent_path()) fs::create_directories(json_path.parent_path());
  std::ofstream out(json_path);
  if (!out) throw DataError("cannot write manifest " + json_path.string());
  out << doc.dump(1) << '\n';
}

DatasetManifest read_manifest(const fs::path& json_path, bool load_pixels) {
  std::ifstream in(json_path);
  if (!in) throw DataError("cannot open manifest " + json_path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + json_path.string() + ": " + e.what());
  }
  DatasetManifest manifest;
  try {
    manifest.name = doc.at("name").get<std::string>();
    for (const auto& j : doc.at("samples")) {
      ImageSample s;
      s.relative_path = j.at("relative_path").get<std::string>();
      s.identity = j.at("identity").get<int>();
      s.camera = j.at("camera").get<int>();
      s.split = split_from_string(j.at("split").get<std::string>());
      if (j.contains("layout")) {
        s.layout = BandLayout{j["layout"].at("bands").get<int>(), j["layout"].at("shift_rows").get<int>()};
      }
      if (load_pixels) s.pixels = read_image(json_path.parent_path() / s.relative_path);
      manifest.samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + json_path.string() + ": " + e.what());
  }
  for (Split split : {Split::kTrain, Split::kQuery, Split::kGallery}) {
    if (manifest.split(split).empty()) throw DataError("manifest split '" + to_string(split) + "' is empty");
  }
  finalize(manifest);
  return manifest;
}

void write_dataset(const DatasetManifest& manifest, const fs::path& root) {
  for (const auto& s : manifest.samples) write_image(s.pixels, root / s.relative_path);
  write_manifest(manifest, root / "manifest.json");
}

// --- synthesis ---------------------------------------------------------------------

std::int64_t max_synthetic_identities(int bands) {
  const int n = static_cast<int>(kPalette.size());
  if (bands < 1 || bands > n) return 0;
  std::int64_t count = 1;
  for (int i = 0; i < bands; ++i) count *= n - i;
  return count;
}

namespace {

void validate(const SyntheticOptions& o) {
  if (o.bands < 2) throw ConfigError("synthetic data needs at least 2 bands");
  if (o.num_ids < 1 || o.imgs_per_id < 1) throw ConfigError("identity and image counts must be positive");
  if (o.shift_rows < 0) throw ConfigError("shift_rows must be non-negative");
  if (o.height < o.bands || o.width < 1) throw ConfigError("image too small for the band count");
  if (o.noise < 0.0) throw ConfigError("noise amplitude must be non-negative");
  if (o.num_ids > max_synthetic_identities(o.bands)) {
    throw ConfigError(std::to_string(o.num_ids) + " identities exceed the " +
                      std::to_string(max_synthetic_identities(o.bands)) + " available band permutations");
  }
}

}  // namespace

std::vector<std::vector<int>> synthetic_identity_colors(const SyntheticOptions& options) {
  validate(options);
  std::mt19937_64 rng(options.seed);
  const int n = static_cast<int>(kPalette.size());
  // All color subsets of size `bands`, as sorted index lists.
  std::vector<std::vector<int>> subsets;
  std::vector<bool> pick(n, false);
  std::fill(pick.begin(), pick.begin() + options.bands, true);
  do {
    std::vector<int> s;
    for (int i = 0; i < n; ++i) {
      if (pick[i]) s.push_back(i);
    }
    subsets.push_back(std::move(s));
  } while (std::prev_permutation(pick.begin(), pick.end()));
  std::shuffle(subsets.begin(), subsets.end(), rng);

  std::vector<std::vector<int>> identities;
  for (auto& subset : subsets) {
    std::vector<std::vector<int>> cohort;
    do {
      cohort.push_back(subset);
    } while (std::next_permutation(subset.begin(), subset.end()));
    std::shuffle(cohort.begin(), cohort.end(), rng);
    for (auto& colors : cohort) {
      if (static_cast<int>(identities.size()) == options.num_ids) return identities;
      identities.push_back(std::move(colors));
    }
  }
  return identities;
}

DatasetManifest generate_synthetic(const SyntheticOptions& options) {
  const auto colors = synthetic_identity_colors(options);
  std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> noise(-options.noise, options.noise);
  std::uniform_int_distribution<int> shift(-options.shift_rows, options.shift_rows);
  std::uniform_int_distribution<int> camera(0, 1);
  const NamingConvention naming;

  DatasetManifest manifest;
  manifest.name = "synthetic-" + std::to_string(options.num_ids) + "x" + std::to_string(options.imgs_per_id) + "-b" +
                  std::to_string(options.bands) + "-s" + std::to_string(options.shift_rows) + "-seed" +
                  std::to_string(options.seed);
  for (int id = 0; id < options.num_ids; ++id) {
    bool query_taken[2] = {false, false};
    for (int k = 0; k < options.imgs_per_id; ++k) {
      ImageSample s;
      s.identity = id;
      s.camera = camera(rng);
      s.layout = BandLayout{options.bands, shift(rng)};
      s.pixels = Image(options.height, options.width);
      for (int y = 0; y < options.height; ++y) {
        const int source = std::clamp(y - s.layout->shift_rows, 0, options.height - 1);
        const auto& rgb = kPalette[colors[id][source * options.bands / options.height]];
        for (int x = 0; x < options.width; ++x) {
          for (int c = 0; c < 3; ++c) {
            const double v = std::clamp(rgb[c] / 255.0 + (options.noise > 0.0 ? noise(rng) : 0.0), 0.0, 1.0);
            s.pixels.at(y, x, c) = std::round(v * 255.0) / 255.0;
          }
        }
      }
      if (id % 2 == 0) {
        s.split = Split::kTrain;
      } else if (!query_taken[s.camera]) {
        query_taken[s.camera] = true;
        s.split = Split::kQuery;
      } else {
        s.split = Split::kGallery;
      }
      s.relative_path = to_string(s.split) + "/" + naming.format(id, s.camera, k, "png");
      manifest.samples.push_back(std::move(s));
    }
  }
  finalize(manifest);
  return manifest;
}

// --- statistics and augmentation ------------------------------------------------------

ChannelStats channel_stats(const DatasetManifest& manifest, Split split) {
  const auto samples = manifest.split(split);
  if (samples.empty()) throw DataError("cannot compute statistics of an empty split");
  ChannelStats stats;
  double count = 0.0;
  std::array<double, 3> sum{0, 0, 0};
  std::array<double, 3> sq{0, 0, 0};
  for (const auto* s : samples) {
    for (int c = 0; c < 3; ++c) {
      sum[c] += s->pixels.pixels.col(c).sum();
      sq[c] += s->pixels.pixels.col(c).squaredNorm();
    }
    count += static_cast<double>(s->pixels.pixels.rows());
  }
  for (int c = 0; c < 3; ++c) {
    stats.mean[c] = sum[c] / count;
    const double var = std::max(sq[c] / count - stats.mean[c] * stats.mean[c], 0.0);
    stats.std[c] = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
  return stats;
}

Image flip_horizontal(const Image& image) {
  Image out(image.height, image.width);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      out.pixels.row(y * image.width + x) = image.pixels.row(y * image.width + (image.width - 1 - x));
    }
  }
  return out;
}

Image normalize(const Image& image, const ChannelStats& stats) {
  for (double s : stats.std) {
    if (s == 0.0) throw ConfigError("normalization std must be nonzero");
  }
  Image out = image;
  for (int c = 0; c < 3; ++c) out.pixels.col(c) = (out.pixels.col(c).array() - stats.mean[c]) / stats.std[c];
  return out;
}

Image augment(const Image& image, const AugmentOptions& options, std::mt19937_64& rng) {
  for (double s : options.normalization.std) {
    if (s == 0.0) throw ConfigError("normalization std must be nonzero");
  }
  std::bernoulli_distribution flip(std::clamp(options.flip_prob, 0.0, 1.0));
  const bool mirrored = flip(rng);
  return normalize(mirrored ? flip_horizontal(image) : image, options.normalization);
}

ImageSample augment(const ImageSample& sample, const AugmentOptions& options, std::mt19937_64& rng) {
  ImageSample out = sample;
  out.pixels = augment(sample.pixels, options, rng);
  return out;
}

}  // namespace pcb::ingest
